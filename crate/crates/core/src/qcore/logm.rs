//! Principal logarithm of real 16×16 matrices.
//!
//! Eigenvalues come from the Schur form and are checked against the branch
//! cut first; the logarithm itself is computed by inverse scaling and
//! squaring (product Denman–Beavers square roots, then the Gregory series).

use super::{Mat16, QcoreError};

const CUT_TOL: f64 = 1e-9;

pub fn check_branch_cut(a: &Mat16) -> Result<(), QcoreError> {
    let scale = a.norm().max(1.0);
    for ev in a.complex_eigenvalues().iter() {
        let on_axis = ev.im.abs() <= CUT_TOL * scale;
        if (on_axis && ev.re <= CUT_TOL * scale) || ev.norm() <= 1e-14 * scale {
            return Err(QcoreError::BranchCut { re: ev.re, im: ev.im });
        }
    }
    Ok(())
}

fn sqrtm(a: &Mat16) -> Result<Mat16, QcoreError> {
    let id = Mat16::identity();
    let mut x = *a;
    let mut m = *a;
    for _ in 0..100 {
        let minv = m.try_inverse().ok_or(QcoreError::Singular)?;
        let x_next = x * (id + minv) * 0.5;
        let m_next = (id + (m + minv) * 0.5) * 0.5;
        let delta = (x_next - x).norm();
        x = x_next;
        m = m_next;
        if delta <= 1e-15 * x.norm() {
            break;
        }
    }
    Ok(x)
}

pub fn logm(a: &Mat16) -> Result<Mat16, QcoreError> {
    check_branch_cut(a)?;
    let id = Mat16::identity();
    let mut x = *a;
    let mut squarings = 0;
    while (x - id).norm() > 0.25 {
        x = sqrtm(&x)?;
        squarings += 1;
        if squarings > 60 {
            return Err(QcoreError::Singular);
        }
    }
    // log(X) = 2 artanh(Z), Z = (X - I)(X + I)^{-1}
    let z = (x - id) * (x + id).try_inverse().ok_or(QcoreError::Singular)?;
    let z2 = z * z;
    let mut term = z;
    let mut sum = z;
    for k in 1..200 {
        term *= z2;
        let t = term / (2 * k + 1) as f64;
        sum += t;
        if t.norm() <= 1e-18 {
            break;
        }
    }
    Ok(sum * 2.0 * f64::powi(2.0, squarings))
}
