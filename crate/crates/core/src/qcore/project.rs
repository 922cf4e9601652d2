//! Projection of an arbitrary PTM onto the CPTP set.
//!
//! Alternates eigenvalue clipping of the Choi matrix with the affine
//! trace-preservation constraint (first PTM row `(1, 0, ..., 0)`). Any
//! residual negativity left at the tolerance is removed by mixing in the
//! fully depolarizing channel, which keeps the result exactly TP.

use super::{c, Choi, Mat16, Mat16c, Ptm};

pub const MAX_ITER: usize = 10_000;
pub const TOL: f64 = 1e-10;
const FLOOR: f64 = 1e-14;

fn tp_project(m: &mut Mat16) {
    m[(0, 0)] = 1.0;
    for j in 1..16 {
        m[(0, j)] = 0.0;
    }
}

fn psd_clip(j: &Mat16c) -> Mat16c {
    let h = (j + j.adjoint()) * c(0.5);
    let eig = h.symmetric_eigen();
    let mut d = eig.eigenvalues;
    d.iter_mut().for_each(|x| *x = x.max(0.0));
    let dc = d.map(c);
    &eig.eigenvectors * Mat16c::from_diagonal(&dc) * eig.eigenvectors.adjoint()
}

pub fn project_cptp(r: &Ptm) -> Ptm {
    if r.is_tp(1e-12) && r.is_cp(1e-12) {
        return r.clone();
    }
    let mut m = *r.matrix();
    tp_project(&mut m);
    for _ in 0..MAX_ITER {
        let clipped = psd_clip(&Ptm::from_matrix(m).to_choi().matrix().clone());
        let mut next = *Choi::from_matrix(clipped).to_ptm().matrix();
        tp_project(&mut next);
        let delta = (next - m).norm();
        m = next;
        if delta < TOL {
            break;
        }
    }
    let lam = Ptm::from_matrix(m).to_choi().eigenvalues()[0];
    if lam < FLOOR {
        // Choi of full depolarization is I/16; mixing weight t lifts λ to (1-t)λ + t/16.
        let t = (FLOOR - lam) / (1.0 / 16.0 - lam);
        m = m * (1.0 - t) + Ptm::depolarizing(1.0).matrix() * t;
    }
    Ptm::from_matrix(m)
}
