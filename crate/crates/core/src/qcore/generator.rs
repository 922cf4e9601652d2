//! Error generators `𝕃` with `G = exp(𝕃) G0`, and their split into a
//! Hamiltonian (coherent) part and the remainder (stochastic and other
//! non-Hamiltonian terms).
//!
//! The coherent part is the Frobenius-orthogonal projection of `𝕃` onto the
//! span of the 15 Hamiltonian generators `ρ ↦ -i[P_k, ρ]`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::{logm, pauli, Mat16, Ptm, QcoreError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorGenerator(#[serde(with = "mat16_rows")] Mat16);

pub(crate) mod mat16_rows {
    use super::Mat16;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Mat16, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..16).map(|i| (0..16).map(|j| m[(i, j)]).collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat16, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        if rows.len() != 16 || rows.iter().any(|r| r.len() != 16) {
            return Err(serde::de::Error::custom("expected a 16x16 matrix"));
        }
        Ok(Mat16::from_fn(|i, j| rows[i][j]))
    }
}

/// PTM of `ρ ↦ -i[P_k, ρ]` for `k = 1..15`, Gram–Schmidt orthonormalized.
fn hamiltonian_basis() -> &'static Vec<Mat16> {
    static CELL: OnceLock<Vec<Mat16>> = OnceLock::new();
    CELL.get_or_init(|| {
        let mut basis: Vec<Mat16> = Vec::with_capacity(15);
        for k in 1..16 {
            let pk = pauli::product(k);
            let mut h = Mat16::from_fn(|i, j| {
                let pj = pauli::product(j);
                let comm = (pk * pj - pj * pk) * super::C64::new(0.0, -1.0);
                (pauli::product(i) * comm).trace().re / 4.0
            });
            for b in &basis {
                let overlap = b.dot(&h);
                h -= b * overlap;
            }
            let n = h.norm();
            basis.push(h / n);
        }
        basis
    })
}

impl ErrorGenerator {
    pub fn zero() -> Self {
        Self(Mat16::zeros())
    }

    pub fn from_matrix(m: Mat16) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &Mat16 {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    /// `exp(𝕃) G0`.
    pub fn reconstruct(&self, g0: &Ptm) -> Ptm {
        Ptm::from_matrix(self.0.exp() * g0.matrix())
    }

    pub fn hamiltonian_part(&self) -> ErrorGenerator {
        let mut out = Mat16::zeros();
        for b in hamiltonian_basis() {
            out += b * b.dot(&self.0);
        }
        Self(out)
    }

    pub fn stochastic_part(&self) -> ErrorGenerator {
        Self(self.0 - self.hamiltonian_part().0)
    }

    /// `‖𝕃_H‖² / ‖𝕃‖²`; zero for a vanishing generator.
    pub fn coherent_fraction(&self) -> f64 {
        let total = self.0.norm_squared();
        if total == 0.0 {
            return 0.0;
        }
        self.hamiltonian_part().0.norm_squared() / total
    }

    /// Coefficients `h_k` with `𝕃_H = Σ h_k · PTM(-i[P_k, ·])`.
    pub fn hamiltonian_coefficients(&self) -> [f64; 15] {
        let h = self.hamiltonian_part().0;
        std::array::from_fn(|k| {
            let pk = pauli::product(k + 1);
            let raw = Mat16::from_fn(|i, j| {
                let pj = pauli::product(j);
                let comm = (pk * pj - pj * pk) * super::C64::new(0.0, -1.0);
                (pauli::product(i) * comm).trace().re / 4.0
            });
            raw.dot(&h) / raw.norm_squared()
        })
    }
}

/// `𝕃 = log(G G0⁻¹)` via the principal matrix logarithm.
pub fn error_generator(g: &Ptm, g0: &Ptm) -> Result<ErrorGenerator, QcoreError> {
    let x = g.matrix() * g0.inverse()?.matrix();
    Ok(ErrorGenerator(logm::logm(&x)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::{c, pauli::kron2, pauli::single, Mat4c};

    fn zz_unitary(theta: f64) -> Mat4c {
        let zz = kron2(&single(3), &single(3));
        Mat4c::from_fn(|i, j| {
            if i == j {
                super::super::C64::from_polar(1.0, -theta * zz[(i, i)].re)
            } else {
                c(0.0)
            }
        })
    }

    #[test]
    fn identical_channels_give_zero_generator() {
        let g0 = Ptm::from_unitary(&zz_unitary(std::f64::consts::FRAC_PI_4)).unwrap();
        let l = error_generator(&g0, &g0).unwrap();
        assert!(l.norm() < 1e-14);
    }

    fn raw_generator(k: usize) -> Mat16 {
        let pk = pauli::product(k);
        Mat16::from_fn(|i, j| {
            let pj = pauli::product(j);
            let comm = (pk * pj - pj * pk) * super::super::C64::new(0.0, -1.0);
            (pauli::product(i) * comm).trace().re / 4.0
        })
    }

    #[test]
    fn recovers_constructed_generator() {
        let g0 = Ptm::from_unitary(&zz_unitary(std::f64::consts::FRAC_PI_4)).unwrap();
        let exact = raw_generator(15) * 0.013 + raw_generator(4) * -0.002;
        let g = Ptm::from_matrix(exact.exp() * g0.matrix());
        let l = error_generator(&g, &g0).unwrap();
        assert!((l.matrix() - exact).norm() < 1e-8);
        assert!(l.coherent_fraction() > 1.0 - 1e-10);
        assert!((l.reconstruct(&g0).matrix() - g.matrix()).norm() < 1e-9);
    }

    #[test]
    fn depolarizing_generator_is_diagonal_log() {
        let p = 0.01;
        let l = error_generator(&Ptm::depolarizing(p), &Ptm::identity()).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                let expect = if i == j && i > 0 { (1.0 - p).ln() } else { 0.0 };
                assert!((l.matrix()[(i, j)] - expect).abs() < 1e-12);
            }
        }
        assert!(l.coherent_fraction() < 1e-20);
    }

    #[test]
    fn hamiltonian_basis_is_orthonormal_and_antisymmetric() {
        let b = hamiltonian_basis();
        for (k, x) in b.iter().enumerate() {
            assert!((x + x.transpose()).norm() < 1e-14);
            for (l, y) in b.iter().enumerate() {
                let expect = if k == l { 1.0 } else { 0.0 };
                assert!((x.dot(y) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hamiltonian_coefficients_of_zz_rotation() {
        // exp(-iθ ZZ) has generator -iθ[ZZ, ·]
        let theta = 0.004;
        let g = Ptm::from_unitary(&zz_unitary(theta)).unwrap();
        let l = error_generator(&g, &Ptm::identity()).unwrap();
        let h = l.hamiltonian_coefficients();
        assert!((h[14] - theta).abs() < 1e-10, "{:?}", h);
        assert!(h[..14].iter().all(|x| x.abs() < 1e-12));
    }
}
