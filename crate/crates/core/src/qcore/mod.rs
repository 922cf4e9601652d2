//! Two-qubit states and channels.
//!
//! Channels are carried as Pauli transfer matrices (PTMs) in the basis of
//! [`pauli`]: `R_ij = (1/4) Tr(P_i Λ(P_j))`. The Choi representation uses the
//! input factor first and is normalized to unit trace:
//! `J = (1/16) Σ_ij R_ij (P_j^T ⊗ P_i)`.

pub mod diamond;
pub mod generator;
pub mod logm;
pub mod pauli;
pub mod project;
pub mod random;

use nalgebra::{Complex, SMatrix, SVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use diamond::{diamond_distance, DiamondBounds, DiamondOptions};
pub use generator::{error_generator, ErrorGenerator};
pub use project::project_cptp;

pub type C64 = Complex<f64>;
pub type Mat2c = SMatrix<C64, 2, 2>;
pub type Mat4c = SMatrix<C64, 4, 4>;
pub type Mat16c = SMatrix<C64, 16, 16>;
pub type Mat16 = SMatrix<f64, 16, 16>;
pub type Vec4c = SVector<C64, 4>;
pub type Vec16 = SVector<f64, 16>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QcoreError {
    #[error("matrix is not unitary (deviation {0:.3e})")]
    NotUnitary(f64),
    #[error("state is not normalized (norm² = {0})")]
    NotNormalized(f64),
    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),
    #[error("reference channel is not a unitary channel (deviation {0:.3e})")]
    NonUnitaryReference(f64),
    #[error("matrix is singular and cannot be inverted")]
    Singular,
    #[error("principal logarithm undefined: eigenvalue {re:+.6e}{im:+.6e}i lies on the branch cut")]
    BranchCut { re: f64, im: f64 },
    #[error("diamond-norm solver did not converge after {iterations} iterations: bounds [{lower:.6e}, {upper:.6e}]")]
    DiamondNotConverged { iterations: usize, lower: f64, upper: f64 },
}

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Pure two-qubit state; amplitudes ordered `|⇓↓⟩, |⇓↑⟩, |⇑↓⟩, |⇑↑⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState(Vec4c);

impl PureState {
    pub fn new(amplitudes: Vec4c) -> Result<Self, QcoreError> {
        let n = amplitudes.norm_squared();
        if (n - 1.0).abs() > 1e-12 {
            return Err(QcoreError::NotNormalized(n));
        }
        Ok(Self(amplitudes))
    }

    pub fn basis(index: usize) -> Self {
        let mut v = Vec4c::zeros();
        v[index] = c(1.0);
        Self(v)
    }

    pub fn amplitudes(&self) -> &Vec4c {
        &self.0
    }

    pub fn density(&self) -> DensityMatrix {
        DensityMatrix(self.0 * self.0.adjoint())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(Mat4c);

impl DensityMatrix {
    pub fn new(m: Mat4c) -> Result<Self, QcoreError> {
        let herm = (m - m.adjoint()).norm();
        if herm > 1e-12 {
            return Err(QcoreError::InvalidDensity(format!("not Hermitian ({herm:.3e})")));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > 1e-12 || tr.im.abs() > 1e-12 {
            return Err(QcoreError::InvalidDensity(format!("trace {tr}")));
        }
        let min = m.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -1e-10 {
            return Err(QcoreError::InvalidDensity(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(Self(m))
    }

    pub fn maximally_mixed() -> Self {
        Self(Mat4c::identity() * c(0.25))
    }

    pub fn matrix(&self) -> &Mat4c {
        &self.0
    }

    /// Components `r_j = Tr(P_j ρ)`.
    pub fn pauli_vector(&self) -> Vec16 {
        pauli_vector(&self.0)
    }

    pub fn from_pauli_vector(r: &Vec16) -> Self {
        Self(from_pauli_vector(r))
    }

    /// Diagonal in the computational basis.
    pub fn populations(&self) -> [f64; 4] {
        std::array::from_fn(|k| self.0[(k, k)].re)
    }
}

pub fn pauli_vector(m: &Mat4c) -> Vec16 {
    Vec16::from_fn(|j, _| (pauli::product(j) * m).trace().re)
}

pub fn from_pauli_vector(r: &Vec16) -> Mat4c {
    let mut m = Mat4c::zeros();
    for j in 0..16 {
        m += pauli::product(j) * c(r[j] / 4.0);
    }
    m
}

/// Pauli transfer matrix of a two-qubit channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<f64>", try_from = "Vec<f64>")]
pub struct Ptm(Mat16);

impl From<Ptm> for Vec<f64> {
    fn from(p: Ptm) -> Self {
        p.row_major()
    }
}

impl TryFrom<Vec<f64>> for Ptm {
    type Error = String;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        if v.len() != 256 {
            return Err(format!("expected 256 PTM entries, got {}", v.len()));
        }
        Ok(Self(Mat16::from_row_slice(&v)))
    }
}

impl Ptm {
    pub fn identity() -> Self {
        Self(Mat16::identity())
    }

    pub fn from_matrix(m: Mat16) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &Mat16 {
        &self.0
    }

    pub fn into_matrix(self) -> Mat16 {
        self.0
    }

    pub fn row_major(&self) -> Vec<f64> {
        (0..16).flat_map(|i| (0..16).map(move |j| (i, j))).map(|(i, j)| self.0[(i, j)]).collect()
    }

    pub fn from_unitary(u: &Mat4c) -> Result<Self, QcoreError> {
        let dev = (u * u.adjoint() - Mat4c::identity()).norm();
        if dev > 1e-10 {
            return Err(QcoreError::NotUnitary(dev));
        }
        Ok(Self::from_kraus(std::slice::from_ref(u)))
    }

    /// `R_ij = (1/4) Σ_k Tr(P_i K_k P_j K_k†)`; no completeness check.
    pub fn from_kraus(kraus: &[Mat4c]) -> Self {
        let mut images = [Mat4c::zeros(); 16];
        for (j, img) in images.iter_mut().enumerate() {
            for k in kraus {
                *img += k * pauli::product(j) * k.adjoint();
            }
        }
        Self(Mat16::from_fn(|i, j| (pauli::product(i) * images[j]).trace().re / 4.0))
    }

    /// `Λ(ρ) = (1 - p) ρ + p I/4`.
    pub fn depolarizing(p: f64) -> Self {
        let mut m = Mat16::identity() * (1.0 - p);
        m[(0, 0)] = 1.0;
        Self(m)
    }

    /// `self` applied after `first`.
    pub fn compose(&self, first: &Ptm) -> Ptm {
        Ptm(self.0 * first.0)
    }

    pub fn apply(&self, rho: &DensityMatrix) -> DensityMatrix {
        DensityMatrix(from_pauli_vector(&(self.0 * rho.pauli_vector())))
    }

    pub fn apply_vector(&self, r: &Vec16) -> Vec16 {
        self.0 * r
    }

    pub fn is_tp(&self, tol: f64) -> bool {
        (self.0[(0, 0)] - 1.0).abs() <= tol && (1..16).all(|j| self.0[(0, j)].abs() <= tol)
    }

    pub fn is_unital(&self, tol: f64) -> bool {
        (1..16).all(|i| self.0[(i, 0)].abs() <= tol)
    }

    pub fn is_cp(&self, tol: f64) -> bool {
        self.to_choi().is_cp(tol)
    }

    /// Deviation of `R Rᵀ` from the identity (Frobenius); zero for unitary channels.
    pub fn orthogonality_defect(&self) -> f64 {
        (self.0 * self.0.transpose() - Mat16::identity()).norm()
    }

    pub fn inverse(&self) -> Result<Ptm, QcoreError> {
        self.0.try_inverse().map(Ptm).ok_or(QcoreError::Singular)
    }

    pub fn to_choi(&self) -> Choi {
        Choi(pauli::choi_expand(&self.0) * c(1.0 / 16.0))
    }

    /// Process and average gate fidelity against a unitary reference.
    pub fn fidelities(&self, reference: &Ptm) -> Result<(f64, f64), QcoreError> {
        fidelities(self, reference)
    }
}

/// Normalized Choi matrix, input factor first.
#[derive(Debug, Clone, PartialEq)]
pub struct Choi(Mat16c);

impl Choi {
    pub fn from_matrix(m: Mat16c) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &Mat16c {
        &self.0
    }

    pub fn to_ptm(&self) -> Ptm {
        Ptm(pauli::choi_project(&self.0))
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let h = (self.0 + self.0.adjoint()) * c(0.5);
        let mut v: Vec<f64> = h.symmetric_eigenvalues().iter().cloned().collect();
        v.sort_by(|a, b| a.total_cmp(b));
        v
    }

    pub fn is_cp(&self, tol: f64) -> bool {
        self.eigenvalues()[0] >= -tol
    }

    /// `Tr_out J`, a 4×4 operator on the input factor.
    pub fn partial_trace_output(&self) -> Mat4c {
        partial_trace_output(&self.0)
    }

    pub fn is_tp(&self, tol: f64) -> bool {
        (self.partial_trace_output() - Mat4c::identity() * c(0.25)).norm() <= tol
    }
}

pub fn partial_trace_output(m: &Mat16c) -> Mat4c {
    Mat4c::from_fn(|a, b| (0..4).map(|k| m[(a * 4 + k, b * 4 + k)]).sum())
}

/// `(F_pro, F_avg)` of `g` against the unitary channel `reference`.
pub fn fidelities(g: &Ptm, reference: &Ptm) -> Result<(f64, f64), QcoreError> {
    let defect = reference.orthogonality_defect();
    if defect > 1e-8 || !reference.is_tp(1e-10) {
        return Err(QcoreError::NonUnitaryReference(defect));
    }
    let f_pro = (reference.0.transpose() * g.0).trace() / 16.0;
    Ok((f_pro, (4.0 * f_pro + 1.0) / 5.0))
}
