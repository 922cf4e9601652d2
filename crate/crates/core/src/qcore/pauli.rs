//! Two-qubit Pauli-product basis.
//!
//! Index `i = 4a + b` labels `σ_a ⊗ σ_b` with `σ_0..σ_3 = I, X, Y, Z`; the
//! second qubit runs fastest, so the order is II, IX, IY, IZ, XI, ..., ZZ.

use std::sync::OnceLock;

use super::{Mat16c, Mat2c, Mat4c, C64};

pub const LABELS: [&str; 16] = [
    "II", "IX", "IY", "IZ", "XI", "XX", "XY", "XZ", "YI", "YX", "YY", "YZ", "ZI", "ZX", "ZY", "ZZ",
];

pub fn single(a: usize) -> Mat2c {
    let o = C64::new(0.0, 0.0);
    let l = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    match a {
        0 => Mat2c::new(l, o, o, l),
        1 => Mat2c::new(o, l, l, o),
        2 => Mat2c::new(o, -i, i, o),
        3 => Mat2c::new(l, o, o, -l),
        _ => panic!("pauli index {a} out of range"),
    }
}

pub fn kron2(a: &Mat2c, b: &Mat2c) -> Mat4c {
    Mat4c::from_fn(|r, c| a[(r / 2, c / 2)] * b[(r % 2, c % 2)])
}

pub fn kron4(a: &Mat4c, b: &Mat4c) -> Mat16c {
    Mat16c::from_fn(|r, c| a[(r / 4, c / 4)] * b[(r % 4, c % 4)])
}

/// The 16 Pauli products, cached.
pub fn products() -> &'static [Mat4c; 16] {
    static CELL: OnceLock<[Mat4c; 16]> = OnceLock::new();
    CELL.get_or_init(|| std::array::from_fn(|i| kron2(&single(i / 4), &single(i % 4))))
}

pub fn product(i: usize) -> &'static Mat4c {
    &products()[i]
}

/// `(P_j^T ⊗ P_i)` for every `(i, j)`, flattened as `i * 16 + j`.
///
/// Stored sparsely: each Pauli product has exactly one nonzero per row, so the
/// Kronecker product has one nonzero per row as well.
pub(crate) fn choi_basis() -> &'static [[(usize, C64); 16]; 256] {
    static CELL: OnceLock<Box<[[(usize, C64); 16]; 256]>> = OnceLock::new();
    CELL.get_or_init(|| {
        let mut out = Box::new([[(0usize, C64::new(0.0, 0.0)); 16]; 256]);
        for i in 0..16 {
            for j in 0..16 {
                let k = kron4(&product(j).transpose(), product(i));
                for r in 0..16 {
                    let c = (0..16).find(|&c| k[(r, c)].norm() > 0.5).unwrap();
                    out[i * 16 + j][r] = (c, k[(r, c)]);
                }
            }
        }
        out
    })
}

/// `Σ_ij coeff_ij (P_j^T ⊗ P_i)`.
pub fn choi_expand(coeff: &super::Mat16) -> Mat16c {
    let basis = choi_basis();
    let mut out = Mat16c::zeros();
    for i in 0..16 {
        for j in 0..16 {
            let w = coeff[(i, j)];
            if w == 0.0 {
                continue;
            }
            for (r, &(c, v)) in basis[i * 16 + j].iter().enumerate() {
                out[(r, c)] += v * w;
            }
        }
    }
    out
}

/// `Re Tr(M (P_j^T ⊗ P_i))` for every `(i, j)`; the adjoint of [`choi_expand`].
pub fn choi_project(m: &Mat16c) -> super::Mat16 {
    let basis = choi_basis();
    super::Mat16::from_fn(|i, j| {
        // Tr(M K) = Σ_r Σ_c M[c, r] K[r, c]
        basis[i * 16 + j]
            .iter()
            .enumerate()
            .map(|(r, &(c, v))| (m[(c, r)] * v).re)
            .sum()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_are_orthogonal() {
        for i in 0..16 {
            for j in 0..16 {
                let t = (product(i) * product(j)).trace();
                let expect = if i == j { 4.0 } else { 0.0 };
                assert!((t.re - expect).abs() < 1e-14 && t.im.abs() < 1e-14);
            }
        }
    }

    #[test]
    fn second_qubit_runs_fastest() {
        let ix = product(1);
        let expect = kron2(&single(0), &single(1));
        assert_eq!(*ix, expect);
        assert_eq!(LABELS[1], "IX");
        assert_eq!(LABELS[4], "XI");
    }

    #[test]
    fn choi_expand_matches_dense_kron() {
        let mut coeff = super::super::Mat16::zeros();
        coeff[(3, 7)] = 0.5;
        coeff[(11, 2)] = -1.25;
        let sparse = choi_expand(&coeff);
        let dense = kron4(&product(7).transpose(), product(3)) * C64::new(0.5, 0.0)
            + kron4(&product(2).transpose(), product(11)) * C64::new(-1.25, 0.0);
        assert!((sparse - dense).norm() < 1e-14);
        let back = choi_project(&dense);
        assert!((back[(3, 7)] - 0.5 * 16.0).abs() < 1e-12);
    }
}
