//! Diamond distance `(1/2)‖G − G0‖_⋄` between two-qubit channels.
//!
//! Solves the standard semidefinite program over the (unnormalized) Choi
//! matrix `J` of the difference:
//!
//! ```text
//! primal: max ⟨J, W⟩   s.t. 0 ≤ W ≤ ρ ⊗ I, ρ a density matrix
//! dual:   min ‖Tr_out Z‖_∞  s.t. Z ≥ J, Z ≥ 0
//! ```
//!
//! For a full-rank input state `ρ`, `M = (√ρ ⊗ I) J (√ρ ⊗ I)` gives a primal
//! value `(1/2)‖M‖₁` and `Z = (ρ^{-1/2} ⊗ I) M₊ (ρ^{-1/2} ⊗ I)` is dual
//! feasible, so every input state carries a certified bracket. A few
//! fixed-point steps `ρ ← Tr_out M₊ / Tr M₊` settle full-rank optima; after
//! that, ADMM on the dual program takes over and its iterates are rounded
//! into feasible certificates.

use serde::{Deserialize, Serialize};

use super::{c, partial_trace_output, pauli, Mat16c, Mat4c, Ptm, QcoreError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiamondOptions {
    pub max_iter: usize,
    pub gap_tol: f64,
}

impl Default for DiamondOptions {
    fn default() -> Self {
        Self { max_iter: 20_000, gap_tol: 1e-5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiamondBounds {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub iterations: usize,
}

const RHO_FLOOR: f64 = 1e-12;

fn herm_fn(m: &Mat4c, f: impl Fn(f64) -> f64) -> Mat4c {
    let h = (m + m.adjoint()) * c(0.5);
    let e = h.symmetric_eigen();
    let d = Mat4c::from_diagonal(&e.eigenvalues.map(|x| c(f(x))));
    &e.eigenvectors * d * e.eigenvectors.adjoint()
}

fn kron_left(a: &Mat4c) -> Mat16c {
    pauli::kron4(a, &Mat4c::identity())
}

struct Step {
    lower: f64,
    upper: f64,
    next_rho: Mat4c,
}

fn step(j: &Mat16c, rho: &Mat4c) -> Step {
    let s = herm_fn(rho, |x| x.max(RHO_FLOOR).sqrt());
    let sinv = herm_fn(rho, |x| 1.0 / x.max(RHO_FLOOR).sqrt());
    let sl = kron_left(&s);
    let m = &sl * j * &sl;
    let m = (&m + m.adjoint()) * c(0.5);
    let eig = m.clone().symmetric_eigen();
    let lower = 0.5 * eig.eigenvalues.iter().map(|x| x.abs()).sum::<f64>();
    let pos = Mat16c::from_diagonal(&eig.eigenvalues.map(|x| c(x.max(0.0))));
    let m_plus = &eig.eigenvectors * pos * eig.eigenvectors.adjoint();
    let sil = kron_left(&sinv);
    let z = &sil * &m_plus * &sil;
    let y = partial_trace_output(&z);
    let y = (y + y.adjoint()) * c(0.5);
    let upper = y.symmetric_eigenvalues().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let t = partial_trace_output(&m_plus);
    let tr = t.trace().re;
    let next_rho = if tr > 0.0 { t / c(tr) } else { *rho };
    Step { lower, upper, next_rho }
}

fn psd_part16(m: &Mat16c) -> Mat16c {
    let h = (m + m.adjoint()) * c(0.5);
    let e = h.symmetric_eigen();
    let d = Mat16c::from_diagonal(&e.eigenvalues.map(|x| c(x.max(0.0))));
    &e.eigenvectors * d * e.eigenvectors.adjoint()
}

fn psd_part4(m: &Mat4c) -> Mat4c {
    herm_fn(m, |x| x.max(0.0))
}

fn lambda_max4(m: &Mat4c) -> f64 {
    let h = (m + m.adjoint()) * c(0.5);
    h.symmetric_eigenvalues().iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

/// Any Hermitian `Z` rounded into `{Z ≥ J, Z ≥ 0}`; returns `‖Tr_out Z‖_∞`.
fn dual_certificate(j: &Mat16c, z: &Mat16c) -> f64 {
    let z1 = z + psd_part16(&(j - z));
    let z2 = psd_part16(&z1);
    lambda_max4(&partial_trace_output(&z2))
}

/// Scaled-form ADMM on
/// `min t  s.t.  A = Z ≥ 0,  B = Z − J ≥ 0,  C = tI − Tr_out Z ≥ 0`.
struct Admm {
    beta: f64,
    z: Mat16c,
    t: f64,
    a: Mat16c,
    b: Mat16c,
    cc: Mat4c,
    u1: Mat16c,
    u2: Mat16c,
    u3: Mat4c,
}

impl Admm {
    fn new(j: &Mat16c, rho: &Mat4c) -> Self {
        let z = psd_part16(j);
        let t = lambda_max4(&partial_trace_output(&z));
        // ρ is the multiplier of the C block: seed it from the warm start.
        let beta = 1.0;
        Self {
            beta,
            a: z,
            b: psd_part16(&(z - j)),
            cc: psd_part4(&(Mat4c::identity() * c(t) - partial_trace_output(&z))),
            z,
            t,
            u1: Mat16c::zeros(),
            u2: Mat16c::zeros(),
            u3: -rho / c(beta),
        }
    }

    fn iterate(&mut self, j: &Mat16c) -> f64 {
        let a = self.a - self.u1;
        let b = j + self.b - self.u2;
        let cm = self.cc - self.u3;
        let ab = a + b;
        let tr_ab = ab.trace().re;
        let tr_c = cm.trace().re;
        // Stationarity in (Z, t), solved in closed form through Tr_out.
        let t = (6.0 / 8.0) * (-1.0 / self.beta + tr_c + (tr_ab - 4.0 * tr_c) / 6.0);
        let trz = (partial_trace_output(&ab) + (Mat4c::identity() * c(t) - cm) * c(4.0)) / c(6.0);
        let z = (ab + kron_left(&(Mat4c::identity() * c(t) - cm - trz))) * c(0.5);
        let z = (&z + z.adjoint()) * c(0.5);
        let trz = partial_trace_output(&z);
        let c_arg = Mat4c::identity() * c(t) - trz;
        self.a = psd_part16(&(z + self.u1));
        self.b = psd_part16(&(z - j + self.u2));
        self.cc = psd_part4(&(c_arg + self.u3));
        let r1 = z - self.a;
        let r2 = z - j - self.b;
        let r3 = c_arg - self.cc;
        self.u1 += r1;
        self.u2 += r2;
        self.u3 += r3;
        self.z = z;
        self.t = t;
        (r1.norm_squared() + r2.norm_squared() + r3.norm_squared()).sqrt()
    }

    /// Input state estimate from the multiplier of the `C` block.
    fn rho(&self) -> Option<Mat4c> {
        let r = psd_part4(&(-self.u3 * c(self.beta)));
        let tr = r.trace().re;
        (tr > 1e-12).then(|| r / c(tr))
    }
}

/// Certified bracket on `(1/2)‖g − g0‖_⋄`.
pub fn diamond_bounds(g: &Ptm, g0: &Ptm, opts: DiamondOptions) -> Result<DiamondBounds, QcoreError> {
    let diff = Ptm::from_matrix(g.matrix() - g0.matrix());
    // Unnormalized Choi: Σ_ij |i⟩⟨j| ⊗ Λ(|i⟩⟨j|) = 4 × the unit-trace convention.
    let j = diff.to_choi().matrix() * c(4.0);
    if j.norm() < 1e-14 {
        return Ok(DiamondBounds { value: 0.0, lower: 0.0, upper: 0.0, iterations: 0 });
    }
    let mut lower = 0.0_f64;
    let mut upper = f64::INFINITY;
    let done = |lower: f64, upper: f64, it: usize| {
        (upper - lower < opts.gap_tol)
            .then(|| DiamondBounds { value: 0.5 * (lower + upper), lower, upper, iterations: it })
    };

    // Closed-form best responses settle full-rank optima within a few steps.
    let mut rho = Mat4c::identity() * c(0.25);
    let warm = opts.max_iter.min(50);
    for it in 1..=warm {
        let st = step(&j, &rho);
        lower = lower.max(st.lower);
        upper = upper.min(st.upper);
        if let Some(b) = done(lower, upper, it) {
            return Ok(b);
        }
        rho = st.next_rho * c(1.0 - 1e-9) + Mat4c::identity() * c(0.25e-9);
    }

    let mut admm = Admm::new(&j, &rho);
    for it in warm + 1..=opts.max_iter {
        admm.iterate(&j);
        if it % 10 == 0 {
            upper = upper.min(dual_certificate(&j, &admm.z));
            if let Some(r) = admm.rho() {
                let st = step(&j, &r);
                lower = lower.max(st.lower);
                upper = upper.min(st.upper);
            }
            if let Some(b) = done(lower, upper, it) {
                return Ok(b);
            }
        }
    }
    Err(QcoreError::DiamondNotConverged { iterations: opts.max_iter, lower, upper })
}

pub fn diamond_distance(g: &Ptm, g0: &Ptm) -> Result<f64, QcoreError> {
    diamond_bounds(g, g0, DiamondOptions::default()).map(|b| b.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::{pauli, random, Mat16, Vec16, C64};
    use nalgebra::SVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    type V16c = SVector<C64, 16>;

    /// Output trace distance for a pure input on system ⊗ reference, computed
    /// by expanding the bipartite input in Pauli products and pushing each
    /// system factor through the PTM directly.
    fn output_distance(r: &Mat16, psi: &V16c) -> f64 {
        let rho = psi * psi.adjoint();
        let mut out = Mat16c::zeros();
        for js in 0..16 {
            for kr in 0..16 {
                let basis = pauli::kron4(pauli::product(js), pauli::product(kr));
                let x = (basis * &rho).trace() / c(16.0);
                if x.norm() < 1e-15 {
                    continue;
                }
                for is in 0..16 {
                    let w = r[(is, js)];
                    if w != 0.0 {
                        out += pauli::kron4(pauli::product(is), pauli::product(kr)) * (x * c(w));
                    }
                }
            }
        }
        let h = (&out + out.adjoint()) * c(0.5);
        0.5 * h.symmetric_eigenvalues().iter().map(|x| x.abs()).sum::<f64>()
    }

    fn random_vec<R: Rng>(rng: &mut R, scale: f64) -> V16c {
        V16c::from_fn(|_, _| {
            let a: f64 = StandardNormal.sample(rng);
            let b: f64 = StandardNormal.sample(rng);
            C64::new(a, b) * scale
        })
    }

    /// Random restarts plus a shrinking-step hill climb over pure inputs.
    fn brute_force(r: &Mat16, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut best = 0.0_f64;
        let mut starts: Vec<V16c> = (0..6).map(|_| random_vec(&mut rng, 1.0)).collect();
        let mut phi = V16c::zeros();
        for k in 0..4 {
            phi[k * 4 + k] = c(1.0);
        }
        starts.push(phi);
        for start in starts {
            let mut psi = start.normalize();
            let mut val = output_distance(r, &psi);
            let mut step = 0.3;
            for _ in 0..400 {
                let cand = (psi + random_vec(&mut rng, step)).normalize();
                let v = output_distance(r, &cand);
                if v > val {
                    psi = cand;
                    val = v;
                } else {
                    step *= 0.985;
                }
            }
            best = best.max(val);
        }
        best
    }

    #[test]
    fn identical_channels_are_at_distance_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random::random_channel(&mut rng, 2, 0.3);
        assert_eq!(diamond_distance(&g, &g).unwrap(), 0.0);
    }

    #[test]
    fn depolarizing_matches_brute_force() {
        for p in [0.01, 0.2] {
            let g = Ptm::depolarizing(p);
            let b = diamond_bounds(&g, &Ptm::identity(), DiamondOptions::default()).unwrap();
            assert!(b.upper - b.lower < 1e-4);
            let oracle = brute_force(&(g.matrix() - Mat16::identity()), 7);
            assert!((b.value - oracle).abs() < 1e-3, "p={p}: {} vs {oracle}", b.value);
        }
    }

    #[test]
    fn z_rotation_matches_brute_force_and_eigenphase_spread() {
        for theta in [0.05, 0.6, 1.4] {
            let half = C64::from_polar(1.0, -theta / 2.0);
            let u = Mat4c::from_diagonal(&nalgebra::Vector4::new(half, half, half.conj(), half.conj()));
            let g = Ptm::from_unitary(&u).unwrap();
            let b = diamond_bounds(&g, &Ptm::identity(), DiamondOptions::default()).unwrap();
            let oracle = brute_force(&(g.matrix() - Mat16::identity()), 3);
            assert!((b.value - oracle).abs() < 1e-3, "θ={theta}: {} vs {oracle}", b.value);
            assert!((b.value - (theta / 2.0).sin()).abs() < 1e-4);
        }
    }

    #[test]
    fn bounds_bracket_choi_trace_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..5 {
            let a = random::random_channel(&mut rng, 2, 0.3);
            let b = random::random_channel(&mut rng, 3, 0.3);
            let d = diamond_bounds(&a, &b, DiamondOptions::default()).unwrap();
            let diff = a.to_choi().matrix() - b.to_choi().matrix();
            let h = (&diff + diff.adjoint()) * c(0.5);
            let choi_td = 0.5 * h.symmetric_eigenvalues().iter().map(|x| x.abs()).sum::<f64>();
            assert!(d.value >= choi_td - 1e-9);
            assert!(d.upper - d.lower < 1e-4);
        }
        let _ = Vec16::zeros();
    }
}
