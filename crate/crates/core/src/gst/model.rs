//! Log-likelihood, its gradient, and the two gate-set parameterizations.
//!
//! CPTP: each gate is `J = (S⊗I) A A† (S⊗I)` with `A` lower triangular and
//! `S = (Tr_out AA†)^{-1/2}/2`,
//! so every parameter vector is completely positive and trace preserving.
//! The state is `BB†/Tr BB†` and the effects `W C_k C_k† W` with
//! `W = (Σ C_k C_k†)^{-1/2}`. TP: PTM rows 1..15, state components 1..15 and
//! the first three effects are free. Gradients use the Daleckii–Krein
//! formula for the inverse square roots.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::GateSet;
use crate::qcore::pauli::{choi_expand, choi_project, kron4, product};
use crate::qcore::{c, partial_trace_output, pauli_vector, Mat16, Mat16c, Mat4c, Ptm, Vec16, C64};

/// Probability below which `log p` is continued quadratically.
pub const P_MIN: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct Data {
    pub circuits: Vec<Vec<u8>>,
    pub counts: Vec<[f64; 4]>,
}

impl Data {
    pub fn subset(&self, idx: &[usize]) -> Data {
        Data {
            circuits: idx.iter().map(|&i| self.circuits[i].clone()).collect(),
            counts: idx.iter().map(|&i| self.counts[i]).collect(),
        }
    }

    /// `Σ n log(n/N)`, the maximal-model log-likelihood.
    pub fn max_loglik(&self) -> f64 {
        self.counts
            .iter()
            .map(|n| {
                let t: f64 = n.iter().sum();
                n.iter().filter(|&&x| x > 0.0).map(|&x| x * (x / t).ln()).sum::<f64>()
            })
            .sum()
    }
}

fn ell(p: f64) -> (f64, f64) {
    if p >= P_MIN {
        (p.ln(), 1.0 / p)
    } else {
        let d = p - P_MIN;
        (P_MIN.ln() + d / P_MIN - d * d / (2.0 * P_MIN * P_MIN), 1.0 / P_MIN - d / (P_MIN * P_MIN))
    }
}

#[derive(Debug, Clone)]
pub struct Grad {
    pub gates: [Mat16; 5],
    pub rho: Vec16,
    pub effects: [Vec16; 4],
}

impl Grad {
    pub fn zeros() -> Self {
        Self { gates: [Mat16::zeros(); 5], rho: Vec16::zeros(), effects: [Vec16::zeros(); 4] }
    }
}

/// Gate entries, then state, then effects: `5·256 + 16 + 4·16`.
pub const RAW_DIM: usize = 1360;
const RHO_OFF: usize = 1280;
const EFF_OFF: usize = 1296;

impl Grad {
    pub fn to_flat(&self) -> DVector<f64> {
        let mut v = DVector::zeros(RAW_DIM);
        for (g, m) in self.gates.iter().enumerate() {
            for i in 0..16 {
                for j in 0..16 {
                    v[g * 256 + i * 16 + j] = m[(i, j)];
                }
            }
        }
        for j in 0..16 {
            v[RHO_OFF + j] = self.rho[j];
            for k in 0..4 {
                v[EFF_OFF + 16 * k + j] = self.effects[k][j];
            }
        }
        v
    }

    pub fn unit(index: usize) -> Self {
        let mut g = Self::zeros();
        match index {
            i if i < RHO_OFF => g.gates[i / 256][((i % 256) / 16, i % 16)] = 1.0,
            i if i < EFF_OFF => g.rho[i - RHO_OFF] = 1.0,
            i => g.effects[(i - EFF_OFF) / 16][(i - EFF_OFF) % 16] = 1.0,
        }
        g
    }
}

/// Gauss–Newton curvature of the negative log-likelihood in raw
/// coordinates, `Σ w ∇p ∇pᵀ` with `w` the larger of the expected
/// (`N/p`) and observed (`n/p²`) information, `p` floored at `P_MIN`, plus
/// the curvature of the negative-probability penalty.
pub fn fisher(raw: &Raw, data: &Data) -> DMatrix<f64> {
    const CHUNK: usize = 256;
    let mut h = DMatrix::zeros(RAW_DIM, RAW_DIM);
    let mut states: Vec<Vec16> = Vec::new();
    for (ops_chunk, counts_chunk) in data.circuits.chunks(CHUNK).zip(data.counts.chunks(CHUNK)) {
        let mut jac = DMatrix::zeros(4 * ops_chunk.len(), RAW_DIM);
        for (c, (ops, n)) in ops_chunk.iter().zip(counts_chunk).enumerate() {
            states.clear();
            let mut s = raw.rho;
            for &o in ops {
                states.push(s);
                s = raw.gates[o as usize] * s;
            }
            let shots: f64 = n.iter().sum();
            let w: [f64; 4] = std::array::from_fn(|k| {
                let p = raw.effects[k].dot(&s);
                let q = p.max(P_MIN);
                let penalty = if p < 0.0 { shots / P_MIN } else { 0.0 };
                ((shots / q).max(n[k] / (q * q)) + penalty).sqrt()
            });
            let mut b: [Vec16; 4] = std::array::from_fn(|k| raw.effects[k] * w[k]);
            for k in 0..4 {
                let row = 4 * c + k;
                for j in 0..16 {
                    jac[(row, EFF_OFF + 16 * k + j)] = s[j] * w[k];
                }
            }
            for (t, &o) in ops.iter().enumerate().rev() {
                let st = &states[t];
                let base = o as usize * 256;
                for k in 0..4 {
                    let row = 4 * c + k;
                    for i in 0..16 {
                        let bi = b[k][i];
                        if bi != 0.0 {
                            for j in 0..16 {
                                jac[(row, base + i * 16 + j)] += bi * st[j];
                            }
                        }
                    }
                    b[k] = raw.gates[o as usize].tr_mul(&b[k]);
                }
            }
            for k in 0..4 {
                for j in 0..16 {
                    jac[(4 * c + k, RHO_OFF + j)] = b[k][j];
                }
            }
        }
        let jt = jac.transpose();
        h += &jt * &jac;
    }
    h
}

/// Raw model: matrices and vectors the engine works with.
#[derive(Debug, Clone)]
pub struct Raw {
    pub gates: [Mat16; 5],
    pub rho: Vec16,
    pub effects: [Vec16; 4],
}

impl Raw {
    pub fn from_gateset(gs: &GateSet) -> Self {
        Self {
            gates: std::array::from_fn(|i| *gs.gates[i].matrix()),
            rho: gs.rho_vec(),
            effects: std::array::from_fn(|k| gs.effect_vec(k)),
        }
    }

    pub fn to_gateset(&self) -> GateSet {
        GateSet {
            gates: std::array::from_fn(|i| Ptm::from_matrix(self.gates[i])),
            rho: std::array::from_fn(|j| self.rho[j]),
            effects: std::array::from_fn(|k| std::array::from_fn(|j| self.effects[k][j])),
        }
    }
}

/// Log-likelihood (with the quadratic continuation below `P_MIN` and a
/// quadratic penalty on negative probabilities) and, optionally, its gradient with respect to the raw model.
pub fn loglik(raw: &Raw, data: &Data, mut grad: Option<&mut Grad>) -> f64 {
    let mut total = 0.0;
    let mut states: Vec<Vec16> = Vec::new();
    let mut local = grad.as_ref().map(|_| Grad::zeros());
    for (ops, n) in data.circuits.iter().zip(&data.counts) {
        states.clear();
        let mut s = raw.rho;
        for &o in ops {
            states.push(s);
            s = raw.gates[o as usize] * s;
        }
        let shots: f64 = n.iter().sum();
        let mut w = [0.0; 4];
        for k in 0..4 {
            let p = raw.effects[k].dot(&s);
            let (l, dl) = ell(p);
            total += n[k] * l;
            w[k] = n[k] * dl;
            if p < 0.0 {
                // Zero-count outcomes would otherwise be free to go negative.
                total -= shots * p * p / (2.0 * P_MIN);
                w[k] -= shots * p / P_MIN;
            }
        }
        if let Some(g) = local.as_mut() {
            let mut b = Vec16::zeros();
            for k in 0..4 {
                if w[k] != 0.0 {
                    g.effects[k] += s * w[k];
                    b += raw.effects[k] * w[k];
                }
            }
            for (t, &o) in ops.iter().enumerate().rev() {
                let st = &states[t];
                g.gates[o as usize] += b * st.transpose();
                b = raw.gates[o as usize].transpose() * b;
            }
            g.rho += b;
        }
    }
    if let (Some(g), Some(l)) = (grad.as_deref_mut(), local) {
        *g = l;
    }
    total
}

pub fn probabilities(raw: &Raw, ops: &[u8]) -> [f64; 4] {
    let s = ops.iter().fold(raw.rho, |s, &o| raw.gates[o as usize] * s);
    std::array::from_fn(|k| raw.effects[k].dot(&s))
}

/// A map from a real parameter vector to a raw model, with the gradient
/// pulled back through it.
pub trait Parameterization: Sync {
    fn dim(&self) -> usize;
    fn decode(&self, x: &[f64]) -> Raw;
    fn encode(&self, gs: &GateSet) -> Vec<f64>;
    fn pullback(&self, x: &[f64], g: &Grad) -> Vec<f64>;

    /// `∂raw/∂x`, `RAW_DIM × dim`.
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(RAW_DIM, self.dim());
        for i in 0..RAW_DIM {
            let row = self.pullback(x, &Grad::unit(i));
            for (j, v) in row.into_iter().enumerate() {
                d[(i, j)] = v;
            }
        }
        d
    }

    /// Extra curvature of `−log L` from the curvature of the map itself,
    /// given the raw gradient `g`; `None` for linear maps.
    fn curvature(&self, _x: &[f64], _g: &Grad) -> Option<DMatrix<f64>> {
        None
    }
}

pub struct TpParam;

impl Parameterization for TpParam {
    fn dim(&self) -> usize {
        5 * 240 + 15 + 48
    }

    fn decode(&self, x: &[f64]) -> Raw {
        let mut it = x.iter().copied();
        let gates = std::array::from_fn(|_| {
            let mut m = Mat16::zeros();
            m[(0, 0)] = 1.0;
            for i in 1..16 {
                for j in 0..16 {
                    m[(i, j)] = it.next().unwrap();
                }
            }
            m
        });
        let mut rho = Vec16::zeros();
        rho[0] = 1.0;
        for j in 1..16 {
            rho[j] = it.next().unwrap();
        }
        let mut effects = [Vec16::zeros(); 4];
        for e in effects.iter_mut().take(3) {
            for j in 0..16 {
                e[j] = it.next().unwrap();
            }
        }
        let mut last = Vec16::zeros();
        last[0] = 1.0;
        effects[3] = last - effects[0] - effects[1] - effects[2];
        Raw { gates, rho, effects }
    }

    fn encode(&self, gs: &GateSet) -> Vec<f64> {
        let raw = Raw::from_gateset(gs);
        let mut x = Vec::with_capacity(self.dim());
        for g in &raw.gates {
            for i in 1..16 {
                for j in 0..16 {
                    x.push(g[(i, j)]);
                }
            }
        }
        x.extend((1..16).map(|j| raw.rho[j]));
        for e in raw.effects.iter().take(3) {
            x.extend(e.iter());
        }
        x
    }

    fn pullback(&self, _x: &[f64], g: &Grad) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        for d in &g.gates {
            for i in 1..16 {
                for j in 0..16 {
                    out.push(d[(i, j)]);
                }
            }
        }
        out.extend((1..16).map(|j| g.rho[j]));
        for k in 0..3 {
            let d = g.effects[k] - g.effects[3];
            out.extend(d.iter());
        }
        out
    }
}

pub struct CptpParam;

/// Lower-triangular factor of an `n × n` matrix: real diagonal, complex
/// below. Entry `(i, j)`, `j ≤ i`, starts at `i² + 2j`.
const GATE_DIM: usize = 256;
const SMALL_DIM: usize = 16;

fn tri_index(i: usize, j: usize) -> usize {
    i * i + 2 * j
}

fn read_tri<const N: usize>(x: &[f64]) -> nalgebra::SMatrix<C64, N, N> {
    nalgebra::SMatrix::<C64, N, N>::from_fn(|i, j| match j.cmp(&i) {
        std::cmp::Ordering::Greater => C64::new(0.0, 0.0),
        std::cmp::Ordering::Equal => C64::new(x[tri_index(i, i)], 0.0),
        std::cmp::Ordering::Less => C64::new(x[tri_index(i, j)], x[tri_index(i, j) + 1]),
    })
}

fn write_tri<const N: usize>(m: &nalgebra::SMatrix<C64, N, N>, out: &mut Vec<f64>) {
    for i in 0..N {
        for j in 0..i {
            out.push(m[(i, j)].re);
            out.push(m[(i, j)].im);
        }
        out.push(m[(i, i)].re);
    }
}

fn herm4(m: &Mat4c) -> Mat4c {
    (m + m.adjoint()) * c(0.5)
}

/// `f(T)` for Hermitian `T` together with its eigensystem.
fn herm_fn(t: &Mat4c, f: impl Fn(f64) -> f64) -> (Mat4c, SymmetricEigen<C64, nalgebra::U4>) {
    let e = herm4(t).symmetric_eigen();
    let d = Mat4c::from_diagonal(&e.eigenvalues.map(|l| c(f(l))));
    (e.eigenvectors * d * e.eigenvectors.adjoint(), e)
}

/// Adjoint of the Fréchet derivative of `f` at `T`: `Re Tr(G df(T)[dT]) =
/// Re Tr(out · dT)`.
fn daleckii_krein(e: &SymmetricEigen<C64, nalgebra::U4>, f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64, g: &Mat4c) -> Mat4c {
    let u = &e.eigenvectors;
    let l = &e.eigenvalues;
    let gt = u.adjoint() * herm4(g) * u;
    let m = Mat4c::from_fn(|i, j| {
        let (a, b) = (l[i], l[j]);
        let gamma = if (a - b).abs() > 1e-10 * (a.abs() + b.abs()) { (f(a) - f(b)) / (a - b) } else { df(a) };
        gt[(i, j)] * gamma
    });
    u * m * u.adjoint()
}

/// Cholesky factor of a PSD matrix, with eigenvalues clipped at zero and a
/// small ridge so that rank-deficient inputs still factor.
fn psd_factor16(m: &Mat16c) -> Mat16c {
    let e = ((m + m.adjoint()) * c(0.5)).symmetric_eigen();
    let ridge = 1e-13 * e.eigenvalues.iter().map(|l| l.abs()).sum::<f64>().max(1e-300);
    let d = Mat16c::from_diagonal(&e.eigenvalues.map(|l| c(l.max(0.0) + ridge)));
    (e.eigenvectors * d * e.eigenvectors.adjoint()).cholesky().expect("positive definite").l()
}

fn psd_factor4(m: &Mat4c) -> Mat4c {
    let e = herm4(m).symmetric_eigen();
    let ridge = 1e-13 * e.eigenvalues.iter().map(|l| l.abs()).sum::<f64>().max(1e-300);
    let d = Mat4c::from_diagonal(&e.eigenvalues.map(|l| c(l.max(0.0) + ridge)));
    (e.eigenvectors * d * e.eigenvectors.adjoint()).cholesky().expect("positive definite").l()
}

fn pauli_op(v: &Vec16, scale: f64) -> Mat4c {
    let mut m = Mat4c::zeros();
    for j in 0..16 {
        if v[j] != 0.0 {
            m += product(j) * c(v[j] * scale);
        }
    }
    m
}

fn inv_sqrt_half(t: f64) -> f64 {
    0.5 / t.sqrt()
}

fn d_inv_sqrt_half(t: f64) -> f64 {
    -0.25 / (t * t.sqrt())
}

fn inv_sqrt(t: f64) -> f64 {
    1.0 / t.sqrt()
}

fn d_inv_sqrt(t: f64) -> f64 {
    -0.5 / (t * t.sqrt())
}

/// One gate's factor and the quantities its gradient needs.
struct GateFactor {
    a: Mat16c,
    j0s16: Mat16c,
    s16: Mat16c,
    eig: SymmetricEigen<C64, nalgebra::U4>,
    ptm: Mat16,
}

impl GateFactor {
    fn new(x: &[f64]) -> Self {
        let a = read_tri::<16>(x);
        let j0 = a * a.adjoint();
        let (s, eig) = herm_fn(&partial_trace_output(&j0), inv_sqrt_half);
        let s16 = kron4(&s, &Mat4c::identity());
        let j0s16 = j0 * s16;
        let ptm = choi_project(&(s16 * j0s16));
        Self { a, j0s16, s16, eig, ptm }
    }

    /// Operator `K_tot` with `∂/∂A = 2 K_tot A`, for raw gradient `d`.
    fn k_total(&self, d: &Mat16) -> Mat16c {
        let k = choi_expand(d);
        let y = self.j0s16 * k;
        let gs = partial_trace_output(&(y + y.adjoint()));
        let gt = daleckii_krein(&self.eig, inv_sqrt_half, d_inv_sqrt_half, &gs);
        self.s16 * k * self.s16 + kron4(&gt, &Mat4c::identity())
    }
}

/// State and effect factors.
struct Spam {
    b: Mat4c,
    xr: Mat4c,
    t: f64,
    cs: Vec<Mat4c>,
    fs: Vec<Mat4c>,
    w: Mat4c,
    eig: SymmetricEigen<C64, nalgebra::U4>,
}

impl Spam {
    fn new(x: &[f64]) -> Self {
        let b = read_tri::<4>(&x[..SMALL_DIM]);
        let xr = b * b.adjoint();
        let t = xr.trace().re;
        let cs: Vec<Mat4c> = (0..4).map(|k| read_tri::<4>(&x[SMALL_DIM * (k + 1)..SMALL_DIM * (k + 2)])).collect();
        let fs: Vec<Mat4c> = cs.iter().map(|ck| ck * ck.adjoint()).collect();
        let sum = fs.iter().fold(Mat4c::zeros(), |a, f| a + f);
        let (w, eig) = herm_fn(&sum, inv_sqrt);
        Self { b, xr, t, cs, fs, w, eig }
    }

    fn rho(&self) -> Vec16 {
        pauli_vector(&(self.xr / c(self.t)))
    }

    fn effect(&self, k: usize) -> Vec16 {
        pauli_vector(&(self.w * self.fs[k] * self.w)) * 0.25
    }

    /// `K` operators of the state and of each effect factor.
    fn k_ops(&self, rho: &Vec16, effects: &[Vec16; 4]) -> (Mat4c, Vec<Mat4c>) {
        let kr = pauli_op(rho, 1.0);
        let kx = kr * c(1.0 / self.t) - Mat4c::identity() * c((kr * self.xr).trace().re / (self.t * self.t));
        let ks: Vec<Mat4c> = (0..4).map(|k| pauli_op(&effects[k], 0.25)).collect();
        let w = &self.w;
        let gw = (0..4).fold(Mat4c::zeros(), |acc, k| acc + self.fs[k] * w * ks[k] + ks[k] * w * self.fs[k]);
        let gsum = daleckii_krein(&self.eig, inv_sqrt, d_inv_sqrt, &gw);
        (kx, ks.iter().map(|k| w * k * w + gsum).collect())
    }

    fn write_grad(&self, kx: &Mat4c, kk: &[Mat4c], out: &mut Vec<f64>) {
        write_tri(&((kx * self.b) * c(2.0)), out);
        for (k, op) in kk.iter().enumerate() {
            write_tri(&((op * self.cs[k]) * c(2.0)), out);
        }
    }
}

impl CptpParam {
    /// Choi of the PTM `R`, normalized to unit trace.
    fn choi(r: &Mat16) -> Mat16c {
        choi_expand(r) * c(1.0 / 16.0)
    }

    fn spam_offset() -> usize {
        5 * GATE_DIM
    }
}

/// Adds `−2 Re Tr(K δA δA†)` over the triangular entries of an `n × n`
/// factor starting at `off`: the curvature of `A ↦ AA†` against a fixed
/// gradient operator `K`.
fn factor_curvature(h: &mut DMatrix<f64>, off: usize, n: usize, k: impl Fn(usize, usize) -> C64) {
    // (index of re part, index of im part if any) for entry (i, j).
    let idx = |i: usize, j: usize| -> (usize, Option<usize>) {
        let base = off + tri_index(i, j);
        if i == j { (base, None) } else { (base, Some(base + 1)) }
    };
    for j in 0..n {
        for i in j..n {
            let (ar, ai) = idx(i, j);
            for ip in j..n {
                let (br, bi) = idx(ip, j);
                let (kr, ki) = (k(i, ip).re, k(i, ip).im);
                h[(ar, br)] -= 2.0 * kr;
                if let Some(bi) = bi {
                    h[(ar, bi)] += 2.0 * ki;
                }
                if let Some(ai) = ai {
                    h[(ai, br)] -= 2.0 * ki;
                    if let Some(bi) = bi {
                        h[(ai, bi)] -= 2.0 * kr;
                    }
                }
            }
        }
    }
}

fn negative_part16(k: &Mat16c) -> Mat16c {
    let e = ((k + k.adjoint()) * c(0.5)).symmetric_eigen();
    e.eigenvectors * Mat16c::from_diagonal(&e.eigenvalues.map(|l| c(l.min(0.0)))) * e.eigenvectors.adjoint()
}

impl Parameterization for CptpParam {
    fn dim(&self) -> usize {
        5 * GATE_DIM + 5 * SMALL_DIM
    }

    fn decode(&self, x: &[f64]) -> Raw {
        let gates = std::array::from_fn(|g| GateFactor::new(&x[g * GATE_DIM..(g + 1) * GATE_DIM]).ptm);
        let spam = Spam::new(&x[Self::spam_offset()..]);
        Raw { gates, rho: spam.rho(), effects: std::array::from_fn(|k| spam.effect(k)) }
    }

    fn encode(&self, gs: &GateSet) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.dim());
        for g in &gs.gates {
            write_tri(&psd_factor16(&Self::choi(g.matrix())), &mut x);
        }
        write_tri(&psd_factor4(&crate::qcore::from_pauli_vector(&gs.rho_vec())), &mut x);
        for k in 0..4 {
            // e_k = Tr(E_k P_j)/4 ⇒ E_k = Σ_j e_kj P_j.
            write_tri(&psd_factor4(&pauli_op(&gs.effect_vec(k), 1.0)), &mut x);
        }
        x
    }

    fn pullback(&self, x: &[f64], g: &Grad) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        for (gi, d) in g.gates.iter().enumerate() {
            let f = GateFactor::new(&x[gi * GATE_DIM..(gi + 1) * GATE_DIM]);
            write_tri(&((f.k_total(d) * f.a) * c(2.0)), &mut out);
        }
        let spam = Spam::new(&x[Self::spam_offset()..]);
        let (kx, kk) = spam.k_ops(&g.rho, &g.effects);
        spam.write_grad(&kx, &kk, &mut out);
        out
    }

    /// Block diagonal: each gate factor only moves its own PTM.
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(RAW_DIM, self.dim());
        let mut col = Vec::with_capacity(GATE_DIM);
        for gi in 0..5 {
            let f = GateFactor::new(&x[gi * GATE_DIM..(gi + 1) * GATE_DIM]);
            for r in 0..256 {
                let mut unit = Mat16::zeros();
                unit[(r / 16, r % 16)] = 1.0;
                col.clear();
                write_tri(&((f.k_total(&unit) * f.a) * c(2.0)), &mut col);
                for (j, v) in col.iter().enumerate() {
                    d[(gi * 256 + r, gi * GATE_DIM + j)] = *v;
                }
            }
        }
        let off = Self::spam_offset();
        let spam = Spam::new(&x[off..]);
        for r in RHO_OFF..RAW_DIM {
            let u = Grad::unit(r);
            let (kx, kk) = spam.k_ops(&u.rho, &u.effects);
            col.clear();
            spam.write_grad(&kx, &kk, &mut col);
            for (j, v) in col.iter().enumerate() {
                d[(r, off + j)] = *v;
            }
        }
        d
    }

    fn curvature(&self, x: &[f64], g: &Grad) -> Option<DMatrix<f64>> {
        // Only directions where K curves the objective upward are kept, so
        // the correction is positive semidefinite.
        let mut h = DMatrix::zeros(self.dim(), self.dim());
        for (gi, d) in g.gates.iter().enumerate() {
            let f = GateFactor::new(&x[gi * GATE_DIM..(gi + 1) * GATE_DIM]);
            let k = negative_part16(&f.k_total(d));
            factor_curvature(&mut h, gi * GATE_DIM, 16, |i, j| k[(i, j)]);
        }
        let off = Self::spam_offset();
        let spam = Spam::new(&x[off..]);
        let (kx, kk) = spam.k_ops(&g.rho, &g.effects);
        let neg = |k: &Mat4c| herm_fn(k, |l| l.min(0.0)).0;
        let kx = neg(&kx);
        factor_curvature(&mut h, off, 4, |i, j| kx[(i, j)]);
        for (k, op) in kk.iter().enumerate() {
            let op = neg(op);
            factor_curvature(&mut h, off + SMALL_DIM * (k + 1), 4, |i, j| op[(i, j)]);
        }
        Some(h)
    }
}
