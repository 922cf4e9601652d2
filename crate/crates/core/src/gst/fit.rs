//! Maximum-likelihood estimation, goodness of fit and gauge optimization.

use std::collections::HashMap;
use std::sync::Mutex;

use argmin::core::{CostFunction, Error as ArgminError, Executor, Gradient, State, TerminationReason};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::LBFGS;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::design::GstDesign;
use super::model::{fisher, loglik, CptpParam, Data, Grad, Parameterization, TpParam};
use super::{parameter_count, GateSet, GstError, GATE_LABELS};
use crate::harness::dataset::CountDataset;
use crate::qcore::{Mat16, Vec16};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Model {
    /// Completely positive, trace-preserving gates; physical SPAM.
    Cptp,
    /// Trace-preserving gates only.
    Tp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Levenberg–Marquardt iterations per fit.
    pub max_iters: u64,
    /// Log-likelihood gain below which a fit is considered converged.
    pub loglik_tol: f64,
    /// Fit L = 1, 2, 4, ... in turn, warm-starting each from the last.
    pub progressive: bool,
    /// Depolarizing strength of the starting point (the CPTP map needs a
    /// full-rank Choi matrix to start from).
    pub start_depolarizing: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iters: 100, loglik_tol: 0.02, progressive: true, start_depolarizing: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub estimate: GateSet,
    pub model: Model,
    pub loglik: f64,
    /// `2 (log L_max − log L)`.
    pub statistic: f64,
    pub circuits: usize,
    pub iterations: u64,
    pub converged: bool,
    pub grad_norm: f64,
}

/// Counts for every design circuit, in design order.
pub fn gather(design: &GstDesign, data: &CountDataset) -> Result<Data, GstError> {
    let map: HashMap<_, _> = data.records.iter().map(|r| (&r.circuit, r.counts)).collect();
    let mut missing = design.circuits.iter().filter(|c| !map.contains_key(c));
    if let Some(first) = missing.next() {
        return Err(GstError::MissingCircuits { count: 1 + missing.count(), first: first.to_string() });
    }
    let circuits = design.circuits.iter().map(GateSet::compile).collect::<Result<_, _>>()?;
    let counts = design.circuits.iter().map(|c| map[c].map(|n| n as f64)).collect();
    Ok(Data { circuits, counts })
}

/// `2 (log L_max − log L)` of `gs` on `data`.
pub fn loglik_statistic(gs: &GateSet, data: &Data) -> f64 {
    2.0 * (data.max_loglik() - loglik(&super::model::Raw::from_gateset(gs), data, None))
}

struct Cache {
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    best: (f64, Vec<f64>),
}

/// Minimizes a smooth function with L-BFGS, remembering the best point seen
/// so that line-search failures still return something usable.
struct Smooth<F: Fn(&[f64]) -> (f64, Vec<f64>) + Sync> {
    eval: F,
    cache: Mutex<Option<Cache>>,
}

impl<F: Fn(&[f64]) -> (f64, Vec<f64>) + Sync> Smooth<F> {
    fn get(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let mut guard = self.cache.lock().expect("poisoned");
        if let Some(c) = guard.as_ref() {
            if c.x == x {
                return (c.f, c.g.clone());
            }
        }
        let (f, g) = (self.eval)(x);
        let best = match guard.take() {
            Some(c) if c.best.0 <= f || !f.is_finite() => c.best,
            _ => (f, x.to_vec()),
        };
        *guard = Some(Cache { x: x.to_vec(), f, g: g.clone(), best });
        (f, g)
    }
}

impl<F: Fn(&[f64]) -> (f64, Vec<f64>) + Sync> CostFunction for &Smooth<F> {
    type Param = Vec<f64>;
    type Output = f64;
    fn cost(&self, x: &Vec<f64>) -> Result<f64, ArgminError> {
        Ok(self.get(x).0)
    }
}

impl<F: Fn(&[f64]) -> (f64, Vec<f64>) + Sync> Gradient for &Smooth<F> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;
    fn gradient(&self, x: &Vec<f64>) -> Result<Vec<f64>, ArgminError> {
        Ok(self.get(x).1)
    }
}

struct Minimum {
    x: Vec<f64>,
    f: f64,
    grad_norm: f64,
    iterations: u64,
    converged: bool,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn minimize<F>(eval: F, x0: Vec<f64>, max_iters: u64, grad_tol: f64) -> Minimum
where
    F: Fn(&[f64]) -> (f64, Vec<f64>) + Sync,
{
    let problem = Smooth { eval, cache: Mutex::new(None) };
    let mut x = x0;
    let mut iterations = 0;
    // A failed line search restarts from the best point with a fresh memory.
    for _ in 0..5 {
        let remaining = max_iters.saturating_sub(iterations);
        if remaining == 0 {
            break;
        }
        let solver = LBFGS::new(MoreThuenteLineSearch::new(), 20)
            .with_tolerance_grad(grad_tol)
            .expect("valid tolerance")
            .with_tolerance_cost(0.0)
            .expect("valid tolerance");
        let run = Executor::new(&problem, solver).configure(|s| s.param(x.clone()).max_iters(remaining)).run();
        let reason = match run {
            Ok(res) => {
                iterations += res.state().get_iter();
                res.state().get_termination_reason().cloned()
            }
            Err(_) => None,
        };
        let best = problem.cache.lock().expect("poisoned").as_ref().map(|c| c.best.1.clone());
        if let Some(b) = best {
            x = b;
        }
        let g = problem.get(&x).1;
        let done = norm(&g) <= grad_tol;
        if done || matches!(reason, Some(TerminationReason::MaxItersReached)) {
            break;
        }
        if matches!(reason, Some(TerminationReason::SolverConverged)) {
            break;
        }
    }
    let (f, g) = problem.get(&x);
    let grad_norm = norm(&g);
    Minimum { x, f, grad_norm, iterations, converged: grad_norm <= grad_tol * 10.0 }
}

/// `Dᵀ F D` for a sparse `D`.
fn sandwich(d: &DMatrix<f64>, f: &DMatrix<f64>) -> DMatrix<f64> {
    let cols: Vec<Vec<(usize, f64)>> = (0..d.ncols())
        .map(|j| (0..d.nrows()).filter_map(|r| (d[(r, j)] != 0.0).then(|| (r, d[(r, j)]))).collect())
        .collect();
    let mut fd = DMatrix::zeros(f.nrows(), d.ncols());
    for (j, col) in cols.iter().enumerate() {
        let mut out = fd.column_mut(j);
        for &(r, v) in col {
            out.axpy(v, &f.column(r), 1.0);
        }
    }
    // F is symmetric, so rows of F·D are columns of (F·D)ᵀ = Dᵀ·F.
    let fdt = fd.transpose();
    let mut h = DMatrix::zeros(d.ncols(), d.ncols());
    for (i, col) in cols.iter().enumerate() {
        let mut out = h.column_mut(i);
        for &(r, v) in col {
            out.axpy(v, &fdt.column(r), 1.0);
        }
    }
    h
}

/// Levenberg–Marquardt ascent of the log-likelihood with the Gauss–Newton
/// curvature of [`fisher`] plus the parameterization's own curvature. Stops once a step gains less than
/// `opts.loglik_tol`.
fn fit_with<P: Parameterization>(param: &P, data: &Data, x0: Vec<f64>, opts: &FitOptions) -> Minimum {
    let shots: f64 = data.counts.iter().flatten().sum::<f64>().max(1.0);
    let n = param.dim();
    let mut x = DVector::from_vec(x0);
    let mut g = Grad::zeros();
    let mut f = loglik(&param.decode(x.as_slice()), data, Some(&mut g));
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    let mut grad = DVector::from_vec(param.pullback(x.as_slice(), &g));
    while iterations < opts.max_iters {
        iterations += 1;
        let raw = param.decode(x.as_slice());
        let d = param.jacobian(x.as_slice());
        let mut h = sandwich(&d, &fisher(&raw, data));
        if let Some(extra) = param.curvature(x.as_slice(), &g) {
            h += extra;
        }
        let scale = h.diagonal().max().max(1.0);
        let mut improved = None;
        for _ in 0..30 {
            let mut a = h.clone();
            for i in 0..n {
                a[(i, i)] += lambda * h[(i, i)].abs() + 1e-12 * scale;
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&grad);
            let trial = &x + &step;
            let mut gt = Grad::zeros();
            let ft = loglik(&param.decode(trial.as_slice()), data, Some(&mut gt));
            if ft.is_finite() && ft >= f {
                improved = Some((trial, ft, gt));
                lambda = (lambda / 3.0).max(1e-9);
                break;
            }
            lambda *= 4.0;
        }
        // No damping yields an ascent step: stationary to working precision.
        let Some((xt, ft, gt)) = improved else {
            converged = true;
            break;
        };
        let gain = ft - f;
        x = xt;
        f = ft;
        g = gt;
        grad = DVector::from_vec(param.pullback(x.as_slice(), &g));
        if gain < opts.loglik_tol {
            converged = true;
            break;
        }
    }
    Minimum { grad_norm: grad.norm() / shots, x: x.as_slice().to_vec(), f: -f / shots, iterations, converged }
}

fn fit_model(model: Model, data: &Data, start: &GateSet, opts: &FitOptions) -> (GateSet, Minimum) {
    match model {
        Model::Cptp => {
            let m = fit_with(&CptpParam, data, CptpParam.encode(start), opts);
            (CptpParam.decode(&m.x).to_gateset(), m)
        }
        Model::Tp => {
            let m = fit_with(&TpParam, data, TpParam.encode(start), opts);
            (TpParam.decode(&m.x).to_gateset(), m)
        }
    }
}

fn lengths(design: &GstDesign, opts: &FitOptions) -> Vec<usize> {
    let mut ls = design.config.lengths.clone();
    ls.sort_unstable();
    ls.dedup();
    if !opts.progressive {
        ls = ls.split_off(ls.len().saturating_sub(1));
    }
    ls
}

/// MLE over the whole design.
pub fn mle_fit(design: &GstDesign, data: &Data, model: Model, opts: &FitOptions) -> Result<FitResult, GstError> {
    if data.circuits.len() != design.circuits.len() {
        return Err(GstError::InvalidDesign(format!("{} data rows for {} circuits", data.circuits.len(), design.circuits.len())));
    }
    let mut current = GateSet::depolarized_target(opts.start_depolarizing);
    let mut last = None;
    let mut iterations = 0;
    for l in lengths(design, opts) {
        let sub = data.subset(&design.indices_up_to(l));
        let (est, m) = fit_model(model, &sub, &current, opts);
        iterations += m.iterations;
        current = est;
        last = Some(m);
    }
    let m = last.ok_or_else(|| GstError::InvalidDesign("no sequence lengths".into()))?;
    let shots: f64 = data.counts.iter().flatten().sum();
    let ll = -m.f * shots.max(1.0);
    Ok(FitResult {
        statistic: 2.0 * (data.max_loglik() - ll),
        loglik: ll,
        estimate: current,
        model,
        circuits: data.circuits.len(),
        iterations,
        converged: m.converged,
        grad_norm: m.grad_norm,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofPoint {
    pub max_length: usize,
    pub circuits: usize,
    /// `2 ΔlogL` of the TP fit.
    pub statistic: f64,
    pub dof: i64,
    /// `(2ΔlogL − k) / √(2k)`.
    pub n_sigma: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofReport {
    pub model: Model,
    pub points: Vec<GofPoint>,
}

/// Model violation per maximum length, from TP fits of each growing subset.
/// Each fit is warm-started from the previous one (or from `start`).
pub fn goodness_of_fit(design: &GstDesign, data: &Data, start: Option<&GateSet>, opts: &FitOptions) -> Result<GofReport, GstError> {
    let free = parameter_count(GATE_LABELS.len()).gauge_reduced as i64;
    let mut current = start.cloned().unwrap_or_else(|| GateSet::depolarized_target(opts.start_depolarizing));
    let mut points = Vec::new();
    for l in lengths(design, &FitOptions { progressive: true, ..opts.clone() }) {
        let idx = design.indices_up_to(l);
        let sub = data.subset(&idx);
        let (est, m) = fit_model(Model::Tp, &sub, &current, opts);
        let statistic = loglik_statistic(&est, &sub);
        let dof = 3 * idx.len() as i64 - free;
        let n_sigma = if dof > 0 { (statistic - dof as f64) / (2.0 * dof as f64).sqrt() } else { f64::NAN };
        points.push(GofPoint { max_length: l, circuits: idx.len(), statistic, dof, n_sigma, converged: m.converged });
        current = est;
    }
    Ok(GofReport { model: Model::Tp, points })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaugeResult {
    /// `M` with `G ↦ M G M⁻¹`.
    pub transform: Mat16,
    pub estimate: GateSet,
    pub objective: f64,
    pub condition_number: f64,
}

/// Largest acceptable condition number of the gauge transform.
pub const MAX_GAUGE_CONDITION: f64 = 1e6;

fn gauge_matrix(x: &[f64]) -> Mat16 {
    let mut m = Mat16::identity();
    for i in 1..16 {
        for j in 0..16 {
            m[(i, j)] += x[(i - 1) * 16 + j];
        }
    }
    m
}

/// Weighted Frobenius distance of `M · estimate` to `target` over the TP
/// gauge group, minimized by L-BFGS.
pub fn gauge_optimize(estimate: &GateSet, target: &GateSet, spam_weight: f64) -> Result<GaugeResult, GstError> {
    let gates: Vec<Mat16> = estimate.gates.iter().map(|g| *g.matrix()).collect();
    let tgates: Vec<Mat16> = target.gates.iter().map(|g| *g.matrix()).collect();
    let rho = estimate.rho_vec();
    let trho = target.rho_vec();
    let effects: Vec<Vec16> = (0..4).map(|k| estimate.effect_vec(k)).collect();
    let teffects: Vec<Vec16> = (0..4).map(|k| target.effect_vec(k)).collect();
    let eval = |x: &[f64]| {
        let m = gauge_matrix(x);
        let Some(inv) = m.try_inverse() else {
            return (f64::INFINITY, vec![0.0; x.len()]);
        };
        let mut f = 0.0;
        let mut d = Mat16::zeros();
        for (g, t) in gates.iter().zip(&tgates) {
            let gi = g * inv;
            let r = m * gi - t;
            f += r.norm_squared();
            d += (r * gi.transpose() - (m * gi).transpose() * r * inv.transpose()) * 2.0;
        }
        let rr = m * rho - trho;
        f += spam_weight * rr.norm_squared();
        d += rr * rho.transpose() * (2.0 * spam_weight);
        for (e, t) in effects.iter().zip(&teffects) {
            // Row vector e M⁻¹.
            let y = inv.transpose() * e - t;
            f += spam_weight * y.norm_squared();
            d -= inv.transpose() * e * y.transpose() * inv.transpose() * (2.0 * spam_weight);
        }
        let g = (1..16).flat_map(|i| (0..16).map(move |j| (i, j))).map(|(i, j)| d[(i, j)]).collect();
        (f, g)
    };
    let m = minimize(eval, vec![0.0; 240], 3000, 1e-12);
    let transform = gauge_matrix(&m.x);
    let sv = transform.singular_values();
    let condition_number = sv.max() / sv.min();
    if !condition_number.is_finite() || condition_number > MAX_GAUGE_CONDITION {
        return Err(GstError::IllConditionedGauge(condition_number));
    }
    Ok(GaugeResult { estimate: estimate.gauge_transform(&transform)?, transform, objective: m.f, condition_number })
}

