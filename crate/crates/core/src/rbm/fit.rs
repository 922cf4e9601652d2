//! Decay fits, the interleaved-error relation and parametric bootstrap.
//!
//! `F(L) = A·p^L + B` is fitted by variable projection: for fixed `p` the
//! model is linear in `(A, B)`, with `B` held to `[0.2, 0.3]`, and the
//! remaining one-dimensional problem in `p` is solved by a log-spaced scan
//! refined with golden-section search.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use super::{Fidelities, FidelityPoint, RbmDesign, RbmError};

pub const B_RANGE: (f64, f64) = (0.2, 0.3);
/// Smallest fitted amplitude that still counts as a visible decay.
const MIN_AMPLITUDE: f64 = 0.05;
const P_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Weighting {
    /// Inverse-variance weights from the per-length standard error.
    Weighted,
    Unweighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub a: f64,
    pub b: f64,
    pub p: f64,
    /// Error per step, `(3/4)(1 − p)`.
    pub eps: f64,
    pub max_length: usize,
    pub weighting: Weighting,
    /// Weighted residual sum of squares.
    pub rss: f64,
    pub sigma: Option<f64>,
}

impl DecayFit {
    pub fn model(&self, length: usize) -> f64 {
        self.a * self.p.powi(length as i32) + self.b
    }
}

fn weights(points: &[FidelityPoint], weighting: Weighting) -> Vec<f64> {
    match weighting {
        Weighting::Unweighted => vec![1.0; points.len()],
        Weighting::Weighted => points
            .iter()
            .map(|p| {
                // One count out of all shots at that length bounds the resolution.
                let floor = 1.0 / p.shots.max(1) as f64;
                1.0 / p.sem.max(floor).powi(2)
            })
            .collect(),
    }
}

/// Best `(A, B, rss)` at fixed `p`.
fn project(p: f64, pts: &[FidelityPoint], w: &[f64]) -> (f64, f64, f64) {
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (pt, &wi) in pts.iter().zip(w) {
        let x = p.powi(pt.length as i32);
        sw += wi;
        sx += wi * x;
        sy += wi * pt.mean;
        sxx += wi * x * x;
        sxy += wi * x * pt.mean;
    }
    let det = sw * sxx - sx * sx;
    let unconstrained_b = if det > 1e-14 * sw * sxx { Some((sxx * sy - sx * sxy) / det) } else { None };
    let (a, b) = match unconstrained_b {
        Some(b) if (B_RANGE.0..=B_RANGE.1).contains(&b) => ((sw * sxy - sx * sy) / det, b),
        other => {
            let b = other.unwrap_or(0.25).clamp(B_RANGE.0, B_RANGE.1);
            let a = if sxx > 0.0 { (sxy - b * sx) / sxx } else { 0.0 };
            (a, b)
        }
    };
    let rss = pts
        .iter()
        .zip(w)
        .map(|(pt, &wi)| wi * (pt.mean - a * p.powi(pt.length as i32) - b).powi(2))
        .sum();
    (a, b, rss)
}

fn distinct_lengths(points: &[FidelityPoint]) -> usize {
    let mut ls: Vec<usize> = points.iter().map(|p| p.length).collect();
    ls.sort_unstable();
    ls.dedup();
    ls.len()
}

pub fn fit_decay(points: &[FidelityPoint]) -> Result<DecayFit, RbmError> {
    fit_decay_with(points, Weighting::Weighted)
}

/// Least-squares decay fit. With exactly two lengths `B` is fixed at 1/4
/// and the solution is algebraic.
pub fn fit_decay_with(points: &[FidelityPoint], weighting: Weighting) -> Result<DecayFit, RbmError> {
    let n = distinct_lengths(points);
    let max_length = points.iter().map(|p| p.length).max().unwrap_or(0);
    if n < 2 {
        return Err(RbmError::TooFewLengths { needed: 2, got: n });
    }
    let w = weights(points, weighting);
    let finish = |a: f64, b: f64, p: f64| -> Result<DecayFit, RbmError> {
        if !(a >= MIN_AMPLITUDE) {
            return Err(RbmError::Unidentifiable { amplitude: a });
        }
        if !(p > P_FLOOR && p <= 1.0) {
            return Err(RbmError::DecayOutOfRange(p));
        }
        let rss = points
            .iter()
            .zip(&w)
            .map(|(pt, &wi)| wi * (pt.mean - a * p.powi(pt.length as i32) - b).powi(2))
            .sum();
        Ok(DecayFit { a, b, p, eps: 0.75 * (1.0 - p), max_length, weighting, rss, sigma: None })
    };
    if n == 2 {
        let mut sorted = points.to_vec();
        sorted.sort_by_key(|p| p.length);
        let (p1, p2) = (sorted[0], *sorted.last().unwrap());
        let b = 0.25;
        let ratio = (p2.mean - b) / (p1.mean - b);
        if !(ratio > 0.0) || !(p1.mean - b).is_normal() {
            return Err(RbmError::Unidentifiable { amplitude: p1.mean - b });
        }
        let mut p = ratio.powf(1.0 / (p2.length - p1.length) as f64);
        if p > 1.0 && p < 1.0 + 1e-12 {
            p = 1.0;
        }
        let a = (p1.mean - b) / p.powi(p1.length as i32);
        return finish(a, b, p);
    }

    // Scan q = 1 − p on a log grid, plus p = 1 exactly.
    let cost = |lq: f64| project(1.0 - lq.exp(), points, &w).2;
    let (lo, hi) = (1e-10f64.ln(), (1.0 - P_FLOOR).ln());
    let grid = 600;
    let step = (hi - lo) / grid as f64;
    let (mut best_k, mut best) = (0usize, f64::INFINITY);
    for k in 0..=grid {
        let c = cost(lo + step * k as f64);
        if c < best {
            best = c;
            best_k = k;
        }
    }
    let (mut a_, mut b_) = (lo + step * best_k.saturating_sub(1) as f64, lo + step * (best_k + 1).min(grid) as f64);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b_ - g * (b_ - a_);
    let mut x2 = a_ + g * (b_ - a_);
    let (mut f1, mut f2) = (cost(x1), cost(x2));
    for _ in 0..200 {
        if b_ - a_ < 1e-13 {
            break;
        }
        if f1 < f2 {
            b_ = x2;
            x2 = x1;
            f2 = f1;
            x1 = b_ - g * (b_ - a_);
            f1 = cost(x1);
        } else {
            a_ = x1;
            x1 = x2;
            f1 = f2;
            x2 = a_ + g * (b_ - a_);
            f2 = cost(x2);
        }
    }
    let lq = 0.5 * (a_ + b_);
    let mut p = 1.0 - lq.exp();
    let (mut a, mut b, rss) = project(p, points, &w);
    let (a1, b1, rss1) = project(1.0, points, &w);
    if rss1 < rss {
        (a, b, p) = (a1, b1, 1.0);
    }
    finish(a, b, p)
}

fn alpha(n: u32) -> f64 {
    let d = 2f64.powi(n as i32);
    d / (d - 1.0)
}

fn check_domain(eps: f64, n: u32, name: &str) -> Result<(), RbmError> {
    let d = 2f64.powi(n as i32);
    if !(0.0..(d - 1.0) / d).contains(&eps) {
        return Err(RbmError::Domain(format!("{name} = {eps} outside [0, {})", (d - 1.0) / d)));
    }
    Ok(())
}

/// `ε_G = (1/α_n)[1 − (1 − α_n ε_g′)/(1 − α_n ε_g)]`, `α_n = 2ⁿ/(2ⁿ−1)`.
pub fn interleaved_error(eps_ref: f64, eps_int: f64, n: u32) -> Result<f64, RbmError> {
    if n == 0 {
        return Err(RbmError::Domain("qubit count must be positive".into()));
    }
    check_domain(eps_ref, n, "reference error")?;
    check_domain(eps_int, n, "interleaved error")?;
    let al = alpha(n);
    let den = 1.0 - al * eps_ref;
    if den <= 0.0 {
        return Err(RbmError::Domain("denominator is not positive".into()));
    }
    Ok((1.0 - (1.0 - al * eps_int) / den) / al)
}

/// Forward relation: interleaved error from reference and gate errors.
pub fn compose_interleaved(eps_ref: f64, eps_gate: f64, n: u32) -> Result<f64, RbmError> {
    if n == 0 {
        return Err(RbmError::Domain("qubit count must be positive".into()));
    }
    check_domain(eps_ref, n, "reference error")?;
    check_domain(eps_gate, n, "gate error")?;
    let al = alpha(n);
    Ok((1.0 - (1.0 - al * eps_ref) * (1.0 - al * eps_gate)) / al)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub sigma: f64,
    pub resamples: usize,
    /// Resamples whose refit failed and were excluded.
    pub failures: usize,
    pub warning: Option<String>,
}

fn resample<R: Rng + ?Sized>(fit: &DecayFit, design: &RbmDesign, rng: &mut R) -> Vec<FidelityPoint> {
    let k = design.randomizations;
    let n = design.shots;
    design
        .lengths
        .iter()
        .filter(|&&l| l <= fit.max_length)
        .map(|&l| {
            let f = fit.model(l).clamp(0.0, 1.0);
            let bin = Binomial::new(n, f).expect("probability in [0, 1]");
            let fs: Vec<f64> = (0..k).map(|_| bin.sample(rng) as f64 / n as f64).collect();
            let mean = fs.iter().sum::<f64>() / k as f64;
            let var = if k > 1 { fs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1) as f64 } else { 0.0 };
            FidelityPoint { length: l, mean, sem: (var / k as f64).sqrt(), sequences: k, shots: n * k as u64 }
        })
        .collect()
}

fn summarize(values: &[f64], resamples: usize) -> BootstrapResult {
    let failures = resamples - values.len();
    let mut warning = None;
    let sigma = if values.len() < 2 {
        warning = Some(format!("{} usable resample(s); σ is set to 0", values.len()));
        0.0
    } else {
        let m = values.iter().sum::<f64>() / values.len() as f64;
        (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
    };
    if failures > 0 && warning.is_none() {
        warning = Some(format!("{failures} of {resamples} resamples failed to fit and were excluded"));
    }
    BootstrapResult { sigma, resamples, failures, warning }
}

/// Parametric bootstrap of the error per step of one decay.
pub fn bootstrap<R: Rng + ?Sized>(
    fit: &DecayFit,
    design: &RbmDesign,
    rng: &mut R,
    resamples: usize,
) -> BootstrapResult {
    let vals: Vec<f64> = (0..resamples)
        .filter_map(|_| fit_decay_with(&resample(fit, design, rng), fit.weighting).ok().map(|f| f.eps))
        .collect();
    summarize(&vals, resamples)
}

/// Parametric bootstrap of `ε_G`, resampling both twins.
pub fn bootstrap_interleaved<R: Rng + ?Sized>(
    reference: &DecayFit,
    interleaved: &DecayFit,
    design: &RbmDesign,
    weighting: Weighting,
    rng: &mut R,
    resamples: usize,
) -> BootstrapResult {
    let vals: Vec<f64> = (0..resamples)
        .filter_map(|_| {
            let r = fit_decay_with(&resample(reference, design, rng), weighting).ok()?;
            let i = fit_decay_with(&resample(interleaved, design, rng), weighting).ok()?;
            interleaved_error(r.eps, i.eps, 2).ok()
        })
        .collect();
    summarize(&vals, resamples)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxLenPoint {
    pub max_length: usize,
    pub eps_gate: f64,
    pub sigma: f64,
}

/// `ε_G` refitted on `L ≤ L_max` for every design length with at least
/// three lengths below it.
pub fn error_vs_maxlen<R: Rng + ?Sized>(
    fids: &Fidelities,
    design: &RbmDesign,
    weighting: Weighting,
    rng: &mut R,
    resamples: usize,
) -> Result<Vec<MaxLenPoint>, RbmError> {
    let mut out = Vec::new();
    for (i, &lmax) in design.lengths.iter().enumerate() {
        if i + 1 < 3 {
            continue;
        }
        let cut = |pts: &[FidelityPoint]| pts.iter().copied().filter(|p| p.length <= lmax).collect::<Vec<_>>();
        let r = fit_decay_with(&cut(&fids.reference), weighting)?;
        let g = fit_decay_with(&cut(&fids.interleaved), weighting)?;
        let eps_gate = interleaved_error(r.eps, g.eps, 2)?;
        let sigma = bootstrap_interleaved(&r, &g, design, weighting, rng, resamples).sigma;
        out.push(MaxLenPoint { max_length: lmax, eps_gate, sigma });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn curve(eps: f64, lengths: &[usize]) -> Vec<FidelityPoint> {
        let p = 1.0 - 4.0 * eps / 3.0;
        lengths
            .iter()
            .map(|&l| FidelityPoint { length: l, mean: 0.75 * p.powi(l as i32) + 0.25, sem: 0.0, sequences: 100, shots: 10_000 })
            .collect()
    }

    #[test]
    fn recovers_exact_curve() {
        let pts = curve(8.3e-3, &[1, 2, 3, 5, 7, 10, 15, 20, 30, 40, 50, 60]);
        for w in [Weighting::Weighted, Weighting::Unweighted] {
            let f = fit_decay_with(&pts, w).unwrap();
            assert!((f.eps - 8.3e-3).abs() < 1e-5, "{f:?}");
            assert!((f.a - 0.75).abs() < 1e-4 && (f.b - 0.25).abs() < 1e-4);
        }
    }

    #[test]
    fn flat_quarter_is_unidentifiable() {
        let pts: Vec<_> = [1, 5, 10, 20]
            .iter()
            .map(|&l| FidelityPoint { length: l, mean: 0.25, sem: 0.01, sequences: 10, shots: 100 })
            .collect();
        assert!(matches!(fit_decay(&pts), Err(RbmError::Unidentifiable { .. })));
    }

    #[test]
    fn ideal_data_gives_zero_error() {
        let pts = curve(0.0, &[1, 5, 10]);
        let f = fit_decay(&pts).unwrap();
        assert_eq!(f.p, 1.0);
        assert_eq!(f.eps, 0.0);
    }

    #[test]
    fn two_point_closed_form() {
        let (a, p) = (0.75f64, 0.97f64);
        let pts: Vec<_> = [3usize, 11]
            .iter()
            .map(|&l| FidelityPoint { length: l, mean: a * p.powi(l as i32) + 0.25, sem: 0.0, sequences: 1, shots: 1 })
            .collect();
        let f = fit_decay(&pts).unwrap();
        let want = ((pts[1].mean - 0.25) / (pts[0].mean - 0.25)).powf(1.0 / 8.0);
        assert!((f.p - want).abs() < 1e-14 && (f.p - p).abs() < 1e-12);
        assert!((f.a - a).abs() < 1e-12);
    }

    #[test]
    fn interleaved_relation() {
        assert_eq!(alpha(2), 4.0 / 3.0);
        assert!(interleaved_error(4e-3, 4e-3, 2).unwrap().abs() < 1e-18);
        assert!((interleaved_error(0.0, 6e-3, 2).unwrap() - 6e-3).abs() < 1e-15);
        let fwd = compose_interleaved(8.3e-3, 2.9e-3, 2).unwrap();
        assert!((fwd - 1.12e-2).abs() < 5e-5, "{fwd}");
        assert!((interleaved_error(8.3e-3, fwd, 2).unwrap() - 2.9e-3).abs() < 1e-9);
        assert!(interleaved_error(0.75, 0.1, 2).is_err());
        assert!(interleaved_error(-1e-3, 0.1, 2).is_err());
    }

    #[test]
    fn bootstrap_shrinks_with_shots() {
        let design = RbmDesign { shots: 10_000, interleaved: false, ..RbmDesign::default() };
        let fit = fit_decay(&curve(5e-3, &design.lengths)).unwrap();
        let r = bootstrap(&fit, &design, &mut ChaCha8Rng::seed_from_u64(1), 50);
        assert!(r.sigma < 1e-4 && r.sigma > 0.0, "{r:?}");
        let one = bootstrap(&fit, &design, &mut ChaCha8Rng::seed_from_u64(1), 1);
        assert_eq!(one.sigma, 0.0);
        assert!(one.warning.is_some());
        let again = bootstrap(&fit, &design, &mut ChaCha8Rng::seed_from_u64(1), 50);
        assert_eq!(r, again);
    }

    #[test]
    fn single_maxlen_matches_direct_fit() {
        let lengths = [1, 4, 9];
        let fids = Fidelities { reference: curve(4e-3, &lengths), interleaved: curve(6e-3, &lengths) };
        let design = RbmDesign { lengths: lengths.to_vec(), randomizations: 100, shots: 100, interleaved: true };
        let s = error_vs_maxlen(&fids, &design, Weighting::Weighted, &mut ChaCha8Rng::seed_from_u64(2), 10).unwrap();
        assert_eq!(s.len(), 1);
        let r = fit_decay(&fids.reference).unwrap();
        let g = fit_decay(&fids.interleaved).unwrap();
        assert_eq!(s[0].eps_gate, interleaved_error(r.eps, g.eps, 2).unwrap());
    }
}
