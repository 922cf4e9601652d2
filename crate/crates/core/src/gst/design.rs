//! Fiducial/germ experiment design.
//!
//! Every circuit is `p_i · g_k^l · m_j` (first op applied first) with
//! `l = max(1, ⌊L/|g_k|⌋)`. The bare fiducial pairs and the single-gate
//! germs at `L = 1` use every fiducial pair, which makes each gate
//! tomographically complete on its own; longer structures use a reduced set
//! of pairs picked greedily for the widest joint state/effect span.

use std::collections::HashMap;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{GateSet, GstError, GATE_LABELS};
use crate::harness::circuit::{parse_circuit, Circuit, GateLabel};
use crate::qcore::{Mat16, Vec16};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GstDesignConfig {
    pub prep_fiducials: Vec<Circuit>,
    pub meas_fiducials: Vec<Circuit>,
    pub germs: Vec<Circuit>,
    pub lengths: Vec<usize>,
    /// Fiducial pairs used for structures beyond the complete `L = 1` set.
    pub reduced_pairs: usize,
}

fn product_fiducials(q1: &[&[GateLabel]], q2: &[&[GateLabel]]) -> Vec<Circuit> {
    let mut out = Vec::new();
    for a in q1 {
        for b in q2 {
            out.push(Circuit::new(a.iter().chain(b.iter()).copied().collect()));
        }
    }
    out
}

pub fn default_prep_fiducials() -> Vec<Circuit> {
    use GateLabel::*;
    // |⇓⟩ → +z, −y, −z, +x on each qubit.
    let f = |q: u8| -> Vec<Vec<GateLabel>> { vec![vec![], vec![Xp(q)], vec![Xp(q), Xp(q)], vec![Xp(q), Zp(q)]] };
    let (a, b) = (f(1), f(2));
    product_fiducials(&a.iter().map(|v| v.as_slice()).collect::<Vec<_>>(), &b.iter().map(|v| v.as_slice()).collect::<Vec<_>>())
}

pub fn default_meas_fiducials() -> Vec<Circuit> {
    use GateLabel::*;
    // Z, Y and X bases on each qubit, plus an inverted Z⊗Z readout.
    let f = |q: u8| -> Vec<Vec<GateLabel>> { vec![vec![], vec![Xp(q)], vec![Zp(q), Xp(q)]] };
    let (a, b) = (f(1), f(2));
    let mut out = product_fiducials(&a.iter().map(|v| v.as_slice()).collect::<Vec<_>>(), &b.iter().map(|v| v.as_slice()).collect::<Vec<_>>());
    out.push(Circuit::new(vec![Xp(1), Xp(1), Xp(2), Xp(2)]));
    out
}

pub fn default_germs() -> Vec<Circuit> {
    let mut out: Vec<Circuit> = GATE_LABELS.iter().map(|g| Circuit::new(vec![*g])).collect();
    for a in GATE_LABELS {
        for b in GATE_LABELS {
            if a != b {
                out.push(Circuit::new(vec![a, b]));
            }
        }
    }
    for s in [
        "Gxp:1 Gzp:1 Gzz",
        "Gxp:2 Gzp:2 Gzz",
        "Gxp:1 Gxp:2 Gzz",
        "Gxp:1 Gzp:2 Gzz",
        "Gzp:1 Gxp:2 Gzz",
        "Gxp:1 Gzp:1 Gxp:2 Gzz",
        "Gxp:1 Gxp:2 Gzp:1 Gzp:2 Gzz",
    ] {
        out.push(parse_circuit(s).expect("valid germ"));
    }
    out
}

impl Default for GstDesignConfig {
    fn default() -> Self {
        Self {
            prep_fiducials: default_prep_fiducials(),
            meas_fiducials: default_meas_fiducials(),
            germs: default_germs(),
            lengths: vec![1, 2, 4, 8, 16, 32, 64],
            reduced_pairs: 12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GstCircuit {
    pub prep: usize,
    /// `None` for a bare fiducial pair.
    pub germ: Option<usize>,
    pub reps: usize,
    pub meas: usize,
    /// Smallest design length whose circuit list contains this circuit.
    pub first_length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GstDesign {
    pub config: GstDesignConfig,
    pub structures: Vec<GstCircuit>,
    pub circuits: Vec<Circuit>,
    pub reduced_pairs: Vec<(usize, usize)>,
}

impl GstDesign {
    /// Indices of circuits that belong to the list for length `l`.
    pub fn indices_up_to(&self, l: usize) -> Vec<usize> {
        (0..self.structures.len()).filter(|&i| self.structures[i].first_length <= l).collect()
    }
}

fn ideal_frames(cfg: &GstDesignConfig) -> (Vec<Vec16>, Vec<[Vec16; 4]>) {
    let target = GateSet::target();
    let states = cfg
        .prep_fiducials
        .iter()
        .map(|f| target.propagate(f).expect("fiducials use gate-set labels"))
        .collect();
    let effects = cfg.meas_fiducials.iter().map(|f| target.effects_after(f).expect("fiducials use gate-set labels")).collect();
    (states, effects)
}

fn rank_with_spectrum(vectors: &[Vec16], what: &str) -> Result<(), GstError> {
    let mut gram = Mat16::zeros();
    for v in vectors {
        gram += v * v.transpose();
    }
    let mut spec: Vec<f64> = SymmetricEigen::new(gram).eigenvalues.iter().copied().collect();
    spec.sort_by(|a, b| b.total_cmp(a));
    let tol = spec[0] * 1e-10;
    let rank = spec.iter().filter(|&&x| x > tol).count();
    if rank < 16 {
        return Err(GstError::RankDeficient { what: what.to_string(), rank, spectrum: spec });
    }
    Ok(())
}

/// Checks that prepared states and measured effects each span all 16
/// operator dimensions.
pub fn check_completeness(cfg: &GstDesignConfig) -> Result<(), GstError> {
    let (states, effects) = ideal_frames(cfg);
    rank_with_spectrum(&states, "preparation fiducials")?;
    let flat: Vec<Vec16> = effects.iter().flat_map(|e| e.iter().copied()).collect();
    rank_with_spectrum(&flat, "measurement fiducials")
}

/// Greedy choice of `n` fiducial pairs maximizing `log det(Σ f fᵀ + λI)` of
/// the outcome features `vec(e_k ⊗ s)`.
fn select_pairs(cfg: &GstDesignConfig, n: usize) -> Vec<(usize, usize)> {
    let (states, effects) = ideal_frames(cfg);
    let features = |i: usize, j: usize| -> Vec<nalgebra::DVector<f64>> {
        effects[j]
            .iter()
            .map(|e| nalgebra::DVector::from_iterator(256, (0..16).flat_map(|a| (0..16).map(move |b| (a, b))).map(|(a, b)| e[a] * states[i][b])))
            .collect()
    };
    let lambda = 1e-3;
    let mut inv = DMatrix::<f64>::identity(256, 256) / lambda;
    let mut chosen = Vec::new();
    let all: Vec<(usize, usize)> =
        (0..states.len()).flat_map(|i| (0..effects.len()).map(move |j| (i, j))).collect();
    while chosen.len() < n.min(all.len()) {
        let mut best = None;
        let mut best_gain = f64::NEG_INFINITY;
        for &(i, j) in &all {
            if chosen.contains(&(i, j)) {
                continue;
            }
            let fs = features(i, j);
            let f = DMatrix::from_columns(&fs);
            let small = DMatrix::<f64>::identity(fs.len(), fs.len()) + f.transpose() * &inv * &f;
            let gain = small.determinant().ln();
            if gain > best_gain + 1e-12 {
                best_gain = gain;
                best = Some((i, j, f));
            }
        }
        let (i, j, f) = best.expect("candidate pairs remain");
        // Woodbury update of the inverse.
        let small = DMatrix::<f64>::identity(f.ncols(), f.ncols()) + f.transpose() * &inv * &f;
        let k = &inv * &f;
        inv -= &k * small.try_inverse().expect("positive definite") * k.transpose();
        chosen.push((i, j));
    }
    chosen
}

/// Builds the circuit list; deterministic for a given configuration.
pub fn build_design(cfg: &GstDesignConfig) -> Result<GstDesign, GstError> {
    if cfg.lengths.is_empty() || cfg.lengths.windows(2).any(|w| w[0] >= w[1]) || cfg.lengths[0] == 0 {
        return Err(GstError::InvalidDesign("lengths must be positive and strictly increasing".into()));
    }
    if cfg.germs.iter().any(|g| g.is_empty()) {
        return Err(GstError::InvalidDesign("germs must be nonempty".into()));
    }
    for c in cfg.prep_fiducials.iter().chain(&cfg.meas_fiducials).chain(&cfg.germs) {
        GateSet::compile(c)?;
    }
    check_completeness(cfg)?;
    let reduced = select_pairs(cfg, cfg.reduced_pairs);
    let all_pairs: Vec<(usize, usize)> = (0..cfg.prep_fiducials.len())
        .flat_map(|i| (0..cfg.meas_fiducials.len()).map(move |j| (i, j)))
        .collect();

    let mut structures = Vec::new();
    let mut circuits = Vec::new();
    let mut seen: HashMap<Circuit, usize> = HashMap::new();
    let mut push = |s: GstCircuit, structures: &mut Vec<GstCircuit>, circuits: &mut Vec<Circuit>| {
        let body = match s.germ {
            Some(k) => cfg.germs[k].repeat(s.reps),
            None => Circuit::default(),
        };
        let c = cfg.prep_fiducials[s.prep].clone().then(&body).then(&cfg.meas_fiducials[s.meas]);
        if !seen.contains_key(&c) {
            seen.insert(c.clone(), circuits.len());
            structures.push(s);
            circuits.push(c);
        }
    };
    let l0 = cfg.lengths[0];
    for &(i, j) in &all_pairs {
        push(GstCircuit { prep: i, germ: None, reps: 0, meas: j, first_length: l0 }, &mut structures, &mut circuits);
    }
    for &l in &cfg.lengths {
        for (k, g) in cfg.germs.iter().enumerate() {
            let reps = (l / g.len()).max(1);
            let pairs = if l == l0 && g.len() == 1 { &all_pairs } else { &reduced };
            for &(i, j) in pairs {
                push(GstCircuit { prep: i, germ: Some(k), reps, meas: j, first_length: l }, &mut structures, &mut circuits);
            }
        }
    }
    Ok(GstDesign { config: cfg.clone(), structures, circuits, reduced_pairs: reduced })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GermScore {
    /// Rank of the stacked twirled germ derivatives.
    pub rank: usize,
    /// Non-gauge gate parameters the germs should amplify.
    pub target: usize,
}

impl GermScore {
    pub fn complete(&self) -> bool {
        self.rank >= self.target
    }
}

/// Amplificational completeness of `germs` around the ideal gate set: the
/// derivative of each germ's PTM with respect to every TP gate parameter,
/// projected onto the germ's commutant by averaging over its cyclic group,
/// stacked over germs. Germs must have finite order (Clifford germs do).
pub fn germ_score(germs: &[Circuit]) -> Result<GermScore, GstError> {
    let target_set = GateSet::target();
    let gates: Vec<Mat16> = target_set.gates.iter().map(|g| *g.matrix()).collect();
    let n_params = 5 * 240;
    let mut gram = DMatrix::<f64>::zeros(n_params, n_params);
    for germ in germs {
        let ops = GateSet::compile(germ)?;
        let prod = ops.iter().fold(Mat16::identity(), |acc, &o| gates[o as usize] * acc);
        let mut powers = vec![Mat16::identity()];
        let mut p = prod;
        while (p - Mat16::identity()).norm() > 1e-9 {
            powers.push(p);
            p = prod * p;
            if powers.len() > 512 {
                return Err(GstError::InvalidDesign(format!("germ {germ} has no finite order")));
            }
        }
        let inv_powers: Vec<Mat16> = powers.iter().map(|m| m.transpose()).collect();
        let order = powers.len() as f64;
        // prefix/suffix products around each op position
        let mut cols = Vec::with_capacity(n_params);
        for g in 0..5 {
            for r in 1..16 {
                for c in 0..16 {
                    let mut d = Mat16::zeros();
                    for (pos, &o) in ops.iter().enumerate() {
                        if o as usize != g {
                            continue;
                        }
                        let before = ops[..pos].iter().fold(Mat16::identity(), |acc, &x| gates[x as usize] * acc);
                        let after = ops[pos + 1..].iter().fold(Mat16::identity(), |acc, &x| gates[x as usize] * acc);
                        let mut e = Mat16::zeros();
                        e[(r, c)] = 1.0;
                        d += after * e * before;
                    }
                    // Work with dG·G⁻¹, twirled over the cyclic group.
                    let x = d * prod.transpose();
                    let mut tw = Mat16::zeros();
                    for (pw, ip) in powers.iter().zip(&inv_powers) {
                        tw += pw * x * ip;
                    }
                    cols.push(tw / order);
                }
            }
        }
        for a in 0..n_params {
            for b in a..n_params {
                let v = cols[a].dot(&cols[b]);
                gram[(a, b)] += v;
                if a != b {
                    gram[(b, a)] += v;
                }
            }
        }
    }
    let ev = gram.symmetric_eigenvalues();
    let max = ev.iter().cloned().fold(0.0, f64::max);
    let rank = ev.iter().filter(|&&x| x > max * 1e-9).count();
    Ok(GermScore { rank, target: n_params - 240 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::circuit::parse_circuit;

    #[test]
    fn default_design_is_complete_and_deterministic() {
        let cfg = GstDesignConfig::default();
        check_completeness(&cfg).unwrap();
        let a = build_design(&cfg).unwrap();
        let b = build_design(&cfg).unwrap();
        assert_eq!(a.circuits, b.circuits);
        assert_eq!(a.reduced_pairs.len(), cfg.reduced_pairs);
        let mut uniq = a.circuits.clone();
        uniq.sort();
        uniq.dedup();
        assert_eq!(uniq.len(), a.circuits.len());
        // Every L = 1 list contains all fiducial pairs.
        let first = a.indices_up_to(1);
        assert!(first.len() >= cfg.prep_fiducials.len() * cfg.meas_fiducials.len());
        assert_eq!(a.indices_up_to(*cfg.lengths.last().unwrap()).len(), a.circuits.len());
    }

    #[test]
    fn incomplete_fiducials_report_spectrum() {
        let cfg = GstDesignConfig { prep_fiducials: vec![Circuit::default(), parse_circuit("Gxp:1").unwrap()], ..Default::default() };
        match check_completeness(&cfg) {
            Err(GstError::RankDeficient { rank, spectrum, .. }) => {
                assert!(rank < 16);
                assert_eq!(spectrum.len(), 16);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_lengths() {
        let cfg = GstDesignConfig { lengths: vec![1, 4, 2], ..Default::default() };
        assert!(matches!(build_design(&cfg), Err(GstError::InvalidDesign(_))));
    }

    #[test]
    fn single_length_design() {
        let cfg = GstDesignConfig { lengths: vec![1], ..Default::default() };
        let d = build_design(&cfg).unwrap();
        assert!(d.structures.iter().all(|s| s.first_length == 1));
    }

    #[test]
    fn default_germs_amplify_all_parameters() {
        let s = germ_score(&GstDesignConfig::default().germs).unwrap();
        assert!(s.complete(), "{s:?}");
        let weak = germ_score(&[parse_circuit("Gzz").unwrap()]).unwrap();
        assert!(!weak.complete());
    }
}
