//! Interleaved randomized benchmarking.
//!
//! Reference sequences are `C₁ … C_L C⁻¹ P`; interleaved twins reuse the same
//! draws as `C₁ G … C_L G C_G⁻¹ P`. Each shot scores 1 when the readout
//! equals the sequence's expected basis state.

pub mod fit;

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clifford::{decompose, pauli_frame_circuit, random_pauli, sample_random, TwoQubitClifford};
use crate::harness::circuit::{Circuit, GateLabel};
use crate::harness::dataset::CountDataset;

pub use fit::{
    bootstrap, bootstrap_interleaved, compose_interleaved, error_vs_maxlen, fit_decay, fit_decay_with,
    interleaved_error, BootstrapResult, DecayFit, MaxLenPoint, Weighting,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RbmError {
    #[error("dataset is missing {count} circuit(s), first: {first}")]
    MissingCircuits { count: usize, first: String },
    #[error("fit needs at least {needed} distinct lengths, got {got}")]
    TooFewLengths { needed: usize, got: usize },
    #[error("decay rate is not identifiable from the data (fitted amplitude {amplitude:.3e})")]
    Unidentifiable { amplitude: f64 },
    #[error("fitted decay rate {0} lies outside (0, 1]")]
    DecayOutOfRange(f64),
    #[error("error rate outside the valid domain: {0}")]
    Domain(String),
    #[error("invalid design: {0}")]
    InvalidDesign(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbmDesign {
    pub lengths: Vec<usize>,
    pub randomizations: usize,
    pub shots: u64,
    /// Generate an interleaved twin for every reference sequence.
    pub interleaved: bool,
}

impl Default for RbmDesign {
    fn default() -> Self {
        Self {
            lengths: vec![1, 2, 3, 5, 7, 10, 15, 20, 30, 40, 50, 60],
            randomizations: 100,
            shots: 100,
            interleaved: true,
        }
    }
}

impl RbmDesign {
    pub fn validate(&self) -> Result<(), RbmError> {
        if self.lengths.is_empty() || self.lengths.contains(&0) {
            return Err(RbmError::InvalidDesign("lengths must be nonempty and positive".into()));
        }
        if self.lengths.windows(2).any(|w| w[0] >= w[1]) {
            return Err(RbmError::InvalidDesign("lengths must be strictly increasing".into()));
        }
        if self.randomizations == 0 || self.shots == 0 {
            return Err(RbmError::InvalidDesign("randomizations and shots must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbmSequence {
    pub length: usize,
    pub randomization: usize,
    pub interleaved: bool,
    /// Group indices of `C₁ … C_L`.
    pub cliffords: Vec<usize>,
    /// Group index of the recovery element.
    pub inverse: usize,
    pub frame: [u8; 2],
    /// Outcome index `2·s_Ca + s_Sr`.
    pub expected: u8,
    pub circuit: Circuit,
}

fn gate_clifford() -> TwoQubitClifford {
    TwoQubitClifford::from_label(&GateLabel::Gzz).expect("G is Clifford")
}

fn build(length: usize, randomization: usize, interleaved: bool, cs: &[TwoQubitClifford], frame: [u8; 2]) -> RbmSequence {
    let g = gate_clifford();
    let mut total = TwoQubitClifford::identity();
    let mut ops = Vec::new();
    for c in cs {
        ops.extend_from_slice(decompose(c).circuit.ops());
        total = c.compose(&total);
        if interleaved {
            ops.push(GateLabel::Gzz);
            total = g.compose(&total);
        }
    }
    let inv = total.invert();
    ops.extend_from_slice(decompose(&inv).circuit.ops());
    let frame_circ = pauli_frame_circuit(frame);
    let frame_c = TwoQubitClifford::from_circuit(&frame_circ).expect("Pauli frame is Clifford");
    ops.extend_from_slice(frame_circ.ops());
    let net = frame_c.compose(&inv.compose(&total));
    debug_assert!(net.symplectic() == TwoQubitClifford::identity().symplectic());
    // |⇓↓⟩ is stabilized by +Z₁, +Z₂; a sign flip on an image flips that bit.
    let signs = net.signs();
    let expected = (signs[2] as u8) << 1 | signs[3] as u8;
    RbmSequence {
        length,
        randomization,
        interleaved,
        cliffords: cs.iter().map(|c| c.index()).collect(),
        inverse: inv.index(),
        frame,
        expected,
        circuit: Circuit::new(ops),
    }
}

/// Sequences ordered by (length, randomization, reference before interleaved).
pub fn generate<R: Rng + ?Sized>(design: &RbmDesign, rng: &mut R) -> Result<Vec<RbmSequence>, RbmError> {
    design.validate()?;
    let mut out = Vec::new();
    for &l in &design.lengths {
        for r in 0..design.randomizations {
            let cs: Vec<TwoQubitClifford> = (0..l).map(|_| sample_random(rng)).collect();
            let frame = random_pauli(rng);
            out.push(build(l, r, false, &cs, frame));
            if design.interleaved {
                out.push(build(l, r, true, &cs, frame));
            }
        }
    }
    Ok(out)
}

pub fn circuits(sequences: &[RbmSequence]) -> Vec<Circuit> {
    sequences.iter().map(|s| s.circuit.clone()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityPoint {
    pub length: usize,
    pub mean: f64,
    /// Standard error of the mean over randomizations.
    pub sem: f64,
    pub sequences: usize,
    pub shots: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fidelities {
    pub reference: Vec<FidelityPoint>,
    pub interleaved: Vec<FidelityPoint>,
}

/// Per-sequence success fractions, matched by position and otherwise by
/// circuit text.
pub fn sequence_scores(dataset: &CountDataset, sequences: &[RbmSequence]) -> Result<Vec<f64>, RbmError> {
    let positional = dataset.records.len() == sequences.len()
        && dataset.records.iter().zip(sequences).all(|(r, s)| r.circuit == s.circuit);
    let lookup: HashMap<&Circuit, usize> = if positional {
        HashMap::new()
    } else {
        dataset.records.iter().enumerate().map(|(i, r)| (&r.circuit, i)).collect()
    };
    let mut missing = Vec::new();
    let mut scores = Vec::with_capacity(sequences.len());
    for (i, s) in sequences.iter().enumerate() {
        let idx = if positional { Some(i) } else { lookup.get(&s.circuit).copied() };
        match idx {
            Some(k) => {
                let r = &dataset.records[k];
                scores.push(r.counts[s.expected as usize] as f64 / r.total() as f64);
            }
            None => missing.push(s.circuit.to_string()),
        }
    }
    if let Some(first) = missing.first() {
        return Err(RbmError::MissingCircuits { count: missing.len(), first: first.clone() });
    }
    Ok(scores)
}

fn aggregate(sequences: &[RbmSequence], scores: &[f64], shots: &[u64], interleaved: bool) -> Vec<FidelityPoint> {
    let mut by_len: std::collections::BTreeMap<usize, (Vec<f64>, u64)> = Default::default();
    for ((s, &f), &n) in sequences.iter().zip(scores).zip(shots) {
        if s.interleaved == interleaved {
            let e = by_len.entry(s.length).or_default();
            e.0.push(f);
            e.1 += n;
        }
    }
    by_len
        .into_iter()
        .map(|(length, (fs, n))| {
            let k = fs.len() as f64;
            let mean = fs.iter().sum::<f64>() / k;
            let var = if fs.len() > 1 { fs.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (k - 1.0) } else { 0.0 };
            FidelityPoint { length, mean, sem: (var / k).sqrt(), sequences: fs.len(), shots: n }
        })
        .collect()
}

/// Mean success probability per length, separately for both twins.
pub fn sequence_fidelity(dataset: &CountDataset, sequences: &[RbmSequence]) -> Result<Fidelities, RbmError> {
    let scores = sequence_scores(dataset, sequences)?;
    let index: HashMap<&Circuit, u64> = dataset.records.iter().map(|r| (&r.circuit, r.total())).collect();
    let shots: Vec<u64> = sequences.iter().map(|s| index[&s.circuit]).collect();
    Ok(Fidelities {
        reference: aggregate(sequences, &scores, &shots, false),
        interleaved: aggregate(sequences, &scores, &shots, true),
    })
}

/// Full analysis of one twinned dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbmReport {
    pub weighting: Weighting,
    pub reference: DecayFit,
    pub interleaved: DecayFit,
    pub eps_gate: f64,
    pub sigma: f64,
    pub bootstrap_failures: usize,
    pub series: Vec<MaxLenPoint>,
}

pub fn analyze<R: Rng + ?Sized>(
    fids: &Fidelities,
    design: &RbmDesign,
    weighting: Weighting,
    rng: &mut R,
    resamples: usize,
) -> Result<RbmReport, RbmError> {
    let reference = fit_decay_with(&fids.reference, weighting)?;
    let interleaved = fit_decay_with(&fids.interleaved, weighting)?;
    let eps_gate = interleaved_error(reference.eps, interleaved.eps, 2)?;
    let boot = bootstrap_interleaved(&reference, &interleaved, design, weighting, rng, resamples);
    let series = error_vs_maxlen(fids, design, weighting, rng, resamples)?;
    Ok(RbmReport {
        weighting,
        reference,
        interleaved,
        eps_gate,
        sigma: boot.sigma,
        bootstrap_failures: boot.failures,
        series,
    })
}

/// `kind,L,mean_fidelity,sem` rows for both twins.
pub fn fidelity_csv(f: &Fidelities) -> String {
    let mut out = String::from("kind,L,mean_fidelity,sem\n");
    for (kind, pts) in [("reference", &f.reference), ("interleaved", &f.interleaved)] {
        for p in pts {
            let _ = writeln!(out, "{kind},{},{:.8},{:.8}", p.length, p.mean, p.sem);
        }
    }
    out
}

/// `L_max,eps_G,sigma` rows, weighted fit first and unweighted alongside.
pub fn maxlen_csv(weighted: &[MaxLenPoint], unweighted: &[MaxLenPoint]) -> String {
    let mut out = String::from("L_max,eps_G,sigma,eps_G_unweighted,sigma_unweighted\n");
    for (w, u) in weighted.iter().zip(unweighted) {
        let _ = writeln!(out, "{},{:.8e},{:.8e},{:.8e},{:.8e}", w.max_length, w.eps_gate, w.sigma, u.eps_gate, u.sigma);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::backend::{SimBackend, SimBackendConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_design() -> RbmDesign {
        RbmDesign { lengths: vec![1, 2, 5], randomizations: 10, shots: 50, interleaved: true }
    }

    #[test]
    fn single_clifford_reference_structure() {
        let design = RbmDesign { lengths: vec![1], randomizations: 1, shots: 1, interleaved: false };
        let seqs = generate(&design, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(seqs.len(), 1);
        let s = &seqs[0];
        let c1 = TwoQubitClifford::from_index(s.cliffords[0]).unwrap();
        assert_eq!(s.inverse, c1.invert().index());
        let mut want = decompose(&c1).circuit.clone();
        want = want.then(&decompose(&c1.invert()).circuit).then(&pauli_frame_circuit(s.frame));
        assert_eq!(s.circuit, want);
        // X or Y on a qubit flips its bit.
        let flip = |p: u8| (p == 1 || p == 2) as u8;
        assert_eq!(s.expected, flip(s.frame[0]) << 1 | flip(s.frame[1]));
    }

    #[test]
    fn interleaved_order_and_twinning() {
        let design = RbmDesign { lengths: vec![2, 4], randomizations: 3, shots: 1, interleaved: true };
        let seqs = generate(&design, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(seqs.len(), 12);
        for pair in seqs.chunks(2) {
            let (r, i) = (&pair[0], &pair[1]);
            assert!(!r.interleaved && i.interleaved);
            assert_eq!((r.length, r.randomization, &r.cliffords, r.frame), (i.length, i.randomization, &i.cliffords, i.frame));
        }
        let s = &seqs[1];
        let c: Vec<_> = s.cliffords.iter().map(|&k| TwoQubitClifford::from_index(k).unwrap()).collect();
        let g = Circuit::new(vec![GateLabel::Gzz]);
        let want = decompose(&c[0])
            .circuit
            .clone()
            .then(&g)
            .then(&decompose(&c[1]).circuit)
            .then(&g)
            .then(&decompose(&TwoQubitClifford::from_index(s.inverse).unwrap()).circuit)
            .then(&pauli_frame_circuit(s.frame));
        assert_eq!(s.circuit, want);
    }

    #[test]
    fn ideal_replay_hits_expected_outcome() {
        let design = RbmDesign { lengths: vec![1, 3, 8, 15, 25], randomizations: 50, shots: 1, interleaved: true };
        let seqs = generate(&design, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(seqs.len(), 500);
        let b = SimBackend::new(SimBackendConfig::ideal(0)).unwrap();
        for s in &seqs {
            let p = b.predict(&s.circuit);
            assert!((p[s.expected as usize] - 1.0).abs() < 1e-9, "{p:?}");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&small_design(), &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let b = generate(&small_design(), &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scoring_limits() {
        let design = small_design();
        let seqs = generate(&design, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let mut ds = CountDataset::new();
        for s in &seqs {
            let mut n = [0; 4];
            n[s.expected as usize] = 50;
            ds.push(s.circuit.clone(), n);
        }
        let f = sequence_fidelity(&ds, &seqs).unwrap();
        assert!(f.reference.iter().chain(&f.interleaved).all(|p| p.mean == 1.0));

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut ds = CountDataset::new();
        for s in &seqs {
            let n = crate::harness::backend::sample_multinomial(&mut rng, 1000, &[0.25; 4]);
            ds.push(s.circuit.clone(), n);
        }
        let f = sequence_fidelity(&ds, &seqs).unwrap();
        for p in f.reference.iter().chain(&f.interleaved) {
            // Binomial error of 10 × 1000 shots at 1/4 is 4.3e-3.
            assert!((p.mean - 0.25).abs() < 5.0 * 4.3e-3, "{p:?}");
        }
    }

    #[test]
    fn missing_circuits_reported() {
        let design = small_design();
        let seqs = generate(&design, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let mut ds = CountDataset::new();
        for s in seqs.iter().skip(1) {
            ds.push(s.circuit.clone(), [1, 0, 0, 0]);
        }
        match sequence_fidelity(&ds, &seqs) {
            Err(RbmError::MissingCircuits { count: 1, first }) => assert_eq!(first, seqs[0].circuit.to_string()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn depolarizing_clifford_decay_matches_channel_oracle() {
        // Per-Clifford depolarizing ε gives F(L) = (3/4)(1 − 4ε/3)^(L+1) + 1/4
        // exactly, the recovery element contributing one more factor.
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let eps = 5e-3;
        let p = 1.0 - 4.0 * eps / 3.0;
        let dep = crate::qcore::Ptm::depolarizing(1.0 - p);
        for l in [1usize, 4, 12] {
            let cs: Vec<_> = (0..l).map(|_| sample_random(&mut rng)).collect();
            let s = build(l, 0, false, &cs, [0, 0]);
            let mut r = crate::qcore::PureState::basis(0).density();
            let inv = TwoQubitClifford::from_index(s.inverse).unwrap();
            for c in cs.iter().chain(std::iter::once(&inv)) {
                r = dep.apply(&c.ptm().apply(&r));
            }
            let f = r.populations()[s.expected as usize];
            assert!((f - (0.75 * p.powi(l as i32 + 1) + 0.25)).abs() < 1e-12);
        }
    }
}
