//! Simulated shot backend.
//!
//! Each circuit starts in `|⇓↓⟩`, is propagated through per-operation
//! channels as a Pauli vector, read out through per-qubit confusion and
//! sampled multinomially. Under the linear-heating drift model every
//! entangling gate picks up extra depolarizing error proportional to the
//! elapsed time within the sequence, with elapsed time counted from fixed
//! operation durations.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::circuit::{Circuit, GateKind, GateLabel};
use super::dataset::CountDataset;
use crate::gatesim::{noisy_gate_channel, GateDriveConfig, GatesimError, NoiseSpec};
use crate::qcore::{Mat16, Ptm, Vec16};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DriftModel {
    None,
    /// Mode occupation grows at `rate` quanta/s; each quantum adds
    /// `error_per_quantum` average infidelity to every entangling gate.
    LinearHeating { rate: f64, error_per_quantum: f64 },
}

impl DriftModel {
    /// 110 quanta/s on the in-phase mode, about 3e-3 of extra error after
    /// 1.8 quanta.
    pub fn ip_mode_heating() -> Self {
        DriftModel::LinearHeating { rate: 110.0, error_per_quantum: 1.667e-3 }
    }
}

/// Wall-clock durations used for the drift time axis, seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpDurations {
    /// Full entangling operation including echo and padding.
    pub entangling: f64,
    pub physical: f64,
    pub pi_pulse: f64,
}

impl Default for OpDurations {
    fn default() -> Self {
        Self { entangling: 80e-6, physical: 8e-6, pi_pulse: 16e-6 }
    }
}

impl OpDurations {
    pub fn of(&self, g: &GateLabel) -> f64 {
        match g.kind() {
            GateKind::Entangling => self.entangling,
            GateKind::Physical => self.physical,
            GateKind::PiPulse => self.pi_pulse,
            GateKind::SoftwareZ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimBackendConfig {
    pub drive: GateDriveConfig,
    /// Noise on the entangling gate.
    pub noise: NoiseSpec,
    /// Average single-qubit infidelity of a physical π/2 pulse, realized as
    /// depolarizing of the addressed qubit; a π pulse gets twice this.
    pub single_qubit_error: f64,
    /// Per qubit: `[P(read ↑ | ⇓/↓), P(read ⇓/↓ | ↑)]`.
    pub readout: [[f64; 2]; 2],
    pub drift: DriftModel,
    pub durations: OpDurations,
    pub seed: u64,
}

impl SimBackendConfig {
    /// Noise-free backend.
    pub fn ideal(seed: u64) -> Self {
        Self {
            drive: GateDriveConfig::default(),
            noise: NoiseSpec::none(),
            single_qubit_error: 0.0,
            readout: [[0.0; 2]; 2],
            drift: DriftModel::None,
            durations: OpDurations::default(),
            seed,
        }
    }

    /// Entangling gate with average infidelity `eps` as pure depolarizing.
    pub fn depolarizing(seed: u64, eps: f64) -> Self {
        let mut cfg = Self::ideal(seed);
        cfg.noise.depolarizing_p = 4.0 * eps / 3.0;
        cfg
    }

    /// Symmetric readout confusion from mean per-qubit errors (Ca, Sr).
    pub fn with_symmetric_readout(mut self, ca: f64, sr: f64) -> Self {
        self.readout = [[ca, ca], [sr, sr]];
        self
    }

    pub fn descriptor(&self) -> String {
        let drift = match self.drift {
            DriftModel::None => "none".to_string(),
            DriftModel::LinearHeating { rate, error_per_quantum } => {
                format!("linear-heating({rate},{error_per_quantum})")
            }
        };
        format!(
            "sim depolarizing_p={} single_qubit_error={} readout={:?} drift={drift}",
            self.noise.depolarizing_p, self.single_qubit_error, self.readout
        )
    }
}

/// Channel cache and sampler for one configuration.
#[derive(Debug, Clone)]
pub struct SimBackend {
    config: SimBackendConfig,
    gate: Mat16,
    cache: BTreeMap<GateLabel, Mat16>,
}

fn local_depolarizing(qubit: u8, p: f64) -> Mat16 {
    Mat16::from_fn(|i, j| {
        if i != j {
            0.0
        } else {
            let active = if qubit == 1 { i / 4 } else { i % 4 };
            if active == 0 {
                1.0
            } else {
                1.0 - p
            }
        }
    })
}

fn scale_nonidentity(r: &mut Vec16, keep: f64) {
    for k in 1..16 {
        r[k] *= keep;
    }
}

impl SimBackend {
    pub fn new(config: SimBackendConfig) -> Result<Self, GatesimError> {
        if !(0.0..=0.5).contains(&config.single_qubit_error) {
            return Err(GatesimError::InvalidNoise("single-qubit error must lie in [0, 0.5]".into()));
        }
        if config.readout.iter().flatten().any(|p| !(0.0..0.5).contains(p)) {
            return Err(GatesimError::InvalidNoise("readout errors must lie in [0, 0.5)".into()));
        }
        if let DriftModel::LinearHeating { rate, error_per_quantum } = config.drift {
            if !(rate >= 0.0 && error_per_quantum >= 0.0) {
                return Err(GatesimError::InvalidNoise("drift parameters must be nonnegative".into()));
            }
        }
        let gate = noisy_gate_channel(&config.drive, &config.noise)?.into_matrix();
        Ok(Self { config, gate, cache: BTreeMap::new() })
    }

    pub fn config(&self) -> &SimBackendConfig {
        &self.config
    }

    fn build(&self, g: &GateLabel) -> Mat16 {
        if *g == GateLabel::Gzz {
            return self.gate;
        }
        let u = Ptm::from_unitary(&g.unitary()).expect("labels are unitary").into_matrix();
        let q = g.qubit().expect("single-qubit label");
        let r = self.config.single_qubit_error;
        let p = match g.kind() {
            GateKind::Physical => 2.0 * r,
            GateKind::PiPulse => 4.0 * r,
            _ => 0.0,
        };
        if p == 0.0 {
            u
        } else {
            local_depolarizing(q, p) * u
        }
    }

    /// Precomputes channels for every label in `circuits`.
    pub fn prepare<'a>(&mut self, circuits: impl IntoIterator<Item = &'a Circuit>) {
        for c in circuits {
            for g in c.ops() {
                if !self.cache.contains_key(g) {
                    let m = self.build(g);
                    self.cache.insert(*g, m);
                }
            }
        }
    }

    fn channel(&self, g: &GateLabel) -> std::borrow::Cow<'_, Mat16> {
        match self.cache.get(g) {
            Some(m) => std::borrow::Cow::Borrowed(m),
            None => std::borrow::Cow::Owned(self.build(g)),
        }
    }

    /// Ideal-readout populations `[p00, p01, p10, p11]` before confusion.
    pub fn populations(&self, circuit: &Circuit) -> [f64; 4] {
        let mut r = Vec16::zeros();
        r[0] = 1.0;
        r[3] = 1.0;
        r[12] = 1.0;
        r[15] = 1.0;
        let mut t = 0.0;
        for g in circuit.ops() {
            r = *self.channel(g) * r;
            if let (GateLabel::Gzz, DriftModel::LinearHeating { rate, error_per_quantum }) = (g, self.config.drift) {
                let eps = error_per_quantum * rate * t;
                scale_nonidentity(&mut r, 1.0 - 4.0 * eps / 3.0);
            }
            t += self.config.durations.of(g);
        }
        // r_j = Tr(P_j ρ); Z eigenvalue +1 on outcome 0.
        std::array::from_fn(|k| {
            let z1 = if k & 2 == 0 { 1.0 } else { -1.0 };
            let z2 = if k & 1 == 0 { 1.0 } else { -1.0 };
            (0.25 * (r[0] + z2 * r[3] + z1 * r[12] + z1 * z2 * r[15])).max(0.0)
        })
    }

    /// Outcome probabilities including readout confusion.
    pub fn predict(&self, circuit: &Circuit) -> [f64; 4] {
        apply_confusion(&self.populations(circuit), &self.config.readout)
    }

    /// Multinomial counts for `circuit`; record `index` enters the seed.
    pub fn simulate_shots(&self, circuit: &Circuit, shots: u64, index: u64) -> [u64; 4] {
        let probs = self.predict(circuit);
        let mut rng = ChaCha8Rng::from_seed(record_seed(self.config.seed, &circuit.to_string(), index));
        sample_multinomial(&mut rng, shots, &probs)
    }

    /// Runs every circuit in parallel; results do not depend on scheduling.
    pub fn run(&mut self, circuits: &[Circuit], shots: u64) -> CountDataset {
        let jobs: Vec<(Circuit, u64)> = circuits.iter().map(|c| (c.clone(), shots)).collect();
        self.run_jobs(&jobs)
    }

    /// As [`run`](Self::run) with a shot count per circuit.
    pub fn run_jobs(&mut self, jobs: &[(Circuit, u64)]) -> CountDataset {
        self.prepare(jobs.iter().map(|(c, _)| c));
        let this = &*self;
        let counts: Vec<[u64; 4]> = jobs
            .par_iter()
            .enumerate()
            .map(|(i, (c, n))| this.simulate_shots(c, *n, i as u64))
            .collect();
        let mut ds = CountDataset::new();
        ds.set_meta("seed", self.config.seed.to_string());
        ds.set_meta("backend", self.config.descriptor());
        for ((c, _), n) in jobs.iter().zip(counts) {
            ds.push(c.clone(), n);
        }
        ds
    }
}

/// `M_Ca ⊗ M_Sr` applied to a population vector.
pub fn apply_confusion(p: &[f64; 4], readout: &[[f64; 2]; 2]) -> [f64; 4] {
    let m = confusion_matrix(readout);
    std::array::from_fn(|i| (0..4).map(|j| m[i][j] * p[j]).sum())
}

/// `M[read][true]` for both qubits, qubit 1 as the high bit.
pub fn confusion_matrix(readout: &[[f64; 2]; 2]) -> [[f64; 4]; 4] {
    let single = |q: usize| {
        let [e0, e1] = readout[q];
        [[1.0 - e0, e1], [e0, 1.0 - e1]]
    };
    let (a, b) = (single(0), single(1));
    std::array::from_fn(|i| std::array::from_fn(|j| a[i >> 1][j >> 1] * b[i & 1][j & 1]))
}

/// `sha256(root ‖ circuit text ‖ index)`.
pub fn record_seed(root: u64, circuit_text: &str, index: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(circuit_text.as_bytes());
    h.update(index.to_le_bytes());
    h.finalize().into()
}

/// Multinomial draw by sequential conditional binomials.
pub fn sample_multinomial<R: rand::Rng + ?Sized>(rng: &mut R, n: u64, probs: &[f64; 4]) -> [u64; 4] {
    let total: f64 = probs.iter().sum();
    let mut out = [0u64; 4];
    let mut left = n;
    let mut mass = total;
    for k in 0..3 {
        if left == 0 {
            break;
        }
        let p = if mass > 0.0 { (probs[k] / mass).clamp(0.0, 1.0) } else { 0.0 };
        let draw = Binomial::new(left, p).expect("valid binomial").sample(rng);
        out[k] = draw;
        left -= draw;
        mass -= probs[k];
    }
    out[3] = left;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::circuit::parse_circuit;

    fn circ(s: &str) -> Circuit {
        parse_circuit(s).unwrap()
    }

    #[test]
    fn identity_circuit_on_ideal_backend() {
        let b = SimBackend::new(SimBackendConfig::ideal(1)).unwrap();
        assert_eq!(b.simulate_shots(&Circuit::default(), 100, 0), [100, 0, 0, 0]);
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = SimBackendConfig::depolarizing(5, 1e-2).with_symmetric_readout(1.4e-3, 4e-3);
        let cs: Vec<Circuit> = (0..20).map(|k| circ(&format!("Gyp:1 (Gzz)^{k} Gxm:2"))).collect();
        let a = SimBackend::new(cfg.clone()).unwrap().run(&cs, 1000);
        let b = SimBackend::new(cfg).unwrap().run(&cs, 1000);
        assert_eq!(a.to_text(), b.to_text());
    }

    #[test]
    fn populations_match_density_matrix_route() {
        let b = SimBackend::new(SimBackendConfig::depolarizing(0, 3e-3)).unwrap();
        let c = circ("Gyp:1 Gxp:2 Gzz Gzp:1 Gyp:2 Gzz");
        let rho0 = crate::qcore::PureState::basis(0).density();
        let mut rho = rho0;
        for g in c.ops() {
            let ch = Ptm::from_matrix(*b.channel(g));
            rho = ch.apply(&rho);
        }
        let want = rho.populations();
        let got = b.populations(&c);
        for k in 0..4 {
            assert!((want[k] - got[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn bell_state_from_gate() {
        let b = SimBackend::new(SimBackendConfig::ideal(0)).unwrap();
        let p = b.predict(&circ("Gyp:1 Gyp:2 Gzz Gym:1 Gym:2"));
        // Ideal gate yields a maximally entangled state: two outcomes at 1/2.
        let mut sorted = p;
        sorted.sort_by(f64::total_cmp);
        assert!((sorted[3] - 0.5).abs() < 1e-12 && (sorted[2] - 0.5).abs() < 1e-12, "{p:?}");
    }

    #[test]
    fn frequencies_converge_to_predictions() {
        let cfg = SimBackendConfig::depolarizing(9, 5e-2).with_symmetric_readout(0.02, 0.05);
        let b = SimBackend::new(cfg).unwrap();
        let c = circ("Gyp:1 Gzz Gxp:2 Gzz Gyp:2");
        let p = b.predict(&c);
        let n = 1_000_000;
        let counts = b.simulate_shots(&c, n, 3);
        let kl: f64 = (0..4)
            .filter(|&k| counts[k] > 0)
            .map(|k| {
                let f = counts[k] as f64 / n as f64;
                f * (f / p[k]).ln()
            })
            .sum();
        assert!(kl < 1e-4, "KL {kl}");
    }

    #[test]
    fn confusion_is_stochastic() {
        let m = confusion_matrix(&[[0.01, 0.03], [0.02, 0.004]]);
        for j in 0..4 {
            let s: f64 = (0..4).map(|i| m[i][j]).sum();
            assert!((s - 1.0).abs() < 1e-15);
        }
    }

    fn position_error_counts(drift: DriftModel) -> Vec<u64> {
        let mut cfg = SimBackendConfig::depolarizing(11, 2e-2);
        cfg.drift = drift;
        let b = SimBackend::new(cfg).unwrap();
        // Gzz^4 is the identity up to phase; the block moves through a
        // fixed-length padding of X pulse pairs.
        (0..8)
            .map(|k| {
                let c = circ(&format!("(Gxp:1 Gxm:1)^{k} (Gzz)^4 (Gxp:1 Gxm:1)^{}", 40 - k * 5));
                let n = b.simulate_shots(&c, 20_000, k as u64);
                20_000 - n[0]
            })
            .collect()
    }

    fn homogeneity_chi2(errs: &[u64], n: u64) -> f64 {
        let pbar = errs.iter().sum::<u64>() as f64 / (errs.len() as u64 * n) as f64;
        errs.iter()
            .map(|&e| {
                let d = e as f64 - pbar * n as f64;
                d * d / (n as f64 * pbar * (1.0 - pbar))
            })
            .sum()
    }

    #[test]
    fn exchangeable_without_drift() {
        let errs = position_error_counts(DriftModel::None);
        // χ² with 7 degrees of freedom; 24.3 is the 0.999 quantile.
        assert!(homogeneity_chi2(&errs, 20_000) < 24.3, "{errs:?}");
        let drift = DriftModel::LinearHeating { rate: 2e4, error_per_quantum: 1.667e-3 };
        let errs = position_error_counts(drift);
        assert!(homogeneity_chi2(&errs, 20_000) > 24.3, "{errs:?}");
    }
}
