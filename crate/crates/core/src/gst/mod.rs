//! Gate set tomography of `{G, +X_Ca, +X_Sr, +Z_Ca, +Z_Sr}` with a
//! `|⇓↓⟩` preparation and a four-outcome computational-basis measurement.

pub mod design;
pub mod fit;
pub mod model;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::circuit::{Circuit, GateLabel};
use crate::qcore::{diamond_distance, error_generator, fidelities, ErrorGenerator, Mat16, Ptm, QcoreError, Vec16};

pub use design::{build_design, check_completeness, germ_score, GermScore, GstCircuit, GstDesign, GstDesignConfig};
pub use fit::{
    gauge_optimize, goodness_of_fit, loglik_statistic, mle_fit, FitOptions, FitResult, GaugeResult, GofPoint,
    GofReport, Model,
};

/// Estimated channels, in this order.
pub const GATE_LABELS: [GateLabel; 5] = [GateLabel::Gzz, GateLabel::Xp(1), GateLabel::Xp(2), GateLabel::Zp(1), GateLabel::Zp(2)];

/// Published gauge-independent count, reported for comparison only.
pub const REFERENCE_PARAMETER_COUNT: usize = 1026;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GstError {
    #[error("label {0} is not in the gate set")]
    UnknownLabel(String),
    #[error("{what} are not informationally complete: rank {rank}, Gram spectrum {spectrum:?}")]
    RankDeficient { what: String, rank: usize, spectrum: Vec<f64> },
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error("dataset is missing {count} design circuit(s), first: {first}")]
    MissingCircuits { count: usize, first: String },
    #[error("gauge transform is ill-conditioned (condition number {0:.3e})")]
    IllConditionedGauge(f64),
    #[error(transparent)]
    Qcore(#[from] QcoreError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateSet {
    pub gates: [Ptm; 5],
    /// Pauli components `Tr(P_j ρ)`.
    pub rho: [f64; 16],
    /// Rows `e_k` with `p_k = e_k · r`.
    pub effects: [[f64; 16]; 4],
}

fn basis_effects() -> [[f64; 16]; 4] {
    std::array::from_fn(|k| {
        let z1 = if k & 2 == 0 { 1.0 } else { -1.0 };
        let z2 = if k & 1 == 0 { 1.0 } else { -1.0 };
        let mut e = [0.0; 16];
        e[0] = 0.25;
        e[3] = 0.25 * z2;
        e[12] = 0.25 * z1;
        e[15] = 0.25 * z1 * z2;
        e
    })
}

impl GateSet {
    pub fn target() -> Self {
        let gates = GATE_LABELS.map(|g| Ptm::from_unitary(&g.unitary()).expect("unitary"));
        let mut rho = [0.0; 16];
        for k in [0, 3, 12, 15] {
            rho[k] = 1.0;
        }
        Self { gates, rho, effects: basis_effects() }
    }

    /// Target gates followed by two-qubit depolarizing `p`; ideal SPAM.
    pub fn depolarized_target(p: f64) -> Self {
        let mut gs = Self::target();
        for g in gs.gates.iter_mut() {
            *g = Ptm::depolarizing(p).compose(g);
        }
        gs
    }

    /// Gate indices of a circuit.
    pub fn compile(c: &Circuit) -> Result<Vec<u8>, GstError> {
        c.ops()
            .iter()
            .map(|g| GATE_LABELS.iter().position(|x| x == g).map(|i| i as u8).ok_or_else(|| GstError::UnknownLabel(g.to_string())))
            .collect()
    }

    pub fn gate(&self, label: GateLabel) -> Option<&Ptm> {
        GATE_LABELS.iter().position(|&x| x == label).map(|i| &self.gates[i])
    }

    pub fn rho_vec(&self) -> Vec16 {
        Vec16::from_column_slice(&self.rho)
    }

    pub fn effect_vec(&self, k: usize) -> Vec16 {
        Vec16::from_column_slice(&self.effects[k])
    }

    /// State after `c`.
    pub fn propagate(&self, c: &Circuit) -> Result<Vec16, GstError> {
        let ops = Self::compile(c)?;
        Ok(ops.iter().fold(self.rho_vec(), |r, &o| self.gates[o as usize].matrix() * r))
    }

    /// Effects pulled back through `c` (measurement after `c`).
    pub fn effects_after(&self, c: &Circuit) -> Result<[Vec16; 4], GstError> {
        let ops = Self::compile(c)?;
        let m = ops.iter().fold(Mat16::identity(), |acc, &o| self.gates[o as usize].matrix() * acc);
        Ok(std::array::from_fn(|k| m.transpose() * self.effect_vec(k)))
    }

    pub fn predict(&self, c: &Circuit) -> Result<[f64; 4], GstError> {
        let r = self.propagate(c)?;
        Ok(std::array::from_fn(|k| self.effect_vec(k).dot(&r)))
    }

    /// `gates ↦ M G M⁻¹`, `ρ ↦ M ρ`, `e ↦ e M⁻¹`.
    pub fn gauge_transform(&self, m: &Mat16) -> Result<Self, GstError> {
        let inv = m.try_inverse().ok_or(QcoreError::Singular)?;
        let gates = std::array::from_fn(|i| Ptm::from_matrix(m * self.gates[i].matrix() * inv));
        let r = m * self.rho_vec();
        let effects = std::array::from_fn(|k| {
            let e = inv.transpose() * self.effect_vec(k);
            std::array::from_fn(|j| e[j])
        });
        Ok(Self { gates, rho: std::array::from_fn(|j| r[j]), effects })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterCount {
    /// Every PTM entry, state and effect component.
    pub raw: usize,
    /// After trace preservation, unit trace and effect completeness.
    pub tp_constrained: usize,
    /// After removing the TP gauge group (invertible maps fixing the
    /// identity row, dimension 240).
    pub gauge_reduced: usize,
}

pub fn parameter_count(n_gates: usize) -> ParameterCount {
    let raw = n_gates * 256 + 16 + 4 * 16;
    let tp_constrained = n_gates * 240 + 15 + 3 * 16;
    ParameterCount { raw, tp_constrained, gauge_reduced: tp_constrained - 240 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub label: String,
    pub process_fidelity: f64,
    pub average_fidelity: f64,
    /// `1 − F_avg`.
    pub error: f64,
    /// `(1/2)‖G − G₀‖_⋄`.
    pub diamond_distance: f64,
    pub generator: ErrorGenerator,
    pub coherent_fraction: f64,
    pub hamiltonian_norm: f64,
    pub stochastic_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GstReport {
    pub gates: Vec<GateReport>,
    pub parameters: ParameterCount,
    pub reference_parameter_count: usize,
    pub notes: Vec<String>,
}

impl GstReport {
    pub fn gate(&self, label: GateLabel) -> Option<&GateReport> {
        let name = label.to_string();
        self.gates.iter().find(|g| g.label == name)
    }
}

/// Per-gate metrics of a (gauge-optimized) estimate against `target`.
pub fn report(estimate: &GateSet, target: &GateSet) -> Result<GstReport, GstError> {
    let mut gates = Vec::new();
    for (i, label) in GATE_LABELS.iter().enumerate() {
        let (g, g0) = (&estimate.gates[i], &target.gates[i]);
        let (f_pro, f_avg) = fidelities(g, g0)?;
        let generator = error_generator(g, g0)?;
        gates.push(GateReport {
            label: label.to_string(),
            process_fidelity: f_pro,
            average_fidelity: f_avg,
            error: 1.0 - f_avg,
            diamond_distance: diamond_distance(g, g0)?,
            coherent_fraction: generator.coherent_fraction(),
            hamiltonian_norm: generator.hamiltonian_part().norm(),
            stochastic_norm: generator.stochastic_part().norm(),
            generator,
        });
    }
    Ok(GstReport {
        gates,
        parameters: parameter_count(GATE_LABELS.len()),
        reference_parameter_count: REFERENCE_PARAMETER_COUNT,
        notes: vec![
            "{G, +X, +Z} is read as G plus +π/2 X and Z rotations on each qubit separately".into(),
            "parameter counts use TP gates, a unit-trace state, complete effects and the 240-dimensional TP gauge".into(),
        ],
    })
}

/// PTM and error generator of G, row-major, with summary metrics.
pub fn fig4b_json(estimate: &GateSet, rep: &GstReport) -> String {
    let g = rep.gate(GateLabel::Gzz).expect("G is reported");
    let v = serde_json::json!({
        "labels": crate::qcore::pauli::LABELS,
        "ptm": estimate.gates[0].row_major(),
        "error_generator": (0..16).flat_map(|i| (0..16).map(move |j| (i, j))).map(|(i, j)| g.generator.matrix()[(i, j)]).collect::<Vec<_>>(),
        "error": g.error,
        "diamond_distance": g.diamond_distance,
        "coherent_fraction": g.coherent_fraction,
    });
    serde_json::to_string_pretty(&v).expect("serializable")
}

/// Goodness-of-fit rows `L,n_sigma,statistic,dof`.
pub fn fig4d_csv(gof: &GofReport) -> String {
    let mut out = String::from("L,n_sigma,statistic,dof\n");
    for p in &gof.points {
        let _ = writeln!(out, "{},{:.6},{:.6},{}", p.max_length, p.n_sigma, p.statistic, p.dof);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::backend::{SimBackend, SimBackendConfig};
    use crate::harness::circuit::parse_circuit;

    #[test]
    fn target_matches_backend() {
        let b = SimBackend::new(SimBackendConfig::ideal(0)).unwrap();
        let t = GateSet::target();
        for s in ["{}", "Gxp:1 Gzz Gzp:2 Gxp:2", "Gzz Gzz", "Gxp:1 Gxp:1 Gzp:1 Gzz Gxp:2"] {
            let c = parse_circuit(s).unwrap();
            let (p, q) = (t.predict(&c).unwrap(), b.predict(&c));
            for k in 0..4 {
                assert!((p[k] - q[k]).abs() < 1e-12, "{s}");
            }
        }
        assert_eq!(t.predict(&Circuit::default()).unwrap(), [1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn gg_matches_composition() {
        let t = GateSet::target();
        let gg = t.gates[0].compose(&t.gates[0]);
        let r = gg.apply_vector(&t.rho_vec());
        let want: [f64; 4] = std::array::from_fn(|k| t.effect_vec(k).dot(&r));
        let got = t.predict(&parse_circuit("Gzz Gzz").unwrap()).unwrap();
        assert_eq!(want, got);
    }

    #[test]
    fn full_depolarization_is_uniform() {
        let mut gs = GateSet::target();
        gs.gates[0] = Ptm::depolarizing(1.0).compose(&gs.gates[0]);
        let p = gs.predict(&parse_circuit("Gxp:1 Gzz Gxp:2").unwrap()).unwrap();
        for x in p {
            assert!((x - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn unknown_label_rejected() {
        assert!(matches!(GateSet::compile(&parse_circuit("Gyp:1").unwrap()), Err(GstError::UnknownLabel(_))));
    }

    #[test]
    fn parameter_counting() {
        let c = parameter_count(5);
        assert_eq!((c.raw, c.tp_constrained, c.gauge_reduced), (1360, 1263, 1023));
    }

    #[test]
    fn gauge_invariance_of_predictions() {
        let gs = GateSet::depolarized_target(0.01);
        let mut m = Mat16::identity();
        for i in 1..16 {
            for j in 0..16 {
                m[(i, j)] += 0.01 * ((i * 7 + j * 3) % 11) as f64 / 11.0;
            }
        }
        let g2 = gs.gauge_transform(&m).unwrap();
        for s in ["Gxp:1 Gzz Gzp:2", "Gzz Gzz Gxp:2 Gxp:1", "{}"] {
            let c = parse_circuit(s).unwrap();
            let (a, b) = (gs.predict(&c).unwrap(), g2.predict(&c).unwrap());
            for k in 0..4 {
                assert!((a[k] - b[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ideal_report_is_zero() {
        let t = GateSet::target();
        let r = report(&t, &t).unwrap();
        for g in &r.gates {
            assert!(g.error.abs() < 1e-14 && g.diamond_distance.abs() < 1e-6 && g.generator.norm() < 1e-10, "{g:?}");
        }
    }
}
