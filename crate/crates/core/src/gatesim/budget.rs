//! Ideal and noisy gate channels, the itemized error budget and the motional
//! resonance checks.
//!
//! Incoherent contributions are quoted as average gate infidelity `ε` and
//! enter the channel as two-qubit depolarization with `p = 4ε/3`.

use std::f64::consts::{FRAC_PI_4, PI};

use serde::{Deserialize, Serialize};

use super::{GateDriveConfig, GatesimError, IonSpecies, ModeLabel, MotionalMode};
use crate::qcore::{c, pauli, Mat4c, Ptm, C64};

fn zz_rotation(theta: f64) -> Mat4c {
    let zz = pauli::kron2(&pauli::single(3), &pauli::single(3));
    Mat4c::from_fn(|i, j| if i == j { C64::from_polar(1.0, -theta * zz[(i, i)].re) } else { c(0.0) })
}

/// `(X_π ⊗ X_π) · exp(−iπ/4 Z⊗Z)` with `X_π = exp(−iπ/2 X) = −iX`.
pub fn ideal_gate_unitary() -> Mat4c {
    let x = pauli::single(1) * C64::new(0.0, -1.0);
    pauli::kron2(&x, &x) * zz_rotation(FRAC_PI_4)
}

pub fn ideal_gate() -> Ptm {
    Ptm::from_unitary(&ideal_gate_unitary()).expect("ideal gate is unitary")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Extra two-qubit depolarizing probability.
    pub depolarizing_p: f64,
    /// Pure-dephasing rates of (Ca, Sr), 1/s.
    pub dephasing_rates: [f64; 2],
    /// Over-rotation of the two-qubit phase, radians (`exp(−iθ Z⊗Z)`).
    pub coherent_zz_offset: f64,
    /// Include `ṅ·t_g/4` from the gate mode.
    pub heating: bool,
    /// Species whose photon scattering is included (empty: none).
    pub scattering_species: Vec<IonSpecies>,
    /// Residual stray field, V/m.
    pub stray_field: f64,
    /// Error per (V/m)².
    pub stray_coefficient: f64,
    pub kerr: f64,
    pub spectator: f64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            depolarizing_p: 0.0,
            dephasing_rates: [0.0; 2],
            coherent_zz_offset: 0.0,
            heating: false,
            scattering_species: Vec::new(),
            stray_field: 0.0,
            stray_coefficient: 0.0,
            kerr: 0.0,
            spectator: 0.0,
        }
    }

    /// Every row of the calculated error budget at its default value.
    pub fn table_defaults() -> Self {
        Self {
            // 1.27/s over 49.2 µs: 0.25e-4 per qubit.
            dephasing_rates: [1.27, 1.27],
            heating: true,
            scattering_species: vec![IonSpecies::calcium(), IonSpecies::strontium()],
            stray_field: 0.3,
            stray_coefficient: 7e-4 / (0.3 * 0.3),
            kerr: 2e-4,
            spectator: 1e-4,
            ..Self::none()
        }
    }

    fn validate(&self) -> Result<(), GatesimError> {
        let bad = |m: &str| Err(GatesimError::InvalidNoise(m.into()));
        if !(0.0..=1.0).contains(&self.depolarizing_p) {
            return bad("depolarizing probability must lie in [0, 1]");
        }
        let nonneg = [
            self.dephasing_rates[0],
            self.dephasing_rates[1],
            self.stray_field.abs(),
            self.stray_coefficient,
            self.kerr,
            self.spectator,
        ];
        if nonneg.iter().any(|x| !(*x >= 0.0)) {
            return bad("rates, coefficients and constant errors must be nonnegative");
        }
        if !self.coherent_zz_offset.is_finite() {
            return bad("coherent offset must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetItem {
    pub source: String,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub items: Vec<BudgetItem>,
    pub total: f64,
}

impl ErrorBudget {
    pub fn get(&self, source: &str) -> Option<f64> {
        self.items.iter().find(|i| i.source == source).map(|i| i.error)
    }
}

pub const HEATING: &str = "heating";
pub const SCATTERING: &str = "scattering";
pub const STRAY_FIELD: &str = "stray field";
pub const KERR: &str = "kerr cross-coupling";
pub const SPECTATOR: &str = "spectator modes";
pub const DEPHASING: &str = "spin dephasing";
pub const DEPOLARIZING: &str = "injected depolarizing";
pub const COHERENT: &str = "coherent zz offset";

/// Per-qubit Z-flip probability from pure dephasing over the gate.
fn dephasing_flip(rate: f64, t: f64) -> f64 {
    (1.0 - (-rate * t).exp()) / 2.0
}

/// Raman plus Rayleigh scattering of one species during the gate.
///
/// Each beam scatters at `Γ g² / (4Δ²)` with single-beam Rabi frequency `g`
/// and `g² = 2|Δ|Ω` for two-photon Rabi frequency `Ω`; both beams together
/// give `ε = Γ Ω t_g / |Δ|`.
pub fn scattering_error(species: &IonSpecies, carrier_rabi: f64, gate_time: f64) -> f64 {
    let gamma = 2.0 * PI * species.linewidth;
    let omega = 2.0 * PI * carrier_rabi;
    let delta = 2.0 * PI * species.raman_detuning.abs();
    gamma * omega * gate_time / delta
}

/// `ṅ · t_g / 4` for the two-loop gate.
pub fn heating_error(mode: &MotionalMode, gate_time: f64) -> f64 {
    mode.heating_rate * gate_time / 4.0
}

pub fn error_budget(cfg: &GateDriveConfig, modes: &[MotionalMode], noise: &NoiseSpec) -> ErrorBudget {
    let t = cfg.gate_time;
    let gate_mode = modes.iter().find(|m| m.label == cfg.mode.label).unwrap_or(&cfg.mode);
    let mut items = Vec::new();
    let mut push = |source: &str, error: f64| items.push(BudgetItem { source: source.into(), error });
    push(STRAY_FIELD, noise.stray_coefficient * noise.stray_field * noise.stray_field);
    push(HEATING, if noise.heating { heating_error(gate_mode, t) } else { 0.0 });
    push(
        SCATTERING,
        noise.scattering_species.iter().map(|s| scattering_error(s, cfg.carrier_rabi, t)).sum(),
    );
    push(KERR, noise.kerr);
    push(SPECTATOR, noise.spectator);
    push(DEPHASING, noise.dephasing_rates.iter().map(|&r| 0.8 * dephasing_flip(r, t)).sum());
    if noise.depolarizing_p > 0.0 {
        push(DEPOLARIZING, 0.75 * noise.depolarizing_p);
    }
    if noise.coherent_zz_offset != 0.0 {
        // Unitary ZZ error: F_pro = cos²θ.
        push(COHERENT, 0.8 * noise.coherent_zz_offset.sin().powi(2));
    }
    let total = items.iter().map(|i| i.error).sum();
    ErrorBudget { items, total }
}

/// Ideal gate followed by the coherent offset, dephasing and the
/// depolarizing share of every incoherent budget row.
pub fn noisy_gate_channel(cfg: &GateDriveConfig, noise: &NoiseSpec) -> Result<Ptm, GatesimError> {
    noise.validate()?;
    let budget = error_budget(cfg, std::slice::from_ref(&cfg.mode), noise);
    if budget.total >= 0.5 {
        return Err(GatesimError::InvalidNoise(format!(
            "predicted error {:.3} is outside the model's validity range",
            budget.total
        )));
    }
    let mut g = ideal_gate();
    if noise.coherent_zz_offset != 0.0 {
        let u = Ptm::from_unitary(&zz_rotation(noise.coherent_zz_offset)).expect("unitary");
        g = u.compose(&g);
    }
    for (q, &rate) in noise.dephasing_rates.iter().enumerate() {
        let flip = dephasing_flip(rate, cfg.gate_time);
        if flip > 0.0 {
            let z = if q == 0 {
                pauli::kron2(&pauli::single(3), &pauli::single(0))
            } else {
                pauli::kron2(&pauli::single(0), &pauli::single(3))
            };
            let kraus = [Mat4c::identity() * c((1.0 - flip).sqrt()), z * c(flip.sqrt())];
            g = Ptm::from_kraus(&kraus).compose(&g);
        }
    }
    let keep: f64 = budget
        .items
        .iter()
        .filter(|i| i.source != DEPHASING && i.source != COHERENT && i.source != DEPOLARIZING)
        .map(|i| 1.0 - 4.0 * i.error / 3.0)
        .product::<f64>()
        * (1.0 - noise.depolarizing_p);
    if keep != 1.0 {
        g = Ptm::depolarizing(1.0 - keep).compose(&g);
    }
    let lam = g.to_choi().eigenvalues()[0];
    if lam < -1e-12 {
        return Err(GatesimError::NotCptp(lam));
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ResonanceWarning {
    /// `f_ax,oop ≃ 2 f_rad,oop`.
    AxialOopTwiceRadialOop { mismatch: f64 },
    /// `2 f_ax,ip ≃ f_ax,oop + δ_g`.
    TwiceAxialIpNearOopPlusDetuning { mismatch: f64 },
    /// `f_ax,ip ≃ f_rad,oop`.
    AxialIpNearRadialOop { mismatch: f64 },
}

impl std::fmt::Display for ResonanceWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::AxialOopTwiceRadialOop { mismatch } => {
                write!(f, "(i) f_ax,oop ≃ 2 f_rad,oop (mismatch {:.1} kHz)", mismatch / 1e3)
            }
            Self::TwiceAxialIpNearOopPlusDetuning { mismatch } => {
                write!(f, "(ii) 2 f_ax,ip ≃ f_ax,oop + δ_g (mismatch {:.1} kHz)", mismatch / 1e3)
            }
            Self::AxialIpNearRadialOop { mismatch } => {
                write!(f, "(iii) f_ax,ip ≃ f_rad,oop (mismatch {:.1} kHz)", mismatch / 1e3)
            }
        }
    }
}

/// Flags the three known harmful mode coincidences within `window` Hz
/// (default `2|δ_g|`).
pub fn check_resonances(
    modes: &[MotionalMode],
    detuning: f64,
    window: Option<f64>,
) -> Result<Vec<ResonanceWarning>, GatesimError> {
    let freq = |label: ModeLabel| {
        modes
            .iter()
            .find(|m| m.label == label)
            .map(|m| m.frequency)
            .ok_or_else(|| GatesimError::InvalidConfig(format!("mode {label:?} missing")))
    };
    let ax_ip = freq(ModeLabel::AxialIp)?;
    let ax_oop = freq(ModeLabel::AxialOop)?;
    let rad_oop = freq(ModeLabel::RadialOop)?;
    freq(ModeLabel::RadialIp)?;
    let window = window.unwrap_or(2.0 * detuning.abs());
    let mut out = Vec::new();
    let m1 = ax_oop - 2.0 * rad_oop;
    if m1.abs() <= window {
        out.push(ResonanceWarning::AxialOopTwiceRadialOop { mismatch: m1 });
    }
    let m2 = 2.0 * ax_ip - (ax_oop + detuning);
    if m2.abs() <= window {
        out.push(ResonanceWarning::TwiceAxialIpNearOopPlusDetuning { mismatch: m2 });
    }
    let m3 = ax_ip - rad_oop;
    if m3.abs() <= window {
        out.push(ResonanceWarning::AxialIpNearRadialOop { mismatch: m3 });
    }
    Ok(out)
}
