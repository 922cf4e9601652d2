//! Mixed-species σz⊗σz light-shift gate: forces, phase-space trajectories,
//! geometric phases, population dynamics, noisy channels and the error
//! budget.
//!
//! Spin index 0 is the lower state (⇓ for Ca, ↓ for Sr); joint index is
//! `2·s_Ca + s_Sr`. Phases follow `U|s⟩ = e^{-iΦ_s}|s⟩`, so the ideal
//! `exp(-iπ/4 Z⊗Z)` has `zz = +π/4`.

pub mod budget;
pub mod dynamics;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use budget::{
    check_resonances, error_budget, ideal_gate, ideal_gate_unitary, noisy_gate_channel, BudgetItem,
    ErrorBudget, NoiseSpec, ResonanceWarning,
};
pub use dynamics::{
    calibrated_drive, geometric_phases, geometric_phases_at, populations, required_rabi_scaling,
    trajectory, trajectory_at, PhaseComponents,
};

const AMU: f64 = 1.660_539_066_60e-27;
const COULOMB_K: f64 = 8.987_551_792_3e9;
const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

#[derive(Debug, Error, PartialEq)]
pub enum GatesimError {
    #[error("zz phase component vanishes; the gate cannot be driven with these forces")]
    ZeroZz,
    #[error("invalid drive configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid noise specification: {0}")]
    InvalidNoise(String),
    #[error("noisy channel is not CPTP (minimum Choi eigenvalue {0:.3e})")]
    NotCptp(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IonSpecies {
    pub name: String,
    /// Atomic mass units.
    pub mass: f64,
    /// Raman detuning from the S–P transition, Hz.
    pub raman_detuning: f64,
    /// S–P linewidth Γ/2π, Hz.
    pub linewidth: f64,
    pub qubit_frequency: f64,
    pub eta_ip: f64,
    pub eta_oop: f64,
    /// Light-shift force coefficient of the upper qubit state.
    pub lightshift_amp_up: f64,
    /// Light-shift force coefficient of the lower qubit state.
    pub lightshift_amp_down: f64,
}

impl IonSpecies {
    /// ⁴³Ca⁺ with force coefficients from `calcium_for_targets(0.2, 1.03)`.
    pub fn calcium() -> Self {
        Self::calcium_for_targets(0.2, 1.03, &Self::strontium())
    }

    /// ⁴³Ca⁺ whose light-shift coefficients, paired with `sr` on the axial oop
    /// mode, give the requested global-phase fraction and Rabi scaling.
    ///
    /// With `f = M + ζ1·Δ1/2 + ζ2·Δ2/2`, the scaling fixes `Δ1/Δ2` through
    /// `(Δ1² + Δ2²) / (2 Δ1 Δ2) = scaling²`, and the fraction fixes the
    /// common part `M` through `g = zz / (1 − fraction)`.
    pub fn calcium_for_targets(fraction: f64, scaling: f64, sr: &IonSpecies) -> Self {
        let eta = 0.127;
        let d2 = sr.eta_oop * (sr.lightshift_amp_down - sr.lightshift_amp_up);
        let s2 = scaling * scaling;
        let d1 = d2 * (s2 + (s2 * s2 - 1.0).sqrt());
        let zz = d1 * d2 / 2.0;
        let m = (zz / (1.0 - fraction) - (d1 * d1 + d2 * d2) / 4.0).max(0.0).sqrt();
        // The Sr common part is folded into M.
        let m_ca = m - sr.eta_oop * (sr.lightshift_amp_down + sr.lightshift_amp_up) / 2.0;
        let diff = d1 / eta;
        let sum = 2.0 * m_ca / eta;
        Self {
            name: "Ca".into(),
            mass: 43.0,
            raman_detuning: -9.0e12,
            linewidth: 22e6,
            qubit_frequency: 2.874e9,
            eta_ip: 0.090,
            eta_oop: eta,
            lightshift_amp_up: (sum - diff) / 2.0,
            lightshift_amp_down: (sum + diff) / 2.0,
        }
    }

    /// ⁸⁸Sr⁺, with the symmetric Zeeman-qubit coefficients ±1.
    pub fn strontium() -> Self {
        Self {
            name: "Sr".into(),
            mass: 88.0,
            raman_detuning: 11.2e12,
            linewidth: 22e6,
            qubit_frequency: 409e6,
            eta_ip: 0.124,
            eta_oop: 0.045,
            lightshift_amp_up: -1.0,
            lightshift_amp_down: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), GatesimError> {
        let bad = |m: &str| Err(GatesimError::InvalidConfig(format!("{}: {m}", self.name)));
        for eta in [self.eta_ip, self.eta_oop] {
            if !(eta > 0.0 && eta < 1.0) {
                return bad("Lamb-Dicke parameters must lie in (0, 1)");
            }
        }
        if self.raman_detuning.abs() < 100.0 * self.linewidth {
            return bad("Raman detuning must be far outside the linewidth");
        }
        if !(self.mass > 0.0) {
            return bad("mass must be positive");
        }
        Ok(())
    }

    fn coefficient(&self, s: usize) -> f64 {
        if s == 0 {
            self.lightshift_amp_down
        } else {
            self.lightshift_amp_up
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModeLabel {
    AxialIp,
    AxialOop,
    RadialIp,
    RadialOop,
}

impl ModeLabel {
    pub fn axial(self) -> bool {
        matches!(self, ModeLabel::AxialIp | ModeLabel::AxialOop)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionalMode {
    pub label: ModeLabel,
    /// Hz.
    pub frequency: f64,
    pub nbar: f64,
    /// Quanta per second.
    pub heating_rate: f64,
}

impl MotionalMode {
    pub fn validate(&self) -> Result<(), GatesimError> {
        if !(self.frequency > 0.0) || !(self.nbar >= 0.0) || !(self.heating_rate >= 0.0) {
            return Err(GatesimError::InvalidConfig(format!(
                "mode {:?}: frequency must be positive, nbar and heating rate nonnegative",
                self.label
            )));
        }
        Ok(())
    }
}

/// Axial frequency (Hz) of a single ion of mass `light` (amu) that gives two
/// ions the separation `spacing` (m).
pub fn single_ion_axial_frequency(light: f64, spacing: f64) -> f64 {
    let k = 2.0 * COULOMB_K * ELEMENTARY_CHARGE * ELEMENTARY_CHARGE / spacing.powi(3);
    (k / (light * AMU)).sqrt() / (2.0 * std::f64::consts::PI)
}

/// Axial (in-phase, out-of-phase) frequencies of a two-ion crystal with
/// masses `light`, `heavy`, from the light ion's single-ion frequency `f`.
pub fn two_ion_axial_modes(f: f64, light: f64, heavy: f64) -> (f64, f64) {
    let inv = light / heavy;
    let root = (1.0 + inv * inv - inv).sqrt();
    (f * (1.0 + inv - root).sqrt(), f * (1.0 + inv + root).sqrt())
}

/// Default motional spectrum. The axial modes follow from the 3.57 µm
/// spacing (same axial curvature for both species); the radial values are
/// placeholders.
pub fn default_modes() -> Vec<MotionalMode> {
    let f = single_ion_axial_frequency(43.0, 3.57e-6);
    let (ip, oop) = two_ion_axial_modes(f, 43.0, 88.0);
    vec![
        MotionalMode { label: ModeLabel::AxialIp, frequency: ip, nbar: 0.05, heating_rate: 110.0 },
        MotionalMode { label: ModeLabel::AxialOop, frequency: oop, nbar: 0.05, heating_rate: 30.0 },
        MotionalMode { label: ModeLabel::RadialIp, frequency: 4.1e6, nbar: 0.1, heating_rate: 0.0 },
        MotionalMode { label: ModeLabel::RadialOop, frequency: 3.6e6, nbar: 0.1, heating_rate: 0.0 },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDriveConfig {
    /// Signed gate detuning δ_g, Hz.
    pub gate_detuning: f64,
    /// Total gate time (both pulses), s.
    pub gate_time: f64,
    pub loops: u32,
    /// Hann rise/fall time, s.
    pub shaping_time: f64,
    pub walsh_flip: bool,
    /// Carrier Rabi frequency Ω_↓/2π, Hz.
    pub carrier_rabi: f64,
    pub mode: MotionalMode,
    pub ion_spacing_ratio: f64,
    /// Mis-set of the drive detuning, Hz (zero when calibrated).
    pub detuning_error: f64,
}

impl Default for GateDriveConfig {
    fn default() -> Self {
        let gate_time = 49.2e-6;
        let mode = default_modes().into_iter().find(|m| m.label == ModeLabel::AxialOop).expect("oop mode");
        Self {
            gate_detuning: -2.0 / gate_time,
            gate_time,
            loops: 2,
            shaping_time: 2e-6,
            walsh_flip: true,
            carrier_rabi: 180e3,
            mode,
            ion_spacing_ratio: 12.5,
            detuning_error: 0.0,
        }
    }
}

impl GateDriveConfig {
    pub fn validate(&self) -> Result<(), GatesimError> {
        let bad = |m: String| Err(GatesimError::InvalidConfig(m));
        if self.loops == 0 || self.loops % 2 != 0 {
            return bad("loops must be a positive even number (one or more per pulse)".into());
        }
        if self.gate_detuning == 0.0 || !(self.gate_time > 0.0) {
            return bad("gate detuning must be nonzero and gate time positive".into());
        }
        let expect = self.loops as f64 / self.gate_detuning.abs();
        if ((self.gate_time - expect) / expect).abs() > 1e-9 {
            return bad(format!(
                "gate time {:.6e} s does not equal loops/|δ_g| = {:.6e} s",
                self.gate_time, expect
            ));
        }
        if !(self.shaping_time >= 0.0 && self.shaping_time < self.gate_time / 4.0) {
            return bad("shaping time must lie in [0, t_g/4)".into());
        }
        self.mode.validate()
    }

    /// Duration of one of the two pulses.
    pub fn pulse_time(&self) -> f64 {
        self.gate_time / 2.0
    }
}

/// Displacement-drive strengths `f(s_Ca, s_Sr)`, indexed `2·s_Ca + s_Sr`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinConfigForces(pub [f64; 4]);

impl SpinConfigForces {
    pub fn get(&self, s_ca: usize, s_sr: usize) -> f64 {
        self.0[2 * s_ca + s_sr]
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self(self.0.map(|f| f * k))
    }
}

/// `f(s1, s2) = η_Ca·c_Ca(s1) + η_Sr·c_Sr(s2)` on the given axial mode.
pub fn force_amplitudes(ca: &IonSpecies, sr: &IonSpecies, mode: &MotionalMode) -> SpinConfigForces {
    let (eta_ca, eta_sr) = match mode.label {
        ModeLabel::AxialIp => (ca.eta_ip, sr.eta_ip),
        _ => (ca.eta_oop, sr.eta_oop),
    };
    SpinConfigForces(std::array::from_fn(|k| eta_ca * ca.coefficient(k / 2) + eta_sr * sr.coefficient(k % 2)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_species_give_light_shift_pattern() {
        let mut a = IonSpecies::strontium();
        a.eta_oop = 0.1;
        let f = force_amplitudes(&a, &a, &default_modes()[1]);
        assert_eq!(f.get(0, 1), 0.0);
        assert_eq!(f.get(1, 0), 0.0);
        assert_eq!(f.get(0, 0), -f.get(1, 1));
    }

    #[test]
    fn default_forces_are_distinct_and_ca_dominated() {
        let f = force_amplitudes(&IonSpecies::calcium(), &IonSpecies::strontium(), &default_modes()[1]);
        for i in 0..4 {
            for j in 0..i {
                assert!((f.0[i] - f.0[j]).abs() > 1e-3, "{:?}", f);
            }
        }
        let d_ca = (f.get(0, 0) - f.get(1, 0)).abs();
        let d_sr = (f.get(0, 0) - f.get(0, 1)).abs();
        assert!(d_ca > d_sr);
    }

    #[test]
    fn derived_calcium_coefficients() {
        let ca = IonSpecies::calcium();
        assert!((ca.lightshift_amp_down - 0.7607).abs() < 1e-3, "{:?}", ca);
        assert!((ca.lightshift_amp_up + 0.2422).abs() < 1e-3, "{:?}", ca);
    }

    #[test]
    fn axial_modes_from_spacing() {
        let modes = default_modes();
        let f = single_ion_axial_frequency(43.0, 3.57e-6);
        assert!((f - 1.8968e6).abs() < 1e3, "{f}");
        assert!((modes[1].frequency - 2.9107e6).abs() < 2e3, "{}", modes[1].frequency);
        assert!(modes[0].frequency < modes[1].frequency);
        // Equal masses reduce to the familiar ω and √3 ω.
        let (ip, oop) = two_ion_axial_modes(1.0, 40.0, 40.0);
        assert!((ip - 1.0).abs() < 1e-15 && (oop - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn default_config_is_consistent() {
        let cfg = GateDriveConfig::default();
        cfg.validate().unwrap();
        assert!((cfg.gate_time - 49.2e-6).abs() < 1e-15);
        let mut bad = cfg.clone();
        bad.gate_detuning = -40e3;
        assert!(bad.validate().is_err());
    }
}
