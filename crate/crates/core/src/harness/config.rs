//! Flat `key = value` configuration with `[section]` prefixes.
//!
//! Every key is listed once in [`visit`]; parsing, emission of the default
//! file and validation of unknown keys all walk that list.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use super::backend::{DriftModel, OpDurations, SimBackendConfig};
use super::circuit::{parse_circuit, Circuit};
use crate::gatesim::{default_modes, force_amplitudes, GateDriveConfig, IonSpecies, ModeLabel, MotionalMode, NoiseSpec, SpinConfigForces};
use crate::gst::design::GstDesignConfig;
use crate::gst::{FitOptions, Model};
use crate::pst::PstOptions;
use crate::rbm::{RbmDesign, Weighting};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: {key}: {message}")]
    Value { line: usize, key: String, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Raw entries keyed by full dotted name, with their source line.
pub fn parse_entries(text: &str) -> Result<BTreeMap<String, (usize, String)>, ConfigError> {
    let mut out = BTreeMap::new();
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::Syntax { line, message: "unterminated section header".into() })?
                .trim();
            if name.is_empty() || name.contains(char::is_whitespace) {
                return Err(ConfigError::Syntax { line, message: format!("bad section name `{name}`") });
            }
            section = name.to_string();
            continue;
        }
        let (k, v) = body
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax { line, message: "expected `key = value`".into() })?;
        let k = k.trim();
        if k.is_empty() || k.contains(char::is_whitespace) {
            return Err(ConfigError::Syntax { line, message: format!("bad key `{k}`") });
        }
        let key = if section.is_empty() { k.to_string() } else { format!("{section}.{k}") };
        if out.contains_key(&key) {
            return Err(ConfigError::Syntax { line, message: format!("duplicate key `{key}`") });
        }
        out.insert(key, (line, v.trim().to_string()));
    }
    Ok(out)
}

/// A config value that reads and prints itself.
pub trait Value {
    fn show(&self) -> String;
    fn read(&mut self, s: &str) -> Result<(), String>;
}

fn num<T: std::str::FromStr>(s: &str) -> Result<T, String> {
    s.trim().parse().map_err(|_| format!("cannot parse `{}`", s.trim()))
}

impl Value for f64 {
    fn show(&self) -> String {
        let a = self.abs();
        if a != 0.0 && !(1e-3..1e5).contains(&a) {
            format!("{self:e}")
        } else {
            format!("{self:?}")
        }
    }
    fn read(&mut self, s: &str) -> Result<(), String> {
        let x: f64 = num(s)?;
        if !x.is_finite() {
            return Err("must be finite".into());
        }
        *self = x;
        Ok(())
    }
}

macro_rules! int_value {
    ($($t:ty),*) => {$(
        impl Value for $t {
            fn show(&self) -> String {
                self.to_string()
            }
            fn read(&mut self, s: &str) -> Result<(), String> {
                *self = num(s)?;
                Ok(())
            }
        }
    )*};
}
int_value!(u32, u64, usize);

impl Value for bool {
    fn show(&self) -> String {
        self.to_string()
    }
    fn read(&mut self, s: &str) -> Result<(), String> {
        *self = match s.trim() {
            "true" => true,
            "false" => false,
            other => return Err(format!("expected true or false, got `{other}`")),
        };
        Ok(())
    }
}

impl Value for [f64; 2] {
    fn show(&self) -> String {
        format!("{}, {}", self[0].show(), self[1].show())
    }
    fn read(&mut self, s: &str) -> Result<(), String> {
        let parts: Vec<&str> = s.split(',').collect();
        if parts.len() != 2 {
            return Err("expected two comma-separated numbers".into());
        }
        for (slot, p) in self.iter_mut().zip(parts) {
            slot.read(p)?;
        }
        Ok(())
    }
}

impl Value for Vec<usize> {
    fn show(&self) -> String {
        self.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
    }
    fn read(&mut self, s: &str) -> Result<(), String> {
        *self = s.split(',').map(num).collect::<Result<_, _>>()?;
        Ok(())
    }
}

/// Circuit lists are `;`-separated; `{}` is the empty circuit.
impl Value for Vec<Circuit> {
    fn show(&self) -> String {
        self.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("; ")
    }
    fn read(&mut self, s: &str) -> Result<(), String> {
        *self = s.split(';').map(|c| parse_circuit(c.trim()).map_err(|e| e.to_string())).collect::<Result<_, _>>()?;
        Ok(())
    }
}

impl Value for Option<f64> {
    fn show(&self) -> String {
        self.map_or("none".into(), |x| x.show())
    }
    fn read(&mut self, s: &str) -> Result<(), String> {
        if s.trim() == "none" {
            *self = None;
            return Ok(());
        }
        let mut x = 0.0;
        x.read(s)?;
        *self = Some(x);
        Ok(())
    }
}

/// Unit-like enums spelled as lowercase words.
macro_rules! word_value {
    ($t:ty { $($v:path => $w:literal),* $(,)? }) => {
        impl Value for $t {
            fn show(&self) -> String {
                match self { $($v => $w.to_string()),* }
            }
            fn read(&mut self, s: &str) -> Result<(), String> {
                *self = match s.trim() {
                    $($w => $v,)*
                    other => return Err(format!("unknown value `{other}` (expected one of: {})", [$($w),*].join(", "))),
                };
                Ok(())
            }
        }
    };
}

word_value!(ModeLabel {
    ModeLabel::AxialIp => "axial_ip",
    ModeLabel::AxialOop => "axial_oop",
    ModeLabel::RadialIp => "radial_ip",
    ModeLabel::RadialOop => "radial_oop",
});
word_value!(Weighting { Weighting::Weighted => "weighted", Weighting::Unweighted => "unweighted" });
word_value!(Model { Model::Cptp => "cptp", Model::Tp => "tp" });

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftKind {
    None,
    LinearHeating,
}
word_value!(DriftKind { DriftKind::None => "none", DriftKind::LinearHeating => "linear_heating" });

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Species {
    Ca,
    Sr,
}

impl Value for Vec<Species> {
    fn show(&self) -> String {
        if self.is_empty() {
            return "none".into();
        }
        self.iter().map(|s| if *s == Species::Ca { "ca" } else { "sr" }).collect::<Vec<_>>().join(", ")
    }
    fn read(&mut self, s: &str) -> Result<(), String> {
        if s.trim() == "none" {
            self.clear();
            return Ok(());
        }
        *self = s
            .split(',')
            .map(|w| match w.trim() {
                "ca" => Ok(Species::Ca),
                "sr" => Ok(Species::Sr),
                other => Err(format!("unknown species `{other}`")),
            })
            .collect::<Result<_, _>>()?;
        Ok(())
    }
}

/// Shot backend settings; the drive comes from `[drive]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings {
    /// Average infidelity of the entangling gate, added as depolarizing.
    pub gate_error: f64,
    /// Also apply the physical `[noise]` model to the entangling gate.
    pub physical_noise: bool,
    pub single_qubit_error: f64,
    pub readout_ca: [f64; 2],
    pub readout_sr: [f64; 2],
    pub drift: DriftKind,
    pub drift_rate: f64,
    pub drift_error_per_quantum: f64,
    pub durations: OpDurations,
}

impl Default for SimSettings {
    fn default() -> Self {
        let DriftModel::LinearHeating { rate, error_per_quantum } = DriftModel::ip_mode_heating() else {
            unreachable!()
        };
        Self {
            gate_error: 2.9e-3,
            physical_noise: false,
            single_qubit_error: 5e-4,
            readout_ca: [1.4e-3, 1.4e-3],
            readout_sr: [4.0e-3, 4.0e-3],
            drift: DriftKind::None,
            drift_rate: rate,
            drift_error_per_quantum: error_per_quantum,
            durations: OpDurations::default(),
        }
    }
}

/// Everything the command line needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub seed: u64,
    pub ca: IonSpecies,
    pub sr: IonSpecies,
    /// Axial ip, axial oop, radial ip, radial oop.
    pub modes: Vec<MotionalMode>,
    pub drive: GateDriveConfig,
    pub noise: NoiseSpec,
    pub scattering: Vec<Species>,
    /// Hz; `None` uses `2|δ_g|`.
    pub resonance_window: Option<f64>,
    pub dynamics_points: usize,
    pub sim: SimSettings,
    pub rbm: RbmDesign,
    pub rbm_resamples: usize,
    pub rbm_weighting: Weighting,
    pub gst: GstDesignConfig,
    pub gst_shots: u64,
    pub gst_model: Model,
    pub gst_fit: FitOptions,
    pub gst_spam_weight: f64,
    pub pst: PstOptions,
}

impl Default for Settings {
    fn default() -> Self {
        let drive = GateDriveConfig::default();
        let noise = NoiseSpec::table_defaults();
        Self {
            seed: 1,
            ca: IonSpecies::calcium(),
            sr: IonSpecies::strontium(),
            modes: default_modes(),
            drive,
            noise: NoiseSpec { scattering_species: Vec::new(), ..noise },
            scattering: vec![Species::Ca, Species::Sr],
            resonance_window: None,
            dynamics_points: 201,
            sim: SimSettings::default(),
            rbm: RbmDesign::default(),
            rbm_resamples: 200,
            rbm_weighting: Weighting::Weighted,
            gst: GstDesignConfig::default(),
            gst_shots: 1000,
            gst_model: Model::Cptp,
            gst_fit: FitOptions::default(),
            gst_spam_weight: 1.0,
            pst: PstOptions::default(),
        }
        .resolved()
    }
}

const MODE_SECTIONS: [(&str, ModeLabel); 4] = [
    ("axial_ip", ModeLabel::AxialIp),
    ("axial_oop", ModeLabel::AxialOop),
    ("radial_ip", ModeLabel::RadialIp),
    ("radial_oop", ModeLabel::RadialOop),
];

/// Calls `f(key, help, value)` for every key, in file order.
pub fn visit(s: &mut Settings, f: &mut dyn FnMut(&str, &str, &mut dyn Value)) {
    f("run.seed", "root seed for sequence generation and shot sampling", &mut s.seed);

    for (name, sp) in [("ca", &mut s.ca), ("sr", &mut s.sr)] {
        let k = |field: &str| format!("species.{name}.{field}");
        f(&k("mass"), "amu", &mut sp.mass);
        f(&k("raman_detuning"), "Raman detuning from the S-P transition, Hz", &mut sp.raman_detuning);
        f(&k("linewidth"), "S-P linewidth, Hz", &mut sp.linewidth);
        f(&k("qubit_frequency"), "Hz", &mut sp.qubit_frequency);
        f(&k("eta_ip"), "Lamb-Dicke parameter on the axial in-phase mode", &mut sp.eta_ip);
        f(&k("eta_oop"), "Lamb-Dicke parameter on the axial out-of-phase mode", &mut sp.eta_oop);
        f(&k("lightshift_amp_up"), "light-shift force coefficient of the upper qubit state", &mut sp.lightshift_amp_up);
        let down = if name == "ca" {
            "same for the lower state; the Ca pair solves for a 20% global-phase share and 1.03 Rabi \
             scaling against the Sr values (IonSpecies::calcium_for_targets)"
        } else {
            "same for the lower qubit state"
        };
        f(&k("lightshift_amp_down"), down, &mut sp.lightshift_amp_down);
    }

    for (name, label) in MODE_SECTIONS {
        let m = s.modes.iter_mut().find(|m| m.label == label).expect("all four modes present");
        let k = |field: &str| format!("mode.{name}.{field}");
        f(&k("frequency"), "Hz", &mut m.frequency);
        f(&k("nbar"), "mean occupation", &mut m.nbar);
        f(&k("heating_rate"), "quanta/s", &mut m.heating_rate);
    }

    let d = &mut s.drive;
    f("drive.mode", "gate mode", &mut d.mode.label);
    f("drive.gate_detuning", "signed gate detuning, Hz (must equal -loops/gate_time)", &mut d.gate_detuning);
    f("drive.gate_time", "both pulses, s", &mut d.gate_time);
    f("drive.loops", "phase-space loops over the whole gate", &mut d.loops);
    f("drive.shaping_time", "Hann rise/fall, s", &mut d.shaping_time);
    f("drive.walsh_flip", "flip the force sign between loops", &mut d.walsh_flip);
    f("drive.carrier_rabi", "carrier Rabi frequency, Hz", &mut d.carrier_rabi);
    f("drive.ion_spacing_ratio", "", &mut d.ion_spacing_ratio);
    f("drive.detuning_error", "mis-set of the drive detuning, Hz", &mut d.detuning_error);
    f("drive.resonance_window", "Hz, or none for 2|gate_detuning|", &mut s.resonance_window);
    f("drive.dynamics_points", "samples in fig2b.csv", &mut s.dynamics_points);

    let n = &mut s.noise;
    f("noise.depolarizing_p", "extra two-qubit depolarizing probability", &mut n.depolarizing_p);
    f("noise.dephasing_ca", "pure dephasing rate, 1/s", &mut n.dephasing_rates[0]);
    f("noise.dephasing_sr", "pure dephasing rate, 1/s", &mut n.dephasing_rates[1]);
    f("noise.coherent_zz_offset", "two-qubit phase over-rotation, rad", &mut n.coherent_zz_offset);
    f("noise.heating", "include heating of the gate mode", &mut n.heating);
    f("noise.scattering", "species with photon scattering (ca, sr or none)", &mut s.scattering);
    f("noise.stray_field", "V/m", &mut n.stray_field);
    f("noise.stray_coefficient", "error per (V/m)^2", &mut n.stray_coefficient);
    f("noise.kerr", "Kerr cross-coupling error", &mut n.kerr);
    f("noise.spectator", "spectator-mode error", &mut n.spectator);

    let b = &mut s.sim;
    f("backend.gate_error", "entangling-gate infidelity injected as depolarizing", &mut b.gate_error);
    f("backend.physical_noise", "also apply [noise] to the entangling gate", &mut b.physical_noise);
    f("backend.single_qubit_error", "per pi/2 pulse; a pi pulse gets twice this", &mut b.single_qubit_error);
    f("backend.readout_ca", "P(read up | down), P(read down | up)", &mut b.readout_ca);
    f("backend.readout_sr", "P(read up | down), P(read down | up)", &mut b.readout_sr);
    f("backend.drift", "none or linear_heating", &mut b.drift);
    f("backend.drift_rate", "quanta/s", &mut b.drift_rate);
    f("backend.drift_error_per_quantum", "", &mut b.drift_error_per_quantum);
    f("backend.duration_entangling", "s, including echo", &mut b.durations.entangling);
    f("backend.duration_physical", "s", &mut b.durations.physical);
    f("backend.duration_pi_pulse", "s", &mut b.durations.pi_pulse);

    f("rbm.lengths", "Clifford sequence lengths", &mut s.rbm.lengths);
    f("rbm.randomizations", "sequences per length", &mut s.rbm.randomizations);
    f("rbm.shots", "per sequence", &mut s.rbm.shots);
    f("rbm.interleaved", "generate interleaved twins", &mut s.rbm.interleaved);
    f("rbm.resamples", "bootstrap resamples", &mut s.rbm_resamples);
    f("rbm.weighting", "weighted or unweighted decay fits", &mut s.rbm_weighting);

    f("gst.prep_fiducials", "", &mut s.gst.prep_fiducials);
    f("gst.meas_fiducials", "", &mut s.gst.meas_fiducials);
    f("gst.germs", "", &mut s.gst.germs);
    f("gst.lengths", "germ power lengths", &mut s.gst.lengths);
    f("gst.reduced_pairs", "fiducial pairs beyond L = 1", &mut s.gst.reduced_pairs);
    f("gst.shots", "per circuit", &mut s.gst_shots);
    f("gst.model", "cptp or tp", &mut s.gst_model);
    f("gst.max_iters", "optimizer iterations per length", &mut s.gst_fit.max_iters);
    f("gst.loglik_tol", "stop when an iteration gains less log-likelihood", &mut s.gst_fit.loglik_tol);
    f("gst.progressive", "fit length by length", &mut s.gst_fit.progressive);
    f("gst.start_depolarizing", "starting point: depolarized target", &mut s.gst_fit.start_depolarizing);
    f("gst.spam_weight", "gauge objective weight of state and effects", &mut s.gst_spam_weight);

    f("pst.gate_shots", "split over the three gate circuits", &mut s.pst.gate_shots);
    f("pst.calibration_shots", "per prepared basis state", &mut s.pst.calibration_shots);
    f("pst.target_sigma", "flag the result above this, or none", &mut s.pst.target_sigma);
}

impl Settings {
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut entries = parse_entries(text)?;
        let mut s = Settings::default();
        let mut err = None;
        visit(&mut s, &mut |key, _, v| {
            if err.is_some() {
                return;
            }
            if let Some((line, raw)) = entries.remove(key) {
                if let Err(message) = v.read(&raw) {
                    err = Some(ConfigError::Value { line, key: key.into(), message });
                }
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        if let Some((line, key)) = entries.into_iter().map(|(k, (l, _))| (l, k)).min() {
            return Err(ConfigError::UnknownKey { line, key });
        }
        Ok(s.resolved())
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_text(&text)
    }

    /// Full config text; parsing it gives back `self`.
    pub fn to_text(&self) -> String {
        let mut s = self.clone();
        let mut out = String::from("# mixgate configuration\n");
        let mut section = String::new();
        visit(&mut s, &mut |key, help, v| {
            let (sec, name) = key.rsplit_once('.').expect("keys are sectioned");
            if sec != section {
                let _ = writeln!(out, "\n[{sec}]");
                section = sec.to_string();
            }
            if help.is_empty() {
                let _ = writeln!(out, "{name} = {}", v.show());
            } else {
                let _ = writeln!(out, "{name} = {}  # {help}", v.show());
            }
        });
        out
    }

    /// Copies the gate mode from `modes` and the scattering species into the
    /// noise model.
    fn resolved(mut self) -> Self {
        if let Some(m) = self.modes.iter().find(|m| m.label == self.drive.mode.label) {
            self.drive.mode = m.clone();
        }
        self.noise.scattering_species = self
            .scattering
            .iter()
            .map(|s| if *s == Species::Ca { self.ca.clone() } else { self.sr.clone() })
            .collect();
        self
    }

    pub fn forces(&self) -> SpinConfigForces {
        force_amplitudes(&self.ca, &self.sr, &self.drive.mode)
    }

    pub fn backend(&self) -> SimBackendConfig {
        let sim = &self.sim;
        let mut noise = if sim.physical_noise { self.noise.clone() } else { NoiseSpec::none() };
        noise.depolarizing_p = 1.0 - (1.0 - noise.depolarizing_p) * (1.0 - 4.0 * sim.gate_error / 3.0);
        SimBackendConfig {
            drive: self.drive.clone(),
            noise,
            single_qubit_error: sim.single_qubit_error,
            readout: [sim.readout_ca, sim.readout_sr],
            drift: match sim.drift {
                DriftKind::None => DriftModel::None,
                DriftKind::LinearHeating => DriftModel::LinearHeating {
                    rate: sim.drift_rate,
                    error_per_quantum: sim.drift_error_per_quantum,
                },
            },
            durations: sim.durations,
            seed: self.seed,
        }
    }
}

/// The shipped default configuration file.
pub const DEFAULT_CONFIG: &str = include_str!("../../config/default.conf");

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_text_round_trips() {
        let d = Settings::default();
        assert_eq!(Settings::from_text(&d.to_text()).unwrap(), d);
    }

    /// Derived frequencies can differ in the last ulp between build profiles,
    /// so numbers compare with a relative tolerance.
    #[test]
    fn shipped_file_matches_defaults() {
        let shipped = parse_entries(DEFAULT_CONFIG).unwrap();
        let current = parse_entries(&Settings::default().to_text()).unwrap();
        assert_eq!(shipped.keys().collect::<Vec<_>>(), current.keys().collect::<Vec<_>>());
        for (k, (_, a)) in &shipped {
            let b = &current[k].1;
            let same = match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(x), Ok(y)) => (x - y).abs() <= 1e-12 * x.abs().max(y.abs()),
                _ => a == b,
            };
            assert!(same, "{k}: shipped {a}, default {b}; regenerate config/default.conf with `mixgate config`");
        }
    }

    #[test]
    fn empty_text_is_default() {
        assert_eq!(Settings::from_text("").unwrap(), Settings::default());
    }

    #[test]
    fn sections_and_overrides() {
        let s = Settings::from_text("[mode.axial_oop]\nfrequency = 3.0e6 # moved\n[rbm]\nlengths = 1, 4\n").unwrap();
        assert_eq!(s.drive.mode.frequency, 3.0e6);
        assert_eq!(s.rbm.lengths, vec![1, 4]);
        let s = Settings::from_text("gst.germs = Gzz; {}\nnoise.scattering = none").unwrap();
        assert_eq!(s.gst.germs.len(), 2);
        assert!(s.gst.germs[1].is_empty());
        assert!(s.noise.scattering_species.is_empty());
    }

    #[test]
    fn errors_carry_lines() {
        let e = Settings::from_text("\n[rbm]\nshots = many\n").unwrap_err();
        assert!(matches!(e, ConfigError::Value { line: 3, .. }), "{e}");
        let e = Settings::from_text("run.sed = 3\n").unwrap_err();
        assert!(matches!(e, ConfigError::UnknownKey { line: 1, .. }), "{e}");
        let e = Settings::from_text("a = 1\na = 2\n").unwrap_err();
        assert!(matches!(e, ConfigError::Syntax { line: 2, .. }), "{e}");
        assert!(Settings::from_text("[open\n").is_err());
        assert!(Settings::from_text("just words\n").is_err());
    }

    #[test]
    fn backend_combines_gate_error_and_noise() {
        let mut s = Settings::default();
        s.sim.gate_error = 3e-3;
        let b = s.backend();
        assert!((b.noise.depolarizing_p - 4e-3).abs() < 1e-15);
        assert!(b.noise.scattering_species.is_empty());
        s.sim.physical_noise = true;
        assert_eq!(s.backend().noise.scattering_species.len(), 2);
    }
}
