//! Phase-space trajectories and geometric phases of the two-pulse sequence.
//!
//! Each pulse drives `α̇ = −iκ f_s w(τ) e^{iωτ}` with `w` the Hann-edged
//! window, so every trajectory is `κ f_s` times one unit trajectory `u(τ)`.
//! The spin echo between the pulses swaps the labels, so pulse 2 pushes the
//! state that started in `s` with `f_{s̄}`. The echo also inverts the sign of
//! the light-shift beatnote relative to the spins. With matched pulse phases
//! the spin-dependent displacements of the two pulses add up. The π flip of
//! pulse 2 (Walsh modulation) makes them retrace instead.
//!
//! The motional phase is `φ = Im∫α*α̇ dt`, and `Φ_s = −φ_s`.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, PI};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::{GateDriveConfig, GatesimError, MotionalMode, SpinConfigForces};
use crate::qcore::{c, Mat4c, C64};

const GL_POINTS: usize = 24;

fn gauss_legendre() -> &'static [(f64, f64)] {
    static CELL: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    CELL.get_or_init(|| {
        let n = GL_POINTS;
        (0..n)
            .map(|i| {
                let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
                let mut dp = 0.0;
                for _ in 0..100 {
                    let (mut p0, mut p1) = (1.0, x);
                    for k in 2..=n {
                        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                        p0 = p1;
                        p1 = p2;
                    }
                    dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                    let dx = p1 / dp;
                    x -= dx;
                    if dx.abs() < 1e-16 {
                        break;
                    }
                }
                (x, 2.0 / ((1.0 - x * x) * dp * dp))
            })
            .collect()
    })
}

/// `∫_a^b e^{iνx} dx`.
fn expint(nu: f64, a: f64, b: f64) -> C64 {
    let h = b - a;
    let x = nu * h;
    if x.abs() < 1e-4 {
        let series = c(1.0) + C64::new(0.0, x / 2.0) - c(x * x / 6.0) - C64::new(0.0, x * x * x / 24.0);
        C64::from_polar(1.0, nu * a) * series * h
    } else {
        (C64::from_polar(1.0, nu * b) - C64::from_polar(1.0, nu * a)) / C64::new(0.0, nu)
    }
}

struct Segment {
    t0: f64,
    t1: f64,
    u0: C64,
    /// `(c, ν)`: drive `Σ c e^{iντ}` on this segment.
    terms: Vec<(C64, f64)>,
}

/// Unit trajectory `u(τ) = ∫_0^τ w e^{iωτ'} dτ'` of a single pulse.
pub(crate) struct UnitPulse {
    duration: f64,
    segments: Vec<Segment>,
}

impl UnitPulse {
    pub(crate) fn new(duration: f64, shaping: f64, omega: f64) -> Self {
        let quarter = C64::new(-0.25, 0.0);
        let k = PI / shaping.max(f64::MIN_POSITIVE);
        let mut pieces: Vec<(f64, f64, Vec<(C64, f64)>)> = Vec::new();
        if shaping > 0.0 {
            // sin²(πτ/2t_s) = 1/2 − (e^{iπτ/t_s} + e^{−iπτ/t_s})/4
            pieces.push((0.0, shaping, vec![(c(0.5), 0.0), (quarter, k), (quarter, -k)]));
        }
        pieces.push((shaping, duration - shaping, vec![(c(1.0), 0.0)]));
        if shaping > 0.0 {
            let ph = C64::from_polar(1.0, k * duration);
            pieces.push((
                duration - shaping,
                duration,
                vec![(c(0.5), 0.0), (quarter * ph, -k), (quarter * ph.conj(), k)],
            ));
        }
        let mut segments = Vec::with_capacity(pieces.len());
        let mut u = c(0.0);
        for (t0, t1, window) in pieces {
            let terms: Vec<(C64, f64)> = window.into_iter().map(|(cf, mu)| (cf, mu + omega)).collect();
            let seg = Segment { t0, t1, u0: u, terms };
            u = seg.u(t1);
            segments.push(seg);
        }
        Self { duration, segments }
    }

    fn segment(&self, tau: f64) -> &Segment {
        self.segments.iter().find(|s| tau <= s.t1).unwrap_or_else(|| self.segments.last().expect("segment"))
    }

    pub(crate) fn u(&self, tau: f64) -> C64 {
        self.segment(tau.clamp(0.0, self.duration)).u(tau.clamp(0.0, self.duration))
    }

    pub(crate) fn end(&self) -> C64 {
        self.u(self.duration)
    }

    /// `Im ∫_0^τ u* u̇ dτ'`.
    pub(crate) fn phase(&self, tau: f64) -> f64 {
        let tau = tau.clamp(0.0, self.duration);
        let max_piece = self.duration / 16.0;
        let mut total = 0.0;
        for seg in &self.segments {
            if seg.t0 >= tau {
                break;
            }
            let end = seg.t1.min(tau);
            let n = ((end - seg.t0) / max_piece).ceil().max(1.0) as usize;
            let h = (end - seg.t0) / n as f64;
            for p in 0..n {
                let a = seg.t0 + p as f64 * h;
                let mid = a + h / 2.0;
                for &(x, w) in gauss_legendre() {
                    let t = mid + x * h / 2.0;
                    total += w * h / 2.0 * (seg.u(t).conj() * seg.udot(t)).im;
                }
            }
        }
        total
    }
}

impl Segment {
    fn u(&self, t: f64) -> C64 {
        self.u0 + self.terms.iter().map(|&(cf, nu)| cf * expint(nu, self.t0, t)).sum::<C64>()
    }

    fn udot(&self, t: f64) -> C64 {
        self.terms.iter().map(|&(cf, nu)| cf * C64::from_polar(1.0, nu * t)).sum()
    }
}

/// Angular drive frequency that closes `loops/2` loops in one pulse. Equal to
/// `2π δ_g` for unshaped pulses; the Hann edges shift it up slightly.
fn closure_frequency(cfg: &GateDriveConfig) -> f64 {
    let omega0 = 2.0 * PI * cfg.gate_detuning;
    if cfg.shaping_time == 0.0 {
        return omega0;
    }
    let t = cfg.pulse_time();
    let residual = |w: f64| {
        let u = UnitPulse::new(t, cfg.shaping_time, w).end();
        (u * C64::from_polar(1.0, -w * t / 2.0)).re
    };
    let target = cfg.loops / 2;
    let step = 0.01 * omega0.abs();
    let mut lo = step;
    let mut r_lo = residual(lo * omega0.signum());
    let mut crossings = 0;
    loop {
        let hi = lo + step;
        let r_hi = residual(hi * omega0.signum());
        if r_lo.signum() != r_hi.signum() {
            crossings += 1;
            if crossings == target {
                let (mut a, mut b, mut ra) = (lo, hi, r_lo);
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    let rm = residual(m * omega0.signum());
                    if rm.signum() == ra.signum() {
                        a = m;
                        ra = rm;
                    } else {
                        b = m;
                    }
                    if b - a <= 1e-15 * b {
                        break;
                    }
                }
                return 0.5 * (a + b) * omega0.signum();
            }
        }
        lo = hi;
        r_lo = r_hi;
    }
}

struct Sequence {
    pulse: UnitPulse,
    end: C64,
    end_phase: f64,
    second_sign: f64,
}

impl Sequence {
    fn new(cfg: &GateDriveConfig) -> Self {
        let omega = closure_frequency(cfg) + 2.0 * PI * cfg.detuning_error;
        let pulse = UnitPulse::new(cfg.pulse_time(), cfg.shaping_time, omega);
        let end = pulse.end();
        let end_phase = pulse.phase(cfg.pulse_time());
        Self { pulse, end, end_phase, second_sign: if cfg.walsh_flip { 1.0 } else { -1.0 } }
    }

    /// `(α_s(t), φ_s(t))` for every initial spin configuration.
    fn state(&self, forces: &SpinConfigForces, kappa: f64, t: f64) -> [(C64, f64); 4] {
        let big_t = self.pulse.duration;
        std::array::from_fn(|s| {
            let a1 = C64::new(0.0, -kappa * forces.0[s]);
            if t <= big_t {
                return (a1 * self.pulse.u(t), a1.norm_sqr() * self.pulse.phase(t));
            }
            let a2 = C64::new(0.0, -kappa * self.second_sign * forces.0[3 - s]);
            let tau = t - big_t;
            let start = a1 * self.end;
            let u = self.pulse.u(tau);
            let phi = a1.norm_sqr() * self.end_phase
                + (start.conj() * a2 * u).im
                + a2.norm_sqr() * self.pulse.phase(tau);
            (start + a2 * u, phi)
        })
    }
}

/// Hadamard components of the four spin-configuration phases:
/// `Φ_s = global + ζ1·z1 + ζ2·z2 + ζ1ζ2·zz` with `ζ = +1` for the lower state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseComponents {
    pub global: f64,
    pub z1: f64,
    pub z2: f64,
    pub zz: f64,
}

fn zeta(bit: usize) -> f64 {
    if bit == 0 {
        1.0
    } else {
        -1.0
    }
}

impl PhaseComponents {
    pub fn from_phases(phi: [f64; 4]) -> Self {
        let [a, b, cc, d] = phi;
        Self {
            global: ((a + b) + (cc + d)) / 4.0,
            z1: ((a + b) - (cc + d)) / 4.0,
            z2: ((a - b) + (cc - d)) / 4.0,
            zz: ((a - b) - (cc - d)) / 4.0,
        }
    }

    pub fn recompose(&self) -> [f64; 4] {
        std::array::from_fn(|s| {
            let (z1, z2) = (zeta(s / 2), zeta(s % 2));
            (self.global + z1 * self.z1) + (z2 * self.z2 + z1 * z2 * self.zz)
        })
    }

    /// Share of the common geometric phase that does not become two-qubit
    /// phase: `1 − |zz| / |global|`.
    pub fn global_fraction(&self) -> f64 {
        1.0 - self.zz.abs() / self.global.abs()
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self { global: self.global * k, z1: self.z1 * k, z2: self.z2 * k, zz: self.zz * k }
    }
}

/// Phases `Φ_s` after the full sequence at drive strength `kappa`.
pub fn geometric_phases_at(cfg: &GateDriveConfig, forces: &SpinConfigForces, kappa: f64) -> PhaseComponents {
    let seq = Sequence::new(cfg);
    let st = seq.state(forces, kappa, cfg.gate_time);
    PhaseComponents::from_phases(st.map(|(_, phi)| -phi))
}

/// Drive strength `κ` (rad/s per unit force) giving `|zz| = π/4` on the
/// calibrated (error-free) detuning.
pub fn calibrated_drive(cfg: &GateDriveConfig, forces: &SpinConfigForces) -> Result<f64, GatesimError> {
    cfg.validate()?;
    let mut nominal = cfg.clone();
    nominal.detuning_error = 0.0;
    let zz = geometric_phases_at(&nominal, forces, 1.0).zz;
    if !(zz.abs() > 1e-300) || !zz.is_finite() {
        return Err(GatesimError::ZeroZz);
    }
    Ok((FRAC_PI_4 / zz.abs()).sqrt())
}

pub fn geometric_phases(cfg: &GateDriveConfig, forces: &SpinConfigForces) -> Result<PhaseComponents, GatesimError> {
    let kappa = calibrated_drive(cfg, forces)?;
    Ok(geometric_phases_at(cfg, forces, kappa))
}

/// `α_s(t)` at drive strength `kappa`, for `0 ≤ t ≤ t_g`.
pub fn trajectory_at(cfg: &GateDriveConfig, forces: &SpinConfigForces, kappa: f64, t: f64) -> [C64; 4] {
    Sequence::new(cfg).state(forces, kappa, t).map(|(a, _)| a)
}

pub fn trajectory(cfg: &GateDriveConfig, forces: &SpinConfigForces, t: f64) -> Result<[C64; 4], GatesimError> {
    check_time(cfg, t)?;
    let kappa = calibrated_drive(cfg, forces)?;
    Ok(trajectory_at(cfg, forces, kappa, t))
}

fn check_time(cfg: &GateDriveConfig, t: f64) -> Result<(), GatesimError> {
    if !(0.0..=cfg.gate_time).contains(&t) {
        return Err(GatesimError::InvalidConfig(format!("time {t:e} s outside [0, t_g]")));
    }
    Ok(())
}

/// Factor by which the drive must exceed that of a symmetric force pair with
/// the same mean-square differential force, `sqrt(π/4 / zz_ref)`.
pub fn required_rabi_scaling(cfg: &GateDriveConfig, forces: &SpinConfigForces) -> Result<f64, GatesimError> {
    let f = &forces.0;
    let d1 = (f[0] + f[1] - f[2] - f[3]) / 2.0;
    let d2 = (f[0] - f[1] + f[2] - f[3]) / 2.0;
    let ds = ((d1 * d1 + d2 * d2) / 2.0).sqrt();
    let sym = SpinConfigForces(std::array::from_fn(|s| (zeta(s / 2) + zeta(s % 2)) * ds / 2.0));
    let kappa_ref = calibrated_drive(cfg, &sym)?;
    let zz = geometric_phases_at(cfg, forces, kappa_ref).zz;
    if zz.abs() < 1e-12 {
        return Err(GatesimError::ZeroZz);
    }
    Ok((FRAC_PI_4 / zz.abs()).sqrt())
}

fn ry_half_pi() -> Mat4c {
    let r = nalgebra::Matrix2::new(c(FRAC_1_SQRT_2), c(-FRAC_1_SQRT_2), c(FRAC_1_SQRT_2), c(FRAC_1_SQRT_2));
    crate::qcore::pauli::kron2(&r, &r)
}

/// Populations `(p_⇓↓, p_⇓↑, p_⇑↓, p_⇑↑)` at time `t` of the sequence
/// `R_y(π/2)⊗R_y(π/2)`, gate pulses with echo, `R_y(π/2)⊗R_y(π/2)`,
/// thermally averaged over the mode occupation.
pub fn populations(
    cfg: &GateDriveConfig,
    forces: &SpinConfigForces,
    mode: &MotionalMode,
    t: f64,
) -> Result<[f64; 4], GatesimError> {
    check_time(cfg, t)?;
    mode.validate()?;
    let kappa = calibrated_drive(cfg, forces)?;
    let st = Sequence::new(cfg).state(forces, kappa, t);
    let r = ry_half_pi();
    let amp: [C64; 4] = std::array::from_fn(|s| r[(s, 0)]);
    let echoed = t > cfg.pulse_time();
    let label = |s: usize| if echoed { 3 - s } else { s };
    let thermal = 2.0 * mode.nbar + 1.0;
    let mut rho = Mat4c::zeros();
    for s in 0..4 {
        for sp in 0..4 {
            let (a, phi) = st[s];
            let (b, phip) = st[sp];
            let overlap = C64::from_polar(
                (-(a - b).norm_sqr() * thermal / 2.0).exp(),
                phi - phip - (b * a.conj()).im,
            );
            rho[(label(s), label(sp))] = amp[s] * amp[sp].conj() * overlap;
        }
    }
    let out = r * rho * r.adjoint();
    Ok(std::array::from_fn(|k| out[(k, k)].re))
}

#[cfg(test)]
mod tests {
    use super::super::{default_modes, force_amplitudes, IonSpecies, ModeLabel};
    use super::*;

    fn defaults() -> (GateDriveConfig, SpinConfigForces) {
        let cfg = GateDriveConfig::default();
        let f = force_amplitudes(&IonSpecies::calcium(), &IonSpecies::strontium(), &cfg.mode);
        (cfg, f)
    }

    fn symmetric() -> SpinConfigForces {
        let mut sr = IonSpecies::strontium();
        sr.eta_oop = 0.1;
        force_amplitudes(&sr, &sr, &default_modes()[1])
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let s: f64 = gauss_legendre().iter().map(|&(x, w)| w * x.powi(10)).sum();
        assert!((s - 2.0 / 11.0).abs() < 1e-14);
        let total: f64 = gauss_legendre().iter().map(|&(_, w)| w).sum();
        assert!((total - 2.0).abs() < 1e-14);
    }

    #[test]
    fn unit_pulse_matches_direct_quadrature() {
        // Midpoint-rule oracle for u(T) and the phase integral.
        let (t, ts, w) = (24.6e-6, 2e-6, -2.0 * PI * 43e3);
        let p = UnitPulse::new(t, ts, w);
        let n = 400_000;
        let h = t / n as f64;
        let win = |x: f64| {
            if x < ts {
                (PI * x / (2.0 * ts)).sin().powi(2)
            } else if x > t - ts {
                (PI * (t - x) / (2.0 * ts)).sin().powi(2)
            } else {
                1.0
            }
        };
        let mut u = c(0.0);
        let mut phase = 0.0;
        for k in 0..n {
            let x = (k as f64 + 0.5) * h;
            let d = C64::from_polar(win(x), w * x) * h;
            phase += ((u + d * 0.5).conj() * d).im;
            u += d;
        }
        assert!((u - p.end()).norm() < 1e-12, "{u} vs {}", p.end());
        assert!((phase - p.phase(t)).abs() < 1e-9 * phase.abs().max(1e-12), "{phase} vs {}", p.phase(t));
    }

    #[test]
    fn starts_at_origin_and_closes() {
        let (cfg, f) = defaults();
        for a in trajectory(&cfg, &f, 0.0).unwrap() {
            assert_eq!(a, c(0.0));
        }
        for shaping in [0.0, 2e-6, 8e-6] {
            let mut cfg = cfg.clone();
            cfg.shaping_time = shaping;
            let kappa = calibrated_drive(&cfg, &f).unwrap();
            let scale = kappa * f.0.iter().fold(0.0_f64, |m, x| m.max(x.abs())) * cfg.gate_time;
            for a in trajectory(&cfg, &f, cfg.gate_time).unwrap() {
                assert!(a.norm() < 1e-6 * scale, "shaping {shaping}: {a}");
            }
        }
    }

    #[test]
    fn square_pulse_single_loop_closes() {
        let cfg = GateDriveConfig { shaping_time: 0.0, ..Default::default() };
        let p = UnitPulse::new(cfg.pulse_time(), 0.0, 2.0 * PI * cfg.gate_detuning);
        assert!((1.0 / cfg.gate_detuning.abs() - cfg.pulse_time()).abs() < 1e-18);
        assert!(p.end().norm() < 1e-12 * cfg.pulse_time());
    }

    #[test]
    fn walsh_flip_reduces_misset_residual() {
        let (cfg, f) = defaults();
        let kappa = calibrated_drive(&cfg, &f).unwrap();
        let residual = |flip: bool| {
            let cfg = GateDriveConfig { walsh_flip: flip, detuning_error: 0.05 * cfg.gate_detuning, ..cfg.clone() };
            trajectory_at(&cfg, &f, kappa, cfg.gate_time).iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
        };
        let (with, without) = (residual(true), residual(false));
        assert!(with < without, "{with} vs {without}");
        // Symmetric forces have no common part, so the flip cancels exactly.
        let sym = symmetric();
        let cfg = GateDriveConfig { detuning_error: 0.05 * cfg.gate_detuning, ..cfg };
        let kappa = calibrated_drive(&cfg, &sym).unwrap();
        for a in trajectory_at(&cfg, &sym, kappa, cfg.gate_time) {
            assert!(a.norm() < 1e-9, "{a}");
        }
    }

    #[test]
    fn calibrated_phases() {
        let (cfg, f) = defaults();
        let ph = geometric_phases(&cfg, &f).unwrap();
        assert!((ph.zz - FRAC_PI_4).abs() < 1e-6, "{:?}", ph);
        assert!(ph.z1.abs() < 1e-12 && ph.z2.abs() < 1e-12, "{:?}", ph);
        assert!((ph.global_fraction() - 0.2).abs() < 0.05, "{}", ph.global_fraction());
        let sym = geometric_phases(&cfg, &symmetric()).unwrap();
        assert_eq!((sym.z1, sym.z2), (0.0, 0.0));
        assert!(sym.global_fraction().abs() < 1e-12);
    }

    #[test]
    fn phases_scale_quadratically() {
        let (cfg, f) = defaults();
        let base = geometric_phases_at(&cfg, &f, 1e5);
        for k in [0.5, 2.0, 3.0] {
            let scaled = geometric_phases_at(&cfg, &f.scaled(k), 1e5);
            let expect = base.scaled(k * k);
            for (a, b) in scaled.recompose().iter().zip(expect.recompose()) {
                assert!((a - b).abs() <= 1e-9 * b.abs(), "k={k}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn hadamard_round_trip() {
        let phi = [0.731, -0.25, 1.0 / 3.0, 2.5e-3];
        let back = PhaseComponents::from_phases(phi).recompose();
        // Exact up to rounding on the scale of the largest phase.
        let scale = phi.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        for (a, b) in phi.iter().zip(back) {
            assert!((a - b).abs() <= 4.0 * f64::EPSILON * scale, "{a} vs {b}");
        }
        let ints = [3.0, -7.0, 11.0, 0.5];
        assert_eq!(PhaseComponents::from_phases(ints).recompose(), ints);
    }

    #[test]
    fn rabi_scaling() {
        let (cfg, f) = defaults();
        let s = required_rabi_scaling(&cfg, &f).unwrap();
        assert!((s - 1.03).abs() < 0.01, "{s}");
        let one = required_rabi_scaling(&cfg, &symmetric()).unwrap();
        assert!((one - 1.0).abs() < 1e-12);
        let flat = SpinConfigForces([0.1, 0.1, 0.05, 0.05]);
        assert_eq!(required_rabi_scaling(&cfg, &flat), Err(GatesimError::ZeroZz));
    }

    #[test]
    fn populations_bell_point_and_asymmetry() {
        let (cfg, f) = defaults();
        let cal = GateDriveConfig { walsh_flip: false, ..cfg.clone() };
        let cold = MotionalMode { nbar: 0.0, ..cfg.mode.clone() };
        for c in [&cfg, &cal] {
            let p = populations(c, &f, &cold, c.gate_time).unwrap();
            let expect = [0.5, 0.0, 0.0, 0.5];
            for (a, b) in p.iter().zip(expect) {
                assert!((a - b).abs() < 1e-6, "{p:?}");
            }
        }
        let mut asym = 0.0_f64;
        for k in 1..50 {
            let t = cal.gate_time * k as f64 / 50.0;
            let p = populations(&cal, &f, &cold, t).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            asym = asym.max((p[1] - p[2]).abs());
        }
        assert!(asym > 1e-2, "{asym}");
    }

    #[test]
    fn heat_reduces_contrast() {
        let (cfg, f) = defaults();
        let t = 0.3 * cfg.gate_time;
        let cold = MotionalMode { nbar: 0.0, ..cfg.mode.clone() };
        let warm = MotionalMode { nbar: 2.0, ..cfg.mode.clone() };
        let hot = MotionalMode { nbar: 1e9, ..cfg.mode.clone() };
        let p_hot = populations(&cfg, &f, &hot, t).unwrap();
        let contrast = |m: &MotionalMode| {
            let p = populations(&cfg, &f, m, t).unwrap();
            p.iter().zip(&p_hot).map(|(a, b)| (a - b).abs()).sum::<f64>()
        };
        assert!((p_hot.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        // All spin coherences are gone; the analysis pulses spread each
        // diagonal element evenly.
        for p in p_hot {
            assert!((p - 0.25).abs() < 1e-9, "{p_hot:?}");
        }
        assert!(contrast(&cold) > 0.1);
        assert!(contrast(&warm) < contrast(&cold));
        assert_eq!(cfg.mode.label, ModeLabel::AxialOop);
    }
}
