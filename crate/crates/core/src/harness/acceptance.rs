//! The acceptance checks, shared by `mixgate selftest` and the acceptance
//! test target. Each check prints as one PASS/FAIL line.

use std::fmt;
use std::time::Instant;

use nalgebra::SVector;
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::backend::{DriftModel, SimBackend, SimBackendConfig};
use super::circuit::{parse_circuit, Circuit, GateLabel};
use super::config::Settings;
use super::dataset::CountDataset;
use crate::clifford::{average_counts, decompose, enumerate_group, TwoQubitClifford, GROUP_ORDER};
use crate::gatesim::budget::{HEATING, SCATTERING};
use crate::gatesim::{
    error_budget, force_amplitudes, geometric_phases, ideal_gate, populations, required_rabi_scaling, trajectory,
    NoiseSpec,
};
use crate::gst::fit::gather;
use crate::gst::{self, build_design, gauge_optimize, goodness_of_fit, mle_fit, FitOptions, GateSet, GofReport, Model};
use crate::pst::{run_pst, PstOptions};
use crate::qcore::{diamond_distance, error_generator, pauli, random, Mat16c, Mat4c, Ptm, C64};
use crate::rbm::{
    self, bootstrap_interleaved, compose_interleaved, fit_decay_with, interleaved_error, FidelityPoint, RbmDesign,
    Weighting,
};

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {:>2} {}: {} [{:.1} s]", self.id, self.name, self.detail, self.seconds)
    }
}

pub struct Criterion {
    pub id: u8,
    pub name: &'static str,
    /// Takes minutes.
    pub slow: bool,
    check: fn() -> Result<(bool, String), String>,
}

impl Criterion {
    pub fn run(&self) -> Outcome {
        let t = Instant::now();
        let (passed, detail) = (self.check)().unwrap_or_else(|e| (false, format!("error: {e}")));
        Outcome { id: self.id, name: self.name, passed, detail, seconds: t.elapsed().as_secs_f64() }
    }
}

pub const CRITERIA: &[Criterion] = &[
    Criterion { id: 1, name: "clifford group", slow: false, check: clifford_group },
    Criterion { id: 2, name: "interleaved error algebra", slow: false, check: interleaved_algebra },
    Criterion { id: 3, name: "rbm recovery", slow: true, check: rbm_recovery },
    Criterion { id: 4, name: "rbm drift signature", slow: false, check: rbm_drift },
    Criterion { id: 5, name: "pst end to end", slow: false, check: pst_end_to_end },
    Criterion { id: 6, name: "gst recovery and goodness of fit", slow: true, check: gst_recovery },
    Criterion { id: 7, name: "channel metrics", slow: false, check: channel_metrics },
    Criterion { id: 8, name: "gate physics", slow: false, check: gate_physics },
    Criterion { id: 9, name: "error budget", slow: false, check: budget },
    Criterion { id: 10, name: "determinism and formats", slow: false, check: determinism_and_formats },
];

pub fn criterion(id: u8) -> &'static Criterion {
    CRITERIA.iter().find(|c| c.id == id).expect("criterion id")
}

type Check = Result<(bool, String), String>;

fn err<E: fmt::Display>(e: E) -> String {
    e.to_string()
}

fn clifford_group() -> Check {
    let t = Instant::now();
    let group = enumerate_group();
    let mut indices: Vec<usize> = group.iter().map(|c| c.index()).collect();
    indices.sort_unstable();
    indices.dedup();
    let mut replay_failures = 0;
    let mut worst = 0.0_f64;
    for c in group {
        let d = decompose(c);
        if TwoQubitClifford::from_circuit(&d.circuit).as_ref() != Some(c) {
            replay_failures += 1;
        }
        let p = Ptm::from_unitary(&d.circuit.unitary()).map_err(err)?;
        worst = worst.max((p.matrix() - c.ptm().matrix()).amax());
    }
    let (entangling, physical) = average_counts();
    let secs = t.elapsed().as_secs_f64();
    let pass = group.len() == GROUP_ORDER
        && indices.len() == GROUP_ORDER
        && replay_failures == 0
        && worst < 1e-9
        && entangling == 1.5
        && secs < 60.0;
    Ok((
        pass,
        format!(
            "{} elements, {replay_failures} replay failures, max PTM deviation {worst:.1e}, \
             mean entangling {entangling}, mean physical {physical:.2}, {secs:.1} s",
            group.len()
        ),
    ))
}

fn interleaved_algebra() -> Check {
    let mut worst = 0.0_f64;
    let grid: Vec<f64> = (0..=70).map(|i| i as f64 * 0.01).collect();
    for &r in &grid {
        for &g in &grid {
            let composed = compose_interleaved(r, g, 2).map_err(err)?;
            worst = worst.max((interleaved_error(r, composed, 2).map_err(err)? - g).abs());
        }
    }
    // ε' = ε_g + ε_G − α ε_g ε_G
    let (a, b) = (0.1, 0.2);
    let alpha = (a + b - compose_interleaved(a, b, 2).map_err(err)?) / (a * b);
    let forward = compose_interleaved(8.3e-3, 2.9e-3, 2).map_err(err)?;
    let back = interleaved_error(8.3e-3, forward, 2).map_err(err)?;
    let pass = worst < 1e-12
        && (alpha - 4.0 / 3.0).abs() < 1e-12
        && (forward - 1.12e-2).abs() < 5e-5
        && (back - 2.9e-3).abs() < 1e-9;
    Ok((
        pass,
        format!(
            "round-trip max error {worst:.1e}, alpha {alpha:.12}, eps_g' {forward:.4e}, back {back:.6e}"
        ),
    ))
}

/// `ε_G` refitted on lengths up to `lmax`.
fn eps_up_to(fids: &rbm::Fidelities, lmax: usize) -> Result<f64, String> {
    let cut = |pts: &[FidelityPoint]| pts.iter().copied().filter(|p| p.length <= lmax).collect::<Vec<_>>();
    let r = fit_decay_with(&cut(&fids.reference), Weighting::Weighted).map_err(err)?;
    let g = fit_decay_with(&cut(&fids.interleaved), Weighting::Weighted).map_err(err)?;
    interleaved_error(r.eps, g.eps, 2).map_err(err)
}

fn rbm_fidelities(cfg: SimBackendConfig, design: &RbmDesign, rng: &mut ChaCha8Rng) -> Result<rbm::Fidelities, String> {
    let seqs = rbm::generate(design, rng).map_err(err)?;
    let ds = SimBackend::new(cfg).map_err(err)?.run(&rbm::circuits(&seqs), design.shots);
    rbm::sequence_fidelity(&ds, &seqs).map_err(err)
}

fn rbm_recovery() -> Check {
    let t = Instant::now();
    let design = RbmDesign::default();
    let trials = 50;
    let mut lines = Vec::new();
    let mut pass = true;
    for (k, eps) in [1e-3, 3e-3].into_iter().enumerate() {
        let mut hits = 0;
        let mut sigmas = Vec::new();
        for trial in 0..trials {
            let seed = 10_000 * (k as u64 + 1) + trial;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let fids = rbm_fidelities(SimBackendConfig::depolarizing(seed, eps), &design, &mut rng)?;
            let r = fit_decay_with(&fids.reference, Weighting::Weighted).map_err(err)?;
            let g = fit_decay_with(&fids.interleaved, Weighting::Weighted).map_err(err)?;
            let est = interleaved_error(r.eps, g.eps, 2).map_err(err)?;
            let sigma = bootstrap_interleaved(&r, &g, &design, Weighting::Weighted, &mut rng, 200).sigma;
            hits += usize::from((est - eps).abs() < 2.0 * sigma);
            sigmas.push(sigma);
        }
        sigmas.sort_by(f64::total_cmp);
        let median = sigmas[sigmas.len() / 2];
        pass &= hits * 10 >= trials as usize * 9;
        if eps == 3e-3 {
            // Same order as ±0.7e-3.
            pass &= (0.7e-3 / 3.0..0.7e-3 * 3.0).contains(&median);
        }
        lines.push(format!("eps_G {eps:.0e}: {hits}/{trials} within 2 sigma, median sigma {median:.2e}"));
    }
    let secs = t.elapsed().as_secs_f64();
    pass &= secs < 600.0;
    Ok((pass, lines.join("; ")))
}

fn rbm_drift() -> Check {
    let design = RbmDesign::default();
    let mut shifts = Vec::new();
    for seed in 0..5u64 {
        let mut cfg = SimBackendConfig::depolarizing(seed, 2.9e-3);
        cfg.drift = DriftModel::ip_mode_heating();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fids = rbm_fidelities(cfg, &design, &mut rng)?;
        shifts.push(eps_up_to(&fids, 60)? - eps_up_to(&fids, 20)?);
    }
    let mean = shifts.iter().sum::<f64>() / shifts.len() as f64;
    // Reference shift 2.9e-3 → 3.8e-3.
    let pass = shifts.iter().all(|&d| d > 0.0) && (0.9e-3 / 3.0..0.9e-3 * 3.0).contains(&mean);
    let list: Vec<String> = shifts.iter().map(|d| format!("{d:.2e}")).collect();
    Ok((pass, format!("eps_G(L<=60) - eps_G(L<=20) over 5 seeds: [{}], mean {mean:.2e}", list.join(", "))))
}

fn pst_end_to_end() -> Check {
    let cfg = SimBackendConfig::depolarizing(5, 2e-3).with_symmetric_readout(1.4e-3, 4.0e-3);
    let mut backend = SimBackend::new(cfg).map_err(err)?;
    let (_, r) = run_pst(&mut backend, &PstOptions::default()).map_err(err)?;
    let raw = r.raw_error();
    let corrected = r.corrected_error();
    let pass = (raw - 1.0e-2).abs() <= 1.5e-3 && (corrected - 2e-3).abs() <= 2.0 * r.sigma;
    Ok((pass, format!("raw error {raw:.3e}, corrected {corrected:.3e} ± {:.2e}", r.sigma)))
}

fn n_sigmas(g: &GofReport) -> Vec<f64> {
    g.points.iter().map(|p| p.n_sigma).collect()
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(", ")
}

fn gst_recovery() -> Check {
    let t = Instant::now();
    let p = 0.0075;
    let truth = 0.75 * p;
    let design = build_design(&Default::default()).map_err(err)?;
    let noisy = |seed: u64| {
        let mut cfg = SimBackendConfig::depolarizing(seed, truth).with_symmetric_readout(1.4e-3, 4e-3);
        cfg.single_qubit_error = 1e-3;
        cfg
    };
    let opts = FitOptions::default();

    let ds = SimBackend::new(noisy(7)).map_err(err)?.run(&design.circuits, 1000);
    let data = gather(&design, &ds).map_err(err)?;
    let fit = mle_fit(&design, &data, Model::Cptp, &opts).map_err(err)?;
    let gauge = gauge_optimize(&fit.estimate, &GateSet::target(), 1.0).map_err(err)?;
    let rep = gst::report(&gauge.estimate, &GateSet::target()).map_err(err)?;
    let eps = rep.gate(GateLabel::Gzz).ok_or("no entangling gate in report")?.error;
    let gof = goodness_of_fit(&design, &data, Some(&gauge.estimate), &opts).map_err(err)?;
    let matched = n_sigmas(&gof);

    let mut cfg = noisy(8);
    cfg.drift = DriftModel::LinearHeating { rate: 5000.0, error_per_quantum: 1.667e-3 };
    let ds = SimBackend::new(cfg).map_err(err)?.run(&design.circuits, 1000);
    let drift = n_sigmas(&goodness_of_fit(&design, &gather(&design, &ds).map_err(err)?, None, &opts).map_err(err)?);

    let secs = t.elapsed().as_secs_f64();
    let last = *drift.last().ok_or("empty goodness-of-fit report")?;
    let pass = (eps - truth).abs() < 3e-3
        && fit.converged
        && matched.iter().all(|x| x.abs() <= 3.0)
        && last > 3.0
        && last > drift[0]
        && secs < 1800.0;
    Ok((
        pass,
        format!(
            "eps_G {eps:.3e} (truth {truth:.3e}); model-matched N_sigma [{}]; drift N_sigma [{}]",
            fmt_list(&matched),
            fmt_list(&drift)
        ),
    ))
}

type V16c = SVector<C64, 16>;

/// `½‖(Φ − 1) ⊗ 1 (|ψ⟩⟨ψ|)‖₁` maximized over pure inputs by a random hill
/// climb, with the channel given by Kraus operators.
fn diamond_oracle(kraus: &[Mat4c], seed: u64) -> f64 {
    let lift: Vec<Mat16c> = kraus.iter().map(|k| pauli::kron4(k, &Mat4c::identity())).collect();
    let distance = |psi: &V16c| {
        let rho = psi * psi.adjoint();
        let mut out = -rho;
        for k in &lift {
            out += k * rho * k.adjoint();
        }
        let h = (&out + out.adjoint()) * C64::new(0.5, 0.0);
        0.5 * h.symmetric_eigenvalues().iter().map(|x| x.abs()).sum::<f64>()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = |scale: f64, rng: &mut ChaCha8Rng| {
        V16c::from_fn(|_, _| {
            let a: f64 = StandardNormal.sample(rng);
            let b: f64 = StandardNormal.sample(rng);
            C64::new(a, b) * scale
        })
    };
    let mut best = 0.0_f64;
    for _ in 0..6 {
        let mut psi = gauss(1.0, &mut rng).normalize();
        let mut val = distance(&psi);
        let mut step = 0.3;
        for _ in 0..600 {
            let cand = (psi + gauss(step, &mut rng)).normalize();
            let v = distance(&cand);
            if v > val {
                psi = cand;
                val = v;
            } else {
                step *= 0.985;
            }
        }
        best = best.max(val);
    }
    best
}

fn channel_metrics() -> Check {
    let mut worst_diamond = 0.0_f64;
    for p in [0.01_f64, 0.2] {
        let mut kraus = vec![Mat4c::identity() * C64::new((1.0 - p).sqrt(), 0.0)];
        kraus.extend(pauli::products().iter().map(|m| m * C64::new((p / 16.0).sqrt(), 0.0)));
        let d = diamond_distance(&Ptm::depolarizing(p), &Ptm::identity()).map_err(err)?;
        worst_diamond = worst_diamond.max((d - diamond_oracle(&kraus, 1)).abs());
    }
    for theta in [0.05, 0.6] {
        let half = C64::from_polar(1.0, -theta / 2.0);
        let u = Mat4c::from_diagonal(&nalgebra::Vector4::new(half, half, half.conj(), half.conj()));
        let d = diamond_distance(&Ptm::from_unitary(&u).map_err(err)?, &Ptm::identity()).map_err(err)?;
        worst_diamond = worst_diamond.max((d - diamond_oracle(&[u], 2)).abs());
    }

    let g0 = ideal_gate();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_round_trip = 0.0_f64;
    for _ in 0..5 {
        let g = random::random_channel(&mut rng, 2, 0.05).compose(&g0);
        let l = error_generator(&g, &g0).map_err(err)?;
        worst_round_trip = worst_round_trip.max((l.reconstruct(&g0).matrix() - g.matrix()).amax());
    }

    let zz = |theta: f64| {
        let (a, b) = (C64::from_polar(1.0, -theta), C64::from_polar(1.0, theta));
        Mat4c::from_diagonal(&nalgebra::Vector4::new(a, b, b, a))
    };
    let over = Ptm::from_unitary(&zz(0.02)).map_err(err)?.compose(&Ptm::depolarizing(1e-4)).compose(&g0);
    let coherent = error_generator(&over, &g0).map_err(err)?.coherent_fraction();

    let pass = worst_diamond < 1e-3 && worst_round_trip < 1e-9 && coherent > 0.9;
    Ok((
        pass,
        format!(
            "diamond vs oracle max gap {worst_diamond:.1e}; generator round-trip {worst_round_trip:.1e}; \
             coherent fraction under over-rotation {coherent:.3}"
        ),
    ))
}

fn gate_physics() -> Check {
    let s = Settings::default();
    let forces = force_amplitudes(&s.ca, &s.sr, &s.drive.mode);
    let mut closure = 0.0_f64;
    for shaping in [s.drive.shaping_time, 0.0] {
        let cfg = crate::gatesim::GateDriveConfig { shaping_time: shaping, ..s.drive.clone() };
        for a in trajectory(&cfg, &forces, cfg.gate_time).map_err(err)? {
            closure = closure.max(a.norm());
        }
    }
    let p = populations(&s.drive, &forces, &s.drive.mode, s.drive.gate_time).map_err(err)?;
    let bell = [0.5, 0.0, 0.0, 0.5];
    let pop_gap = p.iter().zip(bell).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let phases = geometric_phases(&s.drive, &forces).map_err(err)?;
    let zz_gap = (phases.zz.abs() - std::f64::consts::FRAC_PI_4).abs();
    let scaling = required_rabi_scaling(&s.drive, &forces).map_err(err)?;
    let fraction = phases.global_fraction();
    let pass = closure < 1e-6
        && pop_gap < 1e-6
        && zz_gap < 1e-6
        && (scaling - 1.03).abs() <= 0.01
        && (fraction - 0.2).abs() <= 0.05;
    Ok((
        pass,
        format!(
            "max |alpha(t_g)| {closure:.1e}; Bell population gap {pop_gap:.1e}; zz phase gap {zz_gap:.1e}; \
             Rabi scaling {scaling:.4}; global-phase fraction {fraction:.3}"
        ),
    ))
}

fn budget() -> Check {
    let s = Settings::default();
    let b = error_budget(&s.drive, &s.modes, &NoiseSpec::table_defaults());
    let heating = b.get(HEATING).ok_or("no heating row")?;
    let scattering = b.get(SCATTERING).ok_or("no scattering row")?;
    let pass = s.drive.mode.heating_rate == 30.0
        && (heating - 4e-4).abs() <= 0.25 * 4e-4
        && (1e-4..=4e-4).contains(&scattering)
        && (1e-3..=3e-3).contains(&b.total);
    Ok((pass, format!("heating {heating:.2e}, scattering {scattering:.2e}, total {:.2e}", b.total)))
}

/// A random circuit over every label kind, including empty ones.
pub fn random_circuit<R: Rng + ?Sized>(rng: &mut R) -> Circuit {
    let len = rng.random_range(0..12);
    Circuit::new(
        (0..len)
            .map(|_| {
                let q = rng.random_range(1..=2u8);
                match rng.random_range(0..9) {
                    0 => GateLabel::Xp(q),
                    1 => GateLabel::Xm(q),
                    2 => GateLabel::Yp(q),
                    3 => GateLabel::Ym(q),
                    4 => GateLabel::Zp(q),
                    5 => GateLabel::Zm(q),
                    6 => GateLabel::Pi(q),
                    7 => GateLabel::Gzz,
                    _ => GateLabel::Rot(q, rng.random_range(0..360_000)),
                }
            })
            .collect(),
    )
}

/// Every text artifact of a small pipeline run.
fn pipeline_outputs(seed: u64) -> Result<Vec<String>, String> {
    let mut s = Settings::default();
    s.seed = seed;
    s.rbm = RbmDesign { lengths: vec![1, 3, 6, 10], randomizations: 5, shots: 20, interleaved: true };
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let seqs = rbm::generate(&s.rbm, &mut rng).map_err(err)?;
    let mut backend = SimBackend::new(s.backend()).map_err(err)?;
    let rbm_ds = backend.run(&rbm::circuits(&seqs), s.rbm.shots);
    let fids = rbm::sequence_fidelity(&rbm_ds, &seqs).map_err(err)?;
    let rep = rbm::analyze(&fids, &s.rbm, Weighting::Weighted, &mut rng, 20).map_err(err)?;
    let (pst_ds, pst) = run_pst(&mut backend, &s.pst).map_err(err)?;
    let mut gst_cfg = s.gst.clone();
    gst_cfg.lengths = vec![1];
    let gst_ds = backend.run(&build_design(&gst_cfg).map_err(err)?.circuits, 50);
    Ok(vec![
        serde_json::to_string(&seqs).map_err(err)?,
        rbm_ds.to_text(),
        rbm::fidelity_csv(&fids),
        serde_json::to_string(&rep).map_err(err)?,
        pst_ds.to_text(),
        serde_json::to_string(&pst).map_err(err)?,
        gst_ds.to_text(),
    ])
}

fn determinism_and_formats() -> Check {
    let first = pipeline_outputs(11)?;
    let identical = first == pipeline_outputs(11)?;
    let differs = first != pipeline_outputs(12)?;

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let cases = 10_000;
    let mut circuit_failures = 0;
    let mut ds = CountDataset::new();
    ds.set_meta("seed", "10");
    for _ in 0..cases {
        let c = random_circuit(&mut rng);
        if parse_circuit(&c.to_string()).ok().as_ref() != Some(&c) {
            circuit_failures += 1;
        }
        let mut counts: [u64; 4] = std::array::from_fn(|_| rng.random_range(0..1_000_000));
        counts[rng.random_range(0..4)] += 1;
        ds.push(c, counts);
    }
    let text = ds.to_text();
    let back = CountDataset::from_text(&text).map_err(err)?;
    let dataset_exact = back == ds && back.to_text() == text;
    let pass = identical && differs && circuit_failures == 0 && dataset_exact;
    Ok((
        pass,
        format!(
            "repeat run identical: {identical}; other seed differs: {differs}; \
             {circuit_failures}/{cases} circuit round-trip failures; {cases}-record dataset exact: {dataset_exact}"
        ),
    ))
}
