use mixgate::gst::model::Data;
use mixgate::gst::{
    self, build_design, fit::gather, gauge_optimize, goodness_of_fit, mle_fit, report, FitOptions, GateSet, GstDesign,
    GstDesignConfig, Model,
};
use mixgate::harness::{SimBackend, SimBackendConfig};
use mixgate::qcore::random::haar_unitary;
use mixgate::qcore::{c, Mat4c, Ptm};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn short_design() -> GstDesign {
    build_design(&GstDesignConfig { lengths: vec![1], ..Default::default() }).unwrap()
}

/// Counts equal to `shots` times the model probabilities (not integers).
fn exact_data(gs: &GateSet, design: &GstDesign, shots: f64) -> Data {
    let circuits: Vec<Vec<u8>> = design.circuits.iter().map(|c| GateSet::compile(c).unwrap()).collect();
    let counts = design.circuits.iter().map(|c| gs.predict(c).unwrap().map(|p| (p * shots).max(0.0))).collect();
    Data { circuits, counts }
}

fn tight() -> FitOptions {
    FitOptions { loglik_tol: 1e-7, max_iters: 400, ..Default::default() }
}

/// Depolarized gates, a mixed state and noisy effects: every probability
/// is strictly inside (0, 1).
fn interior_truth() -> GateSet {
    let mut gs = GateSet::depolarized_target(0.03);
    for j in 1..16 {
        gs.rho[j] *= 0.98;
    }
    let flip = 0.01;
    let ideal = gs.effects;
    for k in 0..4 {
        for j in 0..16 {
            gs.effects[k][j] = (1.0 - 3.0 * flip) * ideal[k][j] + flip * (0..4).filter(|&m| m != k).map(|m| ideal[m][j]).sum::<f64>();
        }
    }
    gs
}

fn max_prediction_gap(a: &GateSet, b: &GateSet, design: &GstDesign) -> f64 {
    design
        .circuits
        .iter()
        .map(|c| {
            let (p, q) = (a.predict(c).unwrap(), b.predict(c).unwrap());
            (0..4).map(|k| (p[k] - q[k]).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

#[test]
fn exact_data_is_reproduced() {
    let design = short_design();
    let truth = GateSet::depolarized_target(0.02);
    let data = exact_data(&truth, &design, 1e6);
    let fit = mle_fit(&design, &data, Model::Cptp, &tight()).unwrap();
    assert!(fit.converged);
    assert!(max_prediction_gap(&fit.estimate, &truth, &design) < 1e-6);
    for g in &fit.estimate.gates {
        assert!(g.is_cp(1e-8) && g.is_tp(1e-8));
    }
    let g = gauge_optimize(&fit.estimate, &GateSet::target(), 1.0).unwrap();
    let rep = report(&g.estimate, &GateSet::target()).unwrap();
    let want = 0.75 * 0.02;
    for r in &rep.gates {
        assert!((r.error - want).abs() < 1e-5, "{} {}", r.label, r.error);
    }
}

#[test]
fn ideal_gate_set_recovered_up_to_gauge() {
    let design = short_design();
    let target = GateSet::target();
    let data = exact_data(&target, &design, 1e6);
    let fit = mle_fit(&design, &data, Model::Cptp, &tight()).unwrap();
    let gap = max_prediction_gap(&fit.estimate, &target, &design);
    let g = gauge_optimize(&fit.estimate, &target, 1.0).unwrap();
    let rep = report(&g.estimate, &target).unwrap();
    let worst = rep.gates.iter().map(|r| r.generator.norm()).fold(0.0, f64::max);
    assert!(gap < 1e-6 && worst < 1e-6, "prediction gap {gap:.2e}, generator norm {worst:.2e}");
}

#[test]
fn depolarizing_recovered_from_shots() {
    let design = build_design(&GstDesignConfig { lengths: vec![1, 2, 4], ..Default::default() }).unwrap();
    let p = 0.01;
    let mut cfg = SimBackendConfig::depolarizing(11, 0.75 * p).with_symmetric_readout(1.4e-3, 4.0e-3);
    cfg.single_qubit_error = 1e-3;
    let ds = SimBackend::new(cfg).unwrap().run(&design.circuits, 1000);
    let data = gather(&design, &ds).unwrap();
    let fit = mle_fit(&design, &data, Model::Cptp, &FitOptions::default()).unwrap();
    let target = GateSet::target();
    let g = gauge_optimize(&fit.estimate, &target, 1.0).unwrap();
    let rep = report(&g.estimate, &target).unwrap();
    let truth_f = 1.0 - 0.75 * p;
    let got = rep.gates[0].average_fidelity;
    assert!((got - truth_f).abs() < 3e-3, "F_avg(G) {got} vs {truth_f}");
}

#[test]
fn coherent_overrotation_is_hamiltonian() {
    let design = short_design();
    let theta = 0.02;
    let u = Mat4c::from_diagonal(&nalgebra::Vector4::new(
        C(-theta),
        C(theta),
        C(theta),
        C(-theta),
    ));
    let mut truth = GateSet::target();
    truth.gates[0] = Ptm::from_unitary(&u).unwrap().compose(&truth.gates[0]);
    let data = exact_data(&truth, &design, 1e6);
    let fit = mle_fit(&design, &data, Model::Cptp, &FitOptions::default()).unwrap();
    let target = GateSet::target();
    let g = gauge_optimize(&fit.estimate, &target, 1.0).unwrap();
    let rep = report(&g.estimate, &target).unwrap();
    let gz = &rep.gates[0];
    assert!(gz.hamiltonian_norm > 3.0 * gz.stochastic_norm, "{gz:?}");
    assert!(gz.coherent_fraction > 0.9, "{}", gz.coherent_fraction);
}

#[allow(non_snake_case)]
fn C(phase: f64) -> mixgate::qcore::C64 {
    mixgate::qcore::C64::from_polar(1.0, phase)
}

#[test]
fn gauge_twist_is_undone() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // A unitary gauge close to the identity, so the target is the nearest
    // point of the orbit.
    let h = haar_unitary(&mut rng);
    let small = (h - h.adjoint()) * c(0.05);
    let u = small.exp();
    let twist = Ptm::from_unitary(&u).unwrap();
    let truth = GateSet::depolarized_target(0.01);
    let twisted = truth.gauge_transform(twist.matrix()).unwrap();
    let g = gauge_optimize(&twisted, &truth, 1.0).unwrap();
    let inv = twist.inverse().unwrap();
    let err = (g.transform - inv.matrix()).abs().max();
    assert!(err < 1e-6, "gauge error {err:.2e}");
    let design = short_design();
    assert!(max_prediction_gap(&twisted, &g.estimate, &design) < 1e-9);
}

#[test]
fn exact_model_data_has_zero_statistic() {
    let design = build_design(&GstDesignConfig { lengths: vec![1, 2], ..Default::default() }).unwrap();
    let truth = interior_truth();
    let data = exact_data(&truth, &design, 1000.0);
    let gof = goodness_of_fit(&design, &data, Some(&truth), &FitOptions::default()).unwrap();
    for p in &gof.points {
        assert!(p.statistic.abs() < 1e-6, "{p:?}");
        let want = -(p.dof as f64) / (2.0 * p.dof as f64).sqrt();
        assert!((p.n_sigma - want).abs() < 1e-6);
    }
    assert!(gst::loglik_statistic(&truth, &data).abs() < 1e-6);
}

#[test]
fn iteration_cap_flags_non_convergence() {
    let design = short_design();
    let data = exact_data(&GateSet::depolarized_target(0.05), &design, 1e4);
    let opts = FitOptions { max_iters: 1, ..Default::default() };
    let fit = mle_fit(&design, &data, Model::Cptp, &opts).unwrap();
    assert!(!fit.converged);
    assert!(fit.iterations <= 1);
}
