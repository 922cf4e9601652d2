use mixgate::harness::{DriftModel, SimBackend, SimBackendConfig};
use mixgate::rbm::{analyze, circuits, generate, sequence_fidelity, RbmDesign, Weighting};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn run(cfg: SimBackendConfig, design: &RbmDesign, seed: u64) -> mixgate::rbm::RbmReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seqs = generate(design, &mut rng).unwrap();
    let mut backend = SimBackend::new(cfg).unwrap();
    let ds = backend.run(&circuits(&seqs), design.shots);
    let fids = sequence_fidelity(&ds, &seqs).unwrap();
    analyze(&fids, design, Weighting::Weighted, &mut rng, 100).unwrap()
}

#[test]
fn ideal_backend_gives_unit_fidelity() {
    let design = RbmDesign { lengths: vec![1, 4, 10], randomizations: 10, shots: 20, interleaved: true };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let seqs = generate(&design, &mut rng).unwrap();
    let ds = SimBackend::new(SimBackendConfig::ideal(1)).unwrap().run(&circuits(&seqs), design.shots);
    let f = sequence_fidelity(&ds, &seqs).unwrap();
    assert!(f.reference.iter().chain(&f.interleaved).all(|p| p.mean == 1.0));
}

#[test]
fn recovers_injected_gate_error() {
    let design = RbmDesign::default();
    let r = run(SimBackendConfig::depolarizing(21, 3e-3), &design, 21);
    eprintln!("eps_g {:.3e} eps_g' {:.3e} eps_G {:.3e} ± {:.2e}", r.reference.eps, r.interleaved.eps, r.eps_gate, r.sigma);
    for p in &r.series {
        eprintln!("  L<={} {:.3e} ± {:.2e}", p.max_length, p.eps_gate, p.sigma);
    }
    assert!((r.eps_gate - 3e-3).abs() < 4.0 * r.sigma);
    assert!(r.sigma > 2e-4 && r.sigma < 2e-3);
}

#[test]
fn drift_raises_long_sequence_error() {
    let design = RbmDesign::default();
    let mut cfg = SimBackendConfig::depolarizing(22, 2.9e-3);
    cfg.drift = DriftModel::ip_mode_heating();
    let r = run(cfg, &design, 22);
    let at = |l: usize| r.series.iter().find(|p| p.max_length == l).unwrap().eps_gate;
    eprintln!("L<=20 {:.3e}  L<=60 {:.3e}", at(20), at(60));
    assert!(at(60) > at(20));
}
