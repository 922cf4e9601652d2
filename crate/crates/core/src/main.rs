use std::error::Error;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use mixgate::gatesim::{check_resonances, error_budget, geometric_phases, populations, required_rabi_scaling};
use mixgate::gst::{self, build_design, fit::gather, gauge_optimize, goodness_of_fit, mle_fit, GateSet, GstDesign};
use mixgate::harness::{acceptance, Circuit, CountDataset, Settings, SimBackend};
use mixgate::pst::{analyze_pst, pst_jobs};
use mixgate::rbm::{self, RbmDesign, RbmSequence, Weighting};

type Res<T = ()> = Result<T, Box<dyn Error>>;

#[derive(Parser)]
#[command(name = "mixgate", version, about = "Simulate and characterize a mixed-species light-shift gate")]
struct Cli {
    #[command(flatten)]
    opts: Opts,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Opts {
    /// Config file (defaults are built in; see `mixgate config`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for inputs and outputs of the pipeline steps.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the shot count of the step being run.
    #[arg(long, global = true)]
    shots: Option<u64>,
    /// Where `run` steps get counts from.
    #[arg(long, global = true, value_enum, default_value_t = BackendKind::Sim)]
    backend: BackendKind,
    /// Count file used by `--backend dataset`.
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    /// Simulated shots from the configured backend.
    Sim,
    /// Counts read from `--dataset`.
    Dataset,
}

#[derive(Subcommand)]
enum Cmd {
    /// Populations over the gate sequence (fig2b.csv).
    Dynamics,
    /// Itemized error budget of the entangling gate (budget.csv).
    Budget,
    /// Mode spectrum and harmful coincidences.
    Resonances,
    /// Interleaved randomized benchmarking.
    Rbm {
        #[command(subcommand)]
        step: RbmStep,
    },
    /// Gate set tomography.
    Gst {
        #[command(subcommand)]
        step: GstStep,
    },
    /// Partial Bell-state tomography.
    Pst {
        #[command(subcommand)]
        step: PstStep,
    },
    /// Acceptance checks.
    Selftest {
        /// Skip the statistical checks that take minutes.
        #[arg(long)]
        quick: bool,
    },
    /// Print the effective configuration.
    Config,
}

#[derive(Subcommand)]
enum RbmStep {
    /// Random sequences (rbm_sequences.json, rbm_circuits.txt).
    Gen,
    /// Counts for the generated sequences (rbm_counts.txt).
    Run,
    /// Decay fits and ε_G (fig3b.csv, fig3c.csv, rbm_report.json).
    Fit,
}

#[derive(Subcommand)]
enum GstStep {
    /// Circuit list (gst_circuits.txt).
    Design,
    /// Counts for the design (gst_counts.txt).
    Run,
    /// Likelihood fit and gauge optimization (gst_estimate.json).
    Fit,
    /// Gate metrics and goodness of fit (gst_report.json, fig4b.json, fig4d.csv).
    Report,
}

#[derive(Subcommand)]
enum PstStep {
    /// Gate and calibration counts (pst_counts.txt).
    Run,
    /// Raw and SPAM-corrected fidelity (pst.json).
    Report,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: &Cli) -> Res<ExitCode> {
    let o = &cli.opts;
    let mut s = match &o.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    if let Some(seed) = o.seed {
        s.seed = seed;
    }
    match &cli.cmd {
        Cmd::Dynamics => dynamics(&s, o)?,
        Cmd::Budget => budget(&s, o)?,
        Cmd::Resonances => resonances(&s)?,
        Cmd::Rbm { step } => {
            if let Some(n) = o.shots {
                s.rbm.shots = n;
            }
            match step {
                RbmStep::Gen => rbm_gen(&s, o)?,
                RbmStep::Run => rbm_run(&s, o)?,
                RbmStep::Fit => rbm_fit(&s, o)?,
            }
        }
        Cmd::Gst { step } => {
            if let Some(n) = o.shots {
                s.gst_shots = n;
            }
            match step {
                GstStep::Design => gst_design(&s, o)?,
                GstStep::Run => gst_run(&s, o)?,
                GstStep::Fit => gst_fit(&s, o)?,
                GstStep::Report => gst_report(&s, o)?,
            }
        }
        Cmd::Pst { step } => {
            if let Some(n) = o.shots {
                s.pst.gate_shots = n;
            }
            match step {
                PstStep::Run => pst_run(&s, o)?,
                PstStep::Report => pst_report(&s, o)?,
            }
        }
        Cmd::Selftest { quick } => {
            let mut failed = 0;
            for c in acceptance::CRITERIA {
                if *quick && c.slow {
                    println!("SKIP {:>2} {}", c.id, c.name);
                    continue;
                }
                let r = c.run();
                println!("{r}");
                failed += usize::from(!r.passed);
            }
            return Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE });
        }
        Cmd::Config => print!("{}", s.to_text()),
    }
    Ok(ExitCode::SUCCESS)
}

fn write(dir: &Path, name: &str, text: &str) -> Res {
    fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| format!("{}: {e}", path.display()))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn read(dir: &Path, name: &str) -> Res<String> {
    let path = dir.join(name);
    Ok(fs::read_to_string(&path).map_err(|e| format!("{}: {e} (run the previous step first?)", path.display()))?)
}

fn json<T: Serialize>(v: &T) -> Res<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

/// Counts for `jobs` from the simulator or from `--dataset`.
fn acquire(s: &Settings, o: &Opts, jobs: &[(Circuit, u64)]) -> Res<CountDataset> {
    let mut ds = match o.backend {
        BackendKind::Sim => SimBackend::new(s.backend())?.run_jobs(jobs),
        BackendKind::Dataset => {
            let path = o.dataset.as_ref().ok_or("--backend dataset needs --dataset <path>")?;
            let ds = CountDataset::load(path)?;
            let have: std::collections::HashSet<&Circuit> = ds.records.iter().map(|r| &r.circuit).collect();
            let missing = jobs.iter().filter(|(c, _)| !have.contains(c)).count();
            if missing > 0 {
                return Err(format!("{}: {missing} of {} circuits missing", path.display(), jobs.len()).into());
            }
            ds
        }
    };
    // Opt-in so repeated runs stay byte-identical.
    if let Ok(t) = std::env::var("SOURCE_DATE_EPOCH") {
        ds.set_meta("timestamp", t);
    }
    Ok(ds)
}

fn dynamics(s: &Settings, o: &Opts) -> Res {
    let forces = s.forces();
    let n = s.dynamics_points.max(2);
    let mut csv = String::from("t_us,p_dd,p_du,p_ud,p_uu\n");
    for i in 0..n {
        let t = if i + 1 == n { s.drive.gate_time } else { s.drive.gate_time * i as f64 / (n - 1) as f64 };
        let p = populations(&s.drive, &forces, &s.drive.mode, t)?;
        writeln!(csv, "{:.6},{:.8},{:.8},{:.8},{:.8}", t * 1e6, p[0], p[1], p[2], p[3])?;
    }
    let phases = geometric_phases(&s.drive, &forces)?;
    println!("Rabi scaling {:.4}", required_rabi_scaling(&s.drive, &forces)?);
    println!("global-phase fraction {:.3}", phases.global_fraction());
    write(&o.out, "fig2b.csv", &csv)
}

fn budget(s: &Settings, o: &Opts) -> Res {
    s.drive.validate()?;
    let b = error_budget(&s.drive, &s.modes, &s.noise);
    let mut csv = String::from("source,error\n");
    for item in &b.items {
        println!("{:<24} {:.2e}", item.source, item.error);
        writeln!(csv, "{},{:.6e}", item.source, item.error)?;
    }
    println!("{:<24} {:.2e}", "total", b.total);
    writeln!(csv, "total,{:.6e}", b.total)?;
    write(&o.out, "budget.csv", &csv)
}

fn resonances(s: &Settings) -> Res {
    for m in &s.modes {
        println!("{:<10} {:>12.1} Hz  nbar {:.3}  heating {:.1}/s", format!("{:?}", m.label), m.frequency, m.nbar, m.heating_rate);
    }
    let warnings = check_resonances(&s.modes, s.drive.gate_detuning, s.resonance_window)?;
    if warnings.is_empty() {
        println!("no resonance warnings");
    }
    for w in warnings {
        println!("warning: {w}");
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct RbmFile {
    seed: u64,
    design: RbmDesign,
    sequences: Vec<RbmSequence>,
}

fn rbm_gen(s: &Settings, o: &Opts) -> Res {
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let sequences = rbm::generate(&s.rbm, &mut rng)?;
    let text: String = rbm::circuits(&sequences).iter().map(|c| format!("{c}\n")).collect();
    println!("{} sequences", sequences.len());
    write(&o.out, "rbm_circuits.txt", &text)?;
    write(&o.out, "rbm_sequences.json", &json(&RbmFile { seed: s.seed, design: s.rbm.clone(), sequences })?)
}

fn load_rbm(o: &Opts) -> Res<RbmFile> {
    Ok(serde_json::from_str(&read(&o.out, "rbm_sequences.json")?)?)
}

fn rbm_run(s: &Settings, o: &Opts) -> Res {
    // The generated design fixes the shot count unless --shots overrides it.
    let f = load_rbm(o)?;
    let jobs: Vec<(Circuit, u64)> = rbm::circuits(&f.sequences).into_iter().map(|c| (c, o.shots.unwrap_or(f.design.shots))).collect();
    let ds = acquire(s, o, &jobs)?;
    write(&o.out, "rbm_counts.txt", &ds.to_text())
}

fn rbm_fit(s: &Settings, o: &Opts) -> Res {
    let f = load_rbm(o)?;
    let ds = CountDataset::from_text(&read(&o.out, "rbm_counts.txt")?)?;
    let fids = rbm::sequence_fidelity(&ds, &f.sequences)?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let rep = rbm::analyze(&fids, &f.design, s.rbm_weighting, &mut rng, s.rbm_resamples)?;
    let other = match s.rbm_weighting {
        Weighting::Weighted => Weighting::Unweighted,
        Weighting::Unweighted => Weighting::Weighted,
    };
    let alt = rbm::error_vs_maxlen(&fids, &f.design, other, &mut rng, s.rbm_resamples)?;
    let (w, u) = match s.rbm_weighting {
        Weighting::Weighted => (&rep.series, &alt),
        Weighting::Unweighted => (&alt, &rep.series),
    };
    println!("eps_g  (reference)   {:.3e}", rep.reference.eps);
    println!("eps_g' (interleaved) {:.3e}", rep.interleaved.eps);
    println!("eps_G                {:.3e} ± {:.1e}", rep.eps_gate, rep.sigma);
    write(&o.out, "fig3b.csv", &rbm::fidelity_csv(&fids))?;
    write(&o.out, "fig3c.csv", &rbm::maxlen_csv(w, u))?;
    write(&o.out, "rbm_report.json", &json(&rep)?)
}

fn design(s: &Settings) -> Res<GstDesign> {
    Ok(build_design(&s.gst)?)
}

fn gst_design(s: &Settings, o: &Opts) -> Res {
    let d = design(s)?;
    for &l in &s.gst.lengths {
        println!("L <= {l:<4} {} circuits", d.indices_up_to(l).len());
    }
    let text: String = d.circuits.iter().map(|c| format!("{c}\n")).collect();
    write(&o.out, "gst_circuits.txt", &text)
}

fn gst_run(s: &Settings, o: &Opts) -> Res {
    let d = design(s)?;
    let jobs: Vec<(Circuit, u64)> = d.circuits.iter().map(|c| (c.clone(), s.gst_shots)).collect();
    let ds = acquire(s, o, &jobs)?;
    write(&o.out, "gst_counts.txt", &ds.to_text())
}

#[derive(Serialize, Deserialize)]
struct GstFile {
    model: gst::Model,
    loglik: f64,
    statistic: f64,
    iterations: u64,
    converged: bool,
    gauge_objective: f64,
    gauge_condition_number: f64,
    /// Gauge-optimized estimate.
    estimate: GateSet,
}

fn gst_fit(s: &Settings, o: &Opts) -> Res {
    let d = design(s)?;
    let ds = CountDataset::from_text(&read(&o.out, "gst_counts.txt")?)?;
    let data = gather(&d, &ds)?;
    let fit = mle_fit(&d, &data, s.gst_model, &s.gst_fit)?;
    let gauge = gauge_optimize(&fit.estimate, &GateSet::target(), s.gst_spam_weight)?;
    println!("loglik {:.3}  statistic {:.1}  iterations {}  converged {}", fit.loglik, fit.statistic, fit.iterations, fit.converged);
    if !fit.converged {
        eprintln!("warning: the fit stopped at the iteration cap");
    }
    let out = GstFile {
        model: fit.model,
        loglik: fit.loglik,
        statistic: fit.statistic,
        iterations: fit.iterations,
        converged: fit.converged,
        gauge_objective: gauge.objective,
        gauge_condition_number: gauge.condition_number,
        estimate: gauge.estimate,
    };
    write(&o.out, "gst_estimate.json", &json(&out)?)
}

fn gst_report(s: &Settings, o: &Opts) -> Res {
    let f: GstFile = serde_json::from_str(&read(&o.out, "gst_estimate.json")?)?;
    let rep = gst::report(&f.estimate, &GateSet::target())?;
    for g in &rep.gates {
        println!(
            "{:<6} error {:.3e}  diamond {:.3e}  coherent fraction {:.2}",
            g.label, g.error, g.diamond_distance, g.coherent_fraction
        );
    }
    let d = design(s)?;
    let ds = CountDataset::from_text(&read(&o.out, "gst_counts.txt")?)?;
    let gof = goodness_of_fit(&d, &gather(&d, &ds)?, Some(&f.estimate), &s.gst_fit)?;
    for p in &gof.points {
        println!("L <= {:<4} N_sigma {:.2}", p.max_length, p.n_sigma);
    }
    write(&o.out, "gst_report.json", &json(&rep)?)?;
    write(&o.out, "fig4b.json", &gst::fig4b_json(&f.estimate, &rep))?;
    write(&o.out, "fig4d.csv", &gst::fig4d_csv(&gof))
}

fn pst_run(s: &Settings, o: &Opts) -> Res {
    let ds = acquire(s, o, &pst_jobs(&s.pst)?)?;
    write(&o.out, "pst_counts.txt", &ds.to_text())
}

fn pst_report(s: &Settings, o: &Opts) -> Res {
    let ds = CountDataset::from_text(&read(&o.out, "pst_counts.txt")?)?;
    let r = analyze_pst(&ds, s.pst.target_sigma)?;
    println!("raw error       {:.3e}", r.raw_error());
    println!("corrected error {:.3e} ± {:.1e}", r.corrected_error(), r.sigma);
    for flag in &r.flags {
        println!("flag: {flag}");
    }
    write(&o.out, "pst.json", &json(&r)?)
}
