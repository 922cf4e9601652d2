//! Partial Bell-state tomography.
//!
//! The population circuit `Gyp Gyp · G · Gym Gym` ideally prepares a Bell
//! state with populations (½, 0, 0, ½); appending a π/2 analysis pulse at
//! azimuth φ to both qubits gives parities with Π(45°) = +1, Π(135°) = −1.
//! Raw and SPAM-corrected fidelities follow from
//! `F = ½·p_even + ¼·(Π45 − Π135)`.

use nalgebra::{Matrix4, RowVector4, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::backend::SimBackend;
use crate::harness::circuit::{Circuit, GateLabel};
use crate::harness::dataset::CountDataset;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PstError {
    #[error("shot counts must be positive (gate {gate}, calibration {calibration})")]
    NoShots { gate: u64, calibration: u64 },
    #[error("calibration confusion matrix is ill-conditioned (condition number {0:.3e})")]
    IllConditioned(f64),
    #[error("calibration diagonal {0:.4} is below the 0.9 sanity limit")]
    PoorCalibration(f64),
    #[error("dataset is missing circuit {0}")]
    MissingCircuit(String),
}

pub const ANALYSIS_PHASES: [i32; 2] = [45, 135];
const MAX_CONDITION: f64 = 100.0;

/// `Gyp:1 Gyp:2 Gzz Gym:1 Gym:2`, optionally followed by `Gr<φ>` on both.
pub fn pst_circuit(analysis_deg: Option<i32>) -> Circuit {
    use GateLabel::*;
    let mut ops = vec![Yp(1), Yp(2), Gzz, Ym(1), Ym(2)];
    if let Some(phi) = analysis_deg {
        ops.extend([Rot(1, phi * 1000), Rot(2, phi * 1000)]);
    }
    Circuit::new(ops)
}

/// Prepare-and-measure circuit for basis state `2·s_Ca + s_Sr`.
pub fn calibration_circuit(state: usize) -> Circuit {
    let mut ops = Vec::new();
    if state & 2 != 0 {
        ops.push(GateLabel::Pi(1));
    }
    if state & 1 != 0 {
        ops.push(GateLabel::Pi(2));
    }
    Circuit::new(ops)
}

/// `Π = p00 + p11 − p01 − p10`.
pub fn parity(p: &[f64; 4]) -> f64 {
    p[0] + p[3] - p[1] - p[2]
}

/// Bell fidelity and whether it had to be clipped to `[0, 1]`.
pub fn bell_fidelity(p_even: f64, pi45: f64, pi135: f64) -> (f64, bool) {
    let f = 0.5 * p_even + 0.25 * (pi45 - pi135);
    let c = f.clamp(0.0, 1.0);
    (c, c != f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpamCalibration {
    /// `confusion[measured][prepared]`.
    pub confusion: [[f64; 4]; 4],
    /// Shots per prepared state.
    pub shots: [u64; 4],
    /// Mean misassignment of (Ca, Sr).
    pub mean_error: [f64; 2],
}

impl SpamCalibration {
    pub fn identity() -> Self {
        let mut confusion = [[0.0; 4]; 4];
        for (i, row) in confusion.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Self { confusion, shots: [u64::MAX; 4], mean_error: [0.0; 2] }
    }

    /// From counts of the four prepare-and-measure circuits.
    pub fn from_counts(counts: &[[u64; 4]; 4]) -> Result<Self, PstError> {
        let mut confusion = [[0.0; 4]; 4];
        let mut shots = [0u64; 4];
        for (j, n) in counts.iter().enumerate() {
            shots[j] = n.iter().sum();
            if shots[j] == 0 {
                return Err(PstError::NoShots { gate: 1, calibration: 0 });
            }
            for i in 0..4 {
                confusion[i][j] = n[i] as f64 / shots[j] as f64;
            }
        }
        // Average over prepared states of the probability that the given
        // qubit's bit is misread.
        let mut mean_error = [0.0; 2];
        for (q, e) in mean_error.iter_mut().enumerate() {
            let bit = if q == 0 { 2 } else { 1 };
            *e = (0..4)
                .map(|j| (0..4).filter(|i| (i & bit) != (j & bit)).map(|i| confusion[i][j]).sum::<f64>())
                .sum::<f64>()
                / 4.0;
        }
        let cal = Self { confusion, shots, mean_error };
        cal.check()?;
        Ok(cal)
    }

    pub fn matrix(&self) -> Matrix4<f64> {
        Matrix4::from_fn(|i, j| self.confusion[i][j])
    }

    pub fn condition_number(&self) -> f64 {
        let s = self.matrix().svd(false, false).singular_values;
        s.max() / s.min()
    }

    fn check(&self) -> Result<(), PstError> {
        let d = (0..4).map(|i| self.confusion[i][i]).fold(f64::INFINITY, f64::min);
        if d < 0.9 {
            return Err(PstError::PoorCalibration(d));
        }
        let k = self.condition_number();
        if !(k < MAX_CONDITION) {
            return Err(PstError::IllConditioned(k));
        }
        Ok(())
    }

    fn inverse(&self) -> Result<Matrix4<f64>, PstError> {
        self.check()?;
        self.matrix().try_inverse().ok_or(PstError::IllConditioned(f64::INFINITY))
    }
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64; 4]) -> [f64; 4] {
    let mut u = *v;
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (k + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.map(|x| (x - theta).max(0.0))
}

/// Inverse-confusion correction; the flag reports an active projection.
pub fn spam_correct(raw: &[f64; 4], cal: &SpamCalibration) -> Result<([f64; 4], bool), PstError> {
    let q = cal.inverse()? * Vector4::from_column_slice(raw);
    let q = [q[0], q[1], q[2], q[3]];
    if q.iter().all(|&x| x >= 0.0) {
        return Ok((q, false));
    }
    Ok((project_simplex(&q), true))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PstResult {
    pub raw_populations: [f64; 4],
    pub raw_parity: [f64; 2],
    pub raw_fidelity: f64,
    pub corrected_populations: [f64; 4],
    pub corrected_parity: [f64; 2],
    pub corrected_fidelity: f64,
    /// Standard error from gate-circuit shots.
    pub sigma_gate: f64,
    /// Standard error from calibration shots.
    pub sigma_calibration: f64,
    pub sigma: f64,
    pub calibration: SpamCalibration,
    pub gate_shots: [u64; 3],
    pub flags: Vec<String>,
}

impl PstResult {
    pub fn raw_error(&self) -> f64 {
        1.0 - self.raw_fidelity
    }

    pub fn corrected_error(&self) -> f64 {
        1.0 - self.corrected_fidelity
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PstOptions {
    /// Total gate shots, split evenly over the three circuits.
    pub gate_shots: u64,
    /// Shots per prepared basis state; 10⁴ pins the mean SPAM errors to
    /// about ±3e-4.
    pub calibration_shots: u64,
    /// Flag the result if σ exceeds this.
    pub target_sigma: Option<f64>,
}

impl Default for PstOptions {
    fn default() -> Self {
        Self { gate_shots: 50_000, calibration_shots: 10_000, target_sigma: None }
    }
}

/// Every circuit with its shot count: population, φ = 45°, φ = 135°,
/// then the four calibration states.
pub fn pst_jobs(opts: &PstOptions) -> Result<Vec<(Circuit, u64)>, PstError> {
    if opts.gate_shots < 3 || opts.calibration_shots == 0 {
        return Err(PstError::NoShots { gate: opts.gate_shots, calibration: opts.calibration_shots });
    }
    let per = opts.gate_shots / 3;
    let mut jobs = vec![
        (pst_circuit(None), opts.gate_shots - 2 * per),
        (pst_circuit(Some(ANALYSIS_PHASES[0])), per),
        (pst_circuit(Some(ANALYSIS_PHASES[1])), per),
    ];
    jobs.extend((0..4).map(|s| (calibration_circuit(s), opts.calibration_shots)));
    Ok(jobs)
}

fn counts_for(ds: &CountDataset, c: &Circuit) -> Result<[u64; 4], PstError> {
    ds.records
        .iter()
        .find(|r| &r.circuit == c)
        .map(|r| r.counts)
        .ok_or_else(|| PstError::MissingCircuit(c.to_string()))
}

fn freqs(n: &[u64; 4]) -> [f64; 4] {
    let t: u64 = n.iter().sum();
    n.map(|x| x as f64 / t as f64)
}

fn multinomial_cov(p: &[f64; 4], n: u64) -> Matrix4<f64> {
    Matrix4::from_fn(|i, j| (if i == j { p[i] } else { 0.0 } - p[i] * p[j]) / n as f64)
}

/// Assembles the result from a dataset holding every [`pst_jobs`] circuit.
pub fn analyze_pst(ds: &CountDataset, target_sigma: Option<f64>) -> Result<PstResult, PstError> {
    let gate_circuits = [pst_circuit(None), pst_circuit(Some(45)), pst_circuit(Some(135))];
    let gate_counts: Vec<[u64; 4]> = gate_circuits.iter().map(|c| counts_for(ds, c)).collect::<Result<_, _>>()?;
    let gate_shots: [u64; 3] = std::array::from_fn(|k| gate_counts[k].iter().sum());
    let mut cal_counts = [[0u64; 4]; 4];
    for (s, slot) in cal_counts.iter_mut().enumerate() {
        *slot = counts_for(ds, &calibration_circuit(s))?;
    }
    let cal = SpamCalibration::from_counts(&cal_counts)?;
    let raw: Vec<[f64; 4]> = gate_counts.iter().map(freqs).collect();
    let mut flags = Vec::new();
    let mut corrected = Vec::new();
    for (k, r) in raw.iter().enumerate() {
        let (q, projected) = spam_correct(r, &cal)?;
        if projected {
            flags.push(format!("simplex projection active on circuit {}", gate_circuits[k]));
        }
        corrected.push(q);
    }
    let p_even = |p: &[f64; 4]| p[0] + p[3];
    let (raw_fidelity, raw_clip) = bell_fidelity(p_even(&raw[0]), parity(&raw[1]), parity(&raw[2]));
    let (corrected_fidelity, cor_clip) =
        bell_fidelity(p_even(&corrected[0]), parity(&corrected[1]), parity(&corrected[2]));
    if raw_clip || cor_clip {
        flags.push("fidelity clipped to [0, 1]".into());
    }

    // Linearized propagation of F = Σ_c g_c · M⁻¹ q_c.
    let minv = cal.inverse()?;
    let g = [
        RowVector4::new(0.5, 0.0, 0.0, 0.5),
        RowVector4::new(0.25, -0.25, -0.25, 0.25),
        RowVector4::new(-0.25, 0.25, 0.25, -0.25),
    ];
    let gm: Vec<RowVector4<f64>> = g.iter().map(|gc| gc * minv).collect();
    let var_gate: f64 = (0..3).map(|c| (gm[c] * multinomial_cov(&raw[c], gate_shots[c]) * gm[c].transpose())[0]).sum();
    let unproj: Vec<Vector4<f64>> = raw.iter().map(|r| minv * Vector4::from_column_slice(r)).collect();
    let mut var_cal = 0.0;
    for j in 0..4 {
        let h: RowVector4<f64> = -(0..3).map(|c| gm[c] * unproj[c][j]).fold(RowVector4::zeros(), |a, b| a + b);
        let col: [f64; 4] = std::array::from_fn(|i| cal.confusion[i][j]);
        var_cal += (h * multinomial_cov(&col, cal.shots[j]) * h.transpose())[0];
    }
    let sigma = (var_gate + var_cal).sqrt();
    if let Some(t) = target_sigma {
        if sigma > t {
            flags.push(format!("insufficient shots: σ = {sigma:.3e} exceeds target {t:.3e}"));
        }
    }
    Ok(PstResult {
        raw_populations: raw[0],
        raw_parity: [parity(&raw[1]), parity(&raw[2])],
        raw_fidelity,
        corrected_populations: corrected[0],
        corrected_parity: [parity(&corrected[1]), parity(&corrected[2])],
        corrected_fidelity,
        sigma_gate: var_gate.sqrt(),
        sigma_calibration: var_cal.sqrt(),
        sigma,
        calibration: cal,
        gate_shots,
        flags,
    })
}

/// Runs every PST circuit on `backend` and analyzes the counts.
pub fn run_pst(backend: &mut SimBackend, opts: &PstOptions) -> Result<(CountDataset, PstResult), PstError> {
    let ds = backend.run_jobs(&pst_jobs(opts)?);
    let res = analyze_pst(&ds, opts.target_sigma)?;
    Ok((ds, res))
}
