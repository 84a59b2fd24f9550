//! Entanglement-generation sweeps and the photon-redistribution scan, with
//! deterministic parallel aggregation.

use std::f64::consts::PI;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::heralded_states_with_vacuum;
use crate::error::{Error, Result};
use crate::hilbert::{inner, StateVector};
use crate::model::{ChannelTag, SystemParams};
use crate::stats::binomial_stderr;
use crate::trajectory::{EngineKind, Outcome, ProtocolEngine, RngStream, TrajectoryRecord};

/// Trajectories per reduction chunk. Chunk sums are combined in chunk order,
/// so floating-point results do not depend on the number of worker threads.
pub const CHUNK: u64 = 1024;

/// `|⟨target ⊗ 00|ψ⟩|²` with target `|+⟩` after D1 and `|−⟩` after D2.
///
/// Tags other than the two recorded detectors have no target and give 0.
pub fn fidelity_to_target(state: &StateVector, tag: ChannelTag) -> f64 {
    let n_max = if state.dim() == 36 { 1 } else { 2 };
    let (plus, minus) = heralded_states_with_vacuum(n_max);
    let target = match tag {
        ChannelTag::D1 => plus,
        ChannelTag::D2 => minus,
        _ => return 0.0,
    };
    inner(&target, state).map(|z| z.norm_sqr()).unwrap_or(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    Eta,
    Lambda,
    /// Sets both spontaneous rates `γ_ca = γ_cb`.
    Gamma,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Eta => "eta",
            SweepParam::Lambda => "lambda",
            SweepParam::Gamma => "gamma",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "eta" => Some(SweepParam::Eta),
            "lambda" => Some(SweepParam::Lambda),
            "gamma" => Some(SweepParam::Gamma),
            _ => None,
        }
    }

    /// Copy of `base` with this parameter set to `value`, validated.
    pub fn apply(self, base: &SystemParams, value: f64) -> Result<SystemParams> {
        let mut p = base.clone();
        match self {
            SweepParam::Eta => p.eta = value,
            SweepParam::Lambda => p.lambda = value,
            SweepParam::Gamma => {
                p.gamma_ca = value;
                p.gamma_cb = value;
            }
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub param: String,
    pub value: f64,
    pub n_traj: u64,
    /// Trajectories with a recorded stage-1 click.
    pub n_success: u64,
    pub p_hat: f64,
    pub p_stderr: f64,
    /// Mean fidelity over successes; NaN when there are none.
    pub f_hat: f64,
    pub f_stderr: f64,
    /// Same-detector fraction among two-click records (protocol runs only).
    pub ps_hat: Option<f64>,
    pub ps_stderr: Option<f64>,
    /// Two-click records over records with at least one click (protocol runs only).
    pub two_click_fraction: Option<f64>,
    pub two_click_stderr: Option<f64>,
    /// Second click in D1 given a D1 herald and a second click (protocol runs only).
    pub p1_given_d1: Option<f64>,
    pub p1_given_d1_stderr: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub params: SystemParams,
    pub points: Vec<SweepPoint>,
    pub master_seed: u64,
    /// Seconds since the Unix epoch at completion.
    pub timestamp: u64,
}

/// Running sums over a block of trajectories.
#[derive(Clone, Debug, Default, PartialEq)]
struct Tally {
    n: u64,
    success: u64,
    sum_f: f64,
    sum_f2: f64,
    two: u64,
    same: u64,
    d1_two: u64,
    d1_then_d1: u64,
}

impl Tally {
    fn add(&mut self, rec: &TrajectoryRecord) {
        self.n += 1;
        let Some(first) = &rec.first_click else { return };
        self.success += 1;
        let f = fidelity_to_target(&first.post_click_state, first.tag);
        self.sum_f += f;
        self.sum_f2 += f * f;
        if let (Outcome::TwoClicks, Some((second, _))) = (rec.outcome, rec.second_click) {
            self.two += 1;
            if second == first.tag {
                self.same += 1;
            }
            if first.tag == ChannelTag::D1 {
                self.d1_two += 1;
                if second == ChannelTag::D1 {
                    self.d1_then_d1 += 1;
                }
            }
        }
    }

    fn merge(&mut self, o: &Tally) {
        self.n += o.n;
        self.success += o.success;
        self.sum_f += o.sum_f;
        self.sum_f2 += o.sum_f2;
        self.two += o.two;
        self.same += o.same;
        self.d1_two += o.d1_two;
        self.d1_then_d1 += o.d1_then_d1;
    }

    fn point(&self, param: &str, value: f64, protocol: bool) -> SweepPoint {
        let p_hat = self.success as f64 / self.n as f64;
        let (f_hat, f_stderr) = match self.success {
            0 => (f64::NAN, f64::NAN),
            1 => (self.sum_f, 0.0),
            k => {
                let k = k as f64;
                let mean = self.sum_f / k;
                let var = ((self.sum_f2 - k * mean * mean) / (k - 1.0)).max(0.0);
                (mean, (var / k).sqrt())
            }
        };
        let ratio = |num: u64, den: u64| -> (Option<f64>, Option<f64>) {
            if !protocol || den == 0 {
                return (None, None);
            }
            let r = num as f64 / den as f64;
            (Some(r), Some(binomial_stderr(r, den as usize)))
        };
        let (ps_hat, ps_stderr) = ratio(self.same, self.two);
        let (two_click_fraction, two_click_stderr) = ratio(self.two, self.success);
        let (p1_given_d1, p1_given_d1_stderr) = ratio(self.d1_then_d1, self.d1_two);
        SweepPoint {
            param: param.to_string(),
            value,
            n_traj: self.n,
            n_success: self.success,
            p_hat,
            p_stderr: binomial_stderr(p_hat, self.n as usize),
            f_hat,
            f_stderr,
            ps_hat,
            ps_stderr,
            two_click_fraction,
            two_click_stderr,
            p1_given_d1,
            p1_given_d1_stderr,
        }
    }
}

/// Run `n_traj` trajectories on streams `(seed, 0..n_traj)` and tally them chunk by chunk.
fn run_tally(
    n_traj: u64,
    seed: u64,
    run: impl Fn(&mut RngStream) -> Result<TrajectoryRecord> + Sync,
) -> Result<Tally> {
    if n_traj == 0 {
        return Err(Error::EmptyInput("n_traj"));
    }
    let chunks: Vec<Result<Tally>> = (0..n_traj.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut t = Tally::default();
            for i in c * CHUNK..((c + 1) * CHUNK).min(n_traj) {
                t.add(&run(&mut RngStream::new(seed, i))?);
            }
            Ok(t)
        })
        .collect();
    let mut total = Tally::default();
    for c in chunks {
        total.merge(&c?);
    }
    Ok(total)
}

fn timestamp() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn entanglement_point(params: &SystemParams, n_traj: u64, seed: u64, kind: EngineKind, label: (&str, f64)) -> Result<SweepPoint> {
    let engine = ProtocolEngine::new(params, kind)?;
    let tally = run_tally(n_traj, seed, |rng| engine.run_herald(rng))?;
    Ok(tally.point(label.0, label.1, false))
}

/// Stage 1 only: success probability and mean heralded fidelity.
///
/// Any recorded click counts as a success, including heralds of a photon
/// that came from the wrong emitter after losses.
pub fn run_entanglement_generation(params: &SystemParams, n_traj: u64, seed: u64, kind: EngineKind) -> Result<SweepPoint> {
    entanglement_point(params, n_traj, seed, kind, ("none", 0.0))
}

/// One stage-1 run per grid value.
///
/// Every point uses the same streams `(seed, i)`, so neighbouring points are
/// compared with common random numbers.
pub fn sweep(
    params: &SystemParams,
    param: SweepParam,
    grid: &[f64],
    n_traj: u64,
    seed: u64,
    kind: EngineKind,
) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::EmptyInput("grid"));
    }
    let settings = grid
        .iter()
        .map(|&v| param.apply(params, v))
        .collect::<Result<Vec<_>>>()?;
    let points = settings
        .iter()
        .zip(grid)
        .map(|(p, &v)| entanglement_point(p, n_traj, seed, kind, (param.name(), v)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        params: params.clone(),
        points,
        master_seed: seed,
        timestamp: timestamp(),
    })
}

/// `n` points from 0 to 2π inclusive, step `2π/(n−1)`.
pub fn default_phi_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|k| 2.0 * PI * k as f64 / (n - 1) as f64).collect(),
    }
}

pub const DEFAULT_GAMMA_GRID: [f64; 6] = [0.05, 0.1, 0.2, 0.3, 0.4, 0.5];
pub const DEFAULT_ETA_GRID: [f64; 6] = [0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
pub const DEFAULT_LAMBDA_GRID: [f64; 5] = [0.5, 0.75, 1.0, 1.25, 1.5];

/// Full herald / phase / second-photon protocol for each `φ`.
pub fn run_redistribution(
    params: &SystemParams,
    phi_grid: &[f64],
    n_traj: u64,
    seed: u64,
    kind: EngineKind,
) -> Result<SweepResult> {
    if phi_grid.is_empty() {
        return Err(Error::EmptyInput("phi grid"));
    }
    let mut points = Vec::with_capacity(phi_grid.len());
    for &phi in phi_grid {
        let p = SystemParams {
            phi,
            ..params.clone()
        };
        let engine = ProtocolEngine::new(&p, kind)?;
        let tally = run_tally(n_traj, seed, |rng| engine.run_protocol(rng))?;
        points.push(tally.point("phi", phi, true));
    }
    Ok(SweepResult {
        params: params.clone(),
        points,
        master_seed: seed,
        timestamp: timestamp(),
    })
}

/// Reduce records in stream-index order with the same chunking as the runners.
///
/// `protocol` selects whether the two-click statistics are reported.
pub fn aggregate(records: &[TrajectoryRecord], param: &str, value: f64, protocol: bool) -> Result<SweepPoint> {
    if records.is_empty() {
        return Err(Error::EmptyInput("records"));
    }
    let mut sorted: Vec<&TrajectoryRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.stream_index);
    let mut total = Tally::default();
    let mut chunk = Tally::default();
    let mut current = sorted[0].stream_index / CHUNK;
    for r in sorted {
        if r.stream_index / CHUNK != current {
            total.merge(&chunk);
            chunk = Tally::default();
            current = r.stream_index / CHUNK;
        }
        chunk.add(r);
    }
    total.merge(&chunk);
    Ok(total.point(param, value, protocol))
}
