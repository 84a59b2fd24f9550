//! Monte Carlo wavefunction engine.
//!
//! Two samplers implement the same unraveling. [`FixedStepEngine`] takes
//! steps of length `δt`, drawing one uniform number per step and comparing it
//! with the first-order jump probability. [`FastSampler`] draws the jump
//! threshold once, then binary-searches the time at which the squared norm of
//! the unnormalized no-jump state falls to it, using a ladder of precomputed
//! propagators. Both stop a stage only on a recorded detector click; lost
//! photons and spontaneous decays collapse the state and are logged.

mod fast;
mod fixed;
mod rng;

pub use fast::{sample_click_fast, FastSampler, TICK};
pub use fixed::{
    precompute_propagator, run_until_click, FixedStepEngine, Renormalization, P_STEP_MAX,
};
pub use rng::RngStream;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{apply, norm2_slice, Operator, StateVector};
use crate::model::{initial_state, phase_gate, ChannelTag, JumpChannel, StageModel, SystemParams};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub tag: ChannelTag,
    pub recorded: bool,
}

/// The first recorded detector click of a stage and the collapsed state.
#[derive(Clone, Debug, PartialEq)]
pub struct Click {
    pub tag: ChannelTag,
    pub time: f64,
    pub state: StateVector,
}

/// Result of running one stage until a recorded click or the end of its window.
#[derive(Clone, Debug, PartialEq)]
pub struct StageOutcome {
    pub click: Option<Click>,
    pub events: Vec<Event>,
    pub final_state: StateVector,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    NoClick,
    OneClick,
    TwoClicks,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FirstClick {
    pub tag: ChannelTag,
    pub time: f64,
    /// Normalized state right after the herald, before the phase gate.
    pub post_click_state: StateVector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub stream_index: u64,
    pub events: Vec<Event>,
    pub first_click: Option<FirstClick>,
    pub second_click: Option<(ChannelTag, f64)>,
    pub outcome: Outcome,
    pub final_state: StateVector,
}

impl TrajectoryRecord {
    pub fn recorded_clicks(&self) -> usize {
        self.events.iter().filter(|e| e.recorded).count()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Fixed,
    #[default]
    Fast,
}

/// Channel weights `‖Lψ‖²` and the index chosen by `u ∈ [0, 1)`.
fn select_channel(channels: &[JumpChannel], psi: &[Complex64], u: f64, scratch: &mut [Complex64]) -> Result<usize> {
    let weights: Vec<f64> = channels
        .iter()
        .map(|ch| {
            ch.operator.mul_vec_into(psi, scratch);
            norm2_slice(scratch)
        })
        .collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateJump);
    }
    let target = u * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (k, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            last_positive = k;
        }
        acc += w;
        if target < acc && *w > 0.0 {
            return Ok(k);
        }
    }
    Ok(last_positive)
}

/// Apply `L` and renormalize in place.
fn collapse(channel: &JumpChannel, psi: &mut [Complex64], scratch: &mut [Complex64]) -> Result<()> {
    channel.operator.mul_vec_into(psi, scratch);
    let n = norm2_slice(scratch);
    if !(n > 0.0) {
        return Err(Error::DegenerateJump);
    }
    let inv = 1.0 / n.sqrt();
    for (p, s) in psi.iter_mut().zip(scratch.iter()) {
        *p = s * inv;
    }
    Ok(())
}

fn normalize_in_place(psi: &mut [Complex64]) {
    let n = norm2_slice(psi);
    if n > 0.0 {
        let inv = 1.0 / n.sqrt();
        psi.iter_mut().for_each(|a| *a *= inv);
    }
}

/// Normalized expectation values `⟨ψ|A|ψ⟩/⟨ψ|ψ⟩` of several observables.
fn observe_all(psi: &[Complex64], observables: &[Operator]) -> Vec<f64> {
    let n = norm2_slice(psi);
    observables
        .iter()
        .map(|o| o.quadratic_form(psi).re / n)
        .collect()
}

/// Either sampler behind one interface.
#[derive(Clone, Debug)]
pub enum Sampler {
    Fixed(FixedStepEngine),
    Fast(FastSampler),
}

impl Sampler {
    /// Build the requested sampler; the fast one is prepared for windows up to `horizon`.
    pub fn new(kind: EngineKind, model: &StageModel, dt: f64, horizon: f64) -> Result<Self> {
        Ok(match kind {
            EngineKind::Fixed => Sampler::Fixed(FixedStepEngine::new(model, dt)?),
            EngineKind::Fast => Sampler::Fast(FastSampler::new(model, horizon)?),
        })
    }

    pub fn run_until_click(&self, psi0: &StateVector, rng: &mut RngStream, t_max: f64) -> Result<StageOutcome> {
        match self {
            Sampler::Fixed(e) => e.run_until_click(psi0, rng, t_max),
            Sampler::Fast(s) => s.run_until_click(psi0, rng, t_max),
        }
    }

    /// Unconditioned evolution through every jump, returning normalized
    /// expectation values `[time][observable]` at the requested times.
    pub fn observe(
        &self,
        psi0: &StateVector,
        rng: &mut RngStream,
        times: &[f64],
        observables: &[Operator],
    ) -> Result<Vec<Vec<f64>>> {
        match self {
            Sampler::Fixed(e) => e.observe(psi0, rng, times, observables),
            Sampler::Fast(s) => s.observe(psi0, rng, times, observables),
        }
    }
}

/// Two-stage herald / manipulate / redistribute protocol with shared drive.
#[derive(Clone, Debug)]
pub struct ProtocolEngine {
    params: SystemParams,
    sampler: Sampler,
    gate: Operator,
    psi0: StateVector,
}

impl ProtocolEngine {
    pub fn new(params: &SystemParams, kind: EngineKind) -> Result<Self> {
        let model = StageModel::new(params)?;
        let horizon = params.t_wait.max(params.t_wait2);
        Ok(Self {
            params: params.clone(),
            sampler: Sampler::new(kind, &model, params.dt, horizon)?,
            gate: phase_gate(params.phi, params.n_max),
            psi0: initial_state(params),
        })
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn sampler(&self) -> &Sampler {
        &self.sampler
    }

    /// Stage 1 only: wait up to `T` for the heralding click.
    pub fn run_herald(&self, rng: &mut RngStream) -> Result<TrajectoryRecord> {
        let s1 = self.sampler.run_until_click(&self.psi0, rng, self.params.t_wait)?;
        Ok(self.assemble(rng.stream_index(), s1, None))
    }

    /// Herald, apply the phase gate, then wait up to `T₂` for the second click.
    pub fn run_protocol(&self, rng: &mut RngStream) -> Result<TrajectoryRecord> {
        let s1 = self.sampler.run_until_click(&self.psi0, rng, self.params.t_wait)?;
        let s2 = match &s1.click {
            Some(c) => {
                let gated = apply(&self.gate, &c.state)?;
                Some(self.sampler.run_until_click(&gated, rng, self.params.t_wait2)?)
            }
            None => None,
        };
        Ok(self.assemble(rng.stream_index(), s1, s2))
    }

    fn assemble(&self, stream_index: u64, s1: StageOutcome, s2: Option<StageOutcome>) -> TrajectoryRecord {
        let mut events = s1.events;
        let first_click = s1.click.map(|c| FirstClick {
            tag: c.tag,
            time: c.time,
            post_click_state: c.state,
        });
        let mut second_click = None;
        let mut final_state = s1.final_state;
        if let (Some(first), Some(s2)) = (&first_click, s2) {
            let offset = first.time;
            events.extend(s2.events.into_iter().map(|e| Event {
                time: e.time + offset,
                ..e
            }));
            second_click = s2.click.map(|c| (c.tag, c.time + offset));
            final_state = s2.final_state;
        }
        let outcome = match (&first_click, &second_click) {
            (None, _) => Outcome::NoClick,
            (Some(_), None) => Outcome::OneClick,
            (Some(_), Some(_)) => Outcome::TwoClicks,
        };
        TrajectoryRecord {
            stream_index,
            events,
            first_click,
            second_click,
            outcome,
            final_state,
        }
    }
}

/// One full protocol trajectory on stream `(seed, index)`.
pub fn run_protocol(params: &SystemParams, kind: EngineKind, rng: &mut RngStream) -> Result<TrajectoryRecord> {
    ProtocolEngine::new(params, kind)?.run_protocol(rng)
}
