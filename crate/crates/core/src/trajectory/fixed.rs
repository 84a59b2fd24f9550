use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{collapse, normalize_in_place, observe_all, select_channel, Click, Event, RngStream, StageOutcome};
use crate::error::{Error, Result};
use crate::hilbert::{matrix_exp, norm2_slice, Operator, StateVector, ZERO};
use crate::model::{JumpChannel, StageModel};

/// Abort threshold on the per-step jump probability.
pub const P_STEP_MAX: f64 = 0.05;

/// How the state is renormalized after a no-jump step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Renormalization {
    /// Divide by the actual post-propagation norm.
    #[default]
    Exact,
    /// Divide by `√(1 − P)`, the first-order estimate of that norm.
    FirstOrder,
}

/// `exp(−i·H_eff·δt)`.
pub fn precompute_propagator(h_eff: &Operator, dt: f64) -> Result<Operator> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter {
            name: "dt",
            value: dt,
            reason: "must be positive",
        });
    }
    Ok(matrix_exp(h_eff, Complex64::new(0.0, -dt)))
}

#[derive(Clone, Debug)]
pub struct FixedStepEngine {
    propagator: Operator,
    channels: Vec<JumpChannel>,
    rate_operator: Operator,
    dt: f64,
    p_step_max: f64,
    renormalization: Renormalization,
}

impl FixedStepEngine {
    pub fn new(model: &StageModel, dt: f64) -> Result<Self> {
        Ok(Self {
            propagator: precompute_propagator(&model.h_eff, dt)?,
            channels: model.channels.clone(),
            rate_operator: model.total_rate_operator(),
            dt,
            p_step_max: P_STEP_MAX,
            renormalization: Renormalization::Exact,
        })
    }

    pub fn with_renormalization(mut self, mode: Renormalization) -> Self {
        self.renormalization = mode;
        self
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn propagator(&self) -> &Operator {
        &self.propagator
    }

    /// Total jump probability `δt·Σ‖Lψ‖²/‖ψ‖²` for the next step.
    ///
    /// Dividing by the norm keeps first-order renormalization from feeding
    /// its own norm error back into the jump probability.
    pub fn jump_probability(&self, psi: &[Complex64]) -> f64 {
        let n = norm2_slice(psi);
        if !(n > 0.0) {
            return 0.0;
        }
        self.dt * self.rate_operator.quadratic_form(psi).re / n
    }

    /// One step from `ψ` at time `t`; returns the new state and the jump, if any.
    pub fn step(&self, psi: &StateVector, t: f64, rng: &mut RngStream) -> Result<(StateVector, Option<Event>)> {
        let mut amps = psi.amplitudes().to_vec();
        let mut scratch = vec![ZERO; amps.len()];
        let event = self.step_in_place(&mut amps, &mut scratch, t, rng)?;
        Ok((StateVector::new(psi.dims(), amps)?, event))
    }

    fn step_in_place(
        &self,
        psi: &mut [Complex64],
        scratch: &mut [Complex64],
        t: f64,
        rng: &mut RngStream,
    ) -> Result<Option<Event>> {
        let p = self.jump_probability(psi);
        if p >= self.p_step_max {
            return Err(Error::StepSizeViolation {
                probability: p,
                limit: self.p_step_max,
            });
        }
        let r = rng.uniform();
        if r < p {
            // r/p is uniform on [0, 1) given a jump, so it also picks the channel.
            let k = select_channel(&self.channels, psi, r / p, scratch)?;
            let ch = &self.channels[k];
            collapse(ch, psi, scratch)?;
            return Ok(Some(Event {
                time: t + self.dt,
                tag: ch.tag,
                recorded: ch.recorded,
            }));
        }
        self.propagator.mul_vec_into(psi, scratch);
        let norm = match self.renormalization {
            Renormalization::Exact => norm2_slice(scratch),
            Renormalization::FirstOrder => 1.0 - p,
        };
        if !(norm > 0.0) {
            return Err(Error::ZeroNorm);
        }
        let inv = 1.0 / norm.sqrt();
        for (a, s) in psi.iter_mut().zip(scratch.iter()) {
            *a = s * inv;
        }
        Ok(None)
    }

    fn steps_for(&self, t: f64) -> u64 {
        (t / self.dt + 1e-9).floor().max(0.0) as u64
    }

    pub fn run_until_click(&self, psi0: &StateVector, rng: &mut RngStream, t_max: f64) -> Result<StageOutcome> {
        let mut psi = psi0.amplitudes().to_vec();
        let mut scratch = vec![ZERO; psi.len()];
        let mut events = Vec::new();
        let n_steps = self.steps_for(t_max);
        for n in 0..n_steps {
            let t = n as f64 * self.dt;
            if let Some(ev) = self.step_in_place(&mut psi, &mut scratch, t, rng)? {
                events.push(ev);
                if ev.recorded {
                    let state = StateVector::new(psi0.dims(), psi)?;
                    return Ok(StageOutcome {
                        click: Some(Click {
                            tag: ev.tag,
                            time: ev.time,
                            state: state.clone(),
                        }),
                        events,
                        final_state: state,
                    });
                }
            }
        }
        normalize_in_place(&mut psi);
        Ok(StageOutcome {
            click: None,
            events,
            final_state: StateVector::new(psi0.dims(), psi)?,
        })
    }

    /// Unconditioned evolution; observation times are rounded down to whole steps.
    pub fn observe(
        &self,
        psi0: &StateVector,
        rng: &mut RngStream,
        times: &[f64],
        observables: &[Operator],
    ) -> Result<Vec<Vec<f64>>> {
        let mut psi = psi0.amplitudes().to_vec();
        let mut scratch = vec![ZERO; psi.len()];
        let mut out = Vec::with_capacity(times.len());
        let mut n = 0u64;
        for &t_obs in times {
            let target = self.steps_for(t_obs);
            while n < target {
                self.step_in_place(&mut psi, &mut scratch, n as f64 * self.dt, rng)?;
                n += 1;
            }
            out.push(observe_all(&psi, observables));
        }
        Ok(out)
    }
}

/// Fixed-step stage run from a stage model; builds the propagator once.
pub fn run_until_click(
    psi0: &StateVector,
    model: &StageModel,
    dt: f64,
    rng: &mut RngStream,
    t_max: f64,
) -> Result<StageOutcome> {
    FixedStepEngine::new(model, dt)?.run_until_click(psi0, rng, t_max)
}
