use num_complex::Complex64;

use super::{collapse, normalize_in_place, observe_all, select_channel, Click, Event, RngStream, StageOutcome};
use crate::error::Result;
use crate::hilbert::{matrix_exp, norm2_slice, Operator, StateVector, ZERO};
use crate::model::{JumpChannel, StageModel};

/// Time resolution of the fast sampler, 2⁻²⁰ ≈ 9.5e-7 in units of 1/g.
///
/// A power of two keeps integer observation times exactly representable.
pub const TICK: f64 = 1.0 / 1_048_576.0;

fn to_ticks(t: f64) -> u64 {
    (t / TICK + 1e-6).floor().max(0.0) as u64
}

/// Waiting-time sampler.
///
/// Between jumps the unnormalized state `e^{−iH_eff t}ψ` loses norm
/// monotonically, and the probability of no jump up to `t` is its squared
/// norm. A jump therefore occurs where that norm first drops to a uniform
/// threshold `r`. The crossing is located by a greedy descent over the
/// propagators `U_k = e^{−iH_eff 2^k τ}`, `τ =` [`TICK`], which costs one
/// matrix-vector product per ladder level instead of one per time step.
#[derive(Clone, Debug)]
pub struct FastSampler {
    ladder: Vec<Operator>,
    channels: Vec<JumpChannel>,
}

impl FastSampler {
    /// Prepare propagators covering windows up to `horizon` in one descent.
    pub fn new(model: &StageModel, horizon: f64) -> Result<Self> {
        let top = to_ticks(horizon).max(1);
        let levels = (u64::BITS - top.leading_zeros()) as usize;
        let ladder = (0..levels)
            .map(|k| matrix_exp(&model.h_eff, Complex64::new(0.0, -((1u64 << k) as f64) * TICK)))
            .collect();
        Ok(Self {
            ladder,
            channels: model.channels.clone(),
        })
    }

    /// Advance `ψ` while its squared norm stays above `r`, up to `t_end`.
    ///
    /// Returns `true` when the norm crosses `r` within `(t, t + 1 tick]`, with
    /// `ψ` and `t` left at the last tick before the crossing, and `false` when
    /// `t_end` is reached first.
    fn advance(
        &self,
        psi: &mut Vec<Complex64>,
        scratch: &mut Vec<Complex64>,
        t: &mut u64,
        t_end: u64,
        r: f64,
    ) -> bool {
        loop {
            if *t >= t_end {
                return false;
            }
            for k in (0..self.ladder.len()).rev() {
                let step = 1u64 << k;
                if *t + step > t_end {
                    continue;
                }
                self.ladder[k].mul_vec_into(psi, scratch);
                if norm2_slice(scratch) > r {
                    std::mem::swap(psi, scratch);
                    *t += step;
                } else if k == 0 {
                    return true;
                }
            }
        }
    }

    fn jump(
        &self,
        psi: &mut [Complex64],
        scratch: &mut [Complex64],
        t: &mut u64,
        rng: &mut RngStream,
    ) -> Result<Event> {
        let k = select_channel(&self.channels, psi, rng.uniform(), scratch)?;
        let ch = &self.channels[k];
        collapse(ch, psi, scratch)?;
        *t += 1;
        Ok(Event {
            time: *t as f64 * TICK,
            tag: ch.tag,
            recorded: ch.recorded,
        })
    }

    pub fn run_until_click(&self, psi0: &StateVector, rng: &mut RngStream, t_max: f64) -> Result<StageOutcome> {
        let mut psi = psi0.amplitudes().to_vec();
        let mut scratch = vec![ZERO; psi.len()];
        let mut events = Vec::new();
        let t_end = to_ticks(t_max);
        let mut t = 0u64;
        loop {
            let r = rng.uniform();
            if !self.advance(&mut psi, &mut scratch, &mut t, t_end, r) {
                normalize_in_place(&mut psi);
                return Ok(StageOutcome {
                    click: None,
                    events,
                    final_state: StateVector::new(psi0.dims(), psi)?,
                });
            }
            let ev = self.jump(&mut psi, &mut scratch, &mut t, rng)?;
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

    /// Unconditioned evolution through every jump; `times` must be ascending.
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
        let mut t = 0u64;
        let mut r = rng.uniform();
        for &t_obs in times {
            let target = to_ticks(t_obs);
            while self.advance(&mut psi, &mut scratch, &mut t, target, r) {
                self.jump(&mut psi, &mut scratch, &mut t, rng)?;
                r = rng.uniform();
            }
            out.push(observe_all(&psi, observables));
        }
        Ok(out)
    }
}

/// Fast stage run from a stage model; builds the propagator ladder once.
pub fn sample_click_fast(
    psi0: &StateVector,
    model: &StageModel,
    rng: &mut RngStream,
    t_max: f64,
) -> Result<StageOutcome> {
    FastSampler::new(model, t_max)?.run_until_click(psi0, rng, t_max)
}
