//! Closed-loop episode execution for any MCS-selection rule.

use rand_chacha::ChaCha8Rng;

use crate::baselines::Baseline;
use crate::env::{LinkAdaptEnv, StateVector};
use crate::error::Result;
use crate::metrics::EpisodeLog;
use crate::phy::Harq;

/// A per-slot MCS selection rule driven by the environment's feedback.
pub trait Controller {
    /// Called once after reset, before the first decision.
    fn begin(&mut self, _env: &LinkAdaptEnv) {}

    fn act(&mut self, env: &LinkAdaptEnv, state: &StateVector, rng: &mut ChaCha8Rng) -> Result<Vec<usize>>;

    /// Called after every step with the HARQ outcomes of the slot just played.
    fn observe(&mut self, _env: &LinkAdaptEnv, _harq: &[Option<Harq>]) {}
}

impl Controller for Baseline {
    fn begin(&mut self, env: &LinkAdaptEnv) {
        self.start(env.latest_reports_db());
    }

    fn act(&mut self, env: &LinkAdaptEnv, _state: &StateVector, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
        Ok(Baseline::act(self, env.curves(), env.latest_reports_db(), rng))
    }

    fn observe(&mut self, env: &LinkAdaptEnv, harq: &[Option<Harq>]) {
        Baseline::observe(self, harq, env.latest_reports_db());
    }
}

/// Plays one full episode; `state` is the observation returned by reset.
pub fn run_episode<C: Controller + ?Sized>(
    env: &mut LinkAdaptEnv,
    state: StateVector,
    ctrl: &mut C,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<EpisodeLog> {
    ctrl.begin(env);
    let mut log = EpisodeLog {
        seed,
        realization: env.trace().realization,
        trace_hash: env.trace().content_hash(),
        slots: Vec::with_capacity(env.num_slots()),
    };
    let mut state = state;
    while !env.is_done() {
        let action = ctrl.act(env, &state, rng)?;
        let step = env.step(&action, rng)?;
        let harq: Vec<Option<Harq>> = step.result.ues.iter().map(|r| r.harq).collect();
        ctrl.observe(env, &harq);
        log.slots.push(step.result);
        state = step.state;
    }
    Ok(log)
}
