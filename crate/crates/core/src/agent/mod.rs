//! Contextual-bandit MCS policy trained with a clipped-surrogate objective.
//!
//! One network is shared by all UEs: it maps a UE's feature block to 29
//! logits and a value estimate, and the action vector is assembled by
//! applying it to every block independently.

pub mod checkpoint;
pub mod mlp;
pub mod ppo;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::{run_episode, Controller};
use crate::env::{LinkAdaptEnv, StateVector};
use crate::error::{Error, Result};
use crate::mcs::NUM_MCS;
use crate::metrics::EpisodeLog;
use crate::num::Scalar;

pub use checkpoint::Checkpoint;
pub use mlp::{Mlp, MlpShape};
pub use ppo::{RewardCredit, RolloutBuffer, TrainConfig};

/// Scale of the initial policy-head weights; keeps the initial policy near uniform.
pub const POLICY_INIT_GAIN: f64 = 0.01;

/// Builds the environment of a given episode index with its initial state.
pub trait EnvFactory: Sync {
    fn make(&self, episode: u64) -> Result<(LinkAdaptEnv, StateVector)>;
}

impl<F> EnvFactory for F
where
    F: Fn(u64) -> Result<(LinkAdaptEnv, StateVector)> + Sync,
{
    fn make(&self, episode: u64) -> Result<(LinkAdaptEnv, StateVector)> {
        self(episode)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar + Serialize + for<'a> Deserialize<'a>")]
pub struct PolicyParams<T: Scalar> {
    pub net: Mlp<T>,
}

/// One sampled decision for a single UE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision<T> {
    pub action: usize,
    pub logp: T,
    pub value: T,
}

fn to_scalar<T: Scalar>(x: &[f64]) -> Vec<T> {
    x.iter().map(|&v| T::lit(v)).collect()
}

impl<T: Scalar> PolicyParams<T> {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        Self::with_actions(input_dim, hidden, NUM_MCS, rng)
    }

    /// Network over an arbitrary action count, for toy bandit problems.
    pub fn with_actions<R: Rng + ?Sized>(input_dim: usize, hidden: usize, actions: usize, rng: &mut R) -> Self {
        let shape = MlpShape {
            input: input_dim,
            hidden,
            actions,
        };
        Self {
            net: Mlp::init(shape, POLICY_INIT_GAIN, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.net.shape.input
    }

    /// Action probabilities for one UE feature block.
    pub fn probs(&self, x: &[T]) -> Vec<T> {
        mlp::softmax(&self.net.forward(x).logits)
    }

    pub fn entropy(&self, x: &[T]) -> T {
        let lp = mlp::log_softmax(&self.net.forward(x).logits);
        -lp.iter().map(|&l| l.exp() * l).sum::<T>()
    }

    pub fn decide<R: Rng + ?Sized>(&self, x: &[T], rng: &mut R, deterministic: bool) -> Decision<T> {
        let fwd = self.net.forward(x);
        let logp = mlp::log_softmax(&fwd.logits);
        let action = if deterministic {
            mlp::argmax(&fwd.logits)
        } else {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut pick = logp.len() - 1;
            for (i, l) in logp.iter().enumerate() {
                acc += l.to_f64_lossy().exp();
                if u < acc {
                    pick = i;
                    break;
                }
            }
            pick
        };
        Decision {
            action,
            logp: logp[action],
            value: fwd.value,
        }
    }

    /// One MCS index per UE block of `state`.
    pub fn act<R: Rng + ?Sized>(&self, state: &StateVector, rng: &mut R, deterministic: bool) -> Result<Vec<usize>> {
        if state.per_ue() != self.input_dim() || !state.len().is_multiple_of(self.input_dim()) {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: state.per_ue(),
            });
        }
        Ok((0..state.num_ues())
            .map(|u| self.decide(&to_scalar::<T>(state.ue(u)), rng, deterministic).action)
            .collect())
    }
}

/// Runs the policy inside an episode loop.
#[derive(Debug, Clone)]
pub struct PolicyController<'a, T: Scalar> {
    pub policy: &'a PolicyParams<T>,
    pub deterministic: bool,
}

impl<T: Scalar> Controller for PolicyController<'_, T> {
    fn act(&mut self, _env: &LinkAdaptEnv, state: &StateVector, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
        self.policy.act(state, rng, self.deterministic)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T: Scalar> {
    pub policy: PolicyParams<T>,
    /// Mean slot reward of every training episode.
    pub curve: Vec<f64>,
    pub updates: usize,
}

pub const CURVE_HEADER: &str = "episode,mean_reward";

pub fn curve_csv(curve: &[f64]) -> String {
    let mut out = format!("{CURVE_HEADER}\n");
    for (i, r) in curve.iter().enumerate() {
        out.push_str(&format!("{i},{r:.6}\n"));
    }
    out
}

/// Policy plus optimizer state; applies clipped-surrogate updates to rollouts.
pub struct Learner<T: Scalar> {
    pub policy: PolicyParams<T>,
    opt: ppo::Adam<T>,
    grad: Vec<T>,
    pub updates: usize,
}

impl<T: Scalar> Learner<T> {
    pub fn new(policy: PolicyParams<T>, cfg: &TrainConfig) -> Self {
        let n = policy.net.num_params();
        Self {
            policy,
            opt: ppo::Adam::new(n, cfg.learning_rate),
            grad: vec![T::zero(); n],
            updates: 0,
        }
    }

    /// Runs `cfg.epochs` passes of shuffled minibatch updates over `buf`.
    pub fn update(&mut self, buf: &RolloutBuffer<T>, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<()> {
        let adv_all = buf.advantages();
        let mut idx: Vec<usize> = (0..buf.len()).collect();
        for _ in 0..cfg.epochs {
            idx.shuffle(rng);
            for chunk in idx.chunks(cfg.minibatch) {
                let mut advantages: Vec<T> = chunk.iter().map(|&i| adv_all[i]).collect();
                ppo::normalize(&mut advantages);
                let batch = ppo::Minibatch {
                    features: chunk.iter().map(|&i| buf.feature(i)).collect(),
                    actions: chunk.iter().map(|&i| buf.actions[i]).collect(),
                    logp_old: chunk.iter().map(|&i| buf.logp_old[i]).collect(),
                    advantages,
                    returns: chunk.iter().map(|&i| buf.returns()[i]).collect(),
                };
                let loss = ppo::surrogate_loss(
                    &self.policy.net,
                    &batch,
                    cfg.clip,
                    cfg.entropy_coef,
                    cfg.value_coef,
                    Some(&mut self.grad),
                );
                if !loss.total.is_finite() || self.grad.iter().any(|g| !g.is_finite()) {
                    return Err(Error::Diverged(format!("non-finite loss after {} updates", self.updates)));
                }
                ppo::clip_grad_norm(&mut self.grad, cfg.max_grad_norm);
                self.opt.step(&mut self.policy.net.params, &self.grad);
                self.updates += 1;
            }
        }
        if !self.policy.net.is_finite() {
            return Err(Error::Diverged("non-finite weights".into()));
        }
        Ok(())
    }
}

/// Trains a policy; episode `e` uses the environment `factory.make(e)`.
pub fn train<T: Scalar, F: EnvFactory + ?Sized>(factory: &F, cfg: &TrainConfig) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (probe, _) = factory.make(0)?;
    let input_dim = probe.config().per_ue_len();
    let policy = PolicyParams::<T>::new(input_dim, cfg.hidden, &mut rng);
    let mut learner = Learner::new(policy, cfg);
    let mut buf = RolloutBuffer::new(input_dim);
    let mut curve = Vec::with_capacity(cfg.episodes);
    let mut decisions = Vec::new();
    for ep in 0..cfg.episodes {
        let (mut env, mut state) = factory.make(ep as u64)?;
        if env.config().per_ue_len() != input_dim {
            return Err(Error::Dimension {
                expected: input_dim,
                got: env.config().per_ue_len(),
            });
        }
        let (mut total, mut slots) = (0.0, 0usize);
        while !env.is_done() {
            decisions.clear();
            for u in 0..state.num_ues() {
                let x = to_scalar::<T>(state.ue(u));
                let d = learner.policy.decide(&x, &mut rng, false);
                decisions.push((x, d));
            }
            let action: Vec<usize> = decisions.iter().map(|(_, d)| d.action).collect();
            let step = env.step(&action, &mut rng)?;
            for ((x, d), rec) in decisions.iter().zip(&step.result.ues) {
                if !rec.scheduled {
                    continue;
                }
                let r = match cfg.reward_credit {
                    RewardCredit::PerUe => rec.reward,
                    RewardCredit::Summed => step.reward,
                };
                buf.push(x, d.action, d.logp, T::lit(r), d.value);
            }
            total += step.reward;
            slots += 1;
            state = step.state;
            if buf.len() >= cfg.rollout_len {
                learner.update(&buf, cfg, &mut rng)?;
                buf.clear();
            }
        }
        curve.push(if slots == 0 { 0.0 } else { total / slots as f64 });
    }
    Ok(TrainOutcome {
        policy: learner.policy,
        curve,
        updates: learner.updates,
    })
}

/// Deterministic-policy rollouts of the given episode indices, run in
/// parallel; each episode draws HARQ outcomes from its own seeded stream.
pub fn evaluate<T: Scalar, F: EnvFactory + ?Sized>(
    policy: &PolicyParams<T>,
    factory: &F,
    episodes: &[u64],
    seed: u64,
) -> Result<Vec<EpisodeLog>> {
    episodes
        .par_iter()
        .map(|&e| {
            let (mut env, state) = factory.make(e)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(e);
            let mut ctrl = PolicyController {
                policy,
                deterministic: true,
            };
            run_episode(&mut env, state, &mut ctrl, seed, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_params_are_uniform() {
        let shape = MlpShape {
            input: 18,
            hidden: 64,
            actions: NUM_MCS,
        };
        let p = PolicyParams::<f64> { net: Mlp::zeros(shape) };
        let state = StateVector::new(vec![0.3; 18], 18);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut counts = [0usize; NUM_MCS];
        let n = 100_000;
        for _ in 0..n {
            counts[p.act(&state, &mut rng, false).unwrap()[0]] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 1.0 / 29.0).abs() < 0.01);
        }
        assert!((p.entropy(&[0.3; 18]) - 29f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn deterministic_argmax_and_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = PolicyParams::<f64>::new(6, 16, &mut rng);
        p.net.policy_bias_mut()[12] = 50.0;
        let same = StateVector::new(vec![0.5; 18], 6);
        assert_eq!(p.act(&same, &mut rng, true).unwrap(), vec![12, 12, 12]);

        let mut q = PolicyParams::<f64>::new(6, 16, &mut rng);
        q.net.params.iter_mut().for_each(|w| *w *= 40.0);
        let blocks: Vec<Vec<f64>> = (0..3).map(|u| (0..6).map(|k| ((u * 7 + k) % 5) as f64 / 4.0).collect()).collect();
        let flat = |order: &[usize]| StateVector::new(order.iter().flat_map(|&u| blocks[u].clone()).collect(), 6);
        let a = q.act(&flat(&[0, 1, 2]), &mut rng, true).unwrap();
        let b = q.act(&flat(&[2, 0, 1]), &mut rng, true).unwrap();
        assert_eq!(b, vec![a[2], a[0], a[1]]);
    }

    #[test]
    fn dimension_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = PolicyParams::<f64>::new(6, 8, &mut rng);
        let s = StateVector::new(vec![0.0; 14], 7);
        assert!(matches!(p.act(&s, &mut rng, true), Err(Error::Dimension { .. })));
    }
}
