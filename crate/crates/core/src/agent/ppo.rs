//! Clipped-surrogate policy-gradient objective for the zero-discount setting.
//!
//! With discount 0 the return of a transition is its immediate reward, so
//! the advantage is `reward - value` and no bootstrapping term exists.

use serde::{Deserialize, Serialize};

use super::mlp::{log_softmax, Mlp};
use crate::error::{Error, Result};
use crate::num::Scalar;

/// Which reward a UE transition is credited with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RewardCredit {
    /// The UE's own reward term.
    PerUe,
    /// The slot reward summed over all UEs.
    Summed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub clip: f64,
    pub entropy_coef: f64,
    /// Discount factor; only 0 is accepted.
    pub discount: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub rollout_len: usize,
    pub minibatch: usize,
    pub epochs: usize,
    /// Number of training episodes, each on a fresh channel realization.
    pub episodes: usize,
    pub hidden: usize,
    pub reward_credit: RewardCredit,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            clip: 0.2,
            entropy_coef: 0.05,
            discount: 0.0,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            rollout_len: 2048,
            minibatch: 256,
            epochs: 10,
            episodes: 60,
            hidden: 64,
            reward_credit: RewardCredit::PerUe,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.discount != 0.0 {
            return Err(Error::Config(format!(
                "discount {} is not supported; the agent is a contextual bandit (discount 0)",
                self.discount
            )));
        }
        if !(self.clip > 0.0) || !(self.learning_rate > 0.0) || self.entropy_coef < 0.0 || self.value_coef < 0.0 {
            return Err(Error::Config("clip and learning rate must be > 0, coefficients >= 0".into()));
        }
        if self.rollout_len == 0 || self.minibatch == 0 || self.epochs == 0 || self.hidden == 0 {
            return Err(Error::Config("rollout_len, minibatch, epochs and hidden must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-(slot, UE) transitions collected under the current policy.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBuffer<T> {
    pub input_dim: usize,
    pub features: Vec<T>,
    pub actions: Vec<usize>,
    pub logp_old: Vec<T>,
    pub rewards: Vec<T>,
    pub values: Vec<T>,
}

impl<T: Scalar> RolloutBuffer<T> {
    pub fn new(input_dim: usize) -> Self {
        Self {
            input_dim,
            features: Vec::new(),
            actions: Vec::new(),
            logp_old: Vec::new(),
            rewards: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn push(&mut self, x: &[T], action: usize, logp: T, reward: T, value: T) {
        debug_assert_eq!(x.len(), self.input_dim);
        self.features.extend_from_slice(x);
        self.actions.push(action);
        self.logp_old.push(logp);
        self.rewards.push(reward);
        self.values.push(value);
    }

    pub fn clear(&mut self) {
        self.features.clear();
        self.actions.clear();
        self.logp_old.clear();
        self.rewards.clear();
        self.values.clear();
    }

    pub fn feature(&self, i: usize) -> &[T] {
        &self.features[i * self.input_dim..(i + 1) * self.input_dim]
    }

    /// Regression targets of the value head: the immediate rewards.
    pub fn returns(&self) -> &[T] {
        &self.rewards
    }

    /// `reward - value` for every transition.
    pub fn advantages(&self) -> Vec<T> {
        self.rewards.iter().zip(&self.values).map(|(&r, &v)| r - v).collect()
    }
}

/// Shifts and scales to zero mean and unit (population) standard deviation.
/// Batches of size one, or with zero spread, are only centered.
pub fn normalize<T: Scalar>(v: &mut [T]) {
    if v.is_empty() {
        return;
    }
    let n = T::lit(v.len() as f64);
    let mean = v.iter().copied().sum::<T>() / n;
    let var = v.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / n;
    let std = var.sqrt();
    let scale = if v.len() > 1 && std > T::lit(1e-12) { std } else { T::one() };
    for x in v.iter_mut() {
        *x = (*x - mean) / scale;
    }
}

/// Inputs of one surrogate evaluation; advantages are already normalized.
#[derive(Debug, Clone)]
pub struct Minibatch<'a, T> {
    pub features: Vec<&'a [T]>,
    pub actions: Vec<usize>,
    pub logp_old: Vec<T>,
    pub advantages: Vec<T>,
    pub returns: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts<T> {
    pub total: T,
    pub policy: T,
    pub value: T,
    pub entropy: T,
    pub clip_fraction: T,
}

/// Loss `-mean(min(r A, clip(r) A)) - c_H mean(H) + c_V mean((V - R)^2)`
/// and, if `grad` is given, its gradient (overwritten).
pub fn surrogate_loss<T: Scalar>(
    net: &Mlp<T>,
    batch: &Minibatch<'_, T>,
    clip: f64,
    entropy_coef: f64,
    value_coef: f64,
    mut grad: Option<&mut [T]>,
) -> LossParts<T> {
    let n = batch.actions.len();
    let inv_n = T::one() / T::lit(n.max(1) as f64);
    let (eps, c_h, c_v) = (T::lit(clip), T::lit(entropy_coef), T::lit(value_coef));
    if let Some(g) = grad.as_deref_mut() {
        g.iter_mut().for_each(|v| *v = T::zero());
    }
    let (mut pol, mut val, mut ent, mut clipped) = (T::zero(), T::zero(), T::zero(), T::zero());
    let mut dlogits = vec![T::zero(); net.shape.actions];
    for i in 0..n {
        let x = batch.features[i];
        let fwd = net.forward(x);
        let logp = log_softmax(&fwd.logits);
        let p: Vec<T> = logp.iter().map(|&l| l.exp()).collect();
        let a = batch.actions[i];
        let adv = batch.advantages[i];
        let ratio = (logp[a] - batch.logp_old[i]).exp();
        let unclipped = ratio * adv;
        let clipped_ratio = ratio.max(T::one() - eps).min(T::one() + eps);
        let clipped_obj = clipped_ratio * adv;
        let surr = unclipped.min(clipped_obj);
        let h = -p.iter().zip(&logp).map(|(&pi, &li)| pi * li).sum::<T>();
        let verr = fwd.value - batch.returns[i];
        pol -= surr;
        ent += h;
        val += verr * verr;
        let active = unclipped <= clipped_obj;
        if !active {
            clipped += T::one();
        }
        if let Some(g) = grad.as_deref_mut() {
            // d(-surr)/dlogp_a, zero when the clipped branch is selected.
            let g_logp = if active { -ratio * adv } else { T::zero() };
            for j in 0..dlogits.len() {
                let onehot = if j == a { T::one() } else { T::zero() };
                let d_surr = g_logp * (onehot - p[j]);
                let d_ent = c_h * p[j] * (logp[j] + h);
                dlogits[j] = (d_surr + d_ent) * inv_n;
            }
            let dv = c_v * T::lit(2.0) * verr * inv_n;
            net.backward(x, &fwd, &dlogits, dv, g);
        }
    }
    let (pol, val, ent) = (pol * inv_n, val * inv_n, ent * inv_n);
    LossParts {
        total: pol - c_h * ent + c_v * val,
        policy: pol,
        value: val,
        entropy: ent,
        clip_fraction: clipped * inv_n,
    }
}

/// Scales `g` so that its Euclidean norm is at most `max_norm`; returns the
/// norm before scaling.
pub fn clip_grad_norm<T: Scalar>(g: &mut [T], max_norm: f64) -> T {
    let norm = g.iter().map(|&v| v * v).sum::<T>().sqrt();
    let m = T::lit(max_norm);
    if max_norm > 0.0 && norm > m {
        let s = m / norm;
        g.iter_mut().for_each(|v| *v *= s);
    }
    norm
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar + Serialize + for<'a> Deserialize<'a>")]
pub struct Adam<T: Scalar> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr: T::lit(lr),
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-5),
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            t: 0,
        }
    }

    /// One descent step on `params` along gradient `g`.
    pub fn step(&mut self, params: &mut [T], g: &[T]) {
        self.t += 1;
        let t = i32::try_from(self.t).unwrap_or(i32::MAX);
        let bc1 = T::one() - self.beta1.powi(t);
        let bc2 = T::one() - self.beta2.powi(t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (T::one() - self.beta1) * g[i];
            self.v[i] = self.beta2 * self.v[i] + (T::one() - self.beta2) * g[i] * g[i];
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::mlp::MlpShape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn nonzero_discount_rejected() {
        let cfg = TrainConfig {
            discount: 0.9,
            ..TrainConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn returns_equal_rewards() {
        let mut b = RolloutBuffer::<f64>::new(2);
        b.push(&[0.0, 1.0], 3, -1.0, 2.5, 1.0);
        b.push(&[1.0, 0.0], 4, -2.0, -0.3, 0.2);
        assert_eq!(b.returns(), &[2.5, -0.3]);
        assert_eq!(b.advantages(), vec![1.5, -0.5]);
    }

    #[test]
    fn normalization_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut v: Vec<f64> = (0..256).map(|_| rng.gen_range(-3.0..7.0)).collect();
        normalize(&mut v);
        let mean = v.iter().sum::<f64>() / 256.0;
        let std = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 256.0).sqrt();
        assert!(mean.abs() < 1e-6);
        assert!((std - 1.0).abs() < 1e-3);
        let mut one = vec![4.0];
        normalize(&mut one);
        assert_eq!(one, vec![0.0]);
    }

    #[test]
    fn entropy_bonus_lowers_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let shape = MlpShape {
            input: 4,
            hidden: 8,
            actions: 29,
        };
        let net: Mlp<f64> = Mlp::init(shape, 0.01, &mut rng);
        let xs: Vec<Vec<f64>> = (0..16).map(|_| (0..4).map(|_| rng.gen()).collect()).collect();
        let batch = Minibatch {
            features: xs.iter().map(Vec::as_slice).collect(),
            actions: (0..16).map(|i| i % 29).collect(),
            logp_old: vec![-(29f64.ln()); 16],
            advantages: vec![0.0; 16],
            returns: vec![0.0; 16],
        };
        let a = surrogate_loss(&net, &batch, 0.2, 0.0, 0.0, None);
        let b = surrogate_loss(&net, &batch, 0.2, 0.05, 0.0, None);
        assert!((a.entropy - 29f64.ln()).abs() < 1e-3);
        assert!(b.total < a.total);
        assert!((a.total - b.total - 0.05 * a.entropy).abs() < 1e-12);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut x = vec![3.0f64, -2.0];
        let mut opt = Adam::new(2, 0.05);
        for _ in 0..2000 {
            let g = vec![2.0 * x[0], 2.0 * x[1]];
            opt.step(&mut x, &g);
        }
        assert!(x[0].abs() < 1e-2 && x[1].abs() < 1e-2, "{x:?}");
    }

    #[test]
    fn grad_clip() {
        let mut g = vec![3.0f64, 4.0];
        assert_eq!(clip_grad_norm(&mut g, 0.5), 5.0);
        assert!((g[0] - 0.3).abs() < 1e-12 && (g[1] - 0.4).abs() < 1e-12);
    }
}
