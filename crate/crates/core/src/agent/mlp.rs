//! Two-layer tanh network with a categorical policy head and a scalar value head.
//!
//! All weights live in one flat vector so optimizers and finite-difference
//! checks can treat the parameters as a single point in `R^n`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::num::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpShape {
    pub input: usize,
    pub hidden: usize,
    pub actions: usize,
}

impl MlpShape {
    fn w1(&self) -> usize {
        0
    }
    fn b1(&self) -> usize {
        self.w1() + self.hidden * self.input
    }
    fn w2(&self) -> usize {
        self.b1() + self.hidden
    }
    fn b2(&self) -> usize {
        self.w2() + self.hidden * self.hidden
    }
    fn wp(&self) -> usize {
        self.b2() + self.hidden
    }
    fn bp(&self) -> usize {
        self.wp() + self.actions * self.hidden
    }
    fn wv(&self) -> usize {
        self.bp() + self.actions
    }
    fn bv(&self) -> usize {
        self.wv() + self.hidden
    }

    pub fn num_params(&self) -> usize {
        self.bv() + 1
    }
}

/// Activations of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Forward<T> {
    pub h1: Vec<T>,
    pub h2: Vec<T>,
    pub logits: Vec<T>,
    pub value: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar + Serialize + for<'a> Deserialize<'a>")]
pub struct Mlp<T: Scalar> {
    pub shape: MlpShape,
    pub params: Vec<T>,
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail += *x * *y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn matvec<T: Scalar>(w: &[T], b: &[T], x: &[T], out: &mut [T]) {
    let n = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = b[i] + dot(&w[i * n..(i + 1) * n], x);
    }
}

impl<T: Scalar> Mlp<T> {
    /// Glorot-uniform trunk, policy head scaled by `policy_gain` (small values
    /// give a near-uniform initial policy), zero biases.
    pub fn init<R: Rng + ?Sized>(shape: MlpShape, policy_gain: f64, rng: &mut R) -> Self {
        let mut params = vec![T::zero(); shape.num_params()];
        let mut fill = |start: usize, rows: usize, cols: usize, gain: f64| {
            let bound = gain * (6.0 / (rows + cols) as f64).sqrt();
            for p in &mut params[start..start + rows * cols] {
                *p = T::lit(rng.gen_range(-bound..=bound));
            }
        };
        fill(shape.w1(), shape.hidden, shape.input, 1.0);
        fill(shape.w2(), shape.hidden, shape.hidden, 1.0);
        fill(shape.wp(), shape.actions, shape.hidden, policy_gain);
        fill(shape.wv(), 1, shape.hidden, 1.0);
        Self { shape, params }
    }

    pub fn zeros(shape: MlpShape) -> Self {
        Self {
            shape,
            params: vec![T::zero(); shape.num_params()],
        }
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    /// Mutable view of the policy-head bias (one entry per action).
    pub fn policy_bias_mut(&mut self) -> &mut [T] {
        let s = self.shape;
        &mut self.params[s.bp()..s.bp() + s.actions]
    }

    pub fn forward(&self, x: &[T]) -> Forward<T> {
        let s = self.shape;
        debug_assert_eq!(x.len(), s.input);
        let p = &self.params;
        let mut h1 = vec![T::zero(); s.hidden];
        matvec(&p[s.w1()..s.b1()], &p[s.b1()..s.w2()], x, &mut h1);
        h1.iter_mut().for_each(|v| *v = v.tanh());
        let mut h2 = vec![T::zero(); s.hidden];
        matvec(&p[s.w2()..s.b2()], &p[s.b2()..s.wp()], &h1, &mut h2);
        h2.iter_mut().for_each(|v| *v = v.tanh());
        let mut logits = vec![T::zero(); s.actions];
        matvec(&p[s.wp()..s.bp()], &p[s.bp()..s.wv()], &h2, &mut logits);
        let value = p[s.bv()] + dot(&p[s.wv()..s.bv()], &h2);
        Forward { h1, h2, logits, value }
    }

    /// Accumulates into `grad` the parameter gradient of a scalar loss whose
    /// derivatives with respect to the logits and the value are given.
    pub fn backward(&self, x: &[T], fwd: &Forward<T>, dlogits: &[T], dvalue: T, grad: &mut [T]) {
        let s = self.shape;
        let p = &self.params;
        let (h, a, d) = (s.hidden, s.actions, s.input);

        let mut dh2 = vec![T::zero(); h];
        for (k, &g) in dlogits.iter().enumerate().take(a) {
            if g == T::zero() {
                continue;
            }
            let row = s.wp() + k * h;
            axpy(g, &fwd.h2, &mut grad[row..row + h]);
            axpy(g, &p[row..row + h], &mut dh2);
            grad[s.bp() + k] += g;
        }
        axpy(dvalue, &fwd.h2, &mut grad[s.wv()..s.bv()]);
        axpy(dvalue, &p[s.wv()..s.bv()], &mut dh2);
        grad[s.bv()] += dvalue;

        let mut dh1 = vec![T::zero(); h];
        for (i, (&g, &y)) in dh2.iter().zip(&fwd.h2).enumerate() {
            let dz = g * (T::one() - y * y);
            let row = s.w2() + i * h;
            axpy(dz, &fwd.h1, &mut grad[row..row + h]);
            axpy(dz, &p[row..row + h], &mut dh1);
            grad[s.b2() + i] += dz;
        }
        for (i, (&g, &y)) in dh1.iter().zip(&fwd.h1).enumerate() {
            let dz = g * (T::one() - y * y);
            let row = s.w1() + i * d;
            axpy(dz, x, &mut grad[row..row + d]);
            grad[s.b1() + i] += dz;
        }
    }
}

/// `y += a * x`.
fn axpy<T: Scalar>(a: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Numerically stable log-softmax.
pub fn log_softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = logits.iter().map(|&l| (l - max).exp()).sum::<T>().ln() + max;
    logits.iter().map(|&l| l - lse).collect()
}

pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    log_softmax(logits).into_iter().map(T::exp).collect()
}

/// Index of the largest logit; the lowest index wins ties.
pub fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const SHAPE: MlpShape = MlpShape {
        input: 7,
        hidden: 9,
        actions: 5,
    };

    #[test]
    fn param_count() {
        let s = MlpShape {
            input: 18,
            hidden: 64,
            actions: 29,
        };
        assert_eq!(s.num_params(), 18 * 64 + 64 + 64 * 64 + 64 + 29 * 64 + 29 + 64 + 1);
    }

    #[test]
    fn backward_matches_finite_differences() {
        // Loss = c . logits + w * value for fixed random c, w.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net: Mlp<f64> = Mlp::init(SHAPE, 1.0, &mut rng);
        let x: Vec<f64> = (0..SHAPE.input).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..SHAPE.actions).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = 0.7;
        let loss = |n: &Mlp<f64>| {
            let f = n.forward(&x);
            f.logits.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>() + w * f.value
        };
        let mut grad = vec![0.0; net.num_params()];
        net.backward(&x, &net.forward(&x), &c, w, &mut grad);
        let h = 1e-6;
        for i in 0..net.num_params() {
            let mut p = net.clone();
            p.params[i] += h;
            let up = loss(&p);
            p.params[i] -= 2.0 * h;
            let dn = loss(&p);
            let fd = (up - dn) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-7, "param {i}: fd {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn f32_forward_close_to_f64() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net: Mlp<f64> = Mlp::init(SHAPE, 1.0, &mut rng);
        let net32 = Mlp::<f32> {
            shape: SHAPE,
            params: net.params.iter().map(|&p| p as f32).collect(),
        };
        let x: Vec<f64> = (0..SHAPE.input).map(|i| i as f64 / 7.0).collect();
        let x32: Vec<f32> = x.iter().map(|&v| v as f32).collect();
        let (a, b) = (net.forward(&x), net32.forward(&x32));
        for (p, q) in a.logits.iter().zip(&b.logits) {
            assert!((p - f64::from(*q)).abs() < 1e-5);
        }
    }

    #[test]
    fn softmax_is_distribution() {
        let p = softmax(&[1000.0, 0.0, -1000.0, 3.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|v| v.is_finite() && *v >= 0.0));
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }
}
