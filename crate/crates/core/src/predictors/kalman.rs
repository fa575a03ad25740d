//! Constant-velocity Kalman filter over the report sequence.
//!
//! State is `[level dB, velocity dB/slot]`. Each report advances the filter by
//! one slot. Reports whose innovation exceeds `gate * sqrt(S)` are rejected;
//! the process noise is scaled by an EWMA of normalized squared innovations
//! (clamped to `[1, max_noise_scale]`); a NACK pulls the level down by
//! `nack_bias_db`.

use serde::{Deserialize, Serialize};

use crate::num::Scalar;
use crate::phy::Harq;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KfConfig {
    /// Measurement noise variance, dB^2.
    pub meas_var: f64,
    /// Base white-acceleration process noise intensity, dB^2.
    pub process_var: f64,
    pub gate: f64,
    pub nack_bias_db: f64,
    /// EWMA factor for the process-noise scale.
    pub noise_ewma: f64,
    pub max_noise_scale: f64,
    /// Initial level variance, dB^2.
    pub init_level_var: f64,
    /// Initial velocity variance, (dB/slot)^2.
    pub init_velocity_var: f64,
}

impl Default for KfConfig {
    fn default() -> Self {
        Self {
            meas_var: 1.0,
            process_var: 0.05,
            gate: 4.0,
            nack_bias_db: 1.0,
            noise_ewma: 0.9,
            max_noise_scale: 10.0,
            init_level_var: 25.0,
            init_velocity_var: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KfState<T: Scalar> {
    pub mean: [T; 2],
    pub cov: [[T; 2]; 2],
    pub noise_scale: T,
    initialized: bool,
    meas_var: T,
    process_var: T,
    gate: T,
    nack_bias: T,
    ewma: T,
    max_scale: T,
    init_cov: [T; 2],
}

/// Outcome of one measurement update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasurementUpdate {
    Initialized,
    Accepted,
    Gated,
}

impl<T: Scalar> KfState<T> {
    pub fn new(cfg: &KfConfig) -> Self {
        let init_cov = [T::lit(cfg.init_level_var), T::lit(cfg.init_velocity_var)];
        Self {
            mean: [T::zero(); 2],
            cov: [[init_cov[0], T::zero()], [T::zero(), init_cov[1]]],
            noise_scale: T::one(),
            initialized: false,
            meas_var: T::lit(cfg.meas_var),
            process_var: T::lit(cfg.process_var),
            gate: T::lit(cfg.gate),
            nack_bias: T::lit(cfg.nack_bias_db),
            ewma: T::lit(cfg.noise_ewma),
            max_scale: T::lit(cfg.max_noise_scale),
            init_cov,
        }
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    /// Time update by one slot.
    pub fn predict_step(&mut self) {
        let [l, v] = self.mean;
        self.mean = [l + v, v];
        let p = self.cov;
        // F P F^T with F = [[1,1],[0,1]].
        let p00 = p[0][0] + p[0][1] + p[1][0] + p[1][1];
        let p01 = p[0][1] + p[1][1];
        let p11 = p[1][1];
        // Discrete white-acceleration noise: q * [[1/4, 1/2], [1/2, 1]].
        let q = self.process_var * self.noise_scale;
        let half = T::lit(0.5);
        let quarter = T::lit(0.25);
        self.cov = [[p00 + quarter * q, p01 + half * q], [p01 + half * q, p11 + q]];
    }

    /// Measurement update with a level observation.
    pub fn measure(&mut self, y: T) -> MeasurementUpdate {
        if !self.initialized {
            self.mean = [y, T::zero()];
            self.cov = [[self.init_cov[0].min(self.meas_var), T::zero()], [T::zero(), self.init_cov[1]]];
            self.initialized = true;
            return MeasurementUpdate::Initialized;
        }
        let innovation = y - self.mean[0];
        let s = self.cov[0][0] + self.meas_var;
        let nis = innovation * innovation / s;
        let scale = self.ewma * self.noise_scale + (T::one() - self.ewma) * nis;
        self.noise_scale = scale.max(T::one()).min(self.max_scale);
        if innovation.abs() > self.gate * s.sqrt() {
            return MeasurementUpdate::Gated;
        }
        let k0 = self.cov[0][0] / s;
        let k1 = self.cov[1][0] / s;
        self.mean = [self.mean[0] + k0 * innovation, self.mean[1] + k1 * innovation];
        // Joseph form: (I - K H) P (I - K H)^T + K R K^T.
        let p = self.cov;
        let a00 = T::one() - k0;
        let a10 = -k1;
        // A = [[a00, 0], [a10, 1]]
        let ap00 = a00 * p[0][0];
        let ap01 = a00 * p[0][1];
        let ap10 = a10 * p[0][0] + p[1][0];
        let ap11 = a10 * p[0][1] + p[1][1];
        let r = self.meas_var;
        let n00 = ap00 * a00 + k0 * r * k0;
        let n01 = ap00 * a10 + ap01 + k0 * r * k1;
        let n10 = ap10 * a00 + k1 * r * k0;
        let n11 = ap10 * a10 + ap11 + k1 * r * k1;
        let off = T::lit(0.5) * (n01 + n10);
        self.cov = [[n00, off], [off, n11]];
        MeasurementUpdate::Accepted
    }

    pub fn apply_harq(&mut self, harq: Option<Harq>) {
        if self.initialized && harq == Some(Harq::Nack) {
            self.mean[0] -= self.nack_bias;
        }
    }

    /// One slot: time update, then the report (if any), then the HARQ bias correction.
    pub fn step(&mut self, report: Option<T>, harq: Option<Harq>) -> Option<MeasurementUpdate> {
        if self.initialized {
            self.predict_step();
        }
        let res = report.map(|y| self.measure(y));
        self.apply_harq(harq);
        res
    }

    /// Level prediction `horizon` slots after the last processed report.
    pub fn predict(&self, horizon: usize) -> T {
        let h = T::from_usize(horizon).unwrap_or_else(T::zero);
        self.mean[0] + h * self.mean[1]
    }

    pub fn is_spd(&self) -> bool {
        let p = self.cov;
        p[0][1] == p[1][0] && p[0][0] > T::zero() && p[0][0] * p[1][1] - p[0][1] * p[1][0] > T::zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_on_linear_ramp() {
        let cfg = KfConfig {
            meas_var: 0.5,
            ..KfConfig::default()
        };
        let mut kf = KfState::<f64>::new(&cfg);
        let ramp = |t: usize| 5.0 + 0.1 * t as f64;
        let mut last_err = f64::INFINITY;
        for t in 0..400 {
            let res = kf.step(Some(ramp(t)), None);
            assert_ne!(res, Some(MeasurementUpdate::Gated), "gate fired at {t}");
            last_err = (kf.predict(1) - ramp(t + 1)).abs();
        }
        assert!(last_err < 1e-6, "error after burn-in {last_err}");
    }

    #[test]
    fn outlier_is_gated() {
        let mut kf = KfState::<f64>::new(&KfConfig::default());
        for _ in 0..200 {
            kf.step(Some(12.0), None);
        }
        let before = kf.mean[0];
        let res = kf.step(Some(52.0), None);
        assert_eq!(res, Some(MeasurementUpdate::Gated));
        assert!((kf.mean[0] - before).abs() < 0.5);
    }

    #[test]
    fn nack_biases_level_down() {
        let mut kf = KfState::<f64>::new(&KfConfig::default());
        kf.step(Some(10.0), None);
        let before = kf.mean[0];
        kf.apply_harq(Some(Harq::Nack));
        assert!((kf.mean[0] - (before - 1.0)).abs() < 1e-12);
        kf.apply_harq(Some(Harq::Ack));
        assert!((kf.mean[0] - (before - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn covariance_stays_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut kf = KfState::<f64>::new(&KfConfig::default());
        for i in 0..1_000_000 {
            let report = if rng.gen_bool(0.9) {
                Some(rng.gen_range(-20.0..45.0) + if rng.gen_bool(0.01) { 60.0 } else { 0.0 })
            } else {
                None
            };
            let harq = match rng.gen_range(0..3) {
                0 => None,
                1 => Some(Harq::Ack),
                _ => Some(Harq::Nack),
            };
            kf.step(report, harq);
            assert!(kf.is_spd(), "not SPD after update {i}: {:?}", kf.cov);
            assert!(kf.mean.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn f32_filter_tracks_constant() {
        let mut kf = KfState::<f32>::new(&KfConfig::default());
        for _ in 0..100 {
            kf.step(Some(7.0), None);
        }
        assert!((kf.predict(1) - 7.0).abs() < 1e-3);
    }
}
