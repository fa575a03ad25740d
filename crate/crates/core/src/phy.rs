//! PHY abstraction: MCS/SINR to block error probability, HARQ sampling and the
//! delayed, quantized effective-SINR report.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::SinrTrace;
use crate::error::{Error, Result};
use crate::mcs::McsTable;
use crate::num::Scalar;

/// HARQ outcome of one scheduled transmission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Harq {
    Ack,
    Nack,
}

impl Harq {
    pub fn is_ack(self) -> bool {
        self == Harq::Ack
    }

    pub fn is_nack(self) -> bool {
        self == Harq::Nack
    }

    /// Window encoding: ACK = 1, NACK = 0. Unscheduled slots use [`UNSCHEDULED`].
    pub fn code(self) -> f64 {
        match self {
            Harq::Ack => 1.0,
            Harq::Nack => 0.0,
        }
    }
}

/// HARQ window value of a slot in which the UE was not scheduled.
pub const UNSCHEDULED: f64 = -1.0;

/// Encodes an optional outcome as the {-1, 0, 1} window value.
pub fn harq_code(h: Option<Harq>) -> f64 {
    h.map_or(UNSCHEDULED, Harq::code)
}

/// Logistic BLER family `1 / (1 + exp(k (sinr - gamma50(m))))` with a
/// Shannon-derived midpoint `gamma50(m) = 10 log10(2^SE(m) - 1) + L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlerModel<T: Scalar = f64> {
    /// Logistic steepness `k` per dB, > 0.
    pub slope_per_db: T,
    /// Implementation loss `L` in dB, >= 0.
    pub impl_loss_db: T,
}

impl<T: Scalar> Default for BlerModel<T> {
    fn default() -> Self {
        Self {
            slope_per_db: T::lit(2.0),
            impl_loss_db: T::lit(2.0),
        }
    }
}

impl<T: Scalar> BlerModel<T> {
    pub fn new(slope_per_db: T, impl_loss_db: T) -> Result<Self> {
        let m = Self {
            slope_per_db,
            impl_loss_db,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.slope_per_db > T::zero() && self.slope_per_db.is_finite()) {
            return Err(Error::Config(format!("BLER slope {} must be > 0", self.slope_per_db)));
        }
        if !(self.impl_loss_db >= T::zero() && self.impl_loss_db.is_finite()) {
            return Err(Error::Config(format!(
                "implementation loss {} must be >= 0",
                self.impl_loss_db
            )));
        }
        Ok(())
    }

    /// SINR (dB) at which a code of nominal efficiency `se` has BLER 0.5.
    pub fn gamma50_for_se(&self, se: T) -> T {
        T::lit(10.0) * (T::lit(2.0).powf(se) - T::one()).log10() + self.impl_loss_db
    }

    pub fn bler_at(&self, gamma50: T, sinr_db: T) -> T {
        T::one() / (T::one() + (self.slope_per_db * (sinr_db - gamma50)).exp())
    }

    /// Highest SINR offset from the midpoint with BLER at or below `target`:
    /// `bler <= target` iff `sinr >= gamma50 + ln(1/target - 1) / k`.
    pub fn margin_for_target(&self, target: T) -> T {
        (T::one() / target - T::one()).ln() / self.slope_per_db
    }

    pub fn gamma50(&self, table: &McsTable, mcs: usize) -> Result<T> {
        let se = table.se_nom(mcs)?;
        Ok(self.gamma50_for_se(T::lit(se)))
    }

    pub fn bler(&self, table: &McsTable, mcs: usize, sinr_db: T) -> Result<T> {
        Ok(self.bler_at(self.gamma50(table, mcs)?, sinr_db))
    }
}

/// Per-MCS constants of a (table, BLER model) pair, precomputed for hot loops.
#[derive(Debug, Clone)]
pub struct LinkCurves {
    pub model: BlerModel<f64>,
    se: Vec<f64>,
    gamma50: Vec<f64>,
}

impl LinkCurves {
    pub fn new(table: &McsTable, model: BlerModel<f64>) -> Result<Self> {
        model.validate()?;
        let se = table.se_values();
        let gamma50 = se.iter().map(|&s| model.gamma50_for_se(s)).collect();
        Ok(Self { model, se, gamma50 })
    }

    pub fn num_mcs(&self) -> usize {
        self.se.len()
    }

    pub fn max_mcs(&self) -> usize {
        self.se.len() - 1
    }

    pub fn se_nom(&self, mcs: usize) -> f64 {
        self.se[mcs]
    }

    pub fn se_values(&self) -> &[f64] {
        &self.se
    }

    pub fn gamma50(&self, mcs: usize) -> f64 {
        self.gamma50[mcs]
    }

    pub fn bler(&self, mcs: usize, sinr_db: f64) -> f64 {
        self.model.bler_at(self.gamma50[mcs], sinr_db)
    }

    /// `SE_nom(m) * (1 - BLER(m, sinr))`.
    pub fn expected_se(&self, mcs: usize, sinr_db: f64) -> f64 {
        self.se[mcs] * (1.0 - self.bler(mcs, sinr_db))
    }

    /// Largest MCS with BLER at or below `target` at `sinr_db`, or 0 if none qualifies.
    pub fn highest_mcs_for_target(&self, sinr_db: f64, target: f64) -> usize {
        (0..self.se.len())
            .rev()
            .find(|&m| self.bler(m, sinr_db) <= target)
            .unwrap_or(0)
    }

    /// MCS maximizing expected spectral efficiency at a known SINR (lowest index on ties).
    pub fn best_mcs(&self, sinr_db: f64) -> usize {
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for m in 0..self.se.len() {
            let v = self.expected_se(m, sinr_db);
            if v > best_val {
                best_val = v;
                best = m;
            }
        }
        best
    }

    pub fn sample_harq<R: Rng + ?Sized>(&self, mcs: usize, sinr_db: f64, rng: &mut R) -> Harq {
        sample_with_bler(self.bler(mcs, sinr_db), rng)
    }
}

/// Draws ACK with probability `1 - bler`.
pub fn sample_with_bler<R: Rng + ?Sized>(bler: f64, rng: &mut R) -> Harq {
    let u: f64 = rng.gen();
    if u >= bler {
        Harq::Ack
    } else {
        Harq::Nack
    }
}

/// BLER of `mcs` from the bundled table.
pub fn bler(model: &BlerModel<f64>, mcs: usize, sinr_db: f64) -> Result<f64> {
    model.bler(McsTable::table1(), mcs, sinr_db)
}

/// HARQ draw for `mcs` from the bundled table.
pub fn sample_harq<R: Rng + ?Sized>(model: &BlerModel<f64>, mcs: usize, sinr_db: f64, rng: &mut R) -> Result<Harq> {
    Ok(sample_with_bler(bler(model, mcs, sinr_db)?, rng))
}

/// Delay and quantization of the effective-SINR report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackConfig {
    /// Slots between measurement and availability, >= 1.
    pub report_delay_slots: usize,
    /// Report granularity in dB; 0 disables quantization.
    pub quant_step_db: f64,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        Self {
            report_delay_slots: 1,
            quant_step_db: 1.0,
        }
    }
}

impl FeedbackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.report_delay_slots < 1 {
            return Err(Error::Config("report delay must be >= 1 slot".into()));
        }
        if !(self.quant_step_db >= 0.0 && self.quant_step_db.is_finite()) {
            return Err(Error::Config("quantization step must be >= 0".into()));
        }
        Ok(())
    }

    pub fn quantize(&self, sinr_db: f64) -> f64 {
        if self.quant_step_db > 0.0 {
            (sinr_db / self.quant_step_db).round() * self.quant_step_db
        } else {
            sinr_db
        }
    }

    /// Slot whose measurement is reported at `slot`.
    pub fn measured_slot(&self, slot: usize) -> usize {
        slot.saturating_sub(self.report_delay_slots)
    }
}

/// Report available at `slot` for `ue`: the true SINR of slot `max(0, slot - d)`, quantized.
pub fn report_effective_sinr(trace: &SinrTrace, cfg: &FeedbackConfig, slot: usize, ue: usize) -> f64 {
    let t = cfg.measured_slot(slot).min(trace.num_slots() - 1);
    cfg.quantize(trace.get(ue, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn curves() -> LinkCurves {
        LinkCurves::new(McsTable::table1(), BlerModel::default()).unwrap()
    }

    #[test]
    fn midpoint_is_half() {
        let c = curves();
        for m in 0..29 {
            assert!((c.bler(m, c.gamma50(m)) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn gamma50_hand_value() {
        // 10*log10(2^(4*340/1024) - 1) + 2, evaluated by hand: 2^1.328125 = 2.51066,
        // 10*log10(1.51066) = 1.79166, plus 2 dB.
        let m = BlerModel::<f64>::new(2.0, 2.0).unwrap();
        let g = m.gamma50(McsTable::table1(), 10).unwrap();
        assert!((g - 3.7917).abs() < 1e-3, "{g}");
        assert!((g - 3.79).abs() < 0.01);
    }

    #[test]
    fn logistic_limits() {
        let c = curves();
        assert!(c.bler(5, 500.0) < 1e-12);
        assert!(c.bler(5, -500.0) > 1.0 - 1e-12);
    }

    #[test]
    fn f32_and_f64_agree() {
        let m64 = BlerModel::<f64>::default();
        let m32 = BlerModel::<f32>::default();
        for m in [0usize, 10, 28] {
            for s in [-5.0, 3.0, 12.0, 20.0] {
                let a = m64.bler(McsTable::table1(), m, s).unwrap();
                let b = m32.bler(McsTable::table1(), m, s as f32).unwrap();
                assert!((a - f64::from(b)).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn invalid_model() {
        assert!(BlerModel::<f64>::new(0.0, 2.0).is_err());
        assert!(BlerModel::<f64>::new(1.0, -1.0).is_err());
        assert!(bler(&BlerModel::default(), 29, 0.0).is_err());
    }

    #[test]
    fn harq_extremes() {
        let c = curves();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sinr = c.gamma50(12) + 20.0 / 2.0;
        let acks = (0..10_000).filter(|_| c.sample_harq(12, sinr, &mut rng).is_ack()).count();
        // Closed form BLER here is 1/(1+e^20) ~ 2e-9.
        assert!(acks as f64 / 10_000.0 > 0.999);
        let mid = c.gamma50(12);
        let acks = (0..10_000).filter(|_| c.sample_harq(12, mid, &mut rng).is_ack()).count();
        assert!((acks as f64 / 10_000.0 - 0.5).abs() < 0.02);
    }

    #[test]
    fn harq_reproducible() {
        let m = BlerModel::default();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..200)
                .map(|i| sample_harq(&m, i % 29, 8.0, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
    }

    #[test]
    fn reports_delay_and_quantize() {
        let trace = SinrTrace::new(0, vec![(0..10).map(|t| t as f64 + 0.4).collect()]).unwrap();
        let pure = FeedbackConfig {
            report_delay_slots: 1,
            quant_step_db: 0.0,
        };
        assert_eq!(report_effective_sinr(&trace, &pure, 5, 0), trace.get(0, 4));
        let q = FeedbackConfig {
            report_delay_slots: 3,
            quant_step_db: 1.0,
        };
        // slot 9 reports slot 6, true value 6.4 -> 6.0
        assert_eq!(report_effective_sinr(&trace, &q, 9, 0), 6.0);
        assert_eq!(report_effective_sinr(&trace, &q, 1, 0), 0.0);
        assert_eq!(report_effective_sinr(&trace, &pure, 0, 0), 0.4);
    }

    #[test]
    fn unique_interior_maximizer_mid_range() {
        let c = curves();
        for sinr in [4.0, 8.0, 12.0, 16.0] {
            let vals: Vec<f64> = (0..29).map(|m| c.expected_se(m, sinr)).collect();
            let best = c.best_mcs(sinr);
            assert!(best > 0 && best < 28, "sinr {sinr}: best {best}");
            let n_max = vals.iter().filter(|&&v| (v - vals[best]).abs() < 1e-12).count();
            assert_eq!(n_max, 1);
        }
    }
}
