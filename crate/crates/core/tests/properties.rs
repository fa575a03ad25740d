use linkadapt::baselines::OllaState;
use linkadapt::channel::SinrTrace;
use linkadapt::env::{EnvConfig, LinkAdaptEnv};
use linkadapt::metrics::cdf_table;
use linkadapt::predictors::{PredictorConfig, PredictorMode};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #[test]
    fn olla_choice_is_monotone_in_report(a in -20.0f64..50.0, b in -20.0f64..50.0, offset in -15.0f64..15.0) {
        let curves = EnvConfig::default().curves().unwrap();
        let mut olla = OllaState::with_defaults(1);
        olla.offset_db[0] = offset;
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(olla.select(&curves, 0, lo) <= olla.select(&curves, 0, hi));
    }

    #[test]
    fn bler_decreases_with_sinr(m in 0usize..29, a in -30.0f64..60.0, b in -30.0f64..60.0) {
        let curves = EnvConfig::default().curves().unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (p_lo, p_hi) = (curves.bler(m, lo), curves.bler(m, hi));
        prop_assert!(p_hi <= p_lo);
        prop_assert!((0.0..=1.0).contains(&p_lo) && (0.0..=1.0).contains(&p_hi));
    }

    #[test]
    fn cdf_is_monotone_and_covers_data(values in prop::collection::vec(-100.0f64..100.0, 1..400)) {
        let t = cdf_table(&values, 200);
        prop_assert_eq!(t.len(), 200);
        prop_assert!(t.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 < w[1].1));
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(t[199], (max, 1.0));
    }

    #[test]
    fn state_stays_finite_and_sized(
        sinr in prop::collection::vec(prop::collection::vec(-30.0f64..60.0, 40), 1..4),
        actions in prop::collection::vec(0usize..29, 40),
        k_e in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let cfg = EnvConfig { k_e, ..EnvConfig::default() };
        let n = sinr.len();
        let trace = SinrTrace::new(0, sinr).unwrap();
        let p = cfg.predictor(PredictorMode::Kf, n, &PredictorConfig::default()).unwrap();
        let (mut env, state) = LinkAdaptEnv::reset(cfg.clone(), trace, p).unwrap();
        prop_assert_eq!(state.len(), cfg.state_len(n));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for &a in &actions {
            let step = env.step(&vec![a; n], &mut rng).unwrap();
            prop_assert_eq!(step.state.len(), cfg.state_len(n));
            prop_assert!(step.state.ue(0).iter().all(|v| v.is_finite()));
            prop_assert!(step.reward.is_finite());
        }
        prop_assert!(env.is_done());
    }
}
