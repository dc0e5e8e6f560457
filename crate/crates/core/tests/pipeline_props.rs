use proptest::prelude::*;
use wakelink_core::pipeline::{
    predict_set, random_models, run_trial, top_k_set, trial_energy, ExampleRunner, LinkRealization,
    TrialPolicy,
};
use wakelink_core::signal::example_at;
use wakelink_core::{derive_stream, ExperimentConfig, Hyperparams, Purpose, Split};

proptest! {
    #[test]
    fn sets_nest_in_decision_threshold(
        counts in prop::collection::vec(0u32..60, 2..10),
        a in 0.0f64..20.0,
        b in 0.0f64..20.0,
        label in 0usize..10,
    ) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (s_lo, _) = predict_set(&counts, lo);
        let (s_hi, _) = predict_set(&counts, hi);
        prop_assert!(s_lo.is_subset(s_hi));
        let label = label % counts.len();
        prop_assert!(u8::from(!s_lo.contains(label)) >= u8::from(!s_hi.contains(label)));
        prop_assert!(s_lo.len() <= s_hi.len());
        prop_assert_eq!(predict_set(&counts, f64::INFINITY).0.len(), counts.len());
    }

    #[test]
    fn probabilities_sum_to_one(counts in prop::collection::vec(0u32..200, 1..10)) {
        let (_, sv) = predict_set(&counts, 1.0);
        prop_assert!((sv.p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn top_k_has_k_largest(counts in prop::collection::vec(0u32..20, 2..10), k in 1usize..4) {
        let set = top_k_set(&counts, k);
        prop_assert_eq!(set.len(), k.min(counts.len()));
        let min_in = set.iter().map(|c| counts[c]).min().unwrap();
        for c in 0..counts.len() {
            if !set.contains(c) {
                prop_assert!(counts[c] <= min_in);
            }
        }
    }

    #[test]
    fn later_detection_never_costs_more(a in 1usize..80, b in 1usize..80) {
        let cfg = ExperimentConfig::desk().sim;
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (e_lo, e_hi) = (trial_energy(Some(lo), &cfg), trial_energy(Some(hi), &cfg));
        prop_assert!(e_hi <= e_lo);
        prop_assert!(e_hi >= 0.0 && e_lo <= cfg.p_on * cfg.l_max as f64);
    }
}

#[test]
fn energy_formula_examples() {
    let cfg = wakelink_core::default_paper_config();
    assert_eq!(trial_energy(Some(50), &cfg), 9.0);
    assert_eq!(trial_energy(Some(1), &cfg), 58.0);
    assert_eq!(trial_energy(None, &cfg), 0.0);
}

/// The runner caches detections, receptions and counts across candidates;
/// the cached answers must equal a fresh single-trial run.
#[test]
fn cached_runner_matches_fresh_trials() {
    let exp = ExperimentConfig::desk();
    let cfg = &exp.sim;
    let models = random_models(cfg, 16, 8, 8, 0.9, 0.5, &mut derive_stream(2, Purpose::Init, 0));
    let lambdas = exp.grid.candidates();
    for k in 0..6 {
        let ex = example_at(cfg, &exp.data, Split::Dt, 0, k);
        let link = LinkRealization::draw(cfg, &exp.twin, Split::Dt, 0, k);
        for policy in [TrialPolicy::WAKE_UP, TrialPolicy::ALWAYS_ON, TrialPolicy::CONVENTIONAL] {
            let mut runner = ExampleRunner::new(&ex, &link, &models, cfg);
            for (j, lambda) in lambdas.iter().enumerate().rev() {
                if j % 7 != 0 {
                    continue;
                }
                let cached = runner.run(lambda, &policy);
                let fresh = run_trial(&ex, lambda, &link, &models, cfg, &policy);
                assert_eq!(cached, fresh);
            }
        }
    }
}

#[test]
fn trials_are_deterministic_and_bounded() {
    let exp = ExperimentConfig::desk();
    let cfg = &exp.sim;
    let models = random_models(cfg, 16, 8, 8, 0.9, 0.5, &mut derive_stream(2, Purpose::Init, 0));
    let lambda = Hyperparams::new(5.0, 1.0, 3.0).unwrap();
    for k in 0..10 {
        let ex = example_at(cfg, &exp.data, Split::Pt, 3, k);
        let a = run_trial(&ex, &lambda, &LinkRealization::draw(cfg, &exp.physical, Split::Pt, 3, k), &models, cfg, &TrialPolicy::WAKE_UP);
        let b = run_trial(&ex, &lambda, &LinkRealization::draw(cfg, &exp.physical, Split::Pt, 3, k), &models, cfg, &TrialPolicy::WAKE_UP);
        assert_eq!(a, b);
        assert!(a.energy >= 0.0 && a.energy <= cfg.p_on * cfg.l_max as f64);
        assert_eq!(a.set_size, a.prediction.len());
        assert_eq!(a.loss, u8::from(!a.prediction.contains(ex.label)));
    }
}

#[test]
fn conventional_sets_have_two_classes() {
    let exp = ExperimentConfig::desk();
    let cfg = &exp.sim;
    let models = random_models(cfg, 16, 8, 8, 0.9, 0.5, &mut derive_stream(2, Purpose::Init, 0));
    let lambda = Hyperparams::new(0.0, 0.0, 0.0).unwrap();
    for k in 0..10 {
        let ex = example_at(cfg, &exp.data, Split::Test, 0, k);
        let link = LinkRealization::draw(cfg, &exp.physical, Split::Test, 0, k);
        let r = run_trial(&ex, &lambda, &link, &models, cfg, &TrialPolicy::CONVENTIONAL);
        assert_eq!(r.set_size, 2);
        assert_eq!(r.energy, cfg.p_on * cfg.l_max as f64);
    }
}
