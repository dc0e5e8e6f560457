use proptest::prelude::*;
use rand::Rng;
use wakelink_core::calibrate::{
    fixed_sequence_test, hoeffding_p_value, on_air_calibrate, psi_threshold, CalibrationSetup, CandidateEval,
    Method, Origin, Preselection, SelectionRule, TrialSource,
};
use wakelink_core::pipeline::{random_models, run_trial, LinkRealization, TrialPolicy};
use wakelink_core::signal::example_at;
use wakelink_core::{derive_stream, ExperimentConfig, Hyperparams, Purpose, Sequential, Split};

#[test]
fn psi_golden_value() {
    assert!((psi_threshold(0.2, 0.05, 6000) - 0.184200).abs() < 1e-6);
}

#[test]
fn p_value_golden_value() {
    // exp(-2 * 100 * 0.1^2) = exp(-2)
    assert!((hoeffding_p_value(0.1, 0.2, 100) - 0.135335).abs() < 1e-6);
    assert!((hoeffding_p_value(0.1, 0.2, 100) - (-2.0f64).exp()).abs() < 1e-15);
}

#[test]
fn p_value_is_one_at_or_above_alpha() {
    assert_eq!(hoeffding_p_value(0.3, 0.2, 50), 1.0);
    assert_eq!(hoeffding_p_value(0.2, 0.2, 50), 1.0);
}

/// `loss < psi` and `p-value < delta` are the same test: at the threshold the
/// p-value equals `delta`, and off the threshold both sides agree.
#[test]
fn stopping_rule_matches_p_value_test() {
    let mut rng = derive_stream(11, Purpose::Data, 0);
    let mut checked = 0;
    while checked < 1000 {
        let alpha = rng.random_range(0.01..0.5);
        let delta = rng.random_range(0.001..0.5);
        let n = rng.random_range(10..10_000usize);
        let psi = psi_threshold(alpha, delta, n);
        if psi <= 0.0 {
            continue;
        }
        checked += 1;
        assert!((hoeffding_p_value(psi, alpha, n) - delta).abs() < 1e-12);
        let loss = rng.random_range(0.0..alpha);
        let by_p = hoeffding_p_value(loss, alpha, n) < delta;
        let by_psi = loss < psi;
        if (loss - psi).abs() > 1e-9 {
            assert_eq!(by_p, by_psi, "alpha {alpha} delta {delta} n {n} loss {loss}");
        }
    }
}

/// Under the boundary null (true loss exactly alpha) the p-value is
/// super-uniform: P(p <= u) <= u.
#[test]
fn p_value_super_uniform_at_boundary_null() {
    let (alpha, n, sims) = (0.2, 100, 4000);
    let mut rng = derive_stream(12, Purpose::Data, 0);
    let ps: Vec<f64> = (0..sims)
        .map(|_| {
            let losses = (0..n).filter(|_| rng.random::<f64>() < alpha).count();
            hoeffding_p_value(losses as f64 / n as f64, alpha, n)
        })
        .collect();
    for u in [0.01, 0.05, 0.1, 0.2, 0.5] {
        let frac = ps.iter().filter(|&&p| p <= u).count() as f64 / sims as f64;
        let slack = 3.0 * (u * (1.0 - u) / sims as f64).sqrt();
        assert!(frac <= u + slack, "u {u}: {frac}");
    }
}

fn ev(k: usize, loss: f64, objective: f64) -> CandidateEval {
    CandidateEval {
        lambda: Hyperparams {
            lambda_s: k as f64,
            lambda_w: 0.0,
            lambda_d: 0.0,
            secure: false,
        },
        loss_hat: loss,
        energy_hat: objective,
        size_hat: 0.0,
        origin: Origin::Pt,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn fixed_sequence_invariants(
        pts in prop::collection::vec((0.0f64..0.4, 0.0f64..100.0), 1..40),
        psi in 0.0f64..0.3,
    ) {
        let evals: Vec<CandidateEval> = pts.iter().enumerate().map(|(k, &(l, o))| ev(k, l, o)).collect();
        let r = fixed_sequence_test(&evals, psi, 1.0, SelectionRule::Certified);
        let stop = evals.iter().position(|e| e.loss_hat > psi);
        prop_assert_eq!(r.j_stop, stop.map_or(evals.len(), |k| k + 1));
        prop_assert_eq!(r.tested.len(), r.j_stop);
        if stop == Some(0) {
            prop_assert!(r.secure);
            prop_assert_eq!(r.lambda_star, Hyperparams::SECURE);
        } else {
            let sel = r.selected.unwrap();
            let passed = stop.unwrap_or(evals.len());
            prop_assert!(sel < passed);
            prop_assert!(r.tested[sel].loss_hat <= psi);
            for j in 0..passed {
                prop_assert!(r.tested[sel].objective(1.0) <= r.tested[j].objective(1.0));
            }
            let lit = fixed_sequence_test(&evals, psi, 1.0, SelectionRule::Literal);
            prop_assert!(lit.tested[lit.selected.unwrap()].objective(1.0) <= r.tested[sel].objective(1.0));
        }
    }
}

#[test]
fn secure_triple_gives_fallback_on_every_trial() {
    let exp = ExperimentConfig::desk();
    let cfg = &exp.sim;
    let models = random_models(cfg, 8, 6, 5, 0.9, 1.0, &mut derive_stream(1, Purpose::Init, 0));
    for policy in [TrialPolicy::WAKE_UP, TrialPolicy::ALWAYS_ON, TrialPolicy::CONVENTIONAL] {
        for k in 0..20 {
            let ex = example_at(cfg, &exp.data, Split::Test, 0, k);
            let link = LinkRealization::draw(cfg, &exp.physical, Split::Test, 0, k);
            let r = run_trial(&ex, &Hyperparams::SECURE, &link, &models, cfg, &policy);
            assert_eq!((r.loss, r.energy, r.set_size), (0, 0.0, cfg.classes));
        }
    }
}

#[test]
fn negative_psi_is_secure() {
    let mut exp = ExperimentConfig::desk();
    exp.sim.alpha = 0.05;
    exp.sim.delta = 0.05;
    let models = random_models(&exp.sim, 8, 6, 5, 0.9, 1.0, &mut derive_stream(1, Purpose::Init, 0));
    let setup = CalibrationSetup {
        cfg: &exp.sim,
        data: &exp.data,
        physical: &exp.physical,
        twin: &exp.twin,
        grid: &exp.grid,
        models: &models,
        rule: SelectionRule::Certified,
    };
    let pre = Preselection {
        method: Method::Dtltt,
        candidates: vec![Hyperparams::new(0.0, 1.0, 9.0).unwrap()],
        twin: Vec::new(),
        front: None,
    };
    let on_air = TrialSource::generated(Split::Pt, 0, 20, &exp.data, &exp.physical);
    assert!(psi_threshold(0.05, 0.05, 20) < 0.0);
    let r = on_air_calibrate(&pre, &on_air, &setup, &Sequential).unwrap();
    assert!(r.secure);
    assert_eq!(r.lambda_star, Hyperparams::SECURE);
}
