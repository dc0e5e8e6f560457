use proptest::prelude::*;
use wakelink_core::calibrate::{pareto_preselect, CandidateEval, Origin};
use wakelink_core::Hyperparams;

const GAMMA: f64 = 10.0;

fn eval(k: usize, loss: f64, energy: f64, size: f64) -> CandidateEval {
    CandidateEval {
        lambda: Hyperparams {
            lambda_s: (k % 7) as f64,
            lambda_w: ((k / 7) % 11) as f64,
            lambda_d: (k / 77) as f64,
            secure: false,
        },
        loss_hat: loss,
        energy_hat: energy,
        size_hat: size,
        origin: Origin::Dt,
    }
}

/// Weak-Pareto filter by exhaustive comparison, exact duplicates collapsed to
/// the lexicographically smallest triple, ordered by loss.
fn brute_front(evals: &[CandidateEval]) -> Vec<Hyperparams> {
    let obj = |e: &CandidateEval| e.objective(GAMMA);
    let mut keep: Vec<&CandidateEval> = Vec::new();
    for (i, a) in evals.iter().enumerate() {
        let dominated = evals.iter().enumerate().any(|(j, b)| {
            j != i
                && b.loss_hat <= a.loss_hat
                && obj(b) <= obj(a)
                && (b.loss_hat < a.loss_hat || obj(b) < obj(a))
        });
        let shadowed = evals.iter().any(|b| {
            b.loss_hat == a.loss_hat && obj(b) == obj(a) && b.lambda.lex_cmp(&a.lambda).is_lt()
        });
        if !dominated && !shadowed {
            keep.push(a);
        }
    }
    keep.sort_by(|a, b| a.loss_hat.total_cmp(&b.loss_hat));
    keep.iter().map(|e| e.lambda).collect()
}

fn instance(ties: bool) -> impl Strategy<Value = Vec<CandidateEval>> {
    let point = if ties {
        (0u8..4, 0u8..4, 0u8..3)
            .prop_map(|(l, e, s)| (f64::from(l) * 0.05, f64::from(e) * 10.0, f64::from(s) + 1.0))
            .boxed()
    } else {
        (0.0f64..1.0, 0.0f64..60.0, 0.0f64..4.0).boxed()
    };
    prop::collection::vec(point, 1..=500).prop_map(|pts| {
        pts.into_iter()
            .enumerate()
            .map(|(k, (l, e, s))| eval(k, l, e, s))
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn matches_exhaustive_filter(evals in instance(false)) {
        prop_assert_eq!(pareto_preselect(&evals, GAMMA).lambdas(), brute_front(&evals));
    }

    #[test]
    fn matches_exhaustive_filter_with_ties(evals in instance(true)) {
        prop_assert_eq!(pareto_preselect(&evals, GAMMA).lambdas(), brute_front(&evals));
    }

    #[test]
    fn front_is_sorted_and_strictly_improving(evals in instance(true)) {
        let front = pareto_preselect(&evals, GAMMA);
        for w in front.members.windows(2) {
            prop_assert!(w[0].loss_hat < w[1].loss_hat);
            prop_assert!(w[0].objective(GAMMA) > w[1].objective(GAMMA));
        }
    }
}

#[test]
fn single_point_is_its_own_front() {
    let e = [eval(3, 0.1, 5.0, 1.0)];
    assert_eq!(pareto_preselect(&e, GAMMA).lambdas(), vec![e[0].lambda]);
}
