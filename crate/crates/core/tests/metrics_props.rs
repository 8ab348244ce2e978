mod common;

use proptest::prelude::*;
use xp300::metrics::{auc_mann_whitney, bits_per_selection, itr_bpm, paired_t_test, roc, MetricsError};
use xp300::scheduler::Paradigm;

fn scored() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    prop::collection::vec((0i32..20, any::<bool>()), 2..200)
        .prop_filter("both classes", |v| v.iter().any(|p| p.1) && v.iter().any(|p| !p.1))
        .prop_map(|v| v.into_iter().map(|(s, l)| (f64::from(s) * 0.25, l)).unzip())
}

proptest! {
    #[test]
    fn trapezoid_equals_rank_statistic((scores, labels) in scored()) {
        let curve = roc(&scores, &labels).unwrap();
        let mw = auc_mann_whitney(&scores, &labels).unwrap();
        prop_assert!((curve.auc - mw).abs() < 1e-12);
        prop_assert!((mw - common::pairwise_auc(&scores, &labels)).abs() < 1e-12);
        prop_assert_eq!(curve.points.first().copied(), Some((0.0, 0.0)));
        prop_assert_eq!(curve.points.last().copied(), Some((1.0, 1.0)));
        prop_assert!(curve.points.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
    }

    #[test]
    fn auc_is_rank_based((scores, labels) in scored()) {
        let base = auc_mann_whitney(&scores, &labels).unwrap();
        let warped: Vec<f64> = scores.iter().map(|s| (s * 3.0).exp() - 7.0).collect();
        let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
        prop_assert!((auc_mann_whitney(&warped, &labels).unwrap() - base).abs() < 1e-12);
        prop_assert!((auc_mann_whitney(&negated, &labels).unwrap() - (1.0 - base)).abs() < 1e-12);
    }

    #[test]
    fn bits_increase_with_accuracy(p in 0.05f64..0.99, dp in 0.001f64..0.01) {
        let m = 36;
        prop_assume!(p > 1.0 / m as f64);
        prop_assert!(bits_per_selection(p + dp, m).unwrap() > bits_per_selection(p, m).unwrap());
    }

    #[test]
    fn extra_slots_cost_throughput(p in 0.1f64..=1.0, reps in 1usize..=15) {
        let cp = itr_bpm(p, 36, Paradigm::Cp300, reps, 0.133, 6).unwrap();
        let xp = itr_bpm(p, 36, Paradigm::Xp300, reps, 0.133, 6).unwrap();
        prop_assert!((xp / cp - 12.0 / 14.0).abs() < 1e-12 || cp == 0.0);
    }

    #[test]
    fn t_statistic_matches_definition(d in prop::collection::vec(-10.0f64..10.0, 3..30)) {
        let zeros = vec![0.0; d.len()];
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        prop_assume!(sd > 1e-6);
        let t = paired_t_test(&d, &zeros).unwrap();
        prop_assert!((t.t - mean / (sd / n.sqrt())).abs() < 1e-9 * (1.0 + t.t.abs()));
        prop_assert!((t.p - 2.0 * t.p_one_sided).abs() < 1e-15 || t.p == 1.0);
        let swapped = paired_t_test(&zeros, &d).unwrap();
        prop_assert!((swapped.t + t.t).abs() < 1e-12);
    }
}

#[test]
fn t_test_on_small_differences() {
    let t = paired_t_test(&[1.0, 2.0, 3.0], &[0.0; 3]).unwrap();
    assert!((t.t - 3.4641).abs() < 1e-4);
    assert_eq!(t.df, 2);
    assert!(matches!(paired_t_test(&[1.0, 2.0], &[1.0, 2.0]), Err(MetricsError::DegenerateTest)));
}
