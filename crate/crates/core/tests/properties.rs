mod common;

use chainscope::analysis::{cluster_nodes, detect_knee, rolling_mean};
use chainscope::metrics::{frame_to_csv_string, parse_csv};
use common::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn rolling_mean_matches_brute_force((s, w) in rolling_case()) {
        let got = rolling_mean(&s, w).unwrap();
        for (g, e) in got.iter().zip(brute_rolling(&s, w)) {
            prop_assert_eq!(g.0, e.0);
            prop_assert!((g.1 - e.1).abs() <= 1e-9 * (1.0 + e.1.abs()));
        }
    }

    #[test]
    fn csv_round_trip(f in frame_strategy()) {
        prop_assert_eq!(parse_csv(&frame_to_csv_string(&f)).unwrap(), f);
    }

    #[test]
    fn noiseless_knee_is_exact(n in 8usize..30, kf in 0.0..1.0_f64, slope in 0.01..10.0_f64, ratio in 0.0..0.1_f64) {
        let k = 1 + ((n - 5) as f64 * kf) as usize;
        let curve = two_segment(n, k, slope, ratio, 5.0, 100.0);
        prop_assert_eq!(detect_knee(&curve).unwrap().knee_x, Some(curve[k].0));
    }

    #[test]
    fn grouping_ignores_order_and_scale(vals in prop::collection::vec(0.1..1e3_f64, 1..12), scale in 0.01..100.0_f64, rot in 0usize..12) {
        let named: Vec<(String, f64)> = vals.iter().enumerate().map(|(i, v)| (format!("n{i}"), *v)).collect();
        let mut moved = named.clone();
        moved.rotate_left(rot % named.len());
        let scaled: Vec<(String, f64)> = moved.iter().map(|(n, v)| (n.clone(), v * scale)).collect();
        let (a, b) = (cluster_nodes(&named), cluster_nodes(&scaled));
        prop_assert_eq!(a.groups, b.groups);
        prop_assert_eq!(a.labels, b.labels);
    }
}

#[test]
fn knee_recovery_with_and_without_noise() {
    check_knee_recovery().unwrap();
}

#[test]
fn simulated_runs_conserve_transactions_and_bound_cores() {
    check_oracles().unwrap();
}
