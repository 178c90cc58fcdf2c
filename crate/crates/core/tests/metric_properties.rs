use proptest::prelude::*;
use rand::Rng;
use seld_forge::metrics::{location_sensitive_fscore, threshold_sweep, EventInstance, PositionMode};
use seld_forge::seed;

fn instances(rng: &mut impl Rng, n: usize, frames: usize, classes: usize) -> Vec<EventInstance> {
    (0..n)
        .map(|_| EventInstance {
            frame: rng.random_range(0..frames),
            class_id: rng.random_range(0..classes),
            position: std::array::from_fn(|_| rng.random_range(-2.0..2.0)),
        })
        .collect()
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Minimum total distance over every injection of the smaller side into
/// the larger, returning the matched distances.
fn best_matching(small: &[[f64; 3]], large: &[[f64; 3]]) -> Vec<f64> {
    fn go(i: usize, small: &[[f64; 3]], large: &[[f64; 3]], used: &mut Vec<bool>, cur: &mut Vec<f64>, best: &mut (f64, Vec<f64>)) {
        if i == small.len() {
            let total: f64 = cur.iter().sum();
            if total < best.0 {
                *best = (total, cur.clone());
            }
            return;
        }
        for j in 0..large.len() {
            if !used[j] {
                used[j] = true;
                cur.push(dist(small[i], large[j]));
                go(i + 1, small, large, used, cur, best);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let mut best = (f64::INFINITY, Vec::new());
    go(0, small, large, &mut vec![false; large.len()], &mut Vec::new(), &mut best);
    best.1
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn matches_brute_force_on_small_sets(s in any::<u64>(), np in 0usize..=5, nr in 0usize..=5, t in 0.1f64..4.0) {
        let mut rng = seed::rng(s);
        let preds = instances(&mut rng, np, 1, 1);
        let refs = instances(&mut rng, nr, 1, 1);
        let p: Vec<_> = preds.iter().map(|e| e.position).collect();
        let r: Vec<_> = refs.iter().map(|e| e.position).collect();
        let matched = if np <= nr { best_matching(&p, &r) } else { best_matching(&r, &p) };
        let tp = matched.iter().filter(|&&d| d <= t).count();
        let report = location_sensitive_fscore(&preds, &refs, t, PositionMode::Cartesian).unwrap();
        prop_assert_eq!((report.true_positives, report.false_positives, report.false_negatives), (tp, np - tp, nr - tp));
    }

    #[test]
    fn swapping_sides_swaps_precision_and_recall(s in any::<u64>(), np in 0usize..40, nr in 0usize..40, t in 0.1f64..4.0) {
        let mut rng = seed::rng(s);
        let preds = instances(&mut rng, np, 10, 3);
        let refs = instances(&mut rng, nr, 10, 3);
        let a = location_sensitive_fscore(&preds, &refs, t, PositionMode::Cartesian).unwrap();
        let b = location_sensitive_fscore(&refs, &preds, t, PositionMode::Cartesian).unwrap();
        prop_assert_eq!(a.true_positives, b.true_positives);
        prop_assert_eq!(a.precision, b.recall);
        prop_assert_eq!(a.recall, b.precision);
        prop_assert!((a.f_score - b.f_score).abs() <= 1e-15);
    }

    #[test]
    fn classes_score_independently(s in any::<u64>(), np in 0usize..40, nr in 0usize..40, t in 0.1f64..4.0) {
        let mut rng = seed::rng(s);
        let preds = instances(&mut rng, np, 10, 3);
        let refs = instances(&mut rng, nr, 10, 3);
        let whole = location_sensitive_fscore(&preds, &refs, t, PositionMode::Cartesian).unwrap();
        let mut tp = 0;
        for k in 0..3 {
            let only = |v: &[EventInstance]| v.iter().copied().filter(|e| e.class_id == k).collect::<Vec<_>>();
            tp += location_sensitive_fscore(&only(&preds), &only(&refs), t, PositionMode::Cartesian).unwrap().true_positives;
        }
        prop_assert_eq!(whole.true_positives, tp);
        let relabelled: Vec<_> = preds.iter().map(|e| EventInstance { class_id: e.class_id + 3, ..*e }).collect();
        prop_assert_eq!(location_sensitive_fscore(&relabelled, &refs, t, PositionMode::Cartesian).unwrap().true_positives, 0);
    }

    #[test]
    fn looser_thresholds_never_score_lower(s in any::<u64>(), np in 0usize..40, nr in 0usize..40) {
        let mut rng = seed::rng(s);
        let preds = instances(&mut rng, np, 10, 3);
        let refs = instances(&mut rng, nr, 10, 3);
        let ts = [0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 7.0];
        let sweep = threshold_sweep(&preds, &refs, &ts, PositionMode::Cartesian).unwrap();
        for w in sweep.windows(2) {
            prop_assert!(w[0].true_positives <= w[1].true_positives);
            prop_assert!(w[0].f_score <= w[1].f_score);
        }
    }
}
