use privaudit::metrics::{auc, roc, tpr_at_fpr, ScoreSet, LOW_FPR};
use proptest::prelude::*;
use rand::Rng;
use tensor::rng;

/// Scores with a mix of continuous values and heavy ties.
fn random_set(r: &mut rng::StreamRng, n: usize) -> ScoreSet {
    let tied = r.random_bool(0.5);
    let mut labels: Vec<u8> = (0..n).map(|_| u8::from(r.random_bool(0.5))).collect();
    labels[0] = 1;
    labels[1] = 0;
    let scores = (0..n)
        .map(|_| {
            let s: f64 = r.random();
            if tied {
                (s * 5.0).floor()
            } else {
                s
            }
        })
        .collect();
    ScoreSet::new(scores, labels).unwrap()
}

/// Pairwise Mann-Whitney: P(member score > non-member score) + ties / 2.
fn pairwise_auc(set: &ScoreSet) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &li) in set.labels.iter().enumerate() {
        for (j, &lj) in set.labels.iter().enumerate() {
            if li == 1 && lj == 0 {
                pairs += 1.0;
                let (a, b) = (set.scores[i], set.scores[j]);
                wins += if a > b { 1.0 } else if a == b { 0.5 } else { 0.0 };
            }
        }
    }
    wins / pairs
}

/// (FPR, TPR) for "score >= tau" at +inf and every distinct score.
fn swept_points(set: &ScoreSet) -> Vec<(f64, f64)> {
    let mut taus: Vec<f64> = set.scores.clone();
    taus.sort_by(|a, b| b.total_cmp(a));
    taus.dedup();
    let p = set.labels.iter().filter(|&&l| l == 1).count() as f64;
    let n = set.labels.len() as f64 - p;
    let mut out = vec![(0.0, 0.0)];
    for tau in taus {
        let (mut tp, mut fp) = (0.0, 0.0);
        for (&s, &l) in set.scores.iter().zip(&set.labels) {
            if s >= tau {
                if l == 1 {
                    tp += 1.0;
                } else {
                    fp += 1.0;
                }
            }
        }
        out.push((fp / n, tp / p));
    }
    out
}

#[test]
fn roc_matches_confusion_matrix_sweep() {
    let mut r = rng::stream(0, "roc-oracle");
    for _ in 0..50 {
        let set = random_set(&mut r, 20);
        let curve = roc(&set).unwrap();
        assert_eq!(curve.points().collect::<Vec<_>>(), swept_points(&set));
    }
}

#[test]
fn auc_equals_pairwise_oracle_on_1000_sets() {
    let mut r = rng::stream(1, "auc-oracle");
    for _ in 0..1000 {
        let n = r.random_range(2..=200);
        let set = random_set(&mut r, n);
        let got = auc(&roc(&set).unwrap());
        assert!((got - pairwise_auc(&set)).abs() < 1e-12);
    }
}

#[test]
fn tpr_at_low_fpr_matches_sweep() {
    let mut r = rng::stream(2, "tpr-oracle");
    for _ in 0..200 {
        let n = r.random_range(2..=200);
        let set = random_set(&mut r, n);
        let best = swept_points(&set)
            .into_iter()
            .filter(|&(f, _)| f <= LOW_FPR)
            .map(|(_, t)| t)
            .fold(0.0, f64::max);
        assert_eq!(tpr_at_fpr(&roc(&set).unwrap(), LOW_FPR), best);
    }
}

#[test]
fn uninformative_scores_give_tpr_near_target_fpr() {
    let mut r = rng::stream(3, "tpr-null");
    let trials = 20;
    let mut mean = 0.0;
    for _ in 0..trials {
        let scores: Vec<f64> = (0..2000).map(|_| r.random()).collect();
        let labels = (0..2000).map(|i| u8::from(i % 2 == 0)).collect();
        mean += tpr_at_fpr(&roc(&ScoreSet::new(scores, labels).unwrap()).unwrap(), LOW_FPR) / trials as f64;
    }
    assert!((mean - 0.1).abs() < 0.03, "mean TPR {mean}");
}

#[test]
fn separated_scores_reach_full_tpr_at_any_target() {
    let set = ScoreSet::new(vec![0.9, 0.8, 0.7, 0.6, 0.5, 0.4], vec![1, 1, 1, 0, 0, 0]).unwrap();
    let curve = roc(&set).unwrap();
    assert_eq!(auc(&curve), 1.0);
    for target in [0.0, 0.01, 0.1, 0.5] {
        assert_eq!(tpr_at_fpr(&curve, target), 1.0);
    }
}

fn scored() -> impl Strategy<Value = ScoreSet> {
    prop::collection::vec((-1e3f64..1e3, any::<bool>()), 2..60).prop_map(|v| {
        let mut labels: Vec<u8> = v.iter().map(|&(_, b)| u8::from(b)).collect();
        labels[0] = 1;
        labels[1] = 0;
        ScoreSet::new(v.into_iter().map(|(s, _)| s).collect(), labels).unwrap()
    })
}

proptest! {
    #[test]
    fn auc_is_invariant_under_increasing_maps(set in scored()) {
        let mapped = ScoreSet::new(set.scores.iter().map(|s| (s / 100.0).tanh() * 3.0 + 1.0).collect(), set.labels.clone()).unwrap();
        // tanh may merge distinct scores, so compare only when it is injective here.
        let mut a = set.scores.clone();
        a.sort_by(f64::total_cmp);
        a.dedup();
        let mut b = mapped.scores.clone();
        b.sort_by(f64::total_cmp);
        b.dedup();
        prop_assume!(a.len() == b.len());
        prop_assert_eq!(auc(&roc(&set).unwrap()), auc(&roc(&mapped).unwrap()));
    }

    #[test]
    fn negated_scores_complement_auc(set in scored()) {
        let neg = ScoreSet::new(set.scores.iter().map(|s| -s).collect(), set.labels.clone()).unwrap();
        let sum = auc(&roc(&set).unwrap()) + auc(&roc(&neg).unwrap());
        prop_assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tpr_grows_with_target_fpr(set in scored(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let curve = roc(&set).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(tpr_at_fpr(&curve, lo) <= tpr_at_fpr(&curve, hi));
    }

    #[test]
    fn roc_is_monotone_from_origin_to_corner(set in scored()) {
        let curve = roc(&set).unwrap();
        let pts: Vec<_> = curve.points().collect();
        prop_assert_eq!(pts[0], (0.0, 0.0));
        prop_assert_eq!(*pts.last().unwrap(), (1.0, 1.0));
        prop_assert!(pts.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
    }
}
