use fairsinkhorn::metrics::{auc, deodds, dpd, es_auc, evaluate, groupwise_auc, Predictions};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

/// (concordant + 0.5 ties) / (P N) over every positive/negative pair.
fn brute_force_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li == 1 && lj == 0 {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / pairs
}

#[test]
fn auc_equals_pair_counting_on_small_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let mut checked = 0;
    for n in 2..=12 {
        for _ in 0..200 {
            // coarse score grid so ties are common
            let scores: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..5u8)) / 4.0).collect();
            let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2u8)).collect();
            if labels.iter().all(|&l| l == labels[0]) {
                assert!(auc(&scores, &labels).is_err());
                continue;
            }
            assert_eq!(auc(&scores, &labels).unwrap(), brute_force_auc(&scores, &labels));
            checked += 1;
        }
    }
    assert!(checked > 1500);
}

#[test]
fn table_two_es_auc() {
    let race = es_auc(0.7727, [0.7974, 0.7360, 0.7782]);
    assert!((race - 0.7243).abs() <= 5e-4, "{race}");
    let gender = es_auc(0.7727, [0.7425, 0.8088]);
    assert!((gender - 0.7247).abs() <= 5e-4, "{gender}");
    assert_eq!(es_auc(0.8, [0.8, 0.8, 0.8]), 0.8);
}

#[derive(Deserialize)]
struct Counts {
    tp: usize,
    #[serde(rename = "fn")]
    fn_: usize,
    fp: usize,
    tn: usize,
}

#[derive(Deserialize)]
struct ConfusionCase {
    name: String,
    threshold: f64,
    num_groups: usize,
    scores: Vec<f64>,
    labels: Vec<u8>,
    groups: Vec<usize>,
    counts: Vec<Counts>,
    dpd: f64,
    deodds: f64,
}

fn confusion_cases() -> Vec<ConfusionCase> {
    let text = include_str!("fixtures/confusion_cases.json");
    serde_json::from_str(text).unwrap()
}

#[test]
fn fixtures_are_consistent_with_their_counts() {
    for case in confusion_cases() {
        for (g, c) in case.counts.iter().enumerate() {
            let (mut tp, mut fn_, mut fp, mut tn) = (0, 0, 0, 0);
            for i in 0..case.scores.len() {
                if case.groups[i] != g {
                    continue;
                }
                match (case.labels[i], case.scores[i] >= case.threshold) {
                    (1, true) => tp += 1,
                    (1, false) => fn_ += 1,
                    (_, true) => fp += 1,
                    (_, false) => tn += 1,
                }
            }
            assert_eq!((tp, fn_, fp, tn), (c.tp, c.fn_, c.fp, c.tn), "{} group {g}", case.name);
        }
    }
}

#[test]
fn dpd_and_deodds_match_hand_tabulated_fixtures() {
    for case in confusion_cases() {
        let preds = Predictions::new(
            case.scores.clone(),
            case.labels.clone(),
            case.groups.clone(),
            case.num_groups,
            case.threshold,
        )
        .unwrap();
        let d = dpd(&preds).unwrap();
        let e = deodds(&preds).unwrap();
        assert!((d - case.dpd).abs() <= 1e-12, "{}: dpd {d}", case.name);
        assert!((e - case.deodds).abs() <= 1e-12, "{}: deodds {e}", case.name);
    }
}

#[test]
fn degenerate_groups() {
    let preds = Predictions::new(vec![0.9, 0.1, 0.8, 0.7], vec![1, 0, 1, 1], vec![0, 0, 1, 1], 2, 0.5).unwrap();
    let g = groupwise_auc(&preds);
    assert_eq!(g.len(), 1);
    assert_eq!(g[&0], 1.0);
    assert!(deodds(&preds).is_err());
    let empty = Predictions::new(vec![0.9, 0.1], vec![1, 0], vec![0, 0], 2, 0.5).unwrap();
    assert!(dpd(&empty).is_err());
}

#[test]
fn groupwise_auc_equals_auc_on_subsets() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..50 {
        let n = 60;
        let scores: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2u8)).collect();
        let groups: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let preds = Predictions::new(scores.clone(), labels.clone(), groups.clone(), 3, 0.5).unwrap();
        for (g, value) in groupwise_auc(&preds) {
            let idx: Vec<usize> = (0..n).filter(|&i| groups[i] == g).collect();
            let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
            let l: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
            assert_eq!(value, auc(&s, &l).unwrap());
        }
    }
}

#[test]
fn evaluate_composes_the_standalone_metrics() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..30 {
        let n = 80;
        let scores: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let groups: Vec<usize> = (0..n).map(|i| (i / 2) % 2).collect();
        let preds = Predictions::new(scores.clone(), labels.clone(), groups, 2, 0.5).unwrap();
        let r = evaluate(&preds, "gender").unwrap();
        let overall = auc(&scores, &labels).unwrap();
        let group = groupwise_auc(&preds);
        assert_eq!(r.auc, overall);
        assert_eq!(r.group_auc(), group);
        assert_eq!(r.es_auc, es_auc(overall, group.values().copied()));
        assert_eq!(r.dpd, dpd(&preds).unwrap());
        assert_eq!(r.deodds, deodds(&preds).unwrap());
        assert_eq!(r.sample_counts(), vec![40, 40]);
        assert_eq!(r.attribute_name, "gender");
    }
}

#[test]
fn perfect_classifier_report() {
    let scores = vec![0.9, 0.8, 0.1, 0.2, 0.95, 0.7, 0.3, 0.05];
    let labels = vec![1, 1, 0, 0, 1, 1, 0, 0];
    let groups = vec![0, 0, 0, 0, 1, 1, 1, 1];
    let r = evaluate(&Predictions::new(scores, labels, groups, 2, 0.5).unwrap(), "gender").unwrap();
    assert_eq!((r.auc, r.es_auc, r.dpd, r.deodds), (1.0, 1.0, 0.0, 0.0));
    assert!(r.groups.iter().all(|g| g.auc == Some(1.0)));
}

fn dataset() -> impl Strategy<Value = (Vec<f64>, Vec<u8>, Vec<usize>)> {
    (4usize..40).prop_flat_map(|n| {
        (
            proptest::collection::vec(-5.0f64..5.0, n),
            proptest::collection::vec(0u8..2, n),
            proptest::collection::vec(0usize..3, n),
        )
    })
}

fn both_classes(labels: &[u8]) -> bool {
    labels.contains(&0) && labels.contains(&1)
}

proptest! {
    #[test]
    fn auc_ignores_increasing_transforms((scores, labels, _) in dataset()) {
        prop_assume!(both_classes(&labels));
        let base = auc(&scores, &labels).unwrap();
        let exp: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
        let affine: Vec<f64> = scores.iter().map(|s| 3.0 * s + 7.0).collect();
        prop_assert_eq!(auc(&exp, &labels).unwrap(), base);
        prop_assert_eq!(auc(&affine, &labels).unwrap(), base);
    }

    #[test]
    fn negated_scores_complement_auc((scores, labels, _) in dataset()) {
        prop_assume!(both_classes(&labels));
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assume!(sorted.windows(2).all(|w| w[0] != w[1]));
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        prop_assert_eq!(auc(&scores, &labels).unwrap() + auc(&neg, &labels).unwrap(), 1.0);
    }

    #[test]
    fn es_auc_never_exceeds_auc(overall in 0.0f64..=1.0, groups in proptest::collection::vec(0.0f64..=1.0, 0..6)) {
        let e = es_auc(overall, groups.iter().copied());
        prop_assert!(e <= overall);
        if groups.iter().all(|&g| g == overall) {
            prop_assert_eq!(e, overall);
        } else {
            prop_assert!(e < overall || overall == 0.0);
        }
    }

    #[test]
    fn gaps_ignore_group_relabeling((scores, labels, groups) in dataset(), perm_seed in 0u64..1000) {
        let scores: Vec<f64> = scores.iter().map(|s| 1.0 / (1.0 + (-s).exp())).collect();
        let preds = Predictions::new(scores.clone(), labels.clone(), groups.clone(), 3, 0.5).unwrap();
        let mut perm = vec![0usize, 1, 2];
        let mut rng = ChaCha8Rng::seed_from_u64(perm_seed);
        for i in (1..3).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let relabeled: Vec<usize> = groups.iter().map(|&g| perm[g]).collect();
        let other = Predictions::new(scores, labels, relabeled, 3, 0.5).unwrap();
        match (dpd(&preds), dpd(&other)) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a, b);
                prop_assert!((0.0..=1.0).contains(&a));
            }
            (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
        }
        match (deodds(&preds), deodds(&other)) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a, b);
                prop_assert!((0.0..=1.0).contains(&a));
            }
            (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
        }
    }
}
