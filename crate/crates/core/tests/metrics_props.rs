use dtrnn::metrics::{accuracy, macro_f1, micro_f1};
use proptest::prelude::*;

/// Full confusion matrix, then F1 straight from its definition.
fn oracle(pred: &[usize], gold: &[usize], k: usize) -> (f64, f64) {
    let mut confusion = vec![vec![0usize; k]; k];
    for (&p, &g) in pred.iter().zip(gold) {
        confusion[g][p] += 1;
    }
    let mut per_class = Vec::new();
    let (mut tp_all, mut fp_all, mut fn_all) = (0, 0, 0);
    for c in 0..k {
        let tp = confusion[c][c];
        let fp: usize = (0..k).filter(|&g| g != c).map(|g| confusion[g][c]).sum();
        let fn_: usize = (0..k).filter(|&p| p != c).map(|p| confusion[c][p]).sum();
        let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        per_class.push(if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) });
        tp_all += tp;
        fp_all += fp;
        fn_all += fn_;
    }
    let micro = 2.0 * tp_all as f64 / (2 * tp_all + fp_all + fn_all) as f64;
    (per_class.iter().sum::<f64>() / k as f64, micro)
}

fn labelled() -> impl Strategy<Value = (usize, Vec<usize>, Vec<usize>)> {
    (1usize..8).prop_flat_map(|k| {
        (1usize..60).prop_flat_map(move |n| {
            (Just(k), prop::collection::vec(0..k, n), prop::collection::vec(0..k, n))
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn f1_matches_confusion_oracle((k, pred, gold) in labelled()) {
        let (macro_o, micro_o) = oracle(&pred, &gold, k);
        prop_assert!((macro_f1(&pred, &gold, k).unwrap() - macro_o).abs() < 1e-12);
        prop_assert!((micro_f1(&pred, &gold, k).unwrap() - micro_o).abs() < 1e-12);
    }

    #[test]
    fn micro_f1_equals_accuracy((k, pred, gold) in labelled()) {
        let acc = accuracy(&pred, &gold).unwrap();
        prop_assert!((micro_f1(&pred, &gold, k).unwrap() - acc).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&macro_f1(&pred, &gold, k).unwrap()));
    }
}
