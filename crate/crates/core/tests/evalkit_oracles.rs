mod common;

use ndarray::Array2;
use rand::Rng;
use sisvae::evalkit::*;
use sisvae::scoring::ScoreMatrix;

#[test]
fn metrics_match_brute_force_on_random_tied_data() {
    let mut r = common::rng(1);
    for _ in 0..100 {
        let (s, l) = common::random_labeled(&mut r, 30);
        let d = LabeledScores::new(s.clone(), l.clone()).unwrap();
        assert!((auroc(&d).unwrap() - common::auroc_pairwise(&s, &l)).abs() <= 1e-12);
        let pr = pr_curve_and_auprc(&d).unwrap();
        let (ap, f1) = common::pr_bruteforce(&s, &l);
        assert!((pr.auprc - ap).abs() <= 1e-12, "{} vs {ap}", pr.auprc);
        assert!((pr.best_f1 - f1).abs() <= 1e-12);
        for k in 1..=s.len() {
            assert_eq!(
                precision_at_k(&d, k).unwrap(),
                common::precision_at_k_oracle(&s, &l, k)
            );
        }
    }
}

#[test]
fn precision_at_k_on_larger_random_data() {
    let mut r = common::rng(2);
    let n = 300;
    let s: Vec<f64> = (0..n)
        .map(|_| (r.random_range(0..40) as f64).sqrt())
        .collect();
    let l: Vec<u8> = (0..n).map(|_| r.random_bool(0.1) as u8).collect();
    let d = LabeledScores::new(s.clone(), l.clone()).unwrap();
    for k in [10, 50] {
        let a = precision_at_k(&d, k).unwrap();
        assert_eq!(a, common::precision_at_k_oracle(&s, &l, k));
        assert_eq!(a, precision_at_k(&d, k).unwrap());
    }
    let prevalence = l.iter().filter(|&&v| v == 1).count() as f64 / n as f64;
    assert_eq!(precision_at_k(&d, n).unwrap(), prevalence);
}

#[test]
fn metrics_are_invariant_under_monotone_maps() {
    let mut r = common::rng(3);
    for _ in 0..50 {
        let (s, l) = common::random_labeled(&mut r, 40);
        let d = LabeledScores::new(s, l).unwrap();
        let base = (auroc(&d).unwrap(), pr_curve_and_auprc(&d).unwrap());
        for mapped in [
            d.map_scores(f64::exp).unwrap(),
            d.map_scores(|v| 3.0 * v - 7.0).unwrap(),
        ] {
            assert!((auroc(&mapped).unwrap() - base.0).abs() <= 1e-12);
            let pr = pr_curve_and_auprc(&mapped).unwrap();
            assert!((pr.auprc - base.1.auprc).abs() <= 1e-12);
            assert!((pr.best_f1 - base.1.best_f1).abs() <= 1e-12);
        }
    }
}

#[test]
fn scores_equal_to_labels_are_perfect() {
    let labels = Array2::from_shape_fn((4, 25), |(i, j)| ((i * 7 + j * 3) % 11 == 0) as u8);
    let sm = ScoreMatrix::full(labels.mapv(f64::from));
    let d = LabeledScores::from_matrix(&sm, labels.view()).unwrap();
    let report = evaluate(&d, &[1, 5]).unwrap();
    assert_eq!(
        (report.auroc, report.auprc, report.best_f1),
        (1.0, 1.0, 1.0)
    );
    assert_eq!(report.precision_at_k[&5], 1.0);
}

#[test]
fn only_covered_positions_are_evaluated() {
    let mut sm =
        ScoreMatrix::full(Array2::from_shape_vec((1, 4), vec![0.1, 0.9, 0.5, 0.2]).unwrap());
    sm.covered[[0, 3]] = false;
    let labels = Array2::from_shape_vec((1, 4), vec![0, 1, 0, 1]).unwrap();
    let d = LabeledScores::from_matrix(&sm, labels.view()).unwrap();
    assert_eq!(d.len(), 3);
    assert_eq!(auroc(&d).unwrap(), 1.0);
    let wrong = Array2::zeros((2, 4));
    assert!(LabeledScores::from_matrix(&sm, wrong.view()).is_err());
}

#[test]
fn history_average_matches_running_mean() {
    let mut r = common::rng(4);
    let x = common::normal_matrix(&mut r, 3, 50);
    let ha = ha_baseline(x.view(), false);
    assert!(ha.is_fully_covered());
    for i in 0..3 {
        assert_eq!(ha.scores[[i, 0]], x[[i, 0]].abs());
        for t in 1..50 {
            let mean: f64 = (0..t).map(|k| x[[i, k]]).sum::<f64>() / t as f64;
            assert!((ha.scores[[i, t]] - (x[[i, t]] - mean).abs()).abs() <= 1e-12);
        }
    }
}

#[test]
fn curve_exports() {
    let d = LabeledScores::new(vec![0.3, 0.9, 0.1, 0.9], vec![0, 1, 0, 0]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let roc = dir.path().join("roc.csv");
    let pr = dir.path().join("pr.csv");
    write_roc_csv(&roc_curve(&d).unwrap(), &roc).unwrap();
    write_pr_csv(&pr_curve_and_auprc(&d).unwrap().curve, &pr).unwrap();
    let roc_text = std::fs::read_to_string(roc).unwrap();
    assert!(roc_text.starts_with("threshold,tpr,fpr\ninf,0,0\n0.9,1,0.3333333333333333\n"));
    let pr_text = std::fs::read_to_string(pr).unwrap();
    assert!(pr_text.starts_with("threshold,precision,recall\n0.9,0.5,1\n"));
}
