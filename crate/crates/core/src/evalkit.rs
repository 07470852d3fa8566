//! Detection metrics over flattened `(score, label)` pairs and the History
//! Average baseline.
//!
//! Operating points are taken at every distinct score `v`, flagging the
//! positions with `score >= v` (equivalently `score > alpha` for any `alpha`
//! just below `v`). The threshold column of exported curves holds `v`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scoring::ScoreMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("metric needs both classes, got {positives} positives of {n}")]
    SingleClass { positives: usize, n: usize },
    #[error("no positive labels")]
    NoPositives,
    #[error("k = {k} outside 1..={n}")]
    KOutOfRange { k: usize, n: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite score at index {0}")]
    NonFinite(usize),
    #[error("label {value} at index {index} is not 0 or 1")]
    BadLabel { index: usize, value: u8 },
    #[error("empty input")]
    Empty,
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for EvalError {
    fn from(e: std::io::Error) -> Self {
        EvalError::Io(e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledScores {
    scores: Vec<f64>,
    labels: Vec<u8>,
}

impl LabeledScores {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self, EvalError> {
        if scores.len() != labels.len() {
            return Err(EvalError::Shape(format!(
                "{} scores, {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if scores.is_empty() {
            return Err(EvalError::Empty);
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(EvalError::NonFinite(i));
        }
        if let Some(i) = labels.iter().position(|&l| l > 1) {
            return Err(EvalError::BadLabel {
                index: i,
                value: labels[i],
            });
        }
        Ok(LabeledScores { scores, labels })
    }

    /// Covered positions of `scores`, row-major.
    pub fn from_matrix(
        scores: &ScoreMatrix,
        labels: ArrayView2<'_, u8>,
    ) -> Result<Self, EvalError> {
        if scores.dim() != labels.dim() {
            return Err(EvalError::Shape(format!(
                "scores {:?}, labels {:?}",
                scores.dim(),
                labels.dim()
            )));
        }
        let mut s = Vec::new();
        let mut l = Vec::new();
        for ((ij, &c), &v) in scores.covered.indexed_iter().zip(scores.scores.iter()) {
            if c {
                s.push(v);
                l.push(labels[ij]);
            }
        }
        Self::new(s, l)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    /// Applies `f` to every score.
    pub fn map_scores(&self, f: impl Fn(f64) -> f64) -> Result<Self, EvalError> {
        Self::new(
            self.scores.iter().map(|&s| f(s)).collect(),
            self.labels.clone(),
        )
    }
}

/// Cumulative `(threshold, tp, fp)` at each distinct score, descending.
fn sweep(data: &LabeledScores) -> Vec<(f64, usize, usize)> {
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.sort_by(|&a, &b| data.scores[b].total_cmp(&data.scores[a]));
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    for (pos, &i) in idx.iter().enumerate() {
        if data.labels[i] == 1 {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_group = pos + 1 == idx.len() || data.scores[idx[pos + 1]] != data.scores[i];
        if last_of_group {
            out.push((data.scores[i], tp, fp));
        }
    }
    out
}

/// Probability that a random positive outranks a random negative, ties
/// counting one half.
pub fn auroc(data: &LabeledScores) -> Result<f64, EvalError> {
    let n = data.len();
    let p = data.positives();
    if p == 0 || p == n {
        return Err(EvalError::SingleClass { positives: p, n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| data.scores[a].total_cmp(&data.scores[b]));
    // Mid-ranks (1-based) over tie groups.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && data.scores[idx[j + 1]] == data.scores[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += idx[i..=j].iter().filter(|&&k| data.labels[k] == 1).count() as f64 * mid;
        i = j + 1;
    }
    let (p, q) = (p as f64, (n - p) as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * q))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrSummary {
    pub curve: Vec<PrPoint>,
    /// Average precision: `sum_k (R_k - R_{k-1}) P_k`.
    pub auprc: f64,
    pub best_f1: f64,
}

pub fn pr_curve_and_auprc(data: &LabeledScores) -> Result<PrSummary, EvalError> {
    let p = data.positives();
    if p == 0 {
        return Err(EvalError::NoPositives);
    }
    let mut curve = Vec::new();
    let mut auprc = 0.0;
    let mut best_f1: f64 = 0.0;
    let mut prev_recall = 0.0;
    for (threshold, tp, fp) in sweep(data) {
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = tp as f64 / p as f64;
        auprc += (recall - prev_recall) * precision;
        prev_recall = recall;
        if tp > 0 {
            best_f1 = best_f1.max(2.0 * precision * recall / (precision + recall));
        }
        curve.push(PrPoint {
            threshold,
            precision,
            recall,
        });
    }
    Ok(PrSummary {
        curve,
        auprc,
        best_f1,
    })
}

/// Starts at `(+inf, 0, 0)` and ends at `(min score, 1, 1)`.
pub fn roc_curve(data: &LabeledScores) -> Result<Vec<RocPoint>, EvalError> {
    let n = data.len();
    let p = data.positives();
    if p == 0 || p == n {
        return Err(EvalError::SingleClass { positives: p, n });
    }
    let q = n - p;
    let mut out = vec![RocPoint {
        threshold: f64::INFINITY,
        tpr: 0.0,
        fpr: 0.0,
    }];
    out.extend(sweep(data).into_iter().map(|(threshold, tp, fp)| RocPoint {
        threshold,
        tpr: tp as f64 / p as f64,
        fpr: fp as f64 / q as f64,
    }));
    Ok(out)
}

/// Fraction of anomalies among the `k` highest scores; ties go to the lower
/// index.
pub fn precision_at_k(data: &LabeledScores, k: usize) -> Result<f64, EvalError> {
    let n = data.len();
    if k == 0 || k > n {
        return Err(EvalError::KOutOfRange { k, n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| data.scores[b].total_cmp(&data.scores[a]).then(a.cmp(&b)));
    let hits = idx[..k].iter().filter(|&&i| data.labels[i] == 1).count();
    Ok(hits as f64 / k as f64)
}

/// History Average: `|x_t - mean(x_0..x_{t-1})|`, with `|x_0|` at the first
/// step. `global_mean` uses the whole-row mean instead.
pub fn ha_baseline(values: ArrayView2<'_, f64>, global_mean: bool) -> ScoreMatrix {
    let (m, t) = values.dim();
    let mut scores = Array2::zeros((m, t));
    for i in 0..m {
        let row = values.row(i);
        if global_mean {
            let mu = row.sum() / t as f64;
            for j in 0..t {
                scores[[i, j]] = (row[j] - mu).abs();
            }
        } else {
            let mut sum = 0.0;
            for j in 0..t {
                let mu = if j == 0 { 0.0 } else { sum / j as f64 };
                scores[[i, j]] = (row[j] - mu).abs();
                sum += row[j];
            }
        }
    }
    ScoreMatrix::full(scores)
}

/// Metrics JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auroc: f64,
    pub auprc: f64,
    pub best_f1: f64,
    pub precision_at_k: BTreeMap<usize, f64>,
}

/// All metrics at once. `k` values larger than the data are skipped.
pub fn evaluate(data: &LabeledScores, ks: &[usize]) -> Result<EvalReport, EvalError> {
    let pr = pr_curve_and_auprc(data)?;
    let mut precision_at = BTreeMap::new();
    for &k in ks {
        if k >= 1 && k <= data.len() {
            precision_at.insert(k, precision_at_k(data, k)?);
        }
    }
    Ok(EvalReport {
        auroc: auroc(data)?,
        auprc: pr.auprc,
        best_f1: pr.best_f1,
        precision_at_k: precision_at,
    })
}

pub fn write_roc_csv(points: &[RocPoint], path: &Path) -> Result<(), EvalError> {
    let mut out = String::from("threshold,tpr,fpr\n");
    for p in points {
        writeln!(out, "{},{},{}", p.threshold, p.tpr, p.fpr).unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_pr_csv(points: &[PrPoint], path: &Path) -> Result<(), EvalError> {
    let mut out = String::from("threshold,precision,recall\n");
    for p in points {
        writeln!(out, "{},{},{}", p.threshold, p.precision, p.recall).unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}
