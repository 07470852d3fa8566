//! Anomaly scores: Monte-Carlo negative reconstruction log-probability and
//! absolute reconstruction error, whole-series windowing and thresholding.

use std::fmt;
use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use ndarray::{s, Array2, ArrayView2};
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nets::{unroll_values, ModelParams, NetsError, UnrollMode};
use crate::objective::gauss_logpdf;
use crate::rng::{derive_rng, derive_seed, stream};

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("series length {t} shorter than window {w}")]
    TooShort { t: usize, w: usize },
    #[error("need at least one Monte-Carlo pass")]
    NoPasses,
    #[error("non-finite score at series {series}, t {t}")]
    NonFinite { series: usize, t: usize },
    #[error("{0}")]
    Shape(String),
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error(transparent)]
    Nets(#[from] NetsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which anomaly score to compute.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    /// Negative Monte-Carlo reconstruction log-probability.
    #[default]
    Prob,
    /// Absolute reconstruction error of a single pass.
    Error,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Prob => "prob",
            Criterion::Error => "error",
        })
    }
}

impl FromStr for Criterion {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "prob" => Ok(Criterion::Prob),
            "error" => Ok(Criterion::Error),
            other => Err(format!(
                "unknown criterion {other:?} (expected prob or error)"
            )),
        }
    }
}

/// `M x T` scores with the positions that were actually scored.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix {
    pub scores: Array2<f64>,
    pub covered: Array2<bool>,
}

impl ScoreMatrix {
    /// Every position covered.
    pub fn full(scores: Array2<f64>) -> Self {
        let covered = Array2::from_elem(scores.dim(), true);
        ScoreMatrix { scores, covered }
    }

    pub fn dim(&self) -> (usize, usize) {
        self.scores.dim()
    }

    pub fn is_fully_covered(&self) -> bool {
        self.covered.iter().all(|&c| c)
    }
}

/// Noise for Monte-Carlo pass `pass` of a chunk scored with `seed`.
pub fn score_noise(seed: u64, pass: usize, w: usize, z_dim: usize) -> Array2<f64> {
    let mut rng = derive_rng(seed, stream::SCORE_NOISE, &[pass as u64]);
    Array2::from_shape_simple_fn((w, z_dim), || rng.sample(StandardNormal))
}

fn check_chunk(params: &ModelParams, chunk: &ArrayView2<'_, f64>) -> Result<(), ScoreError> {
    let m = params.config().x_dim;
    if chunk.nrows() != m || chunk.ncols() == 0 {
        return Err(ScoreError::Shape(format!(
            "chunk has {} series and {} steps, model expects {m} series",
            chunk.nrows(),
            chunk.ncols()
        )));
    }
    Ok(())
}

/// Sum over `passes` of `-log p(x_{m,t} | mu, sigma)` per position.
///
/// Passes are independent and each draws its noise from `(seed, pass)`, so
/// splitting a pass range into pieces and adding the results reproduces the
/// whole range up to summation order.
pub fn score_smc_range(
    params: &ModelParams,
    chunk: ArrayView2<'_, f64>,
    seed: u64,
    passes: Range<usize>,
) -> Result<Array2<f64>, ScoreError> {
    check_chunk(params, &chunk)?;
    let (m, w) = chunk.dim();
    let z = params.config().z_dim;
    let per_pass: Vec<Result<Array2<f64>, ScoreError>> = passes
        .into_par_iter()
        .map(|pass| {
            let noise = score_noise(seed, pass, w, z);
            let out = unroll_values(params, chunk, noise.view(), UnrollMode::Score)?;
            let (mu, sd) = (out.recon.means(), out.recon.stddevs());
            Ok(Array2::from_shape_fn((m, w), |(i, t)| {
                -gauss_logpdf(chunk[[i, t]], mu[[t, i]], sd[[t, i]])
            }))
        })
        .collect();
    let mut acc = Array2::zeros((m, w));
    for r in per_pass {
        acc += &r?;
    }
    Ok(acc)
}

/// Mean over `l` passes of the negative reconstruction log-density per
/// position. Higher is more anomalous.
pub fn score_smc(
    params: &ModelParams,
    chunk: ArrayView2<'_, f64>,
    l: usize,
    seed: u64,
) -> Result<Array2<f64>, ScoreError> {
    if l == 0 {
        return Err(ScoreError::NoPasses);
    }
    let mut a = score_smc_range(params, chunk, seed, 0..l)?;
    a.mapv_inplace(|v| v / l as f64);
    check_finite(&a)?;
    Ok(a)
}

/// `|x - mu|` from a single pass.
pub fn score_error(
    params: &ModelParams,
    chunk: ArrayView2<'_, f64>,
    seed: u64,
) -> Result<Array2<f64>, ScoreError> {
    check_chunk(params, &chunk)?;
    let (m, w) = chunk.dim();
    let noise = score_noise(seed, 0, w, params.config().z_dim);
    let out = unroll_values(params, chunk, noise.view(), UnrollMode::Score)?;
    let mu = out.recon.means();
    let a = Array2::from_shape_fn((m, w), |(i, t)| (chunk[[i, t]] - mu[[t, i]]).abs());
    check_finite(&a)?;
    Ok(a)
}

fn check_finite(a: &Array2<f64>) -> Result<(), ScoreError> {
    match a.indexed_iter().find(|(_, v)| !v.is_finite()) {
        Some(((series, t), _)) => Err(ScoreError::NonFinite { series, t }),
        None => Ok(()),
    }
}

/// Non-overlapping chunk offsets `0, W, 2W, ...`, plus `T - W` when `W` does
/// not divide `T`.
pub fn scoring_offsets(t: usize, w: usize) -> Result<Vec<usize>, ScoreError> {
    if w == 0 || t < w {
        return Err(ScoreError::TooShort { t, w });
    }
    let mut starts: Vec<usize> = (0..=t - w).step_by(w).collect();
    if !t.is_multiple_of(w) {
        starts.push(t - w);
    }
    Ok(starts)
}

/// Scores a whole `M x T` series chunk by chunk. Positions scored by two
/// chunks take the mean of both. Chunk `k` uses a seed derived from `seed`
/// and its offset.
pub fn score_series(
    params: &ModelParams,
    values: ArrayView2<'_, f64>,
    window: usize,
    criterion: Criterion,
    l: usize,
    seed: u64,
) -> Result<ScoreMatrix, ScoreError> {
    let (m, t) = values.dim();
    if m != params.config().x_dim {
        return Err(ScoreError::Shape(format!(
            "data has {m} series, model expects {}",
            params.config().x_dim
        )));
    }
    let starts = scoring_offsets(t, window)?;
    let chunks: Vec<Result<Array2<f64>, ScoreError>> = starts
        .par_iter()
        .map(|&start| {
            let chunk = values.slice(s![.., start..start + window]);
            let chunk_seed = derive_seed(seed, stream::SCORE_NOISE, &[start as u64]);
            match criterion {
                Criterion::Prob => score_smc(params, chunk, l, chunk_seed),
                Criterion::Error => score_error(params, chunk, chunk_seed),
            }
        })
        .collect();
    let mut sum = Array2::<f64>::zeros((m, t));
    let mut count = Array2::<u32>::zeros((m, t));
    for (&start, chunk) in starts.iter().zip(chunks) {
        let chunk = chunk?;
        let mut dst = sum.slice_mut(s![.., start..start + window]);
        dst += &chunk;
        count
            .slice_mut(s![.., start..start + window])
            .mapv_inplace(|c| c + 1);
    }
    let covered = count.mapv(|c| c > 0);
    let scores = Array2::from_shape_fn((m, t), |ij| {
        if count[ij] > 0 {
            sum[ij] / count[ij] as f64
        } else {
            0.0
        }
    });
    Ok(ScoreMatrix { scores, covered })
}

/// 1 where covered and `score > alpha`.
pub fn threshold(scores: &ScoreMatrix, alpha: f64) -> Array2<u8> {
    Array2::from_shape_fn(scores.dim(), |ij| {
        (scores.covered[ij] && scores.scores[ij] > alpha) as u8
    })
}

/// Long format: `series_id,t,score,covered`.
pub fn write_scores_csv(
    scores: &ScoreMatrix,
    ids: &[String],
    path: &Path,
) -> Result<(), ScoreError> {
    std::fs::write(path, scores_csv(scores, ids, None)?)?;
    Ok(())
}

/// Long format with `alpha,flag` appended.
pub fn write_detections_csv(
    scores: &ScoreMatrix,
    ids: &[String],
    alpha: f64,
    path: &Path,
) -> Result<(), ScoreError> {
    std::fs::write(path, scores_csv(scores, ids, Some(alpha))?)?;
    Ok(())
}

fn scores_csv(
    scores: &ScoreMatrix,
    ids: &[String],
    alpha: Option<f64>,
) -> Result<String, ScoreError> {
    let (m, t) = scores.dim();
    if ids.len() != m {
        return Err(ScoreError::Shape(format!("{} ids for {m} rows", ids.len())));
    }
    let mut out = String::from("series_id,t,score,covered");
    if alpha.is_some() {
        out.push_str(",alpha,flag");
    }
    out.push('\n');
    let flags = alpha.map(|a| threshold(scores, a));
    for (i, id) in ids.iter().enumerate() {
        for j in 0..t {
            write!(
                out,
                "{id},{j},{},{}",
                scores.scores[[i, j]],
                scores.covered[[i, j]] as u8
            )
            .unwrap();
            if let (Some(a), Some(f)) = (alpha, &flags) {
                write!(out, ",{a},{}", f[[i, j]]).unwrap();
            }
            out.push('\n');
        }
    }
    Ok(out)
}

/// Reads the long score format back; rows are ordered by first appearance of
/// each series id.
pub fn read_scores_csv(path: &Path) -> Result<(ScoreMatrix, Vec<String>), ScoreError> {
    let text = std::fs::read_to_string(path)?;
    let name = path.display().to_string();
    let err = |line: usize, msg: String| ScoreError::Parse {
        path: name.clone(),
        line,
        msg,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| err(1, "missing header".into()))?;
    if !header.starts_with("series_id,t,score,covered") {
        return Err(err(1, "expected header series_id,t,score,covered".into()));
    }
    let mut ids: Vec<String> = Vec::new();
    let mut cells: Vec<(usize, usize, f64, bool)> = Vec::new();
    let mut t_max = 0;
    for (i, line) in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() < 4 {
            return Err(err(
                i + 1,
                format!("expected at least 4 fields, found {}", f.len()),
            ));
        }
        let row = match ids.iter().position(|x| x == f[0]) {
            Some(r) => r,
            None => {
                ids.push(f[0].to_string());
                ids.len() - 1
            }
        };
        let t: usize = f[1]
            .parse()
            .map_err(|_| err(i + 1, format!("bad t {:?}", f[1])))?;
        let score: f64 = f[2]
            .parse()
            .map_err(|_| err(i + 1, format!("bad score {:?}", f[2])))?;
        let covered = match f[3] {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(err(i + 1, format!("bad covered flag {other:?}"))),
        };
        t_max = t_max.max(t + 1);
        cells.push((row, t, score, covered));
    }
    let m = ids.len();
    if m == 0 {
        return Err(err(2, "no rows".into()));
    }
    if cells.len() != m * t_max {
        return Err(ScoreError::Shape(format!(
            "{} cells do not form a {m}x{t_max} grid",
            cells.len()
        )));
    }
    let mut scores = Array2::zeros((m, t_max));
    let mut covered = Array2::from_elem((m, t_max), false);
    let mut seen = Array2::from_elem((m, t_max), false);
    for (r, t, s, c) in cells {
        if seen[[r, t]] {
            return Err(ScoreError::Shape(format!(
                "duplicate cell ({}, {t})",
                ids[r]
            )));
        }
        seen[[r, t]] = true;
        scores[[r, t]] = s;
        covered[[r, t]] = c;
    }
    Ok((ScoreMatrix { scores, covered }, ids))
}
