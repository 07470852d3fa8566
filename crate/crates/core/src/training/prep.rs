use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::datagen::SeriesMatrix;

/// Per-row statistics removed by [`normalize`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Rows become zero-mean, unit population stddev. Rows with stddev below
/// `1e-12` become zeros and record a stddev of 1.
pub fn normalize(series: &SeriesMatrix) -> Result<(SeriesMatrix, Normalization), TrainError> {
    let (m, t) = series.values().dim();
    if m == 0 || t < 2 {
        return Err(TrainError::InvalidConfig(format!(
            "normalize needs at least one row and T >= 2, got {m}x{t}"
        )));
    }
    let mut out = series.clone();
    let mut mean = Vec::with_capacity(m);
    let mut std = Vec::with_capacity(m);
    for mut row in out.values_mut().rows_mut() {
        let mu = row.sum() / t as f64;
        let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / t as f64;
        let sd = var.sqrt();
        if sd < 1e-12 {
            row.fill(0.0);
            std.push(1.0);
        } else {
            row.mapv_inplace(|v| (v - mu) / sd);
            std.push(sd);
        }
        mean.push(mu);
    }
    Ok((out, Normalization { mean, std }))
}

pub fn denormalize(
    series: &SeriesMatrix,
    norm: &Normalization,
) -> Result<SeriesMatrix, TrainError> {
    let m = series.n_series();
    if norm.mean.len() != m || norm.std.len() != m {
        return Err(TrainError::Shape(format!(
            "normalization for {} rows applied to {m} rows",
            norm.mean.len()
        )));
    }
    let mut out = series.clone();
    for (i, mut row) in out.values_mut().rows_mut().into_iter().enumerate() {
        let (mu, sd) = (norm.mean[i], norm.std[i]);
        row.mapv_inplace(|v| v * sd + mu);
    }
    Ok(out)
}

/// One `M x W` training window and where it starts in the series.
#[derive(Clone, Debug, PartialEq)]
pub struct Chunk {
    pub start: usize,
    pub values: Array2<f64>,
}

impl Chunk {
    pub fn width(&self) -> usize {
        self.values.ncols()
    }
}

/// Start offsets `0, s, 2s, ...` while the window fits.
pub fn window_starts(t: usize, w: usize, s: usize) -> Result<Vec<usize>, TrainError> {
    if w == 0 || s == 0 {
        return Err(TrainError::InvalidConfig(format!(
            "window {w} and step {s} must be >= 1"
        )));
    }
    if w > t {
        return Err(TrainError::InvalidConfig(format!(
            "window {w} longer than series ({t})"
        )));
    }
    Ok((0..=t - w).step_by(s).collect())
}

pub fn make_windows(series: &SeriesMatrix, w: usize, s: usize) -> Result<Vec<Chunk>, TrainError> {
    let starts = window_starts(series.len(), w, s)?;
    Ok(starts
        .into_iter()
        .map(|start| Chunk {
            start,
            values: series.values().slice(s![.., start..start + w]).to_owned(),
        })
        .collect())
}
