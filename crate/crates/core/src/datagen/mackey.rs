use nalgebra::DVector;
use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use super::gp::{cholesky_jittered, rbf_gram};
use super::{DataError, SeriesMatrix};
use crate::rng::{derive_rng, stream};

/// Delay-equation parameters for `dx/dt = alpha x(t-tau) / (1 + x(t-tau)^beta) - gamma x(t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MackeyConfig {
    pub n: usize,
    pub gamma: f64,
    pub beta: f64,
    pub alpha: f64,
    pub tau: usize,
    pub dt: f64,
    pub x0: f64,
}

impl Default for MackeyConfig {
    fn default() -> Self {
        MackeyConfig {
            n: 5000,
            gamma: 0.1,
            beta: 10.0,
            alpha: 0.2,
            tau: 17,
            dt: 1.0,
            x0: 1.2,
        }
    }
}

/// Forward-Euler integration; the history before step 0 is held at `x0`.
pub fn gen_mackey_glass(config: &MackeyConfig) -> Result<SeriesMatrix, DataError> {
    if config.n < 1 || !(config.dt > 0.0) {
        return Err(DataError::InvalidConfig("need n >= 1 and dt > 0".into()));
    }
    let lag = (config.tau as f64 / config.dt).round() as usize;
    let mut x = Vec::with_capacity(config.n);
    x.push(config.x0);
    for k in 0..config.n - 1 {
        let delayed = if k >= lag { x[k - lag] } else { config.x0 };
        let drive = config.alpha * delayed / (1.0 + delayed.powf(config.beta));
        let next = x[k] + config.dt * (drive - config.gamma * x[k]);
        if !next.is_finite() {
            return Err(DataError::NonFinite {
                index: k + 1,
                value: next,
            });
        }
        x.push(next);
    }
    let values = Array2::from_shape_vec((1, config.n), x).expect("1 x n");
    SeriesMatrix::with_ids(values, vec!["mackey_glass".into()])
}

fn merged_labels(series: &SeriesMatrix) -> Array2<u8> {
    series.labels_or_zeros()
}

/// Adds `sign * Poisson(max(|x|, 0.5))` at Bernoulli(`p`) positions.
///
/// Positions are visited in row-major order; each draws its mask bit, and
/// masked ones then draw a sign and a magnitude. Labels are OR-ed into any
/// existing labels.
pub fn inject_point_anomalies(
    series: &SeriesMatrix,
    p: f64,
    seed: u64,
) -> Result<SeriesMatrix, DataError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(DataError::InvalidConfig(format!("p {p} outside [0, 1]")));
    }
    let mut rng = derive_rng(seed, stream::DATA, &[1]);
    let mut out = series.clone();
    let mut labels = merged_labels(series);
    let (m, t) = series.values().dim();
    for i in 0..m {
        for j in 0..t {
            if !rng.random_bool(p) {
                continue;
            }
            let x = out.values()[[i, j]];
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let magnitude = Poisson::new(x.abs().max(0.5))
                .expect("positive rate")
                .sample(&mut rng);
            out.values_mut()[[i, j]] = x + sign * magnitude;
            labels[[i, j]] = 1;
        }
    }
    out.set_labels(Some(labels))?;
    Ok(out)
}

/// Mackey-Glass point anomalies: at Bernoulli(`rate`) positions add
/// `Poisson(1) + N(0, 1) + 0.2`.
pub fn inject_mackey_point_anomalies(
    series: &SeriesMatrix,
    rate: f64,
    seed: u64,
) -> Result<SeriesMatrix, DataError> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(DataError::InvalidConfig(format!(
            "rate {rate} outside [0, 1]"
        )));
    }
    let mut rng = derive_rng(seed, stream::DATA, &[2]);
    let poisson = Poisson::new(1.0).expect("positive rate");
    let mut out = series.clone();
    let mut labels = merged_labels(series);
    let (m, t) = series.values().dim();
    for i in 0..m {
        for j in 0..t {
            if !rng.random_bool(rate) {
                continue;
            }
            let shock: f64 = poisson.sample(&mut rng) + rng.sample::<f64, _>(StandardNormal) + 0.2;
            out.values_mut()[[i, j]] += shock;
            labels[[i, j]] = 1;
        }
    }
    out.set_labels(Some(labels))?;
    Ok(out)
}

/// Replaces `count` non-overlapping windows with draws from a unit-variance
/// RBF Gaussian process of length-scale 0.3 (in timesteps).
///
/// Each window picks a row uniformly, a length uniformly in
/// `[len_min, len_max]` and a start uniformly among valid offsets. Placements
/// that overlap an earlier window on the same row are redrawn, up to 1000
/// attempts per window.
pub fn inject_subseq_anomalies(
    series: &SeriesMatrix,
    count: usize,
    len_min: usize,
    len_max: usize,
    seed: u64,
) -> Result<SeriesMatrix, DataError> {
    let (m, t) = series.values().dim();
    if count == 0 {
        return Ok(series.clone());
    }
    if len_min < 1 || len_min > len_max || len_max > t {
        return Err(DataError::InvalidConfig(format!(
            "need 1 <= len_min <= len_max <= T, got {len_min}, {len_max}, T={t}"
        )));
    }
    let mut rng = derive_rng(seed, stream::DATA, &[3]);
    let mut placed: Vec<(usize, usize, usize)> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut attempt = 0;
        loop {
            if attempt == 1000 {
                return Err(DataError::Placement {
                    count,
                    detail: format!("gave up after 1000 attempts with {} placed", placed.len()),
                });
            }
            attempt += 1;
            let row = rng.random_range(0..m);
            let len = rng.random_range(len_min..=len_max);
            let start = rng.random_range(0..=t - len);
            let clash = placed
                .iter()
                .any(|&(r, s, l)| r == row && start < s + l && s < start + len);
            if !clash {
                placed.push((row, start, len));
                break;
            }
        }
    }

    let mut out = series.clone();
    let mut labels = merged_labels(series);
    for &(row, start, len) in &placed {
        let l = cholesky_jittered(&rbf_gram(len, 0.3), 1e-10)?;
        let e = DVector::from_fn(len, |_, _| rng.sample::<f64, _>(StandardNormal));
        let draw = l * e;
        for k in 0..len {
            out.values_mut()[[row, start + k]] = draw[k];
            labels[[row, start + k]] = 1;
        }
    }
    out.set_labels(Some(labels))?;
    Ok(out)
}

/// Full Mackey-Glass protocol.
#[derive(Clone, Debug, PartialEq)]
pub struct MackeyPreset {
    pub system: MackeyConfig,
    pub point_rate: f64,
    pub subseq_count: usize,
    pub subseq_len_min: usize,
    pub subseq_len_max: usize,
    pub seed: u64,
}

impl Default for MackeyPreset {
    fn default() -> Self {
        MackeyPreset {
            system: MackeyConfig::default(),
            point_rate: 0.003,
            subseq_count: 2,
            subseq_len_min: 10,
            subseq_len_max: 28,
            seed: 0,
        }
    }
}

/// Trajectory, then sub-sequence replacements, then point anomalies.
pub fn mackey_preset(preset: &MackeyPreset) -> Result<SeriesMatrix, DataError> {
    let clean = gen_mackey_glass(&preset.system)?;
    let with_segments = inject_subseq_anomalies(
        &clean,
        preset.subseq_count,
        preset.subseq_len_min,
        preset.subseq_len_max,
        preset.seed,
    )?;
    inject_mackey_point_anomalies(&with_segments, preset.point_rate, preset.seed)
}
