use nalgebra::DMatrix;
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{DataError, SeriesMatrix};
use crate::rng::{derive_rng, stream};

/// Correlated-series protocol settings.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub m: usize,
    pub t: usize,
    pub anomaly_prob: f64,
    /// RBF length-scale in timesteps.
    pub kernel_lengthscale: f64,
    /// Observation noise at `t = 0`; it grows linearly to twice this at the end.
    pub noise_base: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            m: 100,
            t: 200,
            anomaly_prob: 0.02,
            kernel_lengthscale: 10.0,
            noise_base: 0.1,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.m < 1 || self.t < 2 {
            return Err(DataError::InvalidConfig(format!(
                "need m >= 1 and t >= 2, got m={} t={}",
                self.m, self.t
            )));
        }
        if !(0.0..=1.0).contains(&self.anomaly_prob) {
            return Err(DataError::InvalidConfig(format!(
                "anomaly_prob {} outside [0, 1]",
                self.anomaly_prob
            )));
        }
        if !(self.kernel_lengthscale > 0.0) || !(self.noise_base >= 0.0) {
            return Err(DataError::InvalidConfig(
                "kernel_lengthscale must be > 0 and noise_base >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Unit-variance RBF Gram matrix on integer time points `0..n`.
pub fn rbf_gram(n: usize, lengthscale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| {
        let d = i as f64 - j as f64;
        (-d * d / (2.0 * lengthscale * lengthscale)).exp()
    })
}

/// `C C^T + 0.1 I` with `C` standard normal.
pub fn coregionalization_matrix<R: Rng>(m: usize, rng: &mut R) -> DMatrix<f64> {
    let c = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    &c * c.transpose() + DMatrix::identity(m, m) * 0.1
}

/// Lower Cholesky factor, retrying with a growing diagonal jitter.
pub(crate) fn cholesky_jittered(k: &DMatrix<f64>, start: f64) -> Result<DMatrix<f64>, DataError> {
    let n = k.nrows();
    let mut jitter = start;
    while jitter <= 1e-1 {
        let shifted = k + DMatrix::identity(n, n) * jitter;
        if let Some(ch) = shifted.cholesky() {
            return Ok(ch.l());
        }
        jitter *= 10.0;
    }
    Err(DataError::Cholesky(format!(
        "{n}x{n} matrix not positive definite even with jitter 1e-1"
    )))
}

/// Draws one multi-output GP sample without anomalies.
pub fn gen_correlated_series(config: &SynthConfig) -> Result<SeriesMatrix, DataError> {
    config.validate()?;
    let mut rng = derive_rng(config.seed, stream::DATA, &[0]);
    let b = coregionalization_matrix(config.m, &mut rng);
    sample(&b, config, &mut rng)
}

/// Clean draw followed by signed Poisson point anomalies at `anomaly_prob`.
pub fn correlated_preset(config: &SynthConfig) -> Result<SeriesMatrix, DataError> {
    let clean = gen_correlated_series(config)?;
    super::inject_point_anomalies(&clean, config.anomaly_prob, config.seed)
}

/// Same as [`gen_correlated_series`] with a caller-chosen coupling matrix.
pub fn gen_correlated_series_with(
    b: &DMatrix<f64>,
    config: &SynthConfig,
) -> Result<SeriesMatrix, DataError> {
    config.validate()?;
    if b.nrows() != config.m || b.ncols() != config.m {
        return Err(DataError::Shape(format!(
            "coupling matrix {}x{} for m={}",
            b.nrows(),
            b.ncols(),
            config.m
        )));
    }
    let mut rng = derive_rng(config.seed, stream::DATA, &[0]);
    // Burn the draws that build B in the default path so both stay aligned.
    for _ in 0..config.m * config.m {
        let _: f64 = rng.sample(StandardNormal);
    }
    sample(b, config, &mut rng)
}

// f ~ N(0, B (x) K) is drawn as L_B E L_K^T with E standard normal, which has
// exactly that covariance since (L_B (x) L_K)(L_B (x) L_K)^T = B (x) K.
fn sample<R: Rng>(
    b: &DMatrix<f64>,
    config: &SynthConfig,
    rng: &mut R,
) -> Result<SeriesMatrix, DataError> {
    let (m, t) = (config.m, config.t);
    let l_b = cholesky_jittered(b, 1e-8)?;
    let l_k = cholesky_jittered(&rbf_gram(t, config.kernel_lengthscale), 1e-8)?;
    let e = DMatrix::from_fn(m, t, |_, _| rng.sample::<f64, _>(StandardNormal));
    let f = l_b * e * l_k.transpose();
    let values = Array2::from_shape_fn((m, t), |(i, j)| {
        let sigma = config.noise_base * (1.0 + j as f64 / t as f64);
        let eps: f64 = rng.sample(StandardNormal);
        f[(i, j)] + sigma * eps
    });
    let series = SeriesMatrix::new(values)?;
    series.with_labels(Array2::zeros((m, t)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng as ChaCha;
    use rand::SeedableRng;

    #[test]
    fn shape_and_reproducibility() {
        let cfg = SynthConfig {
            m: 4,
            t: 30,
            seed: 9,
            ..SynthConfig::default()
        };
        let a = gen_correlated_series(&cfg).unwrap();
        let b = gen_correlated_series(&cfg).unwrap();
        assert_eq!(a.values().dim(), (4, 30));
        assert_eq!(a, b);
        assert_eq!(a.anomaly_count(), 0);
        let c = gen_correlated_series(&SynthConfig { seed: 10, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn coupling_matrix_is_positive_definite() {
        let mut rng = ChaCha::seed_from_u64(1);
        for m in [1, 3, 10, 25] {
            let b = coregionalization_matrix(m, &mut rng);
            let eig = b.clone().symmetric_eigen();
            let min = eig
                .eigenvalues
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            assert!(min >= 0.1 - 1e-9, "m={m} min eig {min}");
        }
    }

    #[test]
    fn long_lengthscale_gives_near_constant_paths() {
        let t = 50;
        let cfg = SynthConfig {
            m: 1,
            t,
            kernel_lengthscale: 10.0 * t as f64,
            noise_base: 0.0,
            anomaly_prob: 0.0,
            seed: 3,
        };
        let b = DMatrix::from_element(1, 1, 1.0);
        let mut within = 0.0;
        let mut total = 0.0;
        for seed in 0..20 {
            let s = gen_correlated_series_with(
                &b,
                &SynthConfig {
                    seed,
                    ..cfg.clone()
                },
            )
            .unwrap();
            let row = s.values().row(0);
            let mean = row.mean().unwrap();
            within += row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t as f64;
            total += row.iter().map(|v| v * v).sum::<f64>() / t as f64;
        }
        // Variance along the path is a tiny fraction of the marginal variance.
        assert!(within / total < 0.01, "{}", within / total);
    }

    #[test]
    fn rejects_bad_config() {
        let bad = SynthConfig {
            t: 1,
            ..SynthConfig::default()
        };
        assert!(gen_correlated_series(&bad).is_err());
        let bad = SynthConfig {
            anomaly_prob: 1.5,
            ..SynthConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
