//! Loss terms of the model.
//!
//! Everything is in minimization form:
//!
//! ```text
//! total = sum_t KL(q(z_t) || p(z_t))  -  sum_t log p(x_t | z_<=t)  +  lambda * smooth
//! ```
//!
//! where `smooth` is the summed KL between consecutive reconstruction
//! distributions, `KL(N_{t-1} || N_t)` per series. Each term exists twice: a
//! plain-number version for evaluation and a graph version that builds the
//! same expression on a tape for training.

use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffcore::{Tape, Tensor, TensorError, Var};
use crate::nets::{DiagGaussianSeq, UnrollTrace};

/// `0.5 * ln(2 pi)`
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Error, PartialEq)]
pub enum ObjectiveError {
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("stddev must be positive, got {value} at index {index}")]
    NonPositiveSigma { index: usize, value: f64 },
    #[error("second-difference penalty needs at least 3 timesteps, got {0}")]
    TooShort(usize),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Which smoothness penalty enters the loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regularizer {
    /// KL between consecutive reconstruction distributions.
    #[default]
    Kl,
    /// Squared second difference of reconstruction means.
    Mean,
    None,
}

impl fmt::Display for Regularizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regularizer::Kl => "kl",
            Regularizer::Mean => "mean",
            Regularizer::None => "none",
        })
    }
}

impl FromStr for Regularizer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "kl" => Ok(Regularizer::Kl),
            "mean" => Ok(Regularizer::Mean),
            "none" => Ok(Regularizer::None),
            other => Err(format!(
                "unknown regularizer {other:?} (expected kl, mean or none)"
            )),
        }
    }
}

/// Loss components of one chunk (or a mean over chunks).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub inference_kl: f64,
    pub neg_loglik: f64,
    pub smooth: f64,
    pub total: f64,
    pub lambda: f64,
}

impl LossBreakdown {
    pub fn new(inference_kl: f64, neg_loglik: f64, smooth: f64, lambda: f64) -> Self {
        LossBreakdown {
            inference_kl,
            neg_loglik,
            smooth,
            total: inference_kl + neg_loglik + lambda * smooth,
            lambda,
        }
    }

    /// Component-wise mean; `None` for an empty slice.
    pub fn mean(items: &[LossBreakdown]) -> Option<LossBreakdown> {
        let first = items.first()?;
        let n = items.len() as f64;
        let sum = |f: fn(&LossBreakdown) -> f64| items.iter().map(f).sum::<f64>() / n;
        Some(LossBreakdown {
            inference_kl: sum(|b| b.inference_kl),
            neg_loglik: sum(|b| b.neg_loglik),
            smooth: sum(|b| b.smooth),
            total: sum(|b| b.total),
            lambda: first.lambda,
        })
    }
}

fn check_lengths(what: &str, lens: &[usize]) -> Result<(), ObjectiveError> {
    if lens.windows(2).any(|w| w[0] != w[1]) {
        return Err(ObjectiveError::LengthMismatch(format!("{what}: {lens:?}")));
    }
    Ok(())
}

fn check_sigma(sigma: &[f64]) -> Result<(), ObjectiveError> {
    match sigma.iter().position(|s| !(*s > 0.0)) {
        Some(index) => Err(ObjectiveError::NonPositiveSigma {
            index,
            value: sigma[index],
        }),
        None => Ok(()),
    }
}

#[inline]
fn kl_scalar(mu_q: f64, s_q: f64, mu_p: f64, s_p: f64) -> f64 {
    let d = mu_q - mu_p;
    (s_p / s_q).ln() + (s_q * s_q + d * d) / (2.0 * s_p * s_p) - 0.5
}

/// `KL(N(mu_q, s_q^2) || N(mu_p, s_p^2))` summed over dimensions.
pub fn kl_diag_gauss(
    mu_q: &[f64],
    s_q: &[f64],
    mu_p: &[f64],
    s_p: &[f64],
) -> Result<f64, ObjectiveError> {
    check_lengths(
        "kl_diag_gauss",
        &[mu_q.len(), s_q.len(), mu_p.len(), s_p.len()],
    )?;
    check_sigma(s_q)?;
    check_sigma(s_p)?;
    Ok((0..mu_q.len())
        .map(|d| kl_scalar(mu_q[d], s_q[d], mu_p[d], s_p[d]))
        .sum())
}

/// Diagonal Gaussian log-density, summed over dimensions.
pub fn gauss_loglik(x: &[f64], mu: &[f64], sigma: &[f64]) -> Result<f64, ObjectiveError> {
    check_lengths("gauss_loglik", &[x.len(), mu.len(), sigma.len()])?;
    check_sigma(sigma)?;
    Ok(x.iter()
        .zip(mu)
        .zip(sigma)
        .map(|((x, m), s)| gauss_logpdf(*x, *m, *s))
        .sum())
}

#[inline]
pub fn gauss_logpdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let d = x - mu;
    -HALF_LN_2PI - sigma.ln() - d * d / (2.0 * sigma * sigma)
}

/// Summed KL between consecutive distributions of every series. Zero for a
/// single timestep.
pub fn smoothness_loss(recon: &DiagGaussianSeq) -> f64 {
    let (mu, sd) = (recon.means(), recon.stddevs());
    let mut total = 0.0;
    for t in 1..recon.len() {
        for m in 0..recon.dim() {
            total += kl_scalar(mu[[t - 1, m]], sd[[t - 1, m]], mu[[t, m]], sd[[t, m]]);
        }
    }
    total
}

/// Squared second difference of the reconstruction means, summed.
pub fn mean_smoothness_loss(recon: &DiagGaussianSeq) -> Result<f64, ObjectiveError> {
    if recon.len() < 3 {
        return Err(ObjectiveError::TooShort(recon.len()));
    }
    let mu = recon.means();
    let mut total = 0.0;
    for t in 2..recon.len() {
        for m in 0..recon.dim() {
            let d2 = mu[[t, m]] - 2.0 * mu[[t - 1, m]] + mu[[t - 2, m]];
            total += d2 * d2;
        }
    }
    Ok(total)
}

/// Loss of one chunk from plain distribution parameters.
///
/// `x_chunk` is `M x W`; the sequences are `W` long.
pub fn sisvae_loss(
    posterior: &DiagGaussianSeq,
    prior: &DiagGaussianSeq,
    recon: &DiagGaussianSeq,
    x_chunk: ArrayView2<'_, f64>,
    lambda: f64,
    regularizer: Regularizer,
) -> Result<LossBreakdown, ObjectiveError> {
    let w = x_chunk.ncols();
    check_lengths(
        "sequence lengths",
        &[posterior.len(), prior.len(), recon.len(), w],
    )?;
    check_lengths("latent dims", &[posterior.dim(), prior.dim()])?;
    check_lengths("observation dims", &[recon.dim(), x_chunk.nrows()])?;

    let mut inference_kl = 0.0;
    let mut neg_loglik = 0.0;
    for t in 0..w {
        inference_kl += kl_diag_gauss(
            &posterior.means().row(t).to_vec(),
            &posterior.stddevs().row(t).to_vec(),
            &prior.means().row(t).to_vec(),
            &prior.stddevs().row(t).to_vec(),
        )?;
        let x_t = x_chunk.column(t).to_vec();
        neg_loglik -= gauss_loglik(
            &x_t,
            &recon.means().row(t).to_vec(),
            &recon.stddevs().row(t).to_vec(),
        )?;
    }
    let smooth = match regularizer {
        Regularizer::Kl => smoothness_loss(recon),
        Regularizer::Mean => mean_smoothness_loss(recon)?,
        Regularizer::None => 0.0,
    };
    Ok(LossBreakdown::new(inference_kl, neg_loglik, smooth, lambda))
}

/// Graph form of [`kl_diag_gauss`]; returns a scalar node.
pub fn kl_diag_gauss_var<'t>(
    mu_q: Var<'t>,
    s_q: Var<'t>,
    mu_p: Var<'t>,
    s_p: Var<'t>,
) -> Result<Var<'t>, TensorError> {
    let log_ratio = s_p.log()?.sub(s_q.log()?)?;
    let spread = s_q.square().add(mu_q.sub(mu_p)?.square())?;
    let quad = spread.div(s_p.square().scale(2.0))?;
    Ok(log_ratio.add(quad)?.add_scalar(-0.5).sum())
}

/// Graph form of `-gauss_loglik`; returns a scalar node.
pub fn gauss_neg_loglik_var<'t>(
    x: Var<'t>,
    mu: Var<'t>,
    sigma: Var<'t>,
) -> Result<Var<'t>, TensorError> {
    let quad = x.sub(mu)?.square().div(sigma.square().scale(2.0))?;
    Ok(sigma.log()?.add(quad)?.add_scalar(HALF_LN_2PI).sum())
}

fn sum_vars<'t>(
    tape: &'t Tape,
    terms: impl IntoIterator<Item = Var<'t>>,
) -> Result<Var<'t>, TensorError> {
    let mut it = terms.into_iter();
    match it.next() {
        None => Ok(tape.scalar(0.0)),
        Some(first) => it.try_fold(first, |acc, v| acc.add(v)),
    }
}

/// Graph form of [`smoothness_loss`] over the reconstruction nodes.
pub fn smoothness_loss_var<'t>(trace: &UnrollTrace<'t>) -> Result<Var<'t>, ObjectiveError> {
    let tape = trace_tape(trace)?;
    let terms = trace
        .steps
        .windows(2)
        .map(|w| kl_diag_gauss_var(w[0].mu_x, w[0].sigma_x, w[1].mu_x, w[1].sigma_x))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(sum_vars(tape, terms)?)
}

/// Graph form of [`mean_smoothness_loss`].
pub fn mean_smoothness_loss_var<'t>(trace: &UnrollTrace<'t>) -> Result<Var<'t>, ObjectiveError> {
    if trace.len() < 3 {
        return Err(ObjectiveError::TooShort(trace.len()));
    }
    let tape = trace_tape(trace)?;
    let terms = trace
        .steps
        .windows(3)
        .map(|w| {
            let d2 = w[2].mu_x.sub(w[1].mu_x.scale(2.0))?.add(w[0].mu_x)?;
            Ok(d2.square().sum())
        })
        .collect::<Result<Vec<_>, TensorError>>()?;
    Ok(sum_vars(tape, terms)?)
}

fn trace_tape<'t>(trace: &UnrollTrace<'t>) -> Result<&'t Tape, ObjectiveError> {
    trace
        .steps
        .first()
        .map(|s| s.h.tape())
        .ok_or_else(|| ObjectiveError::LengthMismatch("empty unroll".into()))
}

/// Builds the chunk loss on the unroll's tape.
///
/// Returns the scalar node to differentiate and its breakdown. With
/// `lambda == 0` the smoothness term is evaluated for reporting only and never
/// enters the graph.
pub fn sisvae_loss_graph<'t>(
    trace: &UnrollTrace<'t>,
    x_chunk: ArrayView2<'_, f64>,
    lambda: f64,
    regularizer: Regularizer,
) -> Result<(Var<'t>, LossBreakdown), ObjectiveError> {
    let tape = trace_tape(trace)?;
    check_lengths("sequence lengths", &[trace.len(), x_chunk.ncols()])?;

    let mut kl_terms = Vec::with_capacity(trace.len());
    let mut nll_terms = Vec::with_capacity(trace.len());
    for (t, s) in trace.steps.iter().enumerate() {
        kl_terms.push(kl_diag_gauss_var(
            s.mu_z,
            s.sigma_z,
            s.mu_prior,
            s.sigma_prior,
        )?);
        let x_t = tape.constant(Tensor::vector(x_chunk.column(t).to_vec()));
        nll_terms.push(gauss_neg_loglik_var(x_t, s.mu_x, s.sigma_x)?);
    }
    let inference_kl = sum_vars(tape, kl_terms)?;
    let neg_loglik = sum_vars(tape, nll_terms)?;
    let mut total = inference_kl.add(neg_loglik)?;

    let smooth_value = if lambda != 0.0 && regularizer != Regularizer::None {
        let smooth = match regularizer {
            Regularizer::Kl => smoothness_loss_var(trace)?,
            Regularizer::Mean => mean_smoothness_loss_var(trace)?,
            Regularizer::None => unreachable!(),
        };
        total = total.add(smooth.scale(lambda))?;
        smooth.item()
    } else {
        match regularizer {
            Regularizer::Kl => smoothness_loss(&trace.recon()),
            Regularizer::Mean => mean_smoothness_loss(&trace.recon())?,
            Regularizer::None => 0.0,
        }
    };
    let breakdown = LossBreakdown {
        inference_kl: inference_kl.item(),
        neg_loglik: neg_loglik.item(),
        smooth: smooth_value,
        total: total.item(),
        lambda,
    };
    Ok((total, breakdown))
}
