//! Network components of the sequential VAE.
//!
//! Per timestep the model encodes the observation together with the previous
//! recurrent state into a diagonal-Gaussian posterior over `z_t`, samples it
//! with the reparameterization map, evaluates the state-conditioned prior,
//! decodes `z_t` into a diagonal-Gaussian reconstruction of `x_t`, and
//! advances the GRU with the latent features. The recurrence sees only
//! `phi_z(z_t)` and `h_{t-1}`.

mod checkpoint;
mod params;

pub use checkpoint::{Checkpoint, NamedArray, TrainerState, CHECKPOINT_FORMAT_VERSION};
pub use params::{BoundParams, ModelConfig, ModelParams, ParamId};

use ndarray::{Array2, ArrayView2};
use thiserror::Error;

use crate::diffcore::{Tape, Tensor, TensorError, Var};

#[derive(Debug, Error)]
pub enum NetsError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("{what}: expected shape {expected:?}, got {got:?}")]
    Shape {
        what: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("invalid Gaussian sequence: {0}")]
    InvalidSequence(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Which Gaussian head to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    /// Posterior over `z_t` from `[phi_x(x_t), h_{t-1}]`.
    Enc,
    /// Prior over `z_t` from `h_{t-1}`.
    Prior,
    /// Reconstruction of `x_t` from `[phi_z(z_t), h_{t-1}]`.
    Dec,
}

impl Head {
    fn ids(self) -> [ParamId; 6] {
        use ParamId::*;
        match self {
            Head::Enc => [EncHiddenW, EncHiddenB, EncMuW, EncMuB, EncSigmaW, EncSigmaB],
            Head::Prior => [
                PriorHiddenW,
                PriorHiddenB,
                PriorMuW,
                PriorMuB,
                PriorSigmaW,
                PriorSigmaB,
            ],
            Head::Dec => [DecHiddenW, DecHiddenB, DecMuW, DecMuB, DecSigmaW, DecSigmaB],
        }
    }

    fn input_dim(self, c: &ModelConfig) -> usize {
        match self {
            Head::Enc | Head::Dec => c.feat_dim + c.h_dim,
            Head::Prior => c.h_dim,
        }
    }
}

/// Whether an unroll feeds training or scoring. Numerically identical.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnrollMode {
    Train,
    Score,
}

fn check_vector(what: &str, v: Var<'_>, dim: usize) -> Result<(), NetsError> {
    let shape = v.shape();
    if shape != [dim] {
        return Err(NetsError::Shape {
            what: what.to_string(),
            expected: vec![dim],
            got: shape,
        });
    }
    Ok(())
}

/// `tanh(W x + b)`, the observation feature extractor.
pub fn feature_x<'t>(p: &BoundParams<'t>, x: Var<'t>) -> Result<Var<'t>, NetsError> {
    check_vector("x", x, p.config().x_dim)?;
    let pre = p
        .var(ParamId::FeatXW)
        .matmul(x)?
        .add(p.var(ParamId::FeatXB))?;
    Ok(pre.tanh())
}

/// `tanh(W z + b)`, the latent feature extractor.
pub fn feature_z<'t>(p: &BoundParams<'t>, z: Var<'t>) -> Result<Var<'t>, NetsError> {
    check_vector("z", z, p.config().z_dim)?;
    let pre = p
        .var(ParamId::FeatZW)
        .matmul(z)?
        .add(p.var(ParamId::FeatZB))?;
    Ok(pre.tanh())
}

/// One GRU transition on input features `y`.
pub fn gru_step<'t>(
    p: &BoundParams<'t>,
    y: Var<'t>,
    h_prev: Var<'t>,
) -> Result<Var<'t>, NetsError> {
    use ParamId::*;
    let c = p.config();
    check_vector("gru input", y, c.feat_dim)?;
    check_vector("gru state", h_prev, c.h_dim)?;
    let gate = |w: ParamId, u: ParamId, b: ParamId| -> Result<Var<'t>, TensorError> {
        Ok(p.var(w)
            .matmul(y)?
            .add(p.var(u).matmul(h_prev)?)?
            .add(p.var(b))?
            .sigmoid())
    };
    let r = gate(GruWr, GruUr, GruBr)?;
    let s = gate(GruWs, GruUs, GruBs)?;
    let candidate = p
        .var(GruWh)
        .matmul(y)?
        .add(r.mul(p.var(GruUh).matmul(h_prev)?)?)?
        .add(p.var(GruBh))?
        .tanh();
    // (1 - s) * candidate + s * h_prev == candidate + s * (h_prev - candidate)
    let keep = s.mul(h_prev.sub(candidate)?)?;
    Ok(candidate.add(keep)?)
}

/// Mean and stddev from one head. Stddev is `softplus(raw) + sigma_floor`.
pub fn gaussian_head<'t>(
    p: &BoundParams<'t>,
    head: Head,
    input: Var<'t>,
) -> Result<(Var<'t>, Var<'t>), NetsError> {
    check_vector("head input", input, head.input_dim(p.config()))?;
    let [hw, hb, mw, mb, sw, sb] = head.ids();
    let hidden = p.var(hw).matmul(input)?.add(p.var(hb))?.tanh();
    let mu = p.var(mw).matmul(hidden)?.add(p.var(mb))?;
    let sigma = p
        .var(sw)
        .matmul(hidden)?
        .add(p.var(sb))?
        .softplus()
        .add_scalar(p.config().sigma_floor);
    Ok((mu, sigma))
}

/// `mu + sigma * eps`.
pub fn reparameterize<'t>(
    mu: Var<'t>,
    sigma: Var<'t>,
    eps: Var<'t>,
) -> Result<Var<'t>, TensorError> {
    mu.add(sigma.mul(eps)?)
}

/// Graph handles for one timestep of an unroll.
#[derive(Clone, Copy, Debug)]
pub struct StepVars<'t> {
    pub mu_z: Var<'t>,
    pub sigma_z: Var<'t>,
    pub mu_prior: Var<'t>,
    pub sigma_prior: Var<'t>,
    pub mu_x: Var<'t>,
    pub sigma_x: Var<'t>,
    pub z: Var<'t>,
    pub h: Var<'t>,
}

/// Every per-timestep node produced by [`unroll`].
#[derive(Clone, Debug)]
pub struct UnrollTrace<'t> {
    pub mode: UnrollMode,
    pub steps: Vec<StepVars<'t>>,
}

impl<'t> UnrollTrace<'t> {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    fn stack(&self, pick: impl Fn(&StepVars<'t>) -> Tensor) -> Array2<f64> {
        let rows: Vec<Tensor> = self.steps.iter().map(pick).collect();
        let dim = rows.first().map_or(0, Tensor::numel);
        let flat: Vec<f64> = rows.into_iter().flat_map(Tensor::into_data).collect();
        Array2::from_shape_vec((self.steps.len(), dim), flat).expect("uniform step width")
    }

    fn seq(
        &self,
        mu: impl Fn(&StepVars<'t>) -> Var<'t>,
        sigma: impl Fn(&StepVars<'t>) -> Var<'t>,
    ) -> DiagGaussianSeq {
        DiagGaussianSeq {
            means: self.stack(|s| mu(s).value()),
            stddevs: self.stack(|s| sigma(s).value()),
        }
    }

    pub fn posterior(&self) -> DiagGaussianSeq {
        self.seq(|s| s.mu_z, |s| s.sigma_z)
    }

    pub fn prior(&self) -> DiagGaussianSeq {
        self.seq(|s| s.mu_prior, |s| s.sigma_prior)
    }

    pub fn recon(&self) -> DiagGaussianSeq {
        self.seq(|s| s.mu_x, |s| s.sigma_x)
    }

    pub fn z_path(&self) -> Array2<f64> {
        self.stack(|s| s.z.value())
    }

    pub fn h_path(&self) -> Array2<f64> {
        self.stack(|s| s.h.value())
    }

    pub fn to_output(&self) -> UnrollOutput {
        UnrollOutput {
            posterior: self.posterior(),
            prior: self.prior(),
            recon: self.recon(),
            z_path: self.z_path(),
            h_path: self.h_path(),
        }
    }
}

/// Runs the model over a chunk.
///
/// `x_chunk` is `M x W` (one column per timestep) and `noise` is `W x z_dim`
/// (one standard-normal draw per timestep). The state starts at zero.
pub fn unroll<'t>(
    p: &BoundParams<'t>,
    x_chunk: ArrayView2<'_, f64>,
    noise: ArrayView2<'_, f64>,
    mode: UnrollMode,
) -> Result<UnrollTrace<'t>, NetsError> {
    let c = *p.config();
    let (m, w) = x_chunk.dim();
    if m != c.x_dim || w == 0 {
        return Err(NetsError::Shape {
            what: "x_chunk".into(),
            expected: vec![c.x_dim, w.max(1)],
            got: vec![m, w],
        });
    }
    if noise.dim() != (w, c.z_dim) {
        return Err(NetsError::Shape {
            what: "noise".into(),
            expected: vec![w, c.z_dim],
            got: vec![noise.nrows(), noise.ncols()],
        });
    }
    let tape: &'t Tape = p.var(ParamId::FeatXB).tape();
    let mut h = tape.constant(Tensor::zeros(&[c.h_dim]));
    let mut steps = Vec::with_capacity(w);
    for t in 0..w {
        let x_t = tape.constant(Tensor::vector(x_chunk.column(t).to_vec()));
        let eps = tape.constant(Tensor::vector(noise.row(t).to_vec()));

        let enc_in = feature_x(p, x_t)?.concat(h)?;
        let (mu_z, sigma_z) = gaussian_head(p, Head::Enc, enc_in)?;
        let z = reparameterize(mu_z, sigma_z, eps)?;
        let (mu_prior, sigma_prior) = gaussian_head(p, Head::Prior, h)?;
        let fz = feature_z(p, z)?;
        let (mu_x, sigma_x) = gaussian_head(p, Head::Dec, fz.concat(h)?)?;
        h = gru_step(p, fz, h)?;

        steps.push(StepVars {
            mu_z,
            sigma_z,
            mu_prior,
            sigma_prior,
            mu_x,
            sigma_x,
            z,
            h,
        });
    }
    Ok(UnrollTrace { mode, steps })
}

/// Plain-value result of an unroll.
#[derive(Clone, Debug, PartialEq)]
pub struct UnrollOutput {
    pub posterior: DiagGaussianSeq,
    pub prior: DiagGaussianSeq,
    pub recon: DiagGaussianSeq,
    pub z_path: Array2<f64>,
    pub h_path: Array2<f64>,
}

/// Unroll without gradient tracking.
pub fn unroll_values(
    params: &ModelParams,
    x_chunk: ArrayView2<'_, f64>,
    noise: ArrayView2<'_, f64>,
    mode: UnrollMode,
) -> Result<UnrollOutput, NetsError> {
    let tape = Tape::new();
    let bound = params.bind(&tape, false);
    Ok(unroll(&bound, x_chunk, noise, mode)?.to_output())
}

/// Diagonal Gaussians over time: row `t` holds the mean and stddev vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagGaussianSeq {
    means: Array2<f64>,
    stddevs: Array2<f64>,
}

impl DiagGaussianSeq {
    /// Means and stddevs are `T' x D`; stddevs must be positive and every
    /// value finite.
    pub fn new(means: Array2<f64>, stddevs: Array2<f64>) -> Result<Self, NetsError> {
        if means.dim() != stddevs.dim() {
            return Err(NetsError::InvalidSequence(format!(
                "means {:?} vs stddevs {:?}",
                means.dim(),
                stddevs.dim()
            )));
        }
        if means.iter().any(|v| !v.is_finite()) {
            return Err(NetsError::InvalidSequence("non-finite mean".into()));
        }
        if let Some(s) = stddevs.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(NetsError::InvalidSequence(format!(
                "stddev {s} is not positive"
            )));
        }
        Ok(DiagGaussianSeq { means, stddevs })
    }

    pub fn len(&self) -> usize {
        self.means.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    pub fn means(&self) -> &Array2<f64> {
        &self.means
    }

    pub fn stddevs(&self) -> &Array2<f64> {
        &self.stddevs
    }
}
