use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::NetsError;
use crate::diffcore::{Tape, Tensor, Var};
use crate::rng::{derive_rng, stream};

/// Layer sizes of the model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Series per timestep (M).
    pub x_dim: usize,
    /// Recurrent state size; also the hidden width of every head.
    pub h_dim: usize,
    pub z_dim: usize,
    /// Output width of the observation and latent feature extractors.
    pub feat_dim: usize,
    /// Added to every softplus stddev.
    pub sigma_floor: f64,
}

impl ModelConfig {
    pub const DEFAULT_SIGMA_FLOOR: f64 = 1e-3;

    /// `feat_dim` follows `h_dim`.
    pub fn new(x_dim: usize, h_dim: usize, z_dim: usize) -> Self {
        ModelConfig {
            x_dim,
            h_dim,
            z_dim,
            feat_dim: h_dim,
            sigma_floor: Self::DEFAULT_SIGMA_FLOOR,
        }
    }

    pub fn validate(&self) -> Result<(), NetsError> {
        if self.x_dim == 0 || self.h_dim == 0 || self.z_dim == 0 || self.feat_dim == 0 {
            return Err(NetsError::InvalidConfig(format!(
                "all dimensions must be >= 1, got {self:?}"
            )));
        }
        if !(self.sigma_floor > 0.0 && self.sigma_floor <= 1e-2) {
            return Err(NetsError::InvalidConfig(format!(
                "sigma_floor {} outside (0, 1e-2]",
                self.sigma_floor
            )));
        }
        Ok(())
    }
}

macro_rules! param_ids {
    ($($id:ident => $name:literal),* $(,)?) => {
        /// Every learnable tensor, in storage order.
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
        pub enum ParamId { $($id),* }

        impl ParamId {
            pub const ALL: &'static [ParamId] = &[$(ParamId::$id),*];

            pub fn name(self) -> &'static str {
                match self { $(ParamId::$id => $name),* }
            }
        }
    };
}

param_ids! {
    FeatXW => "phi_x.weight", FeatXB => "phi_x.bias",
    FeatZW => "phi_z.weight", FeatZB => "phi_z.bias",
    EncHiddenW => "enc.hidden.weight", EncHiddenB => "enc.hidden.bias",
    EncMuW => "enc.mu.weight", EncMuB => "enc.mu.bias",
    EncSigmaW => "enc.sigma.weight", EncSigmaB => "enc.sigma.bias",
    PriorHiddenW => "prior.hidden.weight", PriorHiddenB => "prior.hidden.bias",
    PriorMuW => "prior.mu.weight", PriorMuB => "prior.mu.bias",
    PriorSigmaW => "prior.sigma.weight", PriorSigmaB => "prior.sigma.bias",
    DecHiddenW => "dec.hidden.weight", DecHiddenB => "dec.hidden.bias",
    DecMuW => "dec.mu.weight", DecMuB => "dec.mu.bias",
    DecSigmaW => "dec.sigma.weight", DecSigmaB => "dec.sigma.bias",
    GruWr => "gru.w_r", GruUr => "gru.u_r", GruBr => "gru.b_r",
    GruWs => "gru.w_s", GruUs => "gru.u_s", GruBs => "gru.b_s",
    GruWh => "gru.w_h", GruUh => "gru.u_h", GruBh => "gru.b_h",
}

impl ParamId {
    pub fn from_name(name: &str) -> Option<ParamId> {
        ParamId::ALL.iter().copied().find(|p| p.name() == name)
    }

    pub fn shape(self, c: &ModelConfig) -> Vec<usize> {
        use ParamId::*;
        let (x, h, z, f) = (c.x_dim, c.h_dim, c.z_dim, c.feat_dim);
        match self {
            FeatXW => vec![f, x],
            FeatZW => vec![f, z],
            FeatXB | FeatZB => vec![f],
            EncHiddenW | DecHiddenW => vec![h, f + h],
            PriorHiddenW => vec![h, h],
            EncHiddenB | PriorHiddenB | DecHiddenB => vec![h],
            EncMuW | EncSigmaW | PriorMuW | PriorSigmaW => vec![z, h],
            EncMuB | EncSigmaB | PriorMuB | PriorSigmaB => vec![z],
            DecMuW | DecSigmaW => vec![x, h],
            DecMuB | DecSigmaB => vec![x],
            GruWr | GruWs | GruWh => vec![h, f],
            GruUr | GruUs | GruUh => vec![h, h],
            GruBr | GruBs | GruBh => vec![h],
        }
    }

    /// Input width of the layer this tensor belongs to.
    pub fn fan_in(self, c: &ModelConfig) -> usize {
        use ParamId::*;
        match self {
            FeatXW | FeatXB => c.x_dim,
            FeatZW | FeatZB => c.z_dim,
            EncHiddenW | EncHiddenB | DecHiddenW | DecHiddenB => c.feat_dim + c.h_dim,
            GruWr | GruWs | GruWh => c.feat_dim,
            _ => c.h_dim,
        }
    }
}

/// All learnable weights, stored in [`ParamId::ALL`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    config: ModelConfig,
    tensors: Vec<Tensor>,
}

impl ModelParams {
    /// Uniform(-a, a) with `a = sqrt(1 / fan_in)` for every tensor.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, NetsError> {
        config.validate()?;
        let mut rng = derive_rng(seed, stream::INIT, &[]);
        let tensors = ParamId::ALL
            .iter()
            .map(|&id| {
                let shape = id.shape(&config);
                let a = (1.0 / id.fan_in(&config) as f64).sqrt();
                let numel = shape.iter().product();
                let data = (0..numel).map(|_| rng.random_range(-a..a)).collect();
                Tensor::new(shape, data).expect("param shape")
            })
            .collect();
        Ok(ModelParams { config, tensors })
    }

    pub fn zeros(config: ModelConfig) -> Result<Self, NetsError> {
        config.validate()?;
        let tensors = ParamId::ALL
            .iter()
            .map(|id| Tensor::zeros(&id.shape(&config)))
            .collect();
        Ok(ModelParams { config, tensors })
    }

    /// Builds params from tensors in [`ParamId::ALL`] order, checking shapes.
    pub fn from_tensors(config: ModelConfig, tensors: Vec<Tensor>) -> Result<Self, NetsError> {
        config.validate()?;
        if tensors.len() != ParamId::ALL.len() {
            return Err(NetsError::Checkpoint(format!(
                "expected {} tensors, got {}",
                ParamId::ALL.len(),
                tensors.len()
            )));
        }
        for (id, t) in ParamId::ALL.iter().zip(&tensors) {
            let expected = id.shape(&config);
            if t.shape() != expected.as_slice() {
                return Err(NetsError::Shape {
                    what: id.name().to_string(),
                    expected,
                    got: t.shape().to_vec(),
                });
            }
        }
        Ok(ModelParams { config, tensors })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id as usize]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id as usize]
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        ParamId::ALL.iter().copied().zip(&self.tensors)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Concatenation of every tensor in storage order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors
            .iter()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }

    /// Inverse of [`flatten`](Self::flatten). Panics on length mismatch.
    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_scalars(), "flat parameter length");
        let mut offset = 0;
        for t in &mut self.tensors {
            let n = t.numel();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
    }

    /// Places every tensor on `tape`, trainable or constant.
    pub fn bind<'t>(&self, tape: &'t Tape, trainable: bool) -> BoundParams<'t> {
        let vars = self
            .tensors
            .iter()
            .map(|t| {
                if trainable {
                    tape.param(t.clone())
                } else {
                    tape.constant(t.clone())
                }
            })
            .collect();
        BoundParams {
            config: self.config,
            vars,
        }
    }
}

/// Model parameters as leaves of one tape.
#[derive(Clone)]
pub struct BoundParams<'t> {
    config: ModelConfig,
    vars: Vec<Var<'t>>,
}

impl<'t> BoundParams<'t> {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn var(&self, id: ParamId) -> Var<'t> {
        self.vars[id as usize]
    }

    pub fn vars(&self) -> &[Var<'t>] {
        &self.vars
    }
}
