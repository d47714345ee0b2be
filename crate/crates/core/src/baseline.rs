//! Plain MLP comparator operating on flattened raw CSI features.

use crate::error::{Error, Result};
use crate::model::{Localizer, RunMode, D_OUT};
use crate::numcore::{NodeId, Tape, Tensor};
use crate::params::ParamSet;
use crate::rng::{substream, Domain};
use rand::Rng;

/// Hidden layer count; fixed by the architecture.
pub const HIDDEN_LAYERS: usize = 4;

/// Dropout rate after every hidden layer; fixed by the architecture.
pub const BASE_DROPOUT: f64 = 0.2;

#[derive(Clone, Debug)]
pub struct BaseDnnConfig {
    /// Flattened input width N_c' · 3N_r.
    pub input_dim: usize,
    /// Hidden width, kept equal to the attention model's D.
    pub d_model: usize,
}

impl BaseDnnConfig {
    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.d_model == 0 {
            return Err(Error::Config("base DNN dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// Four ReLU layers of width D with dropout 0.2 after each, then a linear
/// map to the two coordinates.
pub struct BaseDnn {
    cfg: BaseDnnConfig,
    params: ParamSet,
}

impl BaseDnn {
    pub fn new(cfg: BaseDnnConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = substream(seed, Domain::ParamInit, 1, 0);
        let mut params = ParamSet::new();
        let mut fan_in = cfg.input_dim;
        for layer in 0..HIDDEN_LAYERS {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let data: Vec<f64> = (0..fan_in * cfg.d_model)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            params.push(
                format!("layer{layer}.w"),
                Tensor::new(vec![fan_in, cfg.d_model], data)?,
                true,
            );
            params.push(format!("layer{layer}.b"), Tensor::zeros(vec![1, cfg.d_model]), true);
            fan_in = cfg.d_model;
        }
        let bound = 1.0 / (cfg.d_model as f64).sqrt();
        let data: Vec<f64> = (0..cfg.d_model * D_OUT)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        params.push("out.w", Tensor::new(vec![cfg.d_model, D_OUT], data)?, true);
        params.push("out.b", Tensor::zeros(vec![1, D_OUT]), true);
        Ok(Self { cfg, params })
    }

    pub fn from_parts(cfg: BaseDnnConfig, params: ParamSet) -> Result<Self> {
        let mut model = BaseDnn::new(cfg, 0)?;
        for (expect, got) in model.params.iter().zip(params.iter()) {
            if expect.name != got.name || expect.value.shape() != got.value.shape() {
                return Err(Error::Format(format!(
                    "checkpoint parameter {} {:?} does not fit slot {} {:?}",
                    got.name,
                    got.value.shape(),
                    expect.name,
                    expect.value.shape()
                )));
            }
        }
        model.params.load_values(&params)?;
        Ok(model)
    }

    pub fn config(&self) -> &BaseDnnConfig {
        &self.cfg
    }
}

impl Localizer for BaseDnn {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn forward(
        &self,
        tape: &mut Tape,
        param_nodes: &[NodeId],
        features: &Tensor,
        mode: &mut RunMode,
    ) -> Result<NodeId> {
        if features.len() != self.cfg.input_dim {
            return Err(Error::Dimension(format!(
                "features have {} entries, expected {}",
                features.len(),
                self.cfg.input_dim
            )));
        }
        if param_nodes.len() != self.params.len() {
            return Err(Error::Usage("parameter node list out of sync".into()));
        }
        // Raw CSI goes in flattened, whatever its 2-D layout was.
        let flat = Tensor::new(vec![1, self.cfg.input_dim], features.data().to_vec())?;
        let mut h = tape.leaf(flat, false);
        for layer in 0..HIDDEN_LAYERS {
            let w = param_nodes[2 * layer];
            let b = param_nodes[2 * layer + 1];
            let z = tape.matmul(h, w)?;
            let z = tape.add_row_broadcast(z, b)?;
            let z = tape.relu(z);
            h = match mode {
                RunMode::Eval => z,
                RunMode::Train(rng) => tape.dropout(z, BASE_DROPOUT, true, rng)?,
            };
        }
        let out = tape.matmul(h, param_nodes[2 * HIDDEN_LAYERS])?;
        tape.add_row_broadcast(out, param_nodes[2 * HIDDEN_LAYERS + 1])
    }
}
