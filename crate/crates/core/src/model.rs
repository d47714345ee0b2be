//! Attention-based CSI localizer.
//!
//! Each active subcarrier's realified channel row is linearly embedded,
//! shifted by a learnable positional vector, optionally joined by a
//! learnable summary token, and passed through a pre-norm transformer block
//! whose query, key, and value projections share one weight matrix. Pooled
//! block outputs feed a small MLP head that regresses the 2-D position.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::numcore::{NodeId, Tape, Tensor};
use crate::params::ParamSet;
use crate::rng::{substream, Domain};

/// Output dimensionality: planar coordinates only.
pub const D_OUT: usize = 2;

/// Variance guard inside every layer norm.
pub const LN_EPS: f64 = 1e-5;

/// How block outputs are reduced before the head.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolingMode {
    /// Mean over the subcarrier outputs (the summary token, if present, is
    /// excluded from the mean).
    Average,
    /// The summary token's output row alone.
    Lid,
}

/// Execution mode for a forward pass. Training mode carries the RNG that
/// draws dropout masks; evaluation is deterministic.
#[allow(clippy::large_enum_variant)]
pub enum RunMode {
    Eval,
    Train(ChaCha8Rng),
}

/// Anything that maps a feature matrix to a position estimate on a tape.
/// Implementations must be shareable across batch-evaluation threads.
pub trait Localizer: Send + Sync {
    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;
    /// Record the forward pass. `param_nodes` must hold one leaf per entry
    /// of `params()`, in order.
    fn forward(
        &self,
        tape: &mut Tape,
        param_nodes: &[NodeId],
        features: &Tensor,
        mode: &mut RunMode,
    ) -> Result<NodeId>;
}

/// Evaluation-mode prediction for one sample.
pub fn predict(model: &dyn Localizer, features: &Tensor) -> Result<[f64; 2]> {
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = model
        .params()
        .iter()
        .map(|p| tape.leaf_shared(Arc::clone(&p.value), false))
        .collect();
    let out = model.forward(&mut tape, &ids, features, &mut RunMode::Eval)?;
    let v = tape.value(out);
    if v.len() != D_OUT {
        return Err(Error::Dimension(format!(
            "localizer output has shape {:?}",
            v.shape()
        )));
    }
    Ok([v.data()[0], v.data()[1]])
}

#[derive(Clone, Debug)]
pub struct WitConfig {
    /// Active subcarrier count N_c'.
    pub n_subcarriers: usize,
    /// Per-subcarrier feature width 3·N_r.
    pub n_features: usize,
    /// Hidden width D, kept constant through the block.
    pub d_model: usize,
    /// Transformer block count; one unless ablating.
    pub blocks: usize,
    pub pooling: PoolingMode,
    pub dropout: f64,
    /// Layer-norm gain; fixed unless `learn_layer_norm`.
    pub gamma: f64,
    /// Layer-norm shift; fixed unless `learn_layer_norm`.
    pub beta: f64,
    pub learn_layer_norm: bool,
    /// Keep the additive skip around the attention output. Disabling it is
    /// an ablation switch, not a production setting.
    pub residual: bool,
}

impl WitConfig {
    fn validate(&self) -> Result<()> {
        if self.n_subcarriers == 0 || self.n_features == 0 || self.d_model == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if self.blocks == 0 {
            return Err(Error::Config("need at least one transformer block".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout {} not in [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }
}

struct BlockLayout {
    ln1_gamma: usize,
    ln1_beta: usize,
    attn_w: usize,
    ln2_gamma: usize,
    ln2_beta: usize,
    mlp1_w1: usize,
    mlp1_b1: usize,
    mlp1_w2: usize,
    mlp1_b2: usize,
}

struct WitLayout {
    embed: usize,
    pos: usize,
    lid: Option<usize>,
    blocks: Vec<BlockLayout>,
    mlp2_w: usize,
    mlp2_b: usize,
    out_w: usize,
    out_b: usize,
}

pub struct WitModel {
    cfg: WitConfig,
    params: ParamSet,
    layout: WitLayout,
}

fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    Tensor::new(vec![rows, cols], data).expect("sized above")
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Tensor {
    let dist = Normal::new(0.0, std).expect("std >= 0");
    let data: Vec<f64> = (0..rows * cols).map(|_| dist.sample(rng)).collect();
    Tensor::new(vec![rows, cols], data).expect("sized above")
}

impl WitModel {
    pub fn new(cfg: WitConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = substream(seed, Domain::ParamInit, 0, 0);
        let d = cfg.d_model;
        let mut params = ParamSet::new();

        let embed = params.push(
            "embed.weight",
            uniform_matrix(&mut rng, cfg.n_features, d, cfg.n_features),
            true,
        );
        // Positions and the summary token start near zero so early training
        // stays close to the permutation-equivariant regime.
        let pos = params.push(
            "pos.table",
            gaussian_matrix(&mut rng, cfg.n_subcarriers, d, 0.02),
            true,
        );
        let lid = match cfg.pooling {
            PoolingMode::Lid => Some(params.push(
                "lid.token",
                gaussian_matrix(&mut rng, 1, d, 0.02),
                true,
            )),
            PoolingMode::Average => None,
        };

        let mut blocks = Vec::with_capacity(cfg.blocks);
        for b in 0..cfg.blocks {
            let ln1_gamma = params.push(
                format!("block{b}.ln1.gamma"),
                Tensor::scalar(cfg.gamma),
                cfg.learn_layer_norm,
            );
            let ln1_beta = params.push(
                format!("block{b}.ln1.beta"),
                Tensor::scalar(cfg.beta),
                cfg.learn_layer_norm,
            );
            let attn_w = params.push(
                format!("block{b}.attn.weight"),
                uniform_matrix(&mut rng, d, d, d),
                true,
            );
            let ln2_gamma = params.push(
                format!("block{b}.ln2.gamma"),
                Tensor::scalar(cfg.gamma),
                cfg.learn_layer_norm,
            );
            let ln2_beta = params.push(
                format!("block{b}.ln2.beta"),
                Tensor::scalar(cfg.beta),
                cfg.learn_layer_norm,
            );
            let mlp1_w1 = params.push(
                format!("block{b}.mlp1.w1"),
                uniform_matrix(&mut rng, d, d, d),
                true,
            );
            let mlp1_b1 = params.push(format!("block{b}.mlp1.b1"), Tensor::zeros(vec![1, d]), true);
            let mlp1_w2 = params.push(
                format!("block{b}.mlp1.w2"),
                uniform_matrix(&mut rng, d, d, d),
                true,
            );
            let mlp1_b2 = params.push(format!("block{b}.mlp1.b2"), Tensor::zeros(vec![1, d]), true);
            blocks.push(BlockLayout {
                ln1_gamma,
                ln1_beta,
                attn_w,
                ln2_gamma,
                ln2_beta,
                mlp1_w1,
                mlp1_b1,
                mlp1_w2,
                mlp1_b2,
            });
        }

        let mlp2_w = params.push("head.mlp2.w", uniform_matrix(&mut rng, d, d, d), true);
        let mlp2_b = params.push("head.mlp2.b", Tensor::zeros(vec![1, d]), true);
        let out_w = params.push("head.out.w", uniform_matrix(&mut rng, d, D_OUT, d), true);
        let out_b = params.push("head.out.b", Tensor::zeros(vec![1, D_OUT]), true);

        Ok(Self {
            cfg,
            params,
            layout: WitLayout {
                embed,
                pos,
                lid,
                blocks,
                mlp2_w,
                mlp2_b,
                out_w,
                out_b,
            },
        })
    }

    /// Rebuild a model around externally loaded parameters (checkpoint
    /// restore). The layout must match what `new` would produce.
    pub fn from_parts(cfg: WitConfig, params: ParamSet) -> Result<Self> {
        let fresh = WitModel::new(cfg, 0)?;
        let mut model = fresh;
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

    pub fn config(&self) -> &WitConfig {
        &self.cfg
    }

    /// Overwrite the positional table (used by ablation tests).
    pub fn set_positional_table(&mut self, table: Tensor) -> Result<()> {
        let idx = self.layout.pos;
        if table.shape() != self.params.get(idx).value.shape() {
            return Err(Error::Dimension(format!(
                "positional table shape {:?}",
                table.shape()
            )));
        }
        *self.params.value_mut(idx) = table;
        Ok(())
    }
}

impl Localizer for WitModel {
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
        let cfg = &self.cfg;
        let lay = &self.layout;
        if features.shape() != [cfg.n_subcarriers, cfg.n_features] {
            return Err(Error::Dimension(format!(
                "features shape {:?}, expected [{}, {}]",
                features.shape(),
                cfg.n_subcarriers,
                cfg.n_features
            )));
        }
        if param_nodes.len() != self.params.len() {
            return Err(Error::Usage("parameter node list out of sync".into()));
        }

        let x = tape.leaf(features.clone(), false);
        let embedded = tape.matmul(x, param_nodes[lay.embed])?;
        let with_pos = tape.add(embedded, param_nodes[lay.pos])?;
        let mut h = match lay.lid {
            Some(lid) => tape.concat_rows(param_nodes[lid], with_pos)?,
            None => with_pos,
        };

        let scale = 1.0 / (cfg.d_model as f64).sqrt();
        for block in &lay.blocks {
            let normed = tape.layer_norm(
                h,
                param_nodes[block.ln1_gamma],
                param_nodes[block.ln1_beta],
                LN_EPS,
            )?;
            // Tied projections: one matrix serves query, key, and value.
            let projected = tape.matmul(normed, param_nodes[block.attn_w])?;
            let scores = tape.matmul_nt(projected, projected)?;
            let scores = tape.scale(scores, scale);
            let attn = tape.softmax_rows(scores)?;
            let attended = tape.matmul(attn, projected)?;

            let skip = tape.add(attended, h)?;
            let normed2 = tape.layer_norm(
                skip,
                param_nodes[block.ln2_gamma],
                param_nodes[block.ln2_beta],
                LN_EPS,
            )?;
            let hidden = tape.matmul(normed2, param_nodes[block.mlp1_w1])?;
            let hidden = tape.add_row_broadcast(hidden, param_nodes[block.mlp1_b1])?;
            let hidden = tape.relu(hidden);
            let hidden = apply_dropout(tape, hidden, cfg.dropout, mode)?;
            let mlp_out = tape.matmul(hidden, param_nodes[block.mlp1_w2])?;
            let mlp_out = tape.add_row_broadcast(mlp_out, param_nodes[block.mlp1_b2])?;
            h = if cfg.residual {
                tape.add(mlp_out, skip)?
            } else {
                mlp_out
            };
        }

        let pooled = match cfg.pooling {
            PoolingMode::Average => {
                let subcarrier_rows = match lay.lid {
                    Some(_) => tape.slice_rows(h, 1, cfg.n_subcarriers)?,
                    None => h,
                };
                tape.mean_rows(subcarrier_rows)?
            }
            PoolingMode::Lid => tape.slice_rows(h, 0, 1)?,
        };

        let z = tape.matmul(pooled, param_nodes[lay.mlp2_w])?;
        let z = tape.add_row_broadcast(z, param_nodes[lay.mlp2_b])?;
        let z = tape.relu(z);
        let z = apply_dropout(tape, z, cfg.dropout, mode)?;
        let out = tape.matmul(z, param_nodes[lay.out_w])?;
        tape.add_row_broadcast(out, param_nodes[lay.out_b])
    }
}

fn apply_dropout(tape: &mut Tape, x: NodeId, rate: f64, mode: &mut RunMode) -> Result<NodeId> {
    match mode {
        RunMode::Eval => Ok(x),
        RunMode::Train(rng) => tape.dropout(x, rate, true, rng),
    }
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;

    pub(crate) fn toy_config(pooling: PoolingMode) -> WitConfig {
        WitConfig {
            n_subcarriers: 4,
            n_features: 6,
            d_model: 8,
            blocks: 1,
            pooling,
            dropout: 0.1,
            gamma: 1.0,
            beta: 1e-4,
            learn_layer_norm: false,
            residual: true,
        }
    }

    fn random_features(seed: u64, rows: usize, cols: usize) -> Tensor {
        let mut rng = substream(seed, Domain::Sample, 0, 0);
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::new(vec![rows, cols], data).unwrap()
    }

    #[test]
    fn eval_forward_is_deterministic() {
        let model = WitModel::new(toy_config(PoolingMode::Average), 3).unwrap();
        let feats = random_features(1, 4, 6);
        let a = predict(&model, &feats).unwrap();
        let b = predict(&model, &feats).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), D_OUT);
    }

    #[test]
    fn lid_mode_prepends_token() {
        let model = WitModel::new(toy_config(PoolingMode::Lid), 3).unwrap();
        assert!(model.params.by_name("lid.token").is_some());
        let avg = WitModel::new(toy_config(PoolingMode::Average), 3).unwrap();
        assert!(avg.params.by_name("lid.token").is_none());
    }

    #[test]
    fn embedding_matches_matmul_oracle() {
        let model = WitModel::new(toy_config(PoolingMode::Average), 5).unwrap();
        let feats = random_features(2, 4, 6);
        let embed = model.params.by_name("embed.weight").unwrap();
        // independent row-by-row dot products
        let mut tape = Tape::new();
        let x = tape.leaf(feats.clone(), false);
        let w = tape.leaf((*embed.value).clone(), false);
        let e = tape.matmul(x, w).unwrap();
        for i in 0..4 {
            for j in 0..8 {
                let mut dot = 0.0;
                for t in 0..6 {
                    dot += feats.get2(i, t) * embed.value.get2(t, j);
                }
                assert!((tape.value(e).get2(i, j) - dot).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn one_hot_embedding_selects_row() {
        let model = WitModel::new(toy_config(PoolingMode::Average), 5).unwrap();
        let embed = model.params.by_name("embed.weight").unwrap();
        let mut data = vec![0.0; 4 * 6];
        data[2] = 1.0; // row 0 one-hot at slot 2
        let feats = Tensor::new(vec![4, 6], data).unwrap();
        let mut tape = Tape::new();
        let x = tape.leaf(feats, false);
        let w = tape.leaf((*embed.value).clone(), false);
        let e = tape.matmul(x, w).unwrap();
        for j in 0..8 {
            assert_eq!(tape.value(e).get2(0, j), embed.value.get2(2, j));
        }
    }

    /// Step-by-step re-implementation of the forward pass with plain loops;
    /// reads whatever parameter values the model currently holds. Average
    /// pooling, single block, no dropout.
    fn scripted_predict(model: &WitModel, feats: &Tensor) -> [f64; 2] {
        let cfg = model.config();
        assert_eq!(cfg.blocks, 1);
        assert_eq!(cfg.pooling, PoolingMode::Average);
        let (n_sub, n_feat, d) = (cfg.n_subcarriers, cfg.n_features, cfg.d_model);
        let read =
            |name: &str| -> Vec<f64> { model.params.by_name(name).unwrap().value.data().to_vec() };
        let matvec = |m: &[f64], rows: usize, cols: usize, x: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; cols];
            for r in 0..rows {
                for c in 0..cols {
                    out[c] += x[r] * m[r * cols + c];
                }
            }
            out
        };
        let layer_norm = |row: &[f64]| -> Vec<f64> {
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / row.len() as f64;
            row.iter()
                .map(|v| cfg.gamma * (v - mean) / (var + LN_EPS).sqrt() + cfg.beta)
                .collect()
        };

        let embed = read("embed.weight");
        let pos = read("pos.table");
        let mut ehat: Vec<Vec<f64>> = Vec::new();
        for i in 0..n_sub {
            let row: Vec<f64> = (0..n_feat).map(|c| feats.get2(i, c)).collect();
            let mut e = matvec(&embed, n_feat, d, &row);
            for (j, v) in e.iter_mut().enumerate() {
                *v += pos[i * d + j];
            }
            ehat.push(e);
        }
        let w = read("block0.attn.weight");
        let proj: Vec<Vec<f64>> = ehat.iter().map(|r| matvec(&w, d, d, &layer_norm(r))).collect();
        let mut scores = vec![vec![0.0f64; n_sub]; n_sub];
        for i in 0..n_sub {
            for j in 0..n_sub {
                let dot: f64 = proj[i].iter().zip(&proj[j]).map(|(a, b)| a * b).sum();
                scores[i][j] = dot / (d as f64).sqrt();
            }
        }
        let mut attended: Vec<Vec<f64>> = Vec::new();
        for i in 0..n_sub {
            let max = scores[i].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores[i].iter().map(|s| (s - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            let mut out = vec![0.0; d];
            for j in 0..n_sub {
                for c in 0..d {
                    out[c] += exps[j] / z * proj[j][c];
                }
            }
            attended.push(out);
        }
        let w1 = read("block0.mlp1.w1");
        let b1 = read("block0.mlp1.b1");
        let w2 = read("block0.mlp1.w2");
        let b2 = read("block0.mlp1.b2");
        let mut block_out: Vec<Vec<f64>> = Vec::new();
        for i in 0..n_sub {
            let skip: Vec<f64> = attended[i].iter().zip(&ehat[i]).map(|(a, b)| a + b).collect();
            let mut hidden = matvec(&w1, d, d, &layer_norm(&skip));
            for (h, b) in hidden.iter_mut().zip(&b1) {
                *h = (*h + b).max(0.0);
            }
            let mut m = matvec(&w2, d, d, &hidden);
            for (mv, b) in m.iter_mut().zip(&b2) {
                *mv += b;
            }
            if cfg.residual {
                for (mv, s) in m.iter_mut().zip(&skip) {
                    *mv += s;
                }
            }
            block_out.push(m);
        }
        let pooled: Vec<f64> = (0..d)
            .map(|c| block_out.iter().map(|r| r[c]).sum::<f64>() / n_sub as f64)
            .collect();
        let m2w = read("head.mlp2.w");
        let m2b = read("head.mlp2.b");
        let ow = read("head.out.w");
        let ob = read("head.out.b");
        let mut z = matvec(&m2w, d, d, &pooled);
        for (zv, b) in z.iter_mut().zip(&m2b) {
            *zv = (*zv + b).max(0.0);
        }
        let mut expect = matvec(&ow, d, D_OUT, &z);
        for (e, b) in expect.iter_mut().zip(&ob) {
            *e += b;
        }
        [expect[0], expect[1]]
    }

    #[test]
    fn transformer_block_matches_scripted_oracle() {
        // 3×4 toy input stepped through the block by hand.
        let cfg = WitConfig {
            n_subcarriers: 3,
            n_features: 4,
            d_model: 4,
            blocks: 1,
            pooling: PoolingMode::Average,
            dropout: 0.0,
            gamma: 1.0,
            beta: 1e-4,
            learn_layer_norm: false,
            residual: true,
        };
        let model = WitModel::new(cfg, 11).unwrap();
        let feats = random_features(4, 3, 4);
        let got = predict(&model, &feats).unwrap();
        let expect = scripted_predict(&model, &feats);
        assert!((got[0] - expect[0]).abs() < 1e-12, "{got:?} vs {expect:?}");
        assert!((got[1] - expect[1]).abs() < 1e-12);
    }

    #[test]
    fn zero_mlp1_weights_pass_residual_through() {
        // With the MLP1 output layer zeroed the block reduces to ō = o + ê;
        // the scripted oracle takes exactly that path.
        let mut model = WitModel::new(toy_config(PoolingMode::Average), 7).unwrap();
        for name in ["block0.mlp1.w2", "block0.mlp1.b2"] {
            let idx = (0..model.params.len())
                .find(|&i| model.params.get(i).name == name)
                .unwrap();
            let shape = model.params.get(idx).value.shape().to_vec();
            *model.params.value_mut(idx) = Tensor::zeros(shape);
        }
        let feats = random_features(3, 4, 6);
        let got = predict(&model, &feats).unwrap();
        let expect = scripted_predict(&model, &feats);
        assert!((got[0] - expect[0]).abs() < 1e-12);
        assert!((got[1] - expect[1]).abs() < 1e-12);

        // and removing the residual on top of zero weights changes the output
        let mut ablated_cfg = toy_config(PoolingMode::Average);
        ablated_cfg.residual = false;
        let ablated =
            WitModel::from_parts(ablated_cfg, model.params().clone()).unwrap();
        let without = predict(&ablated, &feats).unwrap();
        assert!(
            (got[0] - without[0]).abs() > 1e-9 || (got[1] - without[1]).abs() > 1e-9,
            "residual should change the output"
        );
    }

    #[test]
    fn average_pool_of_identical_rows_is_that_row() {
        let mut tape = Tape::new();
        let v = tape.leaf(
            Tensor::matrix(3, 2, vec![1.5, -2.0, 1.5, -2.0, 1.5, -2.0]).unwrap(),
            false,
        );
        let pooled = tape.mean_rows(v).unwrap();
        assert_eq!(tape.value(pooled).data(), &[1.5, -2.0]);
    }

    #[test]
    fn stacked_blocks_build_and_run() {
        let mut cfg = toy_config(PoolingMode::Average);
        cfg.blocks = 2;
        let model = WitModel::new(cfg, 21).unwrap();
        assert!(model.params.by_name("block1.attn.weight").is_some());
        let out = predict(&model, &random_features(8, 4, 6)).unwrap();
        assert!(out.iter().all(|v| v.is_finite()));

        let single = WitModel::new(toy_config(PoolingMode::Average), 21).unwrap();
        assert!(model.params().param_count() > single.params().param_count());
    }

    #[test]
    fn lid_attention_weight_multiset_survives_permutation() {
        // With a zero positional table, permuting the subcarrier rows only
        // permutes the summary token's attention weights.
        let mut model = WitModel::new(toy_config(PoolingMode::Lid), 13).unwrap();
        model.set_positional_table(Tensor::zeros(vec![4, 8])).unwrap();
        let feats = random_features(6, 4, 6);
        let mut permuted_data = Vec::new();
        for row in [3usize, 1, 0, 2] {
            permuted_data.extend_from_slice(&feats.data()[row * 6..(row + 1) * 6]);
        }
        let permuted = Tensor::new(vec![4, 6], permuted_data).unwrap();

        let lid_weights = |input: &Tensor| -> Vec<f64> {
            let read = |name: &str| model.params.by_name(name).unwrap().value.clone();
            let mut tape = Tape::new();
            let x = tape.leaf(input.clone(), false);
            let e_w = tape.leaf((*read("embed.weight")).clone(), false);
            let e = tape.matmul(x, e_w).unwrap();
            let lid = tape.leaf((*read("lid.token")).clone(), false);
            let tokens = tape.concat_rows(lid, e).unwrap();
            let gamma = tape.leaf(Tensor::scalar(1.0), false);
            let beta = tape.leaf(Tensor::scalar(1e-4), false);
            let normed = tape.layer_norm(tokens, gamma, beta, LN_EPS).unwrap();
            let w = tape.leaf((*read("block0.attn.weight")).clone(), false);
            let p = tape.matmul(normed, w).unwrap();
            let scores = tape.matmul_nt(p, p).unwrap();
            let scaled = tape.scale(scores, 1.0 / 8f64.sqrt());
            let attn = tape.softmax_rows(scaled).unwrap();
            tape.value(attn).data()[..5].to_vec()
        };
        let mut a = lid_weights(&feats);
        let mut b = lid_weights(&permuted);
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn checkpoint_layout_is_validated() {
        let model = WitModel::new(toy_config(PoolingMode::Average), 3).unwrap();
        let params = model.params.clone();
        assert!(WitModel::from_parts(toy_config(PoolingMode::Average), params.clone()).is_ok());
        assert!(WitModel::from_parts(toy_config(PoolingMode::Lid), params).is_err());
    }
}
