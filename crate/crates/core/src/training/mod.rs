//! Minibatch training loop with validation tracking and early stopping.

mod adamw;
mod metrics;

pub use adamw::{AdamW, AdamWConfig};
pub use metrics::{
    ecdf, localization_errors, mae, mse_loss, percentile95, write_ecdf,
};

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::{predict, Localizer, RunMode};
use crate::numcore::{NodeId, Tape};
use crate::params::ParamSet;
use crate::rng::{substream, Domain};

/// Samples accumulated per gradient work unit. Chunks are reduced in index
/// order, so results are bitwise identical for every thread count.
const GRAD_CHUNK: usize = 16;

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Stop after this many epochs without a validation improvement;
    /// `None` trains the full budget.
    pub early_stop_patience: Option<usize>,
    /// Worker threads for batch evaluation; 0 uses the rayon default.
    pub threads: usize,
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epoch count must be at least 1".into()));
        }
        if let Some(p) = self.early_stop_patience {
            if p == 0 {
                return Err(Error::Config("early-stop patience must be >= 1".into()));
            }
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::Config(format!("learning rate {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mae_m: f64,
}

pub struct FitReport {
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_mae_m: f64,
    pub steps: u64,
    pub stopped_early: bool,
    pub diverged: bool,
}

/// Mean loss and mean gradients over one batch of samples.
///
/// Each sample gets its own tape and dropout stream keyed by
/// `(seed, epoch, position)`; per-chunk sums are combined in chunk order.
fn batch_gradients(
    model: &dyn Localizer,
    ds: &Dataset,
    batch: &[usize],
    seed: u64,
    epoch: u64,
    batch_offset: usize,
    threads: usize,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let params = model.params();
    let chunk_jobs: Vec<(usize, &[usize])> = batch
        .chunks(GRAD_CHUNK)
        .enumerate()
        .map(|(i, c)| (batch_offset + i * GRAD_CHUNK, c))
        .collect();

    let run_chunk = |&(pos0, samples): &(usize, &[usize])| -> Result<(f64, Vec<Vec<f64>>)> {
        let mut loss_sum = 0.0;
        let mut grad_sum: Vec<Vec<f64>> =
            params.iter().map(|p| vec![0.0; p.value.len()]).collect();
        for (offset, &sample_idx) in samples.iter().enumerate() {
            let mut tape = Tape::new();
            let ids: Vec<NodeId> = params
                .iter()
                .map(|p| tape.leaf_shared(Arc::clone(&p.value), p.trainable))
                .collect();
            let features = ds.feature_tensor(sample_idx);
            let mut mode = RunMode::Train(substream(
                seed,
                Domain::Dropout,
                epoch,
                (pos0 + offset) as u64,
            ));
            let out = model.forward(&mut tape, &ids, &features, &mut mode)?;
            let label = ds.label(sample_idx);
            let target = tape.leaf(
                crate::numcore::Tensor::matrix(1, 2, vec![label[0], label[1]])?,
                false,
            );
            let diff = tape.sub(out, target)?;
            let loss = tape.sum_squares(diff);
            loss_sum += tape.value(loss).data()[0];
            let grads = tape.backward(loss)?;
            for (g_sum, &id) in grad_sum.iter_mut().zip(&ids) {
                for (a, &b) in g_sum.iter_mut().zip(grads.get(id)) {
                    *a += b;
                }
            }
        }
        Ok((loss_sum, grad_sum))
    };

    let chunk_results: Vec<(f64, Vec<Vec<f64>>)> = if threads == 1 || chunk_jobs.len() == 1 {
        chunk_jobs
            .iter()
            .map(run_chunk)
            .collect::<Result<Vec<_>>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| chunk_jobs.par_iter().map(run_chunk).collect::<Result<Vec<_>>>())?
    };

    let inv = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut grads: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
    for (chunk_loss, chunk_grads) in chunk_results {
        loss += chunk_loss;
        for (total, part) in grads.iter_mut().zip(chunk_grads) {
            for (a, b) in total.iter_mut().zip(part) {
                *a += b;
            }
        }
    }
    for g in &mut grads {
        for v in g.iter_mut() {
            *v *= inv;
        }
    }
    Ok((loss * inv, grads))
}

/// Validation MAE in meters over the given sample indices.
pub fn evaluate_mae_meters(
    model: &dyn Localizer,
    ds: &Dataset,
    indices: &[usize],
) -> Result<f64> {
    let mut preds = Vec::with_capacity(indices.len());
    let mut targets = Vec::with_capacity(indices.len());
    for &i in indices {
        preds.push(predict(model, &ds.feature_tensor(i))?);
        targets.push(ds.label(i));
    }
    mae(&localization_errors(&preds, &targets, ds.bounds()))
}

/// Predictions (scaled coordinates) for a set of samples.
pub fn predict_set(
    model: &dyn Localizer,
    ds: &Dataset,
    indices: &[usize],
) -> Result<Vec<[f64; 2]>> {
    indices
        .iter()
        .map(|&i| predict(model, &ds.feature_tensor(i)))
        .collect()
}

/// Train the model on the dataset's training split, tracking validation MAE
/// per epoch and restoring the best-validation parameters at the end.
///
/// A non-finite loss aborts training with the history accumulated so far
/// (`diverged` set). With an empty validation carve-out (overfit harnesses)
/// validation falls back to the training split.
pub fn fit(model: &mut dyn Localizer, ds: &Dataset, cfg: &TrainConfig) -> Result<FitReport> {
    cfg.validate()?;
    let train_idx = ds.train_indices()?;
    if train_idx.is_empty() {
        return Err(Error::Usage("training split is empty".into()));
    }
    let mut val_idx = ds.val_indices()?;
    if val_idx.is_empty() {
        log::debug!("empty validation carve-out; validating on the training split");
        val_idx = train_idx.clone();
    }

    let mut optimizer = AdamW::new(
        AdamWConfig {
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            ..AdamWConfig::default()
        },
        model.params(),
    );

    let mut history: Vec<EpochStats> = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, ParamSet)> = None;
    let mut diverged = false;
    let mut stopped_early = false;

    'epochs: for epoch in 0..cfg.epochs {
        let mut order = train_idx.clone();
        let mut rng = substream(cfg.seed, Domain::Shuffle, epoch as u64, 0);
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }

        let mut loss_weighted = 0.0;
        for (batch_no, batch) in order.chunks(cfg.batch_size).enumerate() {
            let (loss, grads) = batch_gradients(
                model,
                ds,
                batch,
                cfg.seed,
                epoch as u64,
                batch_no * cfg.batch_size,
                cfg.threads,
            )?;
            if !loss.is_finite() {
                log::warn!("loss became non-finite at epoch {epoch}; aborting");
                diverged = true;
                break 'epochs;
            }
            if let Err(e) = optimizer.step(model.params_mut(), &grads) {
                log::warn!("{e}; aborting");
                diverged = true;
                break 'epochs;
            }
            loss_weighted += loss * batch.len() as f64;
        }
        let train_loss = loss_weighted / order.len() as f64;
        let val_mae_m = evaluate_mae_meters(model, ds, &val_idx)?;
        history.push(EpochStats {
            epoch,
            train_loss,
            val_mae_m,
        });

        let improved = best.as_ref().is_none_or(|(_, b, _)| val_mae_m < *b);
        if improved {
            best = Some((epoch, val_mae_m, model.params().clone()));
        }
        if let Some(patience) = cfg.early_stop_patience {
            let best_epoch = best.as_ref().map(|(e, _, _)| *e).unwrap_or(0);
            if epoch - best_epoch >= patience {
                stopped_early = true;
                break;
            }
        }
    }

    let (best_epoch, best_val_mae_m) = match &best {
        Some((e, m, params)) => {
            model.params_mut().load_values(params)?;
            (*e, *m)
        }
        None => (0, f64::NAN),
    };
    Ok(FitReport {
        history,
        best_epoch,
        best_val_mae_m,
        steps: optimizer.step_count(),
        stopped_early,
        diverged,
    })
}

/// Write the per-epoch history as `epoch,train_loss,val_mae_m` lines.
pub fn write_history(path: impl AsRef<Path>, history: &[EpochStats]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for h in history {
        writeln!(out, "{},{},{}", h.epoch, h.train_loss, h.val_mae_m)?;
    }
    out.flush()?;
    Ok(())
}
