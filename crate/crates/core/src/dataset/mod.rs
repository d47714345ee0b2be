//! Dataset generation, realification, normalization, splitting, and storage.
//!
//! A dataset is a stack of per-sample feature matrices (one row per active
//! subcarrier, columns holding the real, imaginary, and absolute parts of
//! the channel across all antennas), scaled 2-D labels, and the constants
//! needed to undo the scaling at evaluation time.

mod io;

pub use io::{load, save};

use rayon::prelude::*;

use crate::channel::{
    build_scene, channel_matrix, derive_paths, perturb_scene, received_power_dbm,
    ArrayGeometry, ChannelConfig, ChannelMatrix, Position, SceneSpec,
};
use crate::error::{Error, Result};
use crate::numcore::Tensor;
use crate::rng::{substream, Domain};

/// Scenario description consumed by [`generate`].
#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub scene: SceneSpec,
    pub channel: ChannelConfig,
    /// Per-RRH array extents; N_r = mx · mz · n_rrh.
    pub mx: usize,
    pub mz: usize,
    pub n_rrh: usize,
    /// Number of time snapshots T.
    pub snapshots: usize,
    /// Scatterer position noise σ_z in meters.
    pub sigma_z: f64,
    /// Transmitter position noise σ_n in meters.
    pub sigma_n: f64,
    pub p_rain: f64,
    /// Samples whose received power falls below this are dropped.
    pub power_threshold_dbm: f64,
    /// Worker threads for generation; 0 uses the rayon default, 1 is serial.
    pub threads: usize,
}

impl ScenarioConfig {
    pub fn geometry(&self) -> ArrayGeometry {
        ArrayGeometry::half_wavelength(self.mx, self.mz, self.n_rrh, self.channel.carrier_hz)
    }

    /// Total antenna count N_r.
    pub fn n_antennas(&self) -> usize {
        self.mx * self.mz * self.n_rrh
    }

    fn validate(&self) -> Result<()> {
        if self.mx == 0 || self.mz == 0 || self.n_rrh == 0 {
            return Err(Error::Config("array extents must be positive".into()));
        }
        if self.snapshots == 0 {
            return Err(Error::Config("need at least one snapshot".into()));
        }
        if self.channel.stride == 0 || self.channel.stride > self.channel.n_subcarriers {
            return Err(Error::Config(format!(
                "stride {} invalid for {} subcarriers",
                self.channel.stride, self.channel.n_subcarriers
            )));
        }
        if self.channel.max_paths == 0 {
            return Err(Error::Config("max_paths must be at least 1".into()));
        }
        if self.channel.materials.is_empty() {
            return Err(Error::Config("material table is empty".into()));
        }
        for m in &self.channel.materials {
            if !(m.amplitude > 0.0 && m.amplitude <= 1.0) {
                return Err(Error::Config(format!(
                    "material {} amplitude {} not in (0, 1]",
                    m.name, m.amplitude
                )));
            }
        }
        Ok(())
    }
}

/// Region-of-interest bounds used for label scaling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabelBounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl LabelBounds {
    pub fn validate(&self) -> Result<()> {
        for c in 0..2 {
            let (lo, hi) = (self.min[c], self.max[c]);
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(Error::Config(format!(
                    "label bounds must satisfy min < max, got {:?}",
                    self
                )));
            }
        }
        Ok(())
    }
}

/// Map a position into `[0,1]²` with the configured ROI bounds. Labels
/// outside the bounds are clamped with a warning.
pub fn scale_labels(u: &Position, bounds: &LabelBounds) -> [f64; 2] {
    let raw = [u.x, u.y];
    let mut out = [0.0; 2];
    for c in 0..2 {
        let v = (raw[c] - bounds.min[c]) / (bounds.max[c] - bounds.min[c]);
        if !(0.0..=1.0).contains(&v) {
            log::warn!("label coordinate {} out of bounds; clamped", raw[c]);
        }
        out[c] = v.clamp(0.0, 1.0);
    }
    out
}

/// Inverse of [`scale_labels`] for in-bounds labels.
pub fn unscale_labels(scaled: [f64; 2], bounds: &LabelBounds) -> [f64; 2] {
    [
        bounds.min[0] + scaled[0] * (bounds.max[0] - bounds.min[0]),
        bounds.min[1] + scaled[1] * (bounds.max[1] - bounds.min[1]),
    ]
}

/// Per-part max-abs normalization constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormConstants {
    pub delta_re: f64,
    pub delta_im: f64,
    pub delta_abs: f64,
    /// Whether the constants were computed over the training split only.
    pub train_only: bool,
}

/// Train/holdout permutation. The first `n_train` entries of `order` are
/// the training samples; validation is the first half of the remainder and
/// test the second half.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub order: Vec<u64>,
    pub n_train: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleMeta {
    pub transmitter: u64,
    pub snapshot: u64,
    pub power_dbm: f64,
}

/// Location-tagged CSI dataset. Features are stored at 32-bit precision
/// (the on-disk width); labels and constants stay at 64-bit.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub(crate) n_subcarriers: usize,
    pub(crate) n_features: usize,
    pub(crate) n_antennas: usize,
    pub(crate) r_total: u64,
    pub(crate) t_total: u64,
    pub(crate) features: Vec<f32>,
    pub(crate) labels: Vec<[f64; 2]>,
    pub(crate) meta: Vec<SampleMeta>,
    pub(crate) bounds: LabelBounds,
    pub(crate) norm: Option<NormConstants>,
    pub(crate) split: Option<Split>,
}

impl Dataset {
    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    /// Active subcarrier count N_c'.
    pub fn n_subcarriers(&self) -> usize {
        self.n_subcarriers
    }

    /// Per-subcarrier feature width 3·N_r.
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    pub fn bounds(&self) -> &LabelBounds {
        &self.bounds
    }

    pub fn norm(&self) -> Option<&NormConstants> {
        self.norm.as_ref()
    }

    pub fn split_info(&self) -> Option<&Split> {
        self.split.as_ref()
    }

    pub fn meta(&self, index: usize) -> &SampleMeta {
        &self.meta[index]
    }

    pub fn label(&self, index: usize) -> [f64; 2] {
        self.labels[index]
    }

    pub fn features_of(&self, index: usize) -> &[f32] {
        let stride = self.n_subcarriers * self.n_features;
        &self.features[index * stride..(index + 1) * stride]
    }

    /// Widen one sample to an `N_c' × 3N_r` tensor for the models.
    pub fn feature_tensor(&self, index: usize) -> Tensor {
        let data: Vec<f64> = self.features_of(index).iter().map(|&v| v as f64).collect();
        Tensor::new(vec![self.n_subcarriers, self.n_features], data).expect("stored shape")
    }

    pub fn train_indices(&self) -> Result<Vec<usize>> {
        let split = self.require_split()?;
        Ok(split.order[..split.n_train].iter().map(|&i| i as usize).collect())
    }

    pub fn val_indices(&self) -> Result<Vec<usize>> {
        let split = self.require_split()?;
        let holdout = &split.order[split.n_train..];
        Ok(holdout[..holdout.len() / 2].iter().map(|&i| i as usize).collect())
    }

    pub fn test_indices(&self) -> Result<Vec<usize>> {
        let split = self.require_split()?;
        let holdout = &split.order[split.n_train..];
        Ok(holdout[holdout.len() / 2..].iter().map(|&i| i as usize).collect())
    }

    fn require_split(&self) -> Result<&Split> {
        self.split
            .as_ref()
            .ok_or_else(|| Error::Usage("dataset has no split assigned".into()))
    }

    /// Manually install a split permutation (used by tests and overfit
    /// harnesses; normal pipelines go through [`split`]).
    pub fn set_split(&mut self, order: Vec<u64>, n_train: usize) -> Result<()> {
        let n = self.n_samples();
        if order.len() != n || n_train > n {
            return Err(Error::Usage("split does not cover the dataset".into()));
        }
        let mut seen = vec![false; n];
        for &i in &order {
            if i as usize >= n || seen[i as usize] {
                return Err(Error::Usage("split is not a permutation".into()));
            }
            seen[i as usize] = true;
        }
        self.split = Some(Split { order, n_train });
        Ok(())
    }
}

pub struct GenReport {
    pub kept: usize,
    pub discarded: usize,
}

type RawSample = (Vec<f32>, [f64; 2], SampleMeta);

/// Generate a raw (unnormalized, unsplit) dataset from the scenario.
///
/// For every `(r, t)` pair the scene is perturbed for snapshot `t`, paths
/// are synthesized with the sample's own RNG stream, and the sample is
/// dropped when its received power falls below the configured threshold.
/// Output is bitwise deterministic for a given `(config, seed)` regardless
/// of the thread count.
pub fn generate(cfg: &ScenarioConfig, seed: u64) -> Result<(Dataset, GenReport)> {
    cfg.validate()?;
    let bounds = LabelBounds {
        min: [cfg.scene.roi_x.0, cfg.scene.roi_y.0],
        max: [cfg.scene.roi_x.1, cfg.scene.roi_y.1],
    };
    bounds.validate()?;
    let n_materials = cfg.channel.materials.len();
    let base = build_scene(&cfg.scene, cfg.n_rrh, n_materials, seed)?;
    let snapshots: Vec<(crate::channel::Scene, bool)> = (0..cfg.snapshots)
        .map(|t| {
            perturb_scene(
                &base,
                cfg.sigma_z,
                cfg.sigma_n,
                n_materials,
                cfg.p_rain,
                seed,
                t as u64,
            )
        })
        .collect::<Result<_>>()?;

    let geometry = cfg.geometry();
    let r_total = cfg.scene.n_transmitters;
    let t_total = cfg.snapshots;
    let jobs: Vec<(usize, usize)> = (0..r_total)
        .flat_map(|r| (0..t_total).map(move |t| (r, t)))
        .collect();

    let worker = |&(r, t): &(usize, usize)| -> Result<Option<RawSample>> {
        let (scene_t, rain) = &snapshots[t];
        let u = scene_t.transmitters[r];
        let mut rng = substream(seed, Domain::Sample, r as u64, t as u64);
        let paths = derive_paths(&u, scene_t, *rain, &cfg.channel, &mut rng);
        if paths.is_empty() {
            log::warn!("no usable paths for (r={r}, t={t}); sample discarded");
            return Ok(None);
        }
        let power = received_power_dbm(&paths, cfg.channel.tx_power_dbm);
        if power < cfg.power_threshold_dbm {
            return Ok(None);
        }
        let h = channel_matrix(&paths, &geometry, &cfg.channel)?;
        let feats = realify(&h)?;
        let feats32: Vec<f32> = feats.data().iter().map(|&v| v as f32).collect();
        // The label is the nominal location, not the perturbed one: position
        // noise models imperfect knowledge, so it must not leak into labels.
        let label = scale_labels(&base.transmitters[r], &bounds);
        Ok(Some((
            feats32,
            label,
            SampleMeta {
                transmitter: r as u64,
                snapshot: t as u64,
                power_dbm: power,
            },
        )))
    };

    let results: Vec<Option<RawSample>> = if cfg.threads == 1 {
        jobs.iter().map(worker).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| jobs.par_iter().map(worker).collect::<Result<_>>())?
    };

    let n_sub = cfg.channel.active_subcarriers().len();
    let n_feat = 3 * cfg.n_antennas();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut meta = Vec::new();
    let mut discarded = 0usize;
    for item in results {
        match item {
            Some((f, l, m)) => {
                features.extend_from_slice(&f);
                labels.push(l);
                meta.push(m);
            }
            None => discarded += 1,
        }
    }
    if labels.is_empty() {
        return Err(Error::Generation(format!(
            "all {} samples fell below {} dBm",
            jobs.len(),
            cfg.power_threshold_dbm
        )));
    }
    let report = GenReport {
        kept: labels.len(),
        discarded,
    };
    Ok((
        Dataset {
            n_subcarriers: n_sub,
            n_features: n_feat,
            n_antennas: cfg.n_antennas(),
            r_total: r_total as u64,
            t_total: t_total as u64,
            features,
            labels,
            meta,
            bounds,
            norm: None,
            split: None,
        },
        report,
    ))
}

/// Split the channel into its real, imaginary, and absolute parts:
/// row `n` of the result is `[Re(h_n) ‖ Im(h_n) ‖ |h_n|]` for subcarrier `n`.
pub fn realify(h: &ChannelMatrix) -> Result<Tensor> {
    let n_r = h.n_rows();
    let n_sub = h.n_cols();
    let mut data = Vec::with_capacity(n_sub * 3 * n_r);
    for col in 0..n_sub {
        for row in 0..n_r {
            let v = h.get(row, col);
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(Error::Evaluation(format!(
                    "non-finite channel entry at ({row}, {col})"
                )));
            }
            data.push(v.re);
        }
        for row in 0..n_r {
            data.push(h.get(row, col).im);
        }
        for row in 0..n_r {
            data.push(h.get(row, col).norm());
        }
    }
    Tensor::new(vec![n_sub, 3 * n_r], data)
}

/// Divide each feature part (Re / Im / Abs) by its maximum absolute value.
///
/// The maxima are taken over every sample by default; with
/// `train_only` they come from the training split alone (which requires a
/// split to be present). Entire dataset is rescaled either way.
pub fn normalize(ds: &mut Dataset, train_only: bool) -> Result<()> {
    let scope: Vec<usize> = if train_only {
        ds.train_indices()?
    } else {
        (0..ds.n_samples()).collect()
    };
    if scope.is_empty() {
        return Err(Error::Usage("normalization scope is empty".into()));
    }
    let n_r = ds.n_features / 3;
    let mut deltas = [0.0f64; 3];
    for &i in &scope {
        for row in ds.features_of(i).chunks(ds.n_features) {
            for part in 0..3 {
                for &v in &row[part * n_r..(part + 1) * n_r] {
                    let a = (v as f64).abs();
                    if a > deltas[part] {
                        deltas[part] = a;
                    }
                }
            }
        }
    }
    if deltas.contains(&0.0) {
        return Err(Error::Normalization(format!(
            "a feature part is identically zero: deltas {deltas:?}"
        )));
    }
    let stride = ds.n_features;
    for row in ds.features.chunks_mut(stride) {
        for part in 0..3 {
            for v in &mut row[part * n_r..(part + 1) * n_r] {
                *v = ((*v as f64) / deltas[part]) as f32;
            }
        }
    }
    ds.norm = Some(NormConstants {
        delta_re: deltas[0],
        delta_im: deltas[1],
        delta_abs: deltas[2],
        train_only,
    });
    Ok(())
}

/// Assign the train/holdout permutation: a seeded uniform shuffle with
/// `round(ratio · n)` training samples.
pub fn split(ds: &mut Dataset, ratio: f64, seed: u64) -> Result<()> {
    let n = ds.n_samples();
    if n < 4 {
        return Err(Error::Usage(format!("split needs at least 4 samples, got {n}")));
    }
    if !(0.0 < ratio && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio {ratio} not in (0, 1)")));
    }
    let mut order: Vec<u64> = (0..n as u64).collect();
    let mut rng = substream(seed, Domain::Split, 0, 0);
    // Fisher-Yates
    for i in (1..n).rev() {
        let j = rand::Rng::random_range(&mut rng, 0..=i);
        order.swap(i, j);
    }
    let n_train = ((n as f64) * ratio).round() as usize;
    let n_train = n_train.clamp(1, n - 1);
    ds.split = Some(Split { order, n_train });
    Ok(())
}
