//! Model checkpoint format shared by both localizers.
//!
//! Layout (little-endian): magic "WITCP1", a fixed metadata block, then a
//! count-prefixed list of named parameter blobs (name, shape, trainable
//! flag, f64 data).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::baseline::{BaseDnn, BaseDnnConfig};
use crate::error::{Error, Result};
use crate::model::{PoolingMode, WitConfig, WitModel};
use crate::numcore::Tensor;
use crate::params::ParamSet;

const MAGIC: &[u8; 6] = b"WITCP1";

const FLAG_LEARN_LN: u32 = 1;
const FLAG_RESIDUAL: u32 = 1 << 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Wit,
    Base,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Wit => "wit",
            ModelKind::Base => "base",
        }
    }
}

/// Everything needed to rebuild the network around the stored parameters.
#[derive(Clone, Debug)]
pub struct CheckpointMeta {
    pub kind: ModelKind,
    pub pooling: PoolingMode,
    pub blocks: u32,
    pub n_subcarriers: u32,
    pub n_features: u32,
    pub d_model: u32,
    pub dropout: f64,
    pub gamma: f64,
    pub beta: f64,
    pub learn_layer_norm: bool,
    pub residual: bool,
}

impl CheckpointMeta {
    pub fn for_wit(cfg: &WitConfig) -> Self {
        Self {
            kind: ModelKind::Wit,
            pooling: cfg.pooling,
            blocks: cfg.blocks as u32,
            n_subcarriers: cfg.n_subcarriers as u32,
            n_features: cfg.n_features as u32,
            d_model: cfg.d_model as u32,
            dropout: cfg.dropout,
            gamma: cfg.gamma,
            beta: cfg.beta,
            learn_layer_norm: cfg.learn_layer_norm,
            residual: cfg.residual,
        }
    }

    pub fn for_base(cfg: &BaseDnnConfig, n_subcarriers: usize) -> Self {
        Self {
            kind: ModelKind::Base,
            pooling: PoolingMode::Average,
            blocks: 0,
            n_subcarriers: n_subcarriers as u32,
            n_features: (cfg.input_dim / n_subcarriers.max(1)) as u32,
            d_model: cfg.d_model as u32,
            dropout: crate::baseline::BASE_DROPOUT,
            gamma: 0.0,
            beta: 0.0,
            learn_layer_norm: false,
            residual: false,
        }
    }

    pub fn wit_config(&self) -> WitConfig {
        WitConfig {
            n_subcarriers: self.n_subcarriers as usize,
            n_features: self.n_features as usize,
            d_model: self.d_model as usize,
            blocks: self.blocks as usize,
            pooling: self.pooling,
            dropout: self.dropout,
            gamma: self.gamma,
            beta: self.beta,
            learn_layer_norm: self.learn_layer_norm,
            residual: self.residual,
        }
    }

    pub fn base_config(&self) -> BaseDnnConfig {
        BaseDnnConfig {
            input_dim: (self.n_subcarriers * self.n_features) as usize,
            d_model: self.d_model as usize,
        }
    }
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    meta: &CheckpointMeta,
    params: &ParamSet,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u8(match meta.kind {
        ModelKind::Wit => 0,
        ModelKind::Base => 1,
    })?;
    w.write_u8(match meta.pooling {
        PoolingMode::Average => 0,
        PoolingMode::Lid => 1,
    })?;
    let mut flags = 0u32;
    if meta.learn_layer_norm {
        flags |= FLAG_LEARN_LN;
    }
    if meta.residual {
        flags |= FLAG_RESIDUAL;
    }
    w.write_u32::<LittleEndian>(flags)?;
    w.write_u32::<LittleEndian>(meta.blocks)?;
    w.write_u32::<LittleEndian>(meta.n_subcarriers)?;
    w.write_u32::<LittleEndian>(meta.n_features)?;
    w.write_u32::<LittleEndian>(meta.d_model)?;
    w.write_f64::<LittleEndian>(meta.dropout)?;
    w.write_f64::<LittleEndian>(meta.gamma)?;
    w.write_f64::<LittleEndian>(meta.beta)?;

    w.write_u32::<LittleEndian>(params.len() as u32)?;
    for p in params.iter() {
        let name = p.name.as_bytes();
        w.write_u32::<LittleEndian>(name.len() as u32)?;
        w.write_all(name)?;
        w.write_u32::<LittleEndian>(p.value.shape().len() as u32)?;
        for &d in p.value.shape() {
            w.write_u64::<LittleEndian>(d as u64)?;
        }
        w.write_u8(p.trainable as u8)?;
        for &v in p.value.data() {
            w.write_f64::<LittleEndian>(v)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(CheckpointMeta, ParamSet)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "bad checkpoint magic {:?}; expected {:?}",
            magic, MAGIC
        )));
    }
    let kind = match r.read_u8()? {
        0 => ModelKind::Wit,
        1 => ModelKind::Base,
        k => return Err(Error::Format(format!("unknown model kind {k}"))),
    };
    let pooling = match r.read_u8()? {
        0 => PoolingMode::Average,
        1 => PoolingMode::Lid,
        p => return Err(Error::Format(format!("unknown pooling mode {p}"))),
    };
    let flags = r.read_u32::<LittleEndian>()?;
    let blocks = r.read_u32::<LittleEndian>()?;
    let n_subcarriers = r.read_u32::<LittleEndian>()?;
    let n_features = r.read_u32::<LittleEndian>()?;
    let d_model = r.read_u32::<LittleEndian>()?;
    let dropout = r.read_f64::<LittleEndian>()?;
    let gamma = r.read_f64::<LittleEndian>()?;
    let beta = r.read_f64::<LittleEndian>()?;

    let n_params = r.read_u32::<LittleEndian>()? as usize;
    if n_params > 1 << 20 {
        return Err(Error::Format(format!("implausible parameter count {n_params}")));
    }
    let mut params = ParamSet::new();
    for _ in 0..n_params {
        let name_len = r.read_u32::<LittleEndian>()? as usize;
        if name_len > 4096 {
            return Err(Error::Format(format!("implausible name length {name_len}")));
        }
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|e| Error::Format(format!("parameter name not UTF-8: {e}")))?;
        let ndim = r.read_u32::<LittleEndian>()? as usize;
        if ndim > 8 {
            return Err(Error::Format(format!("implausible rank {ndim}")));
        }
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.read_u64::<LittleEndian>()? as usize);
        }
        let trainable = r.read_u8()? != 0;
        let numel: usize = shape.iter().product();
        if numel > 1 << 32 {
            return Err(Error::Format(format!("implausible tensor size {numel}")));
        }
        let mut data = vec![0f64; numel];
        r.read_f64_into::<LittleEndian>(&mut data)?;
        params.push(name, Tensor::new(shape, data)?, trainable);
    }

    Ok((
        CheckpointMeta {
            kind,
            pooling,
            blocks,
            n_subcarriers,
            n_features,
            d_model,
            dropout,
            gamma,
            beta,
            learn_layer_norm: flags & FLAG_LEARN_LN != 0,
            residual: flags & FLAG_RESIDUAL != 0,
        },
        params,
    ))
}

/// Rebuild whichever model the checkpoint holds.
pub enum AnyModel {
    Wit(WitModel),
    Base(BaseDnn),
}

impl AnyModel {
    pub fn as_localizer(&self) -> &dyn crate::model::Localizer {
        match self {
            AnyModel::Wit(m) => m,
            AnyModel::Base(m) => m,
        }
    }
}

pub fn restore_model(meta: &CheckpointMeta, params: ParamSet) -> Result<AnyModel> {
    match meta.kind {
        ModelKind::Wit => Ok(AnyModel::Wit(WitModel::from_parts(meta.wit_config(), params)?)),
        ModelKind::Base => Ok(AnyModel::Base(BaseDnn::from_parts(
            meta.base_config(),
            params,
        )?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{predict, Localizer, PoolingMode};
    use crate::rng::{substream, Domain};
    use rand::Rng;

    #[test]
    fn wit_checkpoint_round_trip() {
        let cfg = WitConfig {
            n_subcarriers: 4,
            n_features: 6,
            d_model: 8,
            blocks: 1,
            pooling: PoolingMode::Lid,
            dropout: 0.1,
            gamma: 1.0,
            beta: 1e-4,
            learn_layer_norm: false,
            residual: true,
        };
        let model = WitModel::new(cfg.clone(), 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.wcp");
        save_checkpoint(&path, &CheckpointMeta::for_wit(&cfg), model.params()).unwrap();
        let (meta, params) = load_checkpoint(&path).unwrap();
        assert_eq!(meta.kind, ModelKind::Wit);
        assert_eq!(meta.pooling, PoolingMode::Lid);
        let restored = restore_model(&meta, params).unwrap();

        let mut rng = substream(1, Domain::Sample, 4, 4);
        let data: Vec<f64> = (0..24).map(|_| rng.random_range(-1.0..1.0)).collect();
        let feats = Tensor::new(vec![4, 6], data).unwrap();
        assert_eq!(
            predict(&model, &feats).unwrap(),
            predict(restored.as_localizer(), &feats).unwrap()
        );
    }

    #[test]
    fn base_checkpoint_round_trip() {
        let cfg = BaseDnnConfig { input_dim: 24, d_model: 8 };
        let model = BaseDnn::new(cfg.clone(), 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.wcp");
        save_checkpoint(&path, &CheckpointMeta::for_base(&cfg, 4), model.params()).unwrap();
        let (meta, params) = load_checkpoint(&path).unwrap();
        assert_eq!(meta.kind, ModelKind::Base);
        let restored = restore_model(&meta, params).unwrap();
        assert_eq!(
            restored.as_localizer().params().param_count(),
            model.params().param_count()
        );
    }

    #[test]
    fn bad_magic_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.wcp");
        std::fs::write(&path, b"NOTACP__junk").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Format(_))));
    }
}
