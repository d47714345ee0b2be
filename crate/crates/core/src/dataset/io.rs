//! Binary dataset format.
//!
//! Layout (all little-endian):
//!
//! ```text
//! magic    6 bytes  "WITDS1"
//! flags    u64      bit0 normalized, bit1 train-only norm, bit2 split present
//! header   u64 × 6  R, T, N_r, N_c', n_samples, n_train
//! norm     f64 × 3  Δ_Re, Δ_Im, Δ_Abs (zeros when unnormalized)
//! bounds   f64 × 4  x_min, y_min, x_max, y_max
//! split    u64 × n_samples   sample permutation (only when bit2 set)
//! meta     (u64 r, u64 t, f64 power_dbm) × n_samples
//! labels   f64 × 2 × n_samples
//! features f32 × N_c'·3N_r × n_samples
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::dataset::{Dataset, LabelBounds, NormConstants, SampleMeta, Split};
use crate::error::{Error, Result};

const MAGIC: &[u8; 6] = b"WITDS1";

const FLAG_NORMALIZED: u64 = 1;
const FLAG_TRAIN_ONLY: u64 = 1 << 1;
const FLAG_SPLIT: u64 = 1 << 2;

pub fn save(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;

    let mut flags = 0u64;
    if let Some(norm) = &ds.norm {
        flags |= FLAG_NORMALIZED;
        if norm.train_only {
            flags |= FLAG_TRAIN_ONLY;
        }
    }
    if ds.split.is_some() {
        flags |= FLAG_SPLIT;
    }
    w.write_u64::<LittleEndian>(flags)?;
    w.write_u64::<LittleEndian>(ds.r_total)?;
    w.write_u64::<LittleEndian>(ds.t_total)?;
    w.write_u64::<LittleEndian>(ds.n_antennas as u64)?;
    w.write_u64::<LittleEndian>(ds.n_subcarriers as u64)?;
    w.write_u64::<LittleEndian>(ds.n_samples() as u64)?;
    w.write_u64::<LittleEndian>(ds.split.as_ref().map_or(0, |s| s.n_train as u64))?;

    let (dre, dim, dabs) = ds
        .norm
        .as_ref()
        .map_or((0.0, 0.0, 0.0), |n| (n.delta_re, n.delta_im, n.delta_abs));
    w.write_f64::<LittleEndian>(dre)?;
    w.write_f64::<LittleEndian>(dim)?;
    w.write_f64::<LittleEndian>(dabs)?;
    w.write_f64::<LittleEndian>(ds.bounds.min[0])?;
    w.write_f64::<LittleEndian>(ds.bounds.min[1])?;
    w.write_f64::<LittleEndian>(ds.bounds.max[0])?;
    w.write_f64::<LittleEndian>(ds.bounds.max[1])?;

    if let Some(split) = &ds.split {
        for &i in &split.order {
            w.write_u64::<LittleEndian>(i)?;
        }
    }
    for m in &ds.meta {
        w.write_u64::<LittleEndian>(m.transmitter)?;
        w.write_u64::<LittleEndian>(m.snapshot)?;
        w.write_f64::<LittleEndian>(m.power_dbm)?;
    }
    for l in &ds.labels {
        w.write_f64::<LittleEndian>(l[0])?;
        w.write_f64::<LittleEndian>(l[1])?;
    }
    for &f in &ds.features {
        w.write_f32::<LittleEndian>(f)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Dataset> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}; expected {:?}",
            magic, MAGIC
        )));
    }
    let flags = r.read_u64::<LittleEndian>()?;
    let r_total = r.read_u64::<LittleEndian>()?;
    let t_total = r.read_u64::<LittleEndian>()?;
    let n_antennas = r.read_u64::<LittleEndian>()? as usize;
    let n_subcarriers = r.read_u64::<LittleEndian>()? as usize;
    let n_samples = r.read_u64::<LittleEndian>()? as usize;
    let n_train = r.read_u64::<LittleEndian>()? as usize;

    let delta_re = r.read_f64::<LittleEndian>()?;
    let delta_im = r.read_f64::<LittleEndian>()?;
    let delta_abs = r.read_f64::<LittleEndian>()?;
    let bounds = LabelBounds {
        min: [r.read_f64::<LittleEndian>()?, r.read_f64::<LittleEndian>()?],
        max: [r.read_f64::<LittleEndian>()?, r.read_f64::<LittleEndian>()?],
    };

    // Guard against absurd headers before allocating.
    if n_samples > (1 << 40) || n_subcarriers == 0 || n_antennas == 0 {
        return Err(Error::Format(format!(
            "implausible header: {n_samples} samples, {n_subcarriers} subcarriers, {n_antennas} antennas"
        )));
    }

    let split = if flags & FLAG_SPLIT != 0 {
        let mut order = Vec::with_capacity(n_samples);
        for _ in 0..n_samples {
            order.push(r.read_u64::<LittleEndian>()?);
        }
        Some(Split { order, n_train })
    } else {
        None
    };

    let mut meta = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        meta.push(SampleMeta {
            transmitter: r.read_u64::<LittleEndian>()?,
            snapshot: r.read_u64::<LittleEndian>()?,
            power_dbm: r.read_f64::<LittleEndian>()?,
        });
    }
    let mut labels = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        labels.push([r.read_f64::<LittleEndian>()?, r.read_f64::<LittleEndian>()?]);
    }
    let n_features = 3 * n_antennas;
    let mut features = vec![0f32; n_samples * n_subcarriers * n_features];
    r.read_f32_into::<LittleEndian>(&mut features)?;
    // Anything left over means the writer and reader disagree on layout.
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(Error::Format("trailing bytes after feature block".into()));
    }

    let norm = if flags & FLAG_NORMALIZED != 0 {
        Some(NormConstants {
            delta_re,
            delta_im,
            delta_abs,
            train_only: flags & FLAG_TRAIN_ONLY != 0,
        })
    } else {
        None
    };

    Ok(Dataset {
        n_subcarriers,
        n_features,
        n_antennas,
        r_total,
        t_total,
        features,
        labels,
        meta,
        bounds,
        norm,
        split,
    })
}

/// Exact on-disk size in bytes for a dataset with the given counts.
#[cfg(test)]
pub(crate) fn expected_file_size(
    n_samples: usize,
    n_subcarriers: usize,
    n_antennas: usize,
    has_split: bool,
) -> usize {
    let header = 6 + 8 * 7 + 8 * 3 + 8 * 4;
    let split = if has_split { 8 * n_samples } else { 0 };
    let meta = 24 * n_samples;
    let labels = 16 * n_samples;
    let features = 4 * n_samples * n_subcarriers * 3 * n_antennas;
    header + split + meta + labels + features
}
