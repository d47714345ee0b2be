//! Geometric multipath channel model for a massive-MIMO uplink.
//!
//! A scene of transmitters, remote radio heads (RRHs) and scatterers is
//! turned into per-path (gain, delay, angle) parameters by single-bounce
//! synthesis, and those paths are summed into a frequency-domain channel
//! matrix over the active OFDM subcarriers. Scene dynamics (scatterer
//! motion, material changes, rain, transmitter position uncertainty) are
//! applied per time snapshot.

mod diagnostics;
mod propagation;
mod scene;

pub use diagnostics::{received_power_dbm, rms_azimuth_spread, rms_delay_spread};
pub use propagation::{channel_matrix, derive_paths, steering_vector};
pub use scene::{build_scene, perturb_scene, SceneSpec};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// A point in meters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

/// A scattering object with its current material index into the material
/// table of the channel configuration.
#[derive(Clone, Debug)]
pub struct Scatterer {
    pub position: Position,
    pub material: usize,
}

/// Static geometry of one scenario realization.
///
/// The first `movable` scatterers form the dynamic subset whose positions
/// are re-drawn every snapshot.
#[derive(Clone, Debug)]
pub struct Scene {
    pub transmitters: Vec<Position>,
    pub rrhs: Vec<Position>,
    pub scatterers: Vec<Scatterer>,
    pub movable: usize,
}

/// Uniform rectangular array layout shared by every RRH, oriented with its
/// horizontal axis along x and its vertical axis along z.
#[derive(Clone, Copy, Debug)]
pub struct ArrayGeometry {
    pub mx: usize,
    pub mz: usize,
    pub n_rrh: usize,
    /// Element spacing in meters.
    pub spacing: f64,
    /// Carrier wavelength in meters.
    pub wavelength: f64,
}

impl ArrayGeometry {
    /// Half-wavelength spacing for the given carrier.
    pub fn half_wavelength(mx: usize, mz: usize, n_rrh: usize, carrier_hz: f64) -> Self {
        let wavelength = SPEED_OF_LIGHT / carrier_hz;
        Self {
            mx,
            mz,
            n_rrh,
            spacing: wavelength / 2.0,
            wavelength,
        }
    }

    pub fn antennas_per_rrh(&self) -> usize {
        self.mx * self.mz
    }

    pub fn total_antennas(&self) -> usize {
        self.mx * self.mz * self.n_rrh
    }
}

/// Scattering material with a reflection amplitude factor in (0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Material {
    pub name: String,
    pub amplitude: f64,
}

/// Physical-layer parameters of the OFDM link.
#[derive(Clone, Debug)]
pub struct ChannelConfig {
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    /// Total subcarrier count N_c.
    pub n_subcarriers: usize,
    /// Every `stride`-th subcarrier is active.
    pub stride: usize,
    /// Keep at most this many strongest paths per RRH.
    pub max_paths: usize,
    pub tx_power_dbm: f64,
    /// Extra LOS attenuation applied while it rains, in dB.
    pub rain_attenuation_db: f64,
    /// Additional amplitude factor on every scattered path.
    pub nlos_extra_loss: f64,
    pub materials: Vec<Material>,
}

impl ChannelConfig {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Subcarrier spacing Δf = B / N_c.
    pub fn delta_f(&self) -> f64 {
        self.bandwidth_hz / self.n_subcarriers as f64
    }

    /// Indices of the active subcarriers: {0, stride, 2·stride, …}.
    pub fn active_subcarriers(&self) -> Vec<usize> {
        (0..self.n_subcarriers).step_by(self.stride).collect()
    }

    pub fn material_amplitude(&self, index: usize) -> f64 {
        self.materials[index].amplitude
    }
}

/// One propagation path arriving at one RRH.
#[derive(Clone, Copy, Debug)]
pub struct Path {
    /// Complex gain η.
    pub gain: Complex64,
    /// Propagation delay τ in seconds.
    pub delay: f64,
    /// Azimuth angle of arrival in radians.
    pub azimuth: f64,
    /// Elevation angle of arrival in radians, measured from the z axis.
    pub elevation: f64,
    /// Index of the RRH this path arrives at.
    pub rrh: usize,
}

/// Frequency-domain channel: `N_r × N_c'` complex entries, RRH blocks
/// stacked over the rows, one column per active subcarrier.
#[derive(Clone, Debug)]
pub struct ChannelMatrix {
    entries: Vec<Complex64>,
    n_rows: usize,
    /// Active subcarrier indices, one per column.
    pub subcarriers: Vec<usize>,
    /// Subcarrier spacing in Hz.
    pub delta_f: f64,
}

impl ChannelMatrix {
    pub(crate) fn new(
        entries: Vec<Complex64>,
        n_rows: usize,
        subcarriers: Vec<usize>,
        delta_f: f64,
    ) -> Result<Self> {
        if entries.len() != n_rows * subcarriers.len() {
            return Err(Error::Dimension(format!(
                "channel matrix: {} entries for {} x {}",
                entries.len(),
                n_rows,
                subcarriers.len()
            )));
        }
        Ok(Self {
            entries,
            n_rows,
            subcarriers,
            delta_f,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.subcarriers.len()
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.subcarriers.len() + col]
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }
}
