//! Steering vectors, single-bounce path synthesis, and the frequency-domain
//! channel matrix.

use num_complex::Complex64;
use rand::Rng;

use crate::channel::{
    ArrayGeometry, ChannelConfig, ChannelMatrix, Path, Position, Scene, SPEED_OF_LIGHT,
};
use crate::error::{Error, Result};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Array response for a plane wave arriving from `(azimuth, elevation)`.
///
/// The result is the Kronecker product a_z ⊗ a_x of the vertical and
/// horizontal uniform-linear-array responses:
/// a_x[k] = exp(j·2π/λ·d·k·sin(el)·sin(az)), a_z[k] = exp(j·2π/λ·d·k·cos(el)),
/// with the elevation measured from the z axis.
pub fn steering_vector(azimuth: f64, elevation: f64, geom: &ArrayGeometry) -> Vec<Complex64> {
    let phase_unit = TWO_PI / geom.wavelength * geom.spacing;
    let px = phase_unit * elevation.sin() * azimuth.sin();
    let pz = phase_unit * elevation.cos();
    let mut out = Vec::with_capacity(geom.mx * geom.mz);
    for p in 0..geom.mz {
        let z_phase = pz * p as f64;
        for q in 0..geom.mx {
            out.push(Complex64::from_polar(1.0, z_phase + px * q as f64));
        }
    }
    out
}

/// Arrival angles at `rrh` for a wave coming from `source`.
fn arrival_angles(source: &Position, rrh: &Position) -> (f64, f64) {
    let dx = source.x - rrh.x;
    let dy = source.y - rrh.y;
    let dz = source.z - rrh.z;
    let norm = (dx * dx + dy * dy + dz * dz).sqrt();
    let azimuth = dy.atan2(dx);
    let elevation = (dz / norm).clamp(-1.0, 1.0).acos();
    (azimuth, elevation)
}

/// Candidate path plus its tie-break key before truncation to the strongest.
struct Candidate {
    path: Path,
    source: i64,
}

/// Synthesize the multipath set from `u` to every RRH of the scene.
///
/// Per RRH: one direct path with free-space amplitude λ/(4πd) and carrier
/// phase, attenuated by `rain_attenuation_db` when `rain` is set, plus one
/// bounce path per scatterer with amplitude
/// `material · λ/(4π(d1+d2)) · nlos_extra_loss` and a phase drawn uniformly
/// from the sample's RNG stream. Only the `max_paths` strongest survive;
/// ties break on (delay, scatterer index). Degenerate zero-length segments
/// are skipped with a diagnostic.
pub fn derive_paths(
    u: &Position,
    scene: &Scene,
    rain: bool,
    cfg: &ChannelConfig,
    rng: &mut impl Rng,
) -> Vec<Path> {
    let wavelength = cfg.wavelength();
    let rain_factor = if rain {
        10f64.powf(-cfg.rain_attenuation_db / 20.0)
    } else {
        1.0
    };
    let mut out = Vec::with_capacity(scene.rrhs.len() * cfg.max_paths);
    for (m, rrh) in scene.rrhs.iter().enumerate() {
        let mut candidates: Vec<Candidate> = Vec::with_capacity(1 + scene.scatterers.len());

        let d_los = u.distance(rrh);
        if d_los > 0.0 {
            let delay = d_los / SPEED_OF_LIGHT;
            let (azimuth, elevation) = arrival_angles(u, rrh);
            let amplitude = wavelength / (4.0 * std::f64::consts::PI * d_los) * rain_factor;
            // Carrier phase of the direct path; scattered-path phases are
            // random so no equivalent term is needed there.
            let phase = -TWO_PI * cfg.carrier_hz * delay;
            candidates.push(Candidate {
                path: Path {
                    gain: Complex64::from_polar(amplitude, phase),
                    delay,
                    azimuth,
                    elevation,
                    rrh: m,
                },
                source: -1,
            });
        } else {
            log::warn!("transmitter coincides with RRH {m}; LOS path skipped");
        }

        for (s, scatterer) in scene.scatterers.iter().enumerate() {
            // Drawn unconditionally so the stream position does not depend
            // on geometry degeneracies.
            let phase = rng.random_range(0.0..TWO_PI);
            let d1 = u.distance(&scatterer.position);
            let d2 = scatterer.position.distance(rrh);
            if d1 <= 0.0 || d2 <= 0.0 {
                log::warn!("degenerate bounce geometry at scatterer {s}, RRH {m}; path skipped");
                continue;
            }
            let total = d1 + d2;
            let delay = total / SPEED_OF_LIGHT;
            let (azimuth, elevation) = arrival_angles(&scatterer.position, rrh);
            let amplitude = cfg.material_amplitude(scatterer.material) * wavelength
                / (4.0 * std::f64::consts::PI * total)
                * cfg.nlos_extra_loss;
            candidates.push(Candidate {
                path: Path {
                    gain: Complex64::from_polar(amplitude, phase),
                    delay,
                    azimuth,
                    elevation,
                    rrh: m,
                },
                source: s as i64,
            });
        }

        candidates.sort_by(|a, b| {
            b.path
                .gain
                .norm()
                .total_cmp(&a.path.gain.norm())
                .then(a.path.delay.total_cmp(&b.path.delay))
                .then(a.source.cmp(&b.source))
        });
        candidates.truncate(cfg.max_paths);
        out.extend(candidates.into_iter().map(|c| c.path));
    }
    out
}

/// Evaluate the frequency-domain channel over the active subcarriers:
/// each path contributes η·exp(j·2π·k·Δf·τ)·a(az, el) to its RRH's antenna
/// block, and blocks are stacked over the rows.
pub fn channel_matrix(
    paths: &[Path],
    geom: &ArrayGeometry,
    cfg: &ChannelConfig,
) -> Result<ChannelMatrix> {
    if paths.is_empty() {
        return Err(Error::Usage("channel_matrix needs at least one path".into()));
    }
    let subcarriers = cfg.active_subcarriers();
    if subcarriers.is_empty() {
        return Err(Error::Config("active subcarrier set is empty".into()));
    }
    let delta_f = cfg.delta_f();
    let n_rows = geom.total_antennas();
    let per_rrh = geom.antennas_per_rrh();
    let n_cols = subcarriers.len();
    let mut entries = vec![Complex64::ZERO; n_rows * n_cols];
    for path in paths {
        if path.rrh >= geom.n_rrh {
            return Err(Error::Dimension(format!(
                "path references RRH {} of {}",
                path.rrh, geom.n_rrh
            )));
        }
        let a = steering_vector(path.azimuth, path.elevation, geom);
        let row0 = path.rrh * per_rrh;
        for (col, &k) in subcarriers.iter().enumerate() {
            let rotation = Complex64::from_polar(1.0, TWO_PI * k as f64 * delta_f * path.delay);
            let factor = path.gain * rotation;
            for (ant, &av) in a.iter().enumerate() {
                entries[(row0 + ant) * n_cols + col] += factor * av;
            }
        }
    }
    ChannelMatrix::new(entries, n_rows, subcarriers, delta_f)
}
