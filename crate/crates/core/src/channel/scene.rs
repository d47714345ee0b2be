//! Scene synthesis and per-snapshot perturbation.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::channel::{Position, Scatterer, Scene};
use crate::error::{Error, Result};
use crate::rng::{substream, Domain};

/// Layout parameters for the synthetic scene generator.
#[derive(Clone, Debug)]
pub struct SceneSpec {
    pub roi_x: (f64, f64),
    pub roi_y: (f64, f64),
    /// Number of transmitter locations R.
    pub n_transmitters: usize,
    /// Number of scattering objects S.
    pub n_scatterers: usize,
    /// Size of the movable subset S' (the first S' scatterers).
    pub n_movable: usize,
    /// Transmitter antenna height u_{r,3}; identical for every location.
    pub tx_height: f64,
    pub rrh_height: f64,
    pub scatterer_max_height: f64,
    /// Grid pitch for transmitter placement; 0 places them uniformly at
    /// random inside the region of interest.
    pub grid_spacing: f64,
}

impl SceneSpec {
    fn validate(&self) -> Result<()> {
        if self.roi_x.0 >= self.roi_x.1 || self.roi_y.0 >= self.roi_y.1 {
            return Err(Error::Config("ROI bounds must satisfy min < max".into()));
        }
        if self.n_transmitters == 0 {
            return Err(Error::Config("need at least one transmitter".into()));
        }
        if self.n_movable > self.n_scatterers {
            return Err(Error::Config(format!(
                "movable subset {} exceeds scatterer count {}",
                self.n_movable, self.n_scatterers
            )));
        }
        if self.grid_spacing < 0.0 {
            return Err(Error::Config("grid_spacing must be >= 0".into()));
        }
        Ok(())
    }
}

/// Build the base scene for a scenario.
///
/// Transmitters go on a serpentine grid when `grid_spacing > 0`, otherwise
/// uniformly at random. RRHs sit at the ROI center for `n_rrh == 1` and on
/// a ring at 0.9 of the half-extent otherwise. Scatterer positions are
/// uniform over the ROI with height in `[0, scatterer_max_height]`.
pub fn build_scene(
    spec: &SceneSpec,
    n_rrh: usize,
    n_materials: usize,
    seed: u64,
) -> Result<Scene> {
    spec.validate()?;
    if n_rrh == 0 {
        return Err(Error::Config("need at least one RRH".into()));
    }
    if n_materials == 0 {
        return Err(Error::Config("material table is empty".into()));
    }
    let mut rng = substream(seed, Domain::SceneBuild, 0, 0);

    let transmitters = if spec.grid_spacing > 0.0 {
        grid_positions(spec)?
    } else {
        (0..spec.n_transmitters)
            .map(|_| {
                Position::new(
                    rng.random_range(spec.roi_x.0..spec.roi_x.1),
                    rng.random_range(spec.roi_y.0..spec.roi_y.1),
                    spec.tx_height,
                )
            })
            .collect()
    };

    let cx = 0.5 * (spec.roi_x.0 + spec.roi_x.1);
    let cy = 0.5 * (spec.roi_y.0 + spec.roi_y.1);
    let rrhs = if n_rrh == 1 {
        vec![Position::new(cx, cy, spec.rrh_height)]
    } else {
        let half_extent = 0.5 * (spec.roi_x.1 - spec.roi_x.0).min(spec.roi_y.1 - spec.roi_y.0);
        let radius = 0.9 * half_extent;
        (0..n_rrh)
            .map(|m| {
                let theta = 2.0 * std::f64::consts::PI * m as f64 / n_rrh as f64;
                Position::new(
                    cx + radius * theta.cos(),
                    cy + radius * theta.sin(),
                    spec.rrh_height,
                )
            })
            .collect()
    };

    let scatterers = (0..spec.n_scatterers)
        .map(|_| Scatterer {
            position: Position::new(
                rng.random_range(spec.roi_x.0..spec.roi_x.1),
                rng.random_range(spec.roi_y.0..spec.roi_y.1),
                rng.random_range(0.0..spec.scatterer_max_height.max(f64::MIN_POSITIVE)),
            ),
            material: rng.random_range(0..n_materials),
        })
        .collect();

    Ok(Scene {
        transmitters,
        rrhs,
        scatterers,
        movable: spec.n_movable,
    })
}

fn grid_positions(spec: &SceneSpec) -> Result<Vec<Position>> {
    let step = spec.grid_spacing;
    let mut out = Vec::with_capacity(spec.n_transmitters);
    let mut y = spec.roi_y.0 + step / 2.0;
    while y <= spec.roi_y.1 && out.len() < spec.n_transmitters {
        let mut x = spec.roi_x.0 + step / 2.0;
        while x <= spec.roi_x.1 && out.len() < spec.n_transmitters {
            out.push(Position::new(x, y, spec.tx_height));
            x += step;
        }
        y += step;
    }
    if out.len() < spec.n_transmitters {
        return Err(Error::Config(format!(
            "grid spacing {} fits only {} of {} transmitters in the ROI",
            step,
            out.len(),
            spec.n_transmitters
        )));
    }
    Ok(out)
}

/// Perturb the scene for snapshot `t`.
///
/// Movable scatterer coordinates and every transmitter coordinate receive
/// i.i.d. zero-mean Gaussian noise (σ_z and σ_n respectively), every
/// scatterer's material is resampled uniformly, and the rain flag is drawn
/// with probability `p_rain`. The result depends only on `(seed, t)`.
pub fn perturb_scene(
    scene: &Scene,
    sigma_z: f64,
    sigma_n: f64,
    n_materials: usize,
    p_rain: f64,
    seed: u64,
    t: u64,
) -> Result<(Scene, bool)> {
    if sigma_z < 0.0 || sigma_n < 0.0 {
        return Err(Error::Config("noise std deviations must be >= 0".into()));
    }
    if !(0.0..=1.0).contains(&p_rain) {
        return Err(Error::Config(format!("p_rain {p_rain} not in [0, 1]")));
    }
    if n_materials == 0 {
        return Err(Error::Config("material table is empty".into()));
    }
    let mut rng = substream(seed, Domain::Snapshot, t, 0);
    let scatterer_noise =
        Normal::new(0.0, sigma_z).map_err(|e| Error::Config(format!("sigma_z: {e}")))?;
    let tx_noise =
        Normal::new(0.0, sigma_n).map_err(|e| Error::Config(format!("sigma_n: {e}")))?;

    let mut out = scene.clone();
    for s in out.scatterers.iter_mut().take(out.movable) {
        s.position.x += scatterer_noise.sample(&mut rng);
        s.position.y += scatterer_noise.sample(&mut rng);
        s.position.z += scatterer_noise.sample(&mut rng);
    }
    for u in out.transmitters.iter_mut() {
        u.x += tx_noise.sample(&mut rng);
        u.y += tx_noise.sample(&mut rng);
        u.z += tx_noise.sample(&mut rng);
    }
    for s in out.scatterers.iter_mut() {
        s.material = rng.random_range(0..n_materials);
    }
    let rain = rng.random::<f64>() < p_rain;
    Ok((out, rain))
}
