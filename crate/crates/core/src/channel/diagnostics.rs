//! Dispersion and link-budget diagnostics over a path set.

use crate::channel::Path;
use crate::error::{Error, Result};

/// Power weights w_ℓ = |η_ℓ|² / Σ|η|².
fn power_weights(paths: &[Path]) -> Result<Vec<f64>> {
    if paths.is_empty() {
        return Err(Error::Usage("spread diagnostics need at least one path".into()));
    }
    let powers: Vec<f64> = paths.iter().map(|p| p.gain.norm_sqr()).collect();
    let total: f64 = powers.iter().sum();
    if total <= 0.0 {
        return Err(Error::Usage("all path gains are zero".into()));
    }
    Ok(powers.into_iter().map(|p| p / total).collect())
}

fn weighted_spread(values: &[f64], weights: &[f64]) -> f64 {
    let mean: f64 = values.iter().zip(weights).map(|(&v, &w)| v * w).sum();
    let var: f64 = values
        .iter()
        .zip(weights)
        .map(|(&v, &w)| w * (v - mean) * (v - mean))
        .sum();
    var.sqrt()
}

/// Power-weighted RMS spread of the path delays, in seconds. Delays are
/// first shifted so the strongest path sits at τ = 0.
pub fn rms_delay_spread(paths: &[Path]) -> Result<f64> {
    let weights = power_weights(paths)?;
    let strongest = paths
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| a.gain.norm_sqr().total_cmp(&b.gain.norm_sqr()))
        .map(|(i, _)| i)
        .expect("non-empty");
    let reference = paths[strongest].delay;
    let delays: Vec<f64> = paths.iter().map(|p| p.delay - reference).collect();
    Ok(weighted_spread(&delays, &weights))
}

/// Power-weighted RMS spread of the azimuth angles of arrival, in radians.
/// Angles are treated as plain linear quantities.
pub fn rms_azimuth_spread(paths: &[Path]) -> Result<f64> {
    let weights = power_weights(paths)?;
    let azimuths: Vec<f64> = paths.iter().map(|p| p.azimuth).collect();
    Ok(weighted_spread(&azimuths, &weights))
}

/// Total received power over the path set in dBm. All-zero gains return
/// negative infinity, which sits below any discard threshold.
pub fn received_power_dbm(paths: &[Path], tx_power_dbm: f64) -> f64 {
    let total: f64 = paths.iter().map(|p| p.gain.norm_sqr()).sum();
    if total <= 0.0 {
        return f64::NEG_INFINITY;
    }
    tx_power_dbm + 10.0 * total.log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::Rng;

    fn path(amp: f64, delay: f64, azimuth: f64) -> Path {
        Path {
            gain: Complex64::from_polar(amp, 0.3),
            delay,
            azimuth,
            elevation: 1.0,
            rrh: 0,
        }
    }

    #[test]
    fn single_path_has_zero_spread() {
        let p = [path(1.0, 1e-6, 0.5)];
        assert_eq!(rms_delay_spread(&p).unwrap(), 0.0);
        assert_eq!(rms_azimuth_spread(&p).unwrap(), 0.0);
    }

    #[test]
    fn two_equal_paths_symmetric_spread() {
        // equal power at normalized delays 0 and 2τ₀ → spread τ₀
        let tau0 = 4e-7;
        let p = [path(1.0, 1e-6, 0.0), path(1.0, 1e-6 + 2.0 * tau0, 0.0)];
        assert!((rms_delay_spread(&p).unwrap() - tau0).abs() < 1e-18);
    }

    #[test]
    fn spreads_match_moment_oracle() {
        // L = 4 random paths against an independent weighted-moment loop
        let mut rng = crate::rng::substream(5, crate::rng::Domain::Sample, 1, 1);
        for _ in 0..20 {
            let paths: Vec<Path> = (0..4)
                .map(|_| {
                    path(
                        rng.random_range(0.1..2.0),
                        rng.random_range(0.0..1e-5),
                        rng.random_range(-3.0..3.0),
                    )
                })
                .collect();

            let total_power: f64 = paths.iter().map(|p| p.gain.norm_sqr()).sum();
            let strongest = paths
                .iter()
                .map(|p| p.gain.norm_sqr())
                .enumerate()
                .fold((0usize, f64::MIN), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
            let mut mean_d = 0.0;
            let mut mean_a = 0.0;
            for p in &paths {
                let w = p.gain.norm_sqr() / total_power;
                mean_d += w * (p.delay - paths[strongest.0].delay);
                mean_a += w * p.azimuth;
            }
            let mut var_d = 0.0;
            let mut var_a = 0.0;
            for p in &paths {
                let w = p.gain.norm_sqr() / total_power;
                let dd = (p.delay - paths[strongest.0].delay) - mean_d;
                let da = p.azimuth - mean_a;
                var_d += w * dd * dd;
                var_a += w * da * da;
            }
            assert!((rms_delay_spread(&paths).unwrap() - var_d.sqrt()).abs() < 1e-12);
            assert!((rms_azimuth_spread(&paths).unwrap() - var_a.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_gain_power() {
        let p = [path(1.0, 1e-6, 0.0)];
        assert!((received_power_dbm(&p, 0.0) - 0.0).abs() < 1e-12);
    }

    #[test]
    fn log_identity_power() {
        let p = [path(1e-5, 1e-6, 0.0)]; // |η|² = 1e-10
        assert!((received_power_dbm(&p, 0.0) + 100.0).abs() < 1e-9);
    }

    #[test]
    fn multipath_power_matches_hand_sum() {
        let p = [path(0.5, 1e-6, 0.0), path(0.2, 2e-6, 0.0), path(0.1, 3e-6, 0.0)];
        let expect = 13.0 + 10.0 * (0.25f64 + 0.04 + 0.01).log10();
        assert!((received_power_dbm(&p, 13.0) - expect).abs() < 1e-9);
    }

    #[test]
    fn zero_gain_is_negative_infinity() {
        let p = [path(0.0, 1e-6, 0.0)];
        assert_eq!(received_power_dbm(&p, 20.0), f64::NEG_INFINITY);
    }

    #[test]
    fn empty_path_set_is_usage_error() {
        assert!(rms_delay_spread(&[]).is_err());
    }
}
