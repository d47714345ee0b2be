//! Localization error metrics and ECDF export.

use std::io::Write;
use std::path::Path;

use crate::dataset::{unscale_labels, LabelBounds};
use crate::error::{Error, Result};

/// Mean over the batch of the squared Euclidean error, in whatever units
/// the inputs carry (scaled coordinates during training).
pub fn mse_loss(predictions: &[[f64; 2]], targets: &[[f64; 2]]) -> Result<f64> {
    if predictions.len() != targets.len() || predictions.is_empty() {
        return Err(Error::Usage(format!(
            "mse_loss over {} predictions and {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    let total: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| {
            let dx = p[0] - t[0];
            let dy = p[1] - t[1];
            dx * dx + dy * dy
        })
        .sum();
    Ok(total / predictions.len() as f64)
}

/// Euclidean errors in meters after undoing the label scaling.
pub fn localization_errors(
    predictions_scaled: &[[f64; 2]],
    targets_scaled: &[[f64; 2]],
    bounds: &LabelBounds,
) -> Vec<f64> {
    predictions_scaled
        .iter()
        .zip(targets_scaled)
        .map(|(p, t)| {
            let pu = unscale_labels(*p, bounds);
            let tu = unscale_labels(*t, bounds);
            let dx = pu[0] - tu[0];
            let dy = pu[1] - tu[1];
            (dx * dx + dy * dy).sqrt()
        })
        .collect()
}

/// Mean of the error magnitudes.
pub fn mae(errors: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::Usage("mae over an empty error set".into()));
    }
    Ok(errors.iter().sum::<f64>() / errors.len() as f64)
}

/// Nearest-rank 95th percentile: the ⌈0.95·n⌉-th smallest error.
pub fn percentile95(errors: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::Usage("percentile over an empty error set".into()));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((0.95 * sorted.len() as f64).ceil() as usize).max(1);
    Ok(sorted[rank - 1])
}

/// Empirical CDF: ascending `(error, fraction)` pairs with fractions
/// climbing strictly to 1.
pub fn ecdf(errors: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, e)| (e, (i + 1) as f64 / n))
        .collect()
}

/// Write the ECDF as two-column plain text: `error_m fraction`.
pub fn write_ecdf(path: impl AsRef<Path>, errors: &[f64]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for (e, f) in ecdf(errors) {
        writeln!(out, "{e} {f}")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn mse_zero_for_perfect_predictions() {
        let p = [[0.3, 0.4], [0.9, 0.1]];
        assert_eq!(mse_loss(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn mse_single_sample_hand_value() {
        // error (0.3, 0.4) → 0.09 + 0.16 = 0.25
        let p = [[0.5, 0.5]];
        let t = [[0.2, 0.1]];
        assert!((mse_loss(&p, &t).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn mse_matches_loop_oracle() {
        let mut rng = crate::rng::substream(3, crate::rng::Domain::Sample, 5, 5);
        let preds: Vec<[f64; 2]> = (0..64)
            .map(|_| [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)])
            .collect();
        let targets: Vec<[f64; 2]> = (0..64)
            .map(|_| [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)])
            .collect();
        let mut total = 0.0;
        for i in 0..preds.len() {
            let dx = preds[i][0] - targets[i][0];
            let dy = preds[i][1] - targets[i][1];
            total += dx * dx + dy * dy;
        }
        let expect = total / preds.len() as f64;
        assert!((mse_loss(&preds, &targets).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn three_four_five_offsets_give_mae_five() {
        let errors = vec![5.0; 8]; // ‖(3,4)‖ per sample
        assert_eq!(mae(&errors).unwrap(), 5.0);
        assert_eq!(percentile95(&errors).unwrap(), 5.0);
    }

    #[test]
    fn perfect_predictions_zero_metrics() {
        let errors = vec![0.0; 5];
        assert_eq!(mae(&errors).unwrap(), 0.0);
        assert_eq!(percentile95(&errors).unwrap(), 0.0);
    }

    #[test]
    fn empty_error_set_rejected() {
        assert!(mae(&[]).is_err());
        assert!(percentile95(&[]).is_err());
    }

    #[test]
    fn mae_translation_invariance() {
        let bounds = LabelBounds { min: [0.0, 0.0], max: [1.0, 1.0] };
        let mut rng = crate::rng::substream(4, crate::rng::Domain::Sample, 6, 6);
        let preds: Vec<[f64; 2]> = (0..32)
            .map(|_| [rng.random_range(0.0..0.5), rng.random_range(0.0..0.5)])
            .collect();
        let targets: Vec<[f64; 2]> = (0..32)
            .map(|_| [rng.random_range(0.0..0.5), rng.random_range(0.0..0.5)])
            .collect();
        let base = mae(&localization_errors(&preds, &targets, &bounds)).unwrap();
        let shift = [0.21, 0.13];
        let preds2: Vec<[f64; 2]> = preds.iter().map(|p| [p[0] + shift[0], p[1] + shift[1]]).collect();
        let targets2: Vec<[f64; 2]> =
            targets.iter().map(|t| [t[0] + shift[0], t[1] + shift[1]]).collect();
        let shifted = mae(&localization_errors(&preds2, &targets2, &bounds)).unwrap();
        assert!((base - shifted).abs() < 1e-12);
    }

    #[test]
    fn ecdf_fractions_for_four_points() {
        let e = ecdf(&[3.0, 1.0, 4.0, 2.0]);
        let fracs: Vec<f64> = e.iter().map(|(_, f)| *f).collect();
        assert_eq!(fracs, vec![0.25, 0.5, 0.75, 1.0]);
        let vals: Vec<f64> = e.iter().map(|(v, _)| *v).collect();
        assert_eq!(vals, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn ecdf_monotone_and_consistent_with_p95() {
        let mut rng = crate::rng::substream(5, crate::rng::Domain::Sample, 7, 7);
        let errors: Vec<f64> = (0..97).map(|_| rng.random_range(0.0..50.0)).collect();
        let curve = ecdf(&errors);
        for w in curve.windows(2) {
            assert!(w[1].0 >= w[0].0);
            assert!(w[1].1 > w[0].1);
        }
        assert!((curve.last().unwrap().1 - 1.0).abs() < 1e-12);
        // p95 read off the ECDF agrees with the nearest-rank estimator
        let p95 = percentile95(&errors).unwrap();
        let from_curve = curve
            .iter()
            .find(|(_, f)| *f >= 0.95)
            .map(|(e, _)| *e)
            .unwrap();
        assert_eq!(p95, from_curve);
    }
}
