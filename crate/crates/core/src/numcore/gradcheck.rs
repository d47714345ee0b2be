//! Central finite-difference verification of reverse-mode gradients.

use crate::error::{Error, Result};
use crate::numcore::tape::{NodeId, Tape};
use crate::numcore::tensor::Tensor;

/// Floor used in the relative-error denominator.
const DENOM_FLOOR: f64 = 1e-12;

/// Compare analytic gradients of `f` against central finite differences.
///
/// `f` receives a fresh tape and one leaf per entry of `params` and must
/// return a scalar loss node. Returns the maximum over all parameter entries
/// of `|analytic - fd| / max(|analytic|, |fd|, 1e-12)`.
#[allow(clippy::needless_range_loop)]
pub fn grad_check<F>(f: F, params: &[Tensor], step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId>,
{
    let eval = |values: &[Tensor]| -> Result<(Tape, Vec<NodeId>, NodeId)> {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = values.iter().map(|t| tape.leaf(t.clone(), true)).collect();
        let loss = f(&mut tape, &ids)?;
        let v = tape.value(loss);
        if v.len() != 1 {
            return Err(Error::Usage(format!(
                "grad_check requires a scalar loss, got shape {:?}",
                v.shape()
            )));
        }
        if !v.data()[0].is_finite() {
            return Err(Error::Evaluation("loss is not finite".into()));
        }
        Ok((tape, ids, loss))
    };

    let (tape, ids, loss) = eval(params)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = ids.iter().map(|&id| grads.get(id).to_vec()).collect();

    let mut worst = 0.0f64;
    let mut perturbed: Vec<Tensor> = params.to_vec();
    for (pi, param) in params.iter().enumerate() {
        for ei in 0..param.len() {
            let base = param.data()[ei];
            perturbed[pi].data_mut()[ei] = base + step;
            let (tape_p, _, loss_p) = eval(&perturbed)?;
            let fp = tape_p.value(loss_p).data()[0];
            perturbed[pi].data_mut()[ei] = base - step;
            let (tape_m, _, loss_m) = eval(&perturbed)?;
            let fm = tape_m.value(loss_m).data()[0];
            perturbed[pi].data_mut()[ei] = base;

            let fd = (fp - fm) / (2.0 * step);
            let a = analytic[pi][ei];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(DENOM_FLOOR);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_near_exact() {
        // f(x) = Σx² at x = 3
        let params = [Tensor::scalar(3.0)];
        let err = grad_check(|tape, ids| Ok(tape.sum_squares(ids[0])), &params, 1e-5).unwrap();
        assert!(err < 1e-8, "rel err {err}");
    }

    #[test]
    fn linear_is_near_exact() {
        // f(x) = x · w, squared to exercise the chain rule
        let params = [Tensor::matrix(1, 3, vec![0.5, -1.5, 2.0]).unwrap()];
        let err = grad_check(
            |tape, ids| {
                let w = tape.leaf(Tensor::matrix(3, 1, vec![2.0, 1.0, -0.5]).unwrap(), false);
                let y = tape.matmul(ids[0], w)?;
                Ok(tape.sum_squares(y))
            },
            &params,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-8, "rel err {err}");
    }

    #[test]
    fn pure_linear_is_near_exact() {
        let params = [Tensor::matrix(1, 4, vec![0.5, -1.5, 2.0, 0.25]).unwrap()];
        let err = grad_check(
            |tape, ids| {
                let w = tape.leaf(
                    Tensor::matrix(4, 1, vec![2.0, 1.0, -0.5, 3.0]).unwrap(),
                    false,
                );
                tape.matmul(ids[0], w)
            },
            &params,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-10, "rel err {err}");
    }

    #[test]
    fn layer_norm_relu_chain() {
        let params =
            [Tensor::matrix(2, 4, vec![0.3, -0.8, 1.2, 0.1, 2.0, -0.4, 0.7, -1.1]).unwrap()];
        let err = grad_check(
            |tape, ids| {
                let gamma = tape.leaf(Tensor::scalar(1.3), false);
                let beta = tape.leaf(Tensor::scalar(0.2), false);
                let ln = tape.layer_norm(ids[0], gamma, beta, 1e-5)?;
                let r = tape.relu(ln);
                Ok(tape.sum_squares(r))
            },
            &params,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-5, "rel err {err}");
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let params = [Tensor::scalar(0.0)];
        let res = grad_check(
            |tape, _ids| Ok(tape.leaf(Tensor::scalar(f64::NAN), false)),
            &params,
            1e-5,
        );
        assert!(matches!(res, Err(Error::Evaluation(_))));
    }
}
