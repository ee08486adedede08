//! Loss functions.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Mean over the batch of the squared 2-norm of the residual, with its
/// gradient w.r.t. the prediction: `d loss / d pred = 2 (pred - target) / B`.
///
/// Inputs are column-major samples `[n_features, batch]`.
pub fn mse_loss(pred: &Array2<f64>, target: &Array2<f64>) -> Result<(f64, Array2<f64>)> {
    if pred.dim() != target.dim() {
        return Err(Error::InvalidArgument(format!(
            "loss shape mismatch: {:?} vs {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    let batch = pred.ncols().max(1) as f64;
    let diff = pred - target;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / batch;
    let grad = diff.mapv(|d| 2.0 * d / batch);
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let p = Array2::from_shape_vec((3, 2), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let (loss, grad) = mse_loss(&p, &p).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn unit_residual_gives_feature_count() {
        // pred - target = ones, n = 5 features, batch 1 -> loss = 5.
        let p = Array2::ones((5, 1));
        let t = Array2::zeros((5, 1));
        let (loss, _) = mse_loss(&p, &t).unwrap();
        assert_eq!(loss, 5.0);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut pred =
            Array2::from_shape_vec((2, 3), vec![0.4, -1.2, 0.9, 2.2, -0.3, 0.05]).unwrap();
        let target =
            Array2::from_shape_vec((2, 3), vec![0.1, 0.2, -0.9, 1.0, 0.0, -0.4]).unwrap();
        let (_, grad) = mse_loss(&pred, &target).unwrap();
        let h = 1e-6;
        for i in 0..2 {
            for j in 0..3 {
                let orig = pred[[i, j]];
                pred[[i, j]] = orig + h;
                let (lp, _) = mse_loss(&pred, &target).unwrap();
                pred[[i, j]] = orig - h;
                let (lm, _) = mse_loss(&pred, &target).unwrap();
                pred[[i, j]] = orig;
                let fd = (lp - lm) / (2.0 * h);
                let rel = (grad[[i, j]] - fd).abs() / fd.abs().max(1e-9);
                assert!(rel < 1e-7, "grad mismatch at ({i},{j}): {rel}");
            }
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let p = Array2::zeros((2, 2));
        let t = Array2::zeros((3, 2));
        assert!(mse_loss(&p, &t).is_err());
    }
}
