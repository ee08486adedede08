//! Central finite-difference verification of analytic gradients.

use super::{GradStore, ParamModel};

/// One offending parameter entry.
#[derive(Debug, Clone)]
pub struct GradCheckFailure {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    pub failures: Vec<GradCheckFailure>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Value below which both gradients are considered numerically zero and the
/// comparison is skipped (central differences drown in roundoff there).
const ABS_FLOOR: f64 = 1e-9;

/// Compare `analytic` gradients against central differences of `loss`
/// evaluated under perturbation of every parameter scalar.
///
/// `loss` must be a pure function of the model parameters.
pub fn finite_difference_check<M: ParamModel>(
    model: &mut M,
    mut loss: impl FnMut(&M) -> f64,
    analytic: &GradStore,
    tolerance: f64,
    step: f64,
) -> GradCheckReport {
    let names: Vec<(String, usize)> = model
        .params()
        .into_iter()
        .map(|(n, _, d)| (n, d.len()))
        .collect();
    let mut failures = Vec::new();
    let mut max_rel = 0.0f64;
    let mut checked = 0usize;

    for (pi, (name, len)) in names.iter().enumerate() {
        for idx in 0..*len {
            let orig = {
                let mut params = model.params_mut();
                let v = params[pi].1[idx];
                params[pi].1[idx] = v + step;
                v
            };
            let up = loss(model);
            {
                let mut params = model.params_mut();
                params[pi].1[idx] = orig - step;
            }
            let down = loss(model);
            {
                let mut params = model.params_mut();
                params[pi].1[idx] = orig;
            }
            let numeric = (up - down) / (2.0 * step);
            let a = analytic.get(name).map(|g| g[idx]).unwrap_or(0.0);
            let scale = a.abs().max(numeric.abs());
            if scale <= ABS_FLOOR {
                continue;
            }
            let rel = (a - numeric).abs() / scale;
            checked += 1;
            max_rel = max_rel.max(rel);
            if rel > tolerance {
                failures.push(GradCheckFailure {
                    name: name.clone(),
                    index: idx,
                    analytic: a,
                    numeric,
                    rel_error: rel,
                });
            }
        }
    }
    GradCheckReport { max_rel_error: max_rel, checked, failures }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{mse_loss, Activation, GradStore, Mlp};
    use ndarray::Array2;

    #[test]
    fn dense_tanh_stack_passes_at_1e5() {
        let mut mlp = Mlp::new_seeded(&[3, 5, 4, 2], Activation::Tanh, Activation::Linear, "m", 7)
            .unwrap();
        let x = Array2::from_shape_fn((3, 4), |(i, j)| ((i * 4 + j) as f64 * 0.37).sin());
        let t = Array2::from_shape_fn((2, 4), |(i, j)| ((i + j) as f64 * 0.21).cos());

        let (_, caches) = mlp.forward(&x).unwrap();
        let (_, dloss) = {
            let (y, _) = mlp.forward(&x).unwrap();
            mse_loss(&y, &t).unwrap()
        };
        let mut grads = GradStore::new();
        mlp.backward(&caches, &dloss, &mut grads);

        let report = finite_difference_check(
            &mut mlp,
            |m| {
                let (y, _) = m.forward(&x).unwrap();
                mse_loss(&y, &t).unwrap().0
            },
            &grads,
            1e-5,
            1e-6,
        );
        assert!(report.passed(), "max rel error {:?}", report.max_rel_error);
        assert!(report.checked > 0);
    }

    #[test]
    fn corrupted_gradient_is_reported() {
        let mut mlp =
            Mlp::new_seeded(&[2, 3, 1], Activation::Tanh, Activation::Linear, "m", 1).unwrap();
        let x = Array2::from_shape_fn((2, 3), |(i, j)| (i as f64) - (j as f64) * 0.5);
        let t = Array2::ones((1, 3));
        let (_, caches) = mlp.forward(&x).unwrap();
        let (y, _) = mlp.forward(&x).unwrap();
        let (_, dloss) = mse_loss(&y, &t).unwrap();
        let mut grads = GradStore::new();
        mlp.backward(&caches, &dloss, &mut grads);
        // Wreck one gradient entry.
        grads.accumulate("m.0.w", &[10.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let report = finite_difference_check(
            &mut mlp,
            |m| {
                let (y, _) = m.forward(&x).unwrap();
                mse_loss(&y, &t).unwrap().0
            },
            &grads,
            1e-5,
            1e-6,
        );
        assert!(!report.passed());
        assert_eq!(report.failures[0].name, "m.0.w");
        assert_eq!(report.failures[0].index, 0);
    }
}
