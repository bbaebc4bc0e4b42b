use serde::Serialize;

use super::{LabeledExample, Model, ModelOrder};
use crate::error::{check_dims, Result};
use crate::scalar::Real;

const FD_STEP: f64 = 1e-5;
// Relative errors of gradients smaller than this are measured absolutely.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub order: ModelOrder,
    pub parameters: usize,
    pub max_relative_error: f64,
    pub worst_parameter: usize,
    pub tolerance: f64,
    pub passed: bool,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

/// Compares the analytic gradient of the per-example loss of `model`
/// against central finite differences with step `1e-5`.
pub fn gradient_check_model<T: Real>(
    model: &Model<T>,
    example: &LabeledExample<T>,
    tolerance: f64,
) -> Result<GradCheckReport> {
    check_dims(model.input_dim(), example.features.len())?;
    check_dims(model.classes(), example.label_dist.k())?;
    let n = model.network().params.len();
    let mut analytic = vec![T::zero(); n];
    model.example_loss(example, Some(&mut analytic));

    let h = T::lit(FD_STEP);
    let mut probe = model.clone();
    let mut numeric = Vec::with_capacity(n);
    for i in 0..n {
        let orig = probe.network().params[i];
        probe.network_mut().params[i] = orig + h;
        let up = probe.example_loss(example, None);
        probe.network_mut().params[i] = orig - h;
        let down = probe.example_loss(example, None);
        probe.network_mut().params[i] = orig;
        numeric.push(((up - down) / (h + h)).as_f64());
    }
    let analytic: Vec<f64> = analytic.into_iter().map(Real::as_f64).collect();

    let mut worst = (0.0_f64, 0usize);
    for (i, (&a, &f)) in analytic.iter().zip(&numeric).enumerate() {
        let err = (a - f).abs() / a.abs().max(f.abs()).max(REL_FLOOR);
        if err > worst.0 || err.is_nan() {
            worst = (err, i);
        }
    }
    Ok(GradCheckReport {
        order: model.order(),
        parameters: n,
        max_relative_error: worst.0,
        worst_parameter: worst.1,
        tolerance,
        passed: worst.0 < tolerance,
        analytic,
        numeric,
    })
}

/// Gradient check of a freshly initialized model sized for `example`.
pub fn gradient_check<T: Real>(
    order: ModelOrder,
    example: &LabeledExample<T>,
    hidden_width: usize,
    seed: u64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let model = Model::init(
        order,
        example.features.len(),
        hidden_width,
        example.label_dist.k(),
        seed,
    );
    gradient_check_model(&model, example, tolerance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplex::SimplexPoint;

    fn example() -> LabeledExample<f64> {
        LabeledExample::new(
            vec![0.3, -1.2, 0.8, 2.0],
            SimplexPoint::new(vec![0.2, 0.5, 0.3]).unwrap(),
        )
    }

    #[test]
    fn first_order_linear_passes() {
        let r = gradient_check(ModelOrder::First, &example(), 0, 0, 1e-4).unwrap();
        assert!(r.passed, "max rel err {}", r.max_relative_error);
    }

    #[test]
    fn second_order_passes() {
        let r = gradient_check(ModelOrder::Second, &example(), 0, 0, 1e-4).unwrap();
        assert!(r.passed, "max rel err {}", r.max_relative_error);
        let r = gradient_check(ModelOrder::Second, &example(), 5, 0, 1e-4).unwrap();
        assert!(r.passed, "max rel err {}", r.max_relative_error);
    }

    #[test]
    fn zero_input_has_zero_weight_gradients() {
        let ex = LabeledExample::new(vec![0.0; 4], SimplexPoint::new(vec![0.2, 0.5, 0.3]).unwrap());
        for order in [ModelOrder::First, ModelOrder::Second] {
            let r = gradient_check(order, &ex, 0, 0, 1e-4).unwrap();
            assert!(r.passed);
            let (weights, bias) = r.analytic.split_at(12);
            assert!(weights.iter().all(|&g| g == 0.0));
            assert!(bias.iter().all(|&g| g != 0.0));
        }
    }
}
