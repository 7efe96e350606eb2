use serde::{Deserialize, Serialize};

use super::backward::{backward, bce_loss};
use crate::error::Result;
use crate::model::{Gradients, LstmClassifier, PARAM_NAMES};
use crate::tensor::Matrix2D;

pub const DEFAULT_DELTA: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
/// Lower bound on the denominator of the relative error, so that entries
/// where both gradients are essentially zero do not blow up.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    /// Flat index of the worst entry.
    pub worst_index: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub delta: f64,
    pub tolerance: f64,
    pub params: Vec<ParamCheck>,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn failing(&self) -> impl Iterator<Item = &str> {
        self.params.iter().filter(|p| !p.passed).map(|p| p.name.as_str())
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares backpropagated gradients against central finite differences for
/// every parameter entry. Intended for tiny models: the cost is two forward
/// passes per parameter.
pub fn grad_check(
    model: &LstmClassifier,
    window: &Matrix2D,
    y: f64,
    delta: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let (_, trace) = model.forward(window)?;
    let (_, analytic) = backward(model, window, y, &trace)?;
    compare_gradients(model, window, y, delta, tolerance, &analytic)
}

/// Checks a caller-supplied gradient against central finite differences.
pub fn compare_gradients(
    model: &LstmClassifier,
    window: &Matrix2D,
    y: f64,
    delta: f64,
    tolerance: f64,
    analytic: &Gradients,
) -> Result<GradCheckReport> {
    let loss_at = |m: &LstmClassifier| -> Result<f64> { Ok(bce_loss(m.probability(window)?, y)) };
    let mut probe = model.clone();
    let analytic = analytic.tensors();
    let mut params = Vec::with_capacity(PARAM_NAMES.len());
    for (t, name) in PARAM_NAMES.iter().enumerate() {
        let mut worst = (0.0_f64, 0_usize);
        for (i, &a) in analytic[t].iter().enumerate() {
            let original = probe.params.tensors()[t][i];
            probe.params.tensors_mut()[t][i] = original + delta;
            let plus = loss_at(&probe)?;
            probe.params.tensors_mut()[t][i] = original - delta;
            let minus = loss_at(&probe)?;
            probe.params.tensors_mut()[t][i] = original;
            let numeric = (plus - minus) / (2.0 * delta);
            let err = relative_error(a, numeric);
            if err > worst.0 || err.is_nan() {
                worst = (err, i);
            }
        }
        params.push(ParamCheck {
            name: (*name).to_string(),
            max_rel_error: worst.0,
            worst_index: worst.1,
            passed: worst.0 < tolerance,
        });
    }
    let passed = params.iter().all(|p| p.passed);
    Ok(GradCheckReport {
        delta,
        tolerance,
        params,
        passed,
    })
}
