//! Finite-difference verification of the analytic gradient.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::Model;
use crate::error::GptError;
use crate::geocodec::TokenId;

/// Denominator floor for the relative error. Loss round-off puts roughly
/// 1e-16 * loss / h of noise on each central difference, which swamps any
/// gradient much below this (key biases, for one, get exactly zero since
/// softmax ignores a constant shift). Such entries are held to an absolute
/// error of floor * tolerance instead.
pub const REL_ERROR_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Largest `|analytic - numeric| / max(|analytic| + |numeric|, REL_ERROR_FLOOR)`.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

/// Compares backpropagated gradients with central differences of step `h` on
/// `samples` randomly chosen parameters (always including every tensor's
/// first element). Dropout must be zero.
pub fn grad_check(
    model: &Model<f64>,
    rows: &[&[TokenId]],
    targets: &[&[Option<TokenId>]],
    samples: usize,
    h: f64,
    seed: u64,
) -> Result<GradCheckReport, GptError> {
    if model.config().dropout != 0.0 {
        return Err(GptError::Config("gradient check needs dropout 0".into()));
    }
    let n = model.params().len();
    let mut grads = vec![0.0f64; n];
    model.loss_and_grad::<ChaCha8Rng>(rows, targets, &mut grads, None)?;
    let mut idx: Vec<usize> = model.layout().tensors().iter().map(|t| t.offset).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.extend((0..samples).map(|_| rng.random_range(0..n)));
    let mut probe = model.clone();
    let mut scratch = vec![0.0f64; n];
    let mut eval = |m: &Model<f64>| -> Result<f64, GptError> {
        scratch.fill(0.0);
        m.loss_and_grad::<ChaCha8Rng>(rows, targets, &mut scratch, None)
    };
    let mut report = GradCheckReport { checked: 0, max_rel_error: 0.0, max_abs_error: 0.0 };
    for &i in &idx {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + h;
        let up = eval(&probe)?;
        probe.params_mut()[i] = orig - h;
        let down = eval(&probe)?;
        probe.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let analytic = grads[i];
        let abs = (numeric - analytic).abs();
        let rel = abs / (numeric.abs() + analytic.abs()).max(REL_ERROR_FLOOR);
        report.checked += 1;
        report.max_abs_error = report.max_abs_error.max(abs);
        report.max_rel_error = report.max_rel_error.max(rel);
    }
    Ok(report)
}
