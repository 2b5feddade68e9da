//! Central finite-difference validation of recorded gradients.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use super::tape::{Gradients, ParamSet};
use super::NnError;
use crate::rng::{substream, Stream};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Cap on checked coordinates per parameter tensor; 0 checks all of
    /// them. Large models sample a seeded subset to stay inside test budgets.
    pub max_coords_per_param: usize,
    /// Relative error denominators are floored here so coordinates whose
    /// true gradient is essentially zero are judged on absolute error.
    pub denominator_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            max_coords_per_param: 0,
            denominator_floor: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat coordinate of the worst error.
    pub worst: Option<(String, usize)>,
    pub coords_checked: usize,
    /// Trainable parameters the loss never touched (exactly zero gradient).
    pub zero_grad_params: Vec<String>,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// Compares the recorded reverse-mode gradient of `loss` against central
/// finite differences. `loss` must be a pure function of `params`; it is
/// invoked with `want_grads = true` once and then twice per checked
/// coordinate with `want_grads = false`.
pub fn grad_check(
    params: &mut ParamSet,
    mut loss: impl FnMut(&ParamSet, bool) -> Result<(f64, Option<Gradients>), NnError>,
    options: &GradCheckOptions,
) -> Result<GradCheckReport, NnError> {
    let (_, grads) = loss(params, true)?;
    let grads = grads.ok_or(NnError::EmptyInput)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coords_checked: 0,
        zero_grad_params: grads.untouched(params),
    };

    for slot in 0..params.len() {
        if !params.entry(slot).trainable {
            continue;
        }
        let n = params.tensor(slot).len();
        let coords = select_coords(n, options, slot as u64);
        for i in coords {
            let analytic = grads.get(slot).map_or(0.0, |g| g.data()[i]);
            let original = params.tensor(slot).data()[i];

            params.tensor_mut(slot).data_mut()[i] = original + options.step;
            let plus = loss(params, false)?.0;
            params.tensor_mut(slot).data_mut()[i] = original - options.step;
            let minus = loss(params, false)?.0;
            params.tensor_mut(slot).data_mut()[i] = original;

            let numeric = (plus - minus) / (2.0 * options.step);
            let denom = analytic.abs().max(numeric.abs()).max(options.denominator_floor);
            let rel = (analytic - numeric).abs() / denom;
            report.coords_checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((params.entry(slot).name.clone(), i));
            }
        }
    }
    Ok(report)
}

fn select_coords(n: usize, options: &GradCheckOptions, salt: u64) -> Vec<usize> {
    let cap = options.max_coords_per_param;
    if cap == 0 || n <= cap {
        return (0..n).collect();
    }
    // Seeded sample without replacement via partial Fisher-Yates.
    let mut rng = substream(options.seed, Stream::Init, salt);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..cap {
        let j = rng.gen_range(i..n);
        idx.swap(i, j);
    }
    idx.truncate(cap);
    idx
}
