//! A minimal dense/convolutional neural-network engine.
//!
//! Forward passes are recorded on a [`Tape`]; [`Tape::backward`] runs
//! reverse-mode differentiation over the recorded ops and returns per-parameter
//! gradients. [`grad_check`] validates any recorded computation against
//! central finite differences, and [`AdamState`] applies the optimizer update.

mod adam;
mod checkpoint;
mod gradcheck;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint_into, CheckpointError};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use tape::{Gradients, NodeId, ParamSet, Tape};
pub use tensor::Tensor;

use alloc::string::String;
use alloc::vec::Vec;
#[cfg(not(feature = "std"))]
use num_traits::Float;

#[derive(Debug, Clone, PartialEq)]
pub enum NnError {
    /// Operand dimensions do not agree.
    ShapeError(String),
    /// Every candidate position of a masked reduction was masked out.
    AllMasked,
    /// A selection argument (e.g. top-M) is outside its valid range.
    RangeError { got: usize, max: usize },
    /// A class label does not index the probability vector.
    LabelOutOfRange { label: usize, classes: usize },
    /// An operation that needs at least one entry got none.
    EmptyInput,
    /// No such parameter in the parameter set.
    UnknownParam(String),
}

impl core::fmt::Display for NnError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            NnError::ShapeError(msg) => write!(f, "shape mismatch: {msg}"),
            NnError::AllMasked => write!(f, "all positions masked"),
            NnError::RangeError { got, max } => write!(f, "value {got} out of range 1..={max}"),
            NnError::LabelOutOfRange { label, classes } => {
                write!(f, "label {label} out of range for {classes} classes")
            }
            NnError::EmptyInput => write!(f, "empty input"),
            NnError::UnknownParam(name) => write!(f, "unknown parameter {name:?}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for NnError {}

pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// SiLU (swish): `x * sigmoid(x)`.
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

/// Max-shifted softmax; sums to 1 and preserves the argmax for any finite
/// input.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    debug_assert!(!logits.is_empty());
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

/// Probability floor applied inside [`cross_entropy`] so a zero predicted
/// probability yields a large finite loss instead of infinity.
pub const CROSS_ENTROPY_CLAMP: f64 = 1e-12;

/// `-ln(probs[label])`, clamped at [`CROSS_ENTROPY_CLAMP`]. The flag reports
/// whether the clamp fired.
pub fn cross_entropy(probs: &[f64], label: usize) -> Result<(f64, bool), NnError> {
    if label >= probs.len() {
        return Err(NnError::LabelOutOfRange { label, classes: probs.len() });
    }
    let p = probs[label];
    let clamped = p < CROSS_ENTROPY_CLAMP;
    let loss = -(p.max(CROSS_ENTROPY_CLAMP)).ln();
    Ok((loss, clamped))
}

/// Batch-mean cross-entropy over `(probs, label)` pairs.
pub fn cross_entropy_batch(batch: &[(Vec<f64>, usize)]) -> Result<f64, NnError> {
    if batch.is_empty() {
        return Err(NnError::EmptyInput);
    }
    let mut total = 0.0;
    for (probs, label) in batch {
        total += cross_entropy(probs, *label)?.0;
    }
    Ok(total / batch.len() as f64)
}

/// Windowed max over the last axis of a `[channels, length]` tensor. Stride
/// defaults to the window; a final window that would run past the end is
/// truncated, and inputs shorter than the window produce one truncated
/// window rather than nothing.
pub fn maxpool1d(x: &Tensor, window: usize, stride: usize) -> Result<Tensor, NnError> {
    tape::maxpool1d_forward(x, window, stride).map(|(t, _)| t)
}

/// Column-wise max over the unmasked rows of an `[n, d]` tensor.
pub fn masked_global_max(x: &Tensor, mask: Option<&[bool]>) -> Result<Tensor, NnError> {
    tape::masked_max_rows_forward(x, mask).map(|(t, _)| t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn activation_values() {
        assert_eq!(relu(-5.0), 0.0);
        assert_eq!(relu(5.0), 5.0);
        assert_eq!(silu(0.0), 0.0);
        // silu(1) = 1 / (1 + e^-1)
        assert!((silu(1.0) - 0.731058578630).abs() < 1e-9);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn softmax_uniform_and_closed_form() {
        let probs = softmax(&[3.0; 64]);
        for p in &probs {
            assert!((p - 0.015625).abs() < 1e-12);
        }
        let probs = softmax(&[0.0, 3f64.ln()]);
        assert!((probs[0] - 0.25).abs() < 1e-12);
        assert!((probs[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let logits = [0.3, -1.2, 4.0, 2.2];
        let shifted: Vec<f64> = logits.iter().map(|v| v + 1000.0).collect();
        let a = softmax(&logits);
        let b = softmax(&shifted);
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        let sum: f64 = a.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cross_entropy_closed_forms() {
        let uniform = vec![1.0 / 64.0; 64];
        let (loss, clamped) = cross_entropy(&uniform, 17).unwrap();
        assert!((loss - 64f64.ln()).abs() < 1e-12);
        assert!(!clamped);

        let mut onehot = vec![0.0; 8];
        onehot[3] = 1.0;
        assert_eq!(cross_entropy(&onehot, 3).unwrap(), (0.0, false));

        let (loss, clamped) = cross_entropy(&onehot, 0).unwrap();
        assert!((loss - (1e-12f64).ln().abs()).abs() < 1e-9);
        assert!(clamped);
    }

    #[test]
    fn cross_entropy_batch_mean() {
        let mut onehot = vec![0.0; 64];
        onehot[5] = 1.0;
        let uniform = vec![1.0 / 64.0; 64];
        let mean = cross_entropy_batch(&[(onehot, 5), (uniform, 9)]).unwrap();
        assert!((mean - 64f64.ln() / 2.0).abs() < 1e-12);
        assert!((mean - 2.079442).abs() < 1e-6);
    }

    #[test]
    fn cross_entropy_label_bounds() {
        assert!(matches!(
            cross_entropy(&[1.0], 1),
            Err(NnError::LabelOutOfRange { label: 1, classes: 1 })
        ));
    }
}
