//! Metrics and the 5G-NR sweep-timing model.
//!
//! Accuracy is the top-M hit rate (1 when the true beam is in the predicted
//! set); the printed-formula variant that divides the intersection by the
//! set size is kept alongside it. The received power ratio compares the best
//! power among the swept candidates to the global best. Sweep times follow
//! the synchronization-signal burst structure: up to 32 blocks per 5 ms
//! burst, bursts repeating every 20 ms.

use alloc::string::String;
use alloc::vec::Vec;

use crate::channel::BeamIndex;

#[derive(Debug, Clone, PartialEq)]
pub enum EvalError {
    /// Input lists disagree in length, or a profile is empty.
    ShapeError(String),
    /// A predicted set is empty.
    EmptySet { sample: usize },
}

impl core::fmt::Display for EvalError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            EvalError::ShapeError(msg) => write!(f, "shape mismatch: {msg}"),
            EvalError::EmptySet { sample } => write!(f, "empty predicted set for sample {sample}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for EvalError {}

/// Synchronization-signal burst constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepTimingParams {
    /// Length of one SS burst, milliseconds.
    pub burst_ms: f64,
    /// Burst periodicity, milliseconds.
    pub period_ms: f64,
    /// SS blocks per burst (one beam swept per block).
    pub blocks_per_burst: u32,
}

impl SweepTimingParams {
    /// Duration of a single SS block: `burst / blocks_per_burst`.
    pub fn block_ms(&self) -> f64 {
        self.burst_ms / self.blocks_per_burst as f64
    }
}

impl Default for SweepTimingParams {
    fn default() -> Self {
        SweepTimingParams { burst_ms: 5.0, period_ms: 20.0, blocks_per_burst: 32 }
    }
}

/// Exhaustive-sweep time over `n_beams`:
/// `period * floor((n - 1) / blocks) + burst`. Any beam count consumes at
/// least one full burst.
pub fn exhaustive_sweep_time_ms(n_beams: usize, params: &SweepTimingParams) -> f64 {
    debug_assert!(n_beams >= 1);
    let full_periods = (n_beams as u64 - 1) / params.blocks_per_burst as u64;
    params.period_ms * full_periods as f64 + params.burst_ms
}

/// Sweep time over `m` predicted beams:
/// `period * floor((m - 1) / blocks) + block * (1 + (m - 1) mod blocks)`.
pub fn predicted_sweep_time_ms(m: usize, params: &SweepTimingParams) -> f64 {
    debug_assert!(m >= 1);
    let blocks = params.blocks_per_burst as u64;
    let full_periods = (m as u64 - 1) / blocks;
    let residual = (m as u64 - 1) % blocks;
    params.period_ms * full_periods as f64 + params.block_ms() * (1 + residual) as f64
}

fn check_lengths(truths: usize, sets: usize) -> Result<(), EvalError> {
    if truths != sets {
        return Err(EvalError::ShapeError(alloc::format!(
            "{truths} truths vs {sets} predicted sets"
        )));
    }
    Ok(())
}

/// Top-M hit rate: fraction of samples whose true beam appears in the
/// predicted set.
pub fn topm_accuracy(
    truths: &[BeamIndex],
    predicted_sets: &[Vec<BeamIndex>],
) -> Result<f64, EvalError> {
    check_lengths(truths.len(), predicted_sets.len())?;
    if truths.is_empty() {
        return Err(EvalError::ShapeError("no samples".into()));
    }
    let mut hits = 0usize;
    for (i, (truth, set)) in truths.iter().zip(predicted_sets).enumerate() {
        if set.is_empty() {
            return Err(EvalError::EmptySet { sample: i });
        }
        hits += set.contains(truth) as usize;
    }
    Ok(hits as f64 / truths.len() as f64)
}

/// The accuracy formula as printed: mean of `|{truth} ∩ set| / |set|`. Its
/// value is bounded by `1 / M`; kept for fidelity alongside the hit rate.
pub fn topm_literal(
    truths: &[BeamIndex],
    predicted_sets: &[Vec<BeamIndex>],
) -> Result<f64, EvalError> {
    check_lengths(truths.len(), predicted_sets.len())?;
    if truths.is_empty() {
        return Err(EvalError::ShapeError("no samples".into()));
    }
    let mut total = 0.0;
    for (i, (truth, set)) in truths.iter().zip(predicted_sets).enumerate() {
        if set.is_empty() {
            return Err(EvalError::EmptySet { sample: i });
        }
        total += set.contains(truth) as u32 as f64 / set.len() as f64;
    }
    Ok(total / truths.len() as f64)
}

/// Outcome of [`power_ratio`]: the mean ratio plus how many samples were
/// skipped for having zero ground-truth power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerRatio {
    pub ratio: f64,
    pub skipped_zero_power: usize,
}

/// Mean over samples of (best power among the swept candidate beams) /
/// (best power over all beams). The sweep picks the strongest candidate it
/// measured, so the numerator is the max within the predicted set.
pub fn power_ratio(
    profiles: &[Vec<f64>],
    predicted_sets: &[Vec<BeamIndex>],
) -> Result<PowerRatio, EvalError> {
    check_lengths(profiles.len(), predicted_sets.len())?;
    let mut total = 0.0;
    let mut counted = 0usize;
    let mut skipped = 0usize;
    for (i, (profile, set)) in profiles.iter().zip(predicted_sets).enumerate() {
        if set.is_empty() {
            return Err(EvalError::EmptySet { sample: i });
        }
        let best = profile.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if best <= 0.0 {
            skipped += 1;
            continue;
        }
        let mut achieved = f64::NEG_INFINITY;
        for beam in set {
            let idx = beam.zero_based();
            if idx >= profile.len() {
                return Err(EvalError::ShapeError(alloc::format!(
                    "beam {beam} outside profile of {} entries",
                    profile.len()
                )));
            }
            achieved = achieved.max(profile[idx]);
        }
        total += achieved / best;
        counted += 1;
    }
    if counted == 0 {
        return Err(EvalError::ShapeError("every sample had zero power".into()));
    }
    Ok(PowerRatio { ratio: total / counted as f64, skipped_zero_power: skipped })
}

/// Per-M evaluation row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MRow {
    pub m: usize,
    /// Top-M hit rate.
    pub accuracy: f64,
    /// The printed-formula variant (bounded by 1/M).
    pub accuracy_literal: f64,
    pub power_ratio: f64,
    pub sweep_ms: f64,
    /// M / |Q|.
    pub search_fraction: f64,
    /// 1 - sweep_ms / exhaustive_ms.
    pub time_saving: f64,
}

/// Full evaluation report: metrics per M plus the exhaustive baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub n_beams: usize,
    pub sample_count: usize,
    pub exhaustive_ms: f64,
    pub rows: Vec<MRow>,
    pub skipped_zero_power: usize,
}

/// Evaluates predictions at each requested M. `predicted_rankings` holds a
/// full descending beam ranking per sample (only the first `max(ms)` entries
/// are consulted); truths and profiles come from the test split.
pub fn evaluate_rankings(
    n_beams: usize,
    truths: &[BeamIndex],
    profiles: &[Vec<f64>],
    predicted_rankings: &[Vec<BeamIndex>],
    ms: &[usize],
    timing: &SweepTimingParams,
) -> Result<EvalReport, EvalError> {
    check_lengths(truths.len(), profiles.len())?;
    check_lengths(truths.len(), predicted_rankings.len())?;
    let exhaustive_ms = exhaustive_sweep_time_ms(n_beams, timing);
    let mut rows = Vec::with_capacity(ms.len());
    let mut skipped = 0;
    for &m in ms {
        if m == 0 || m > n_beams {
            return Err(EvalError::ShapeError(alloc::format!(
                "M = {m} outside 1..={n_beams}"
            )));
        }
        let sets: Vec<Vec<BeamIndex>> = predicted_rankings
            .iter()
            .map(|ranking| ranking[..m.min(ranking.len())].to_vec())
            .collect();
        let accuracy = topm_accuracy(truths, &sets)?;
        let accuracy_literal = topm_literal(truths, &sets)?;
        let pr = power_ratio(profiles, &sets)?;
        skipped = pr.skipped_zero_power;
        let sweep_ms = predicted_sweep_time_ms(m, timing);
        rows.push(MRow {
            m,
            accuracy,
            accuracy_literal,
            power_ratio: pr.ratio,
            sweep_ms,
            search_fraction: m as f64 / n_beams as f64,
            time_saving: 1.0 - sweep_ms / exhaustive_ms,
        });
    }
    Ok(EvalReport {
        n_beams,
        sample_count: truths.len(),
        exhaustive_ms,
        rows,
        skipped_zero_power: skipped,
    })
}
