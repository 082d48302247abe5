//! Frequency batches, penalty decay, the per-batch stopping rule and
//! multi-path restarts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Frequency batches swept from low to high, with the per-batch stopping rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchSchedule {
    pub batches: Vec<Vec<f64>>,
    /// Iteration cap per batch.
    pub k_max: usize,
    /// Wave-equation residual tolerance.
    pub eps_b: f64,
    /// Data residual tolerance.
    pub eps_d: f64,
}

impl BatchSchedule {
    /// One batch holding every frequency, inverted simultaneously.
    pub fn simultaneous(freqs: &[f64], iterations: usize) -> Self {
        Self {
            batches: vec![freqs.to_vec()],
            k_max: iterations,
            eps_b: 0.0,
            eps_d: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batches.is_empty() || self.batches.iter().any(|b| b.is_empty()) {
            return Err(Error::InvalidConfig("schedule needs nonempty batches".into()));
        }
        if self.k_max == 0 {
            return Err(Error::InvalidConfig("k_max must be at least 1".into()));
        }
        if !(self.eps_b >= 0.0 && self.eps_d >= 0.0) {
            return Err(Error::InvalidConfig("tolerances must be nonnegative".into()));
        }
        Ok(())
    }

    /// The batches from the first one whose lowest frequency reaches `f_start`.
    pub fn starting_at(&self, f_start: f64) -> Self {
        let tol = 1e-9 * f_start.abs().max(1.0);
        let first = self
            .batches
            .iter()
            .position(|b| b.iter().cloned().fold(f64::INFINITY, f64::min) >= f_start - tol)
            .unwrap_or(self.batches.len());
        Self {
            batches: self.batches[first..].to_vec(),
            ..self.clone()
        }
    }
}

/// Batches `[f, f + df, ...]` of `batch_size` frequencies, consecutive
/// batches sharing `overlap` of them. The last batch may be short.
pub fn make_schedule(
    f_start: f64,
    f_end: f64,
    df: f64,
    batch_size: usize,
    overlap: usize,
) -> Result<Vec<Vec<f64>>> {
    if !(f_start.is_finite() && f_end.is_finite() && f_start > 0.0 && f_start <= f_end) {
        return Err(Error::InvalidConfig(format!(
            "need 0 < f_start <= f_end, got {f_start} and {f_end}"
        )));
    }
    if !(df > 0.0 && df.is_finite()) {
        return Err(Error::InvalidConfig(format!("frequency step must be positive, got {df}")));
    }
    if batch_size == 0 || overlap >= batch_size {
        return Err(Error::InvalidConfig(format!(
            "need overlap < batch_size, got {overlap} and {batch_size}"
        )));
    }
    // frequencies on the df lattice, computed from the index to avoid drift
    let n = ((f_end - f_start) / df + 1e-9).floor() as usize + 1;
    let freqs: Vec<f64> = (0..n).map(|i| f_start + i as f64 * df).collect();
    let stride = batch_size - overlap;
    let mut batches = Vec::new();
    let mut i = 0;
    loop {
        let end = (i + batch_size).min(n);
        batches.push(freqs[i..end].to_vec());
        if end == n {
            break;
        }
        i += stride;
    }
    Ok(batches)
}

/// `max(init / factor^floor(iter / every), floor)`.
pub fn gamma_schedule(iter: usize, init: f64, decay_every: usize, factor: f64, floor: f64) -> f64 {
    let steps = if decay_every == 0 { 0 } else { iter / decay_every };
    (init / factor.powi(steps as i32)).max(floor)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Continue,
    Stop,
}

/// Stops once `k_max` iterations ran in the batch, or once both residuals
/// are within tolerance. Never stops before the first iteration.
pub fn stopping_check(
    data_residual: f64,
    wave_residual: f64,
    iter_in_batch: usize,
    sched: &BatchSchedule,
) -> Decision {
    if iter_in_batch == 0 {
        return Decision::Continue;
    }
    if iter_in_batch >= sched.k_max || (wave_residual <= sched.eps_b && data_residual <= sched.eps_d) {
        Decision::Stop
    } else {
        Decision::Continue
    }
}

/// One pass through the batches, restarting at `start_hz`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Path {
    pub start_hz: f64,
    pub pass: usize,
}
