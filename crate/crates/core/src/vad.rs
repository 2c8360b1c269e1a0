//! Source-activity detection from the summed CPSD traces of a block.
//!
//! The trace of each CPSD matrix is the total array power at that bin, so the
//! in-band sum is a broadband energy detector. The threshold is in raw
//! squared-sample units and depends on input scaling, FFT size and array size.

use serde::{Deserialize, Serialize};

use crate::frontend::CpsdStack;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VadDecision {
    pub frame_index: usize,
    pub active: bool,
    pub band_power: f64,
}

/// Sum of in-band CPSD traces.
pub fn band_power(cpsd: &CpsdStack) -> f64 {
    (0..cpsd.num_bins()).map(|b| cpsd.trace(b)).sum()
}

/// Active iff the in-band power strictly exceeds `threshold`.
pub fn detect(cpsd: &CpsdStack, threshold: f64) -> VadDecision {
    let band_power = band_power(cpsd);
    VadDecision {
        frame_index: cpsd.frame_index,
        active: band_power > threshold,
        band_power,
    }
}
