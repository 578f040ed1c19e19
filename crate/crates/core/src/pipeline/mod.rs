//! Pupil-signal cleaning chain.
//!
//! The stages run in a fixed order: [`mark_blinks`] → [`hampel`] →
//! [`downsample`] → [`epoch_and_normalize`], followed by [`group_average`].
//! Invalid samples are carried as flags all the way through; no stage fills
//! them in.

mod blinks;
mod epoch;
mod export;
mod hampel;
mod ipd;
mod resample;
mod spectrum;

pub use blinks::mark_blinks;
pub use epoch::{
    epoch_and_normalize, group_average, mean_curve, ConditionLabel, DilationCurve, EpochAnchor, EpochParams, Epochs,
    MeanCurve, RejectReason, RejectedEpoch, DILATION_QUANTUM,
};
pub use export::{write_curves_csv, write_spectrum_csv};
pub use hampel::{hampel, HampelParams};
pub use ipd::{ipd_variation, IpdVariation};
pub use resample::downsample;
pub use spectrum::{periodogram_peak, Periodogram};

use crate::tracker::{Eye, GazeFrame};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PipelineError {
    #[error("series columns have different lengths")]
    LengthMismatch,
    #[error("timestamps are not strictly increasing at sample {0}")]
    NonMonotonic(usize),
    #[error("series is not on a regular {bin_ms} ms grid at sample {index}")]
    IrregularGrid { bin_ms: i64, index: usize },
    #[error("series spans {seconds:.1} s, at least {required:.0} s of valid data required")]
    TooShort { seconds: f64, required: f64 },
    #[error("both eyes valid on {fraction:.3} of frames, at least 0.5 required")]
    InsufficientBinocular { fraction: f64 },
}

/// A single-eye pupil time series. `value` is meaningless where `valid` is false.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PupilSeries {
    pub eye: Eye,
    pub ts_ms: Vec<i64>,
    pub value: Vec<f64>,
    pub valid: Vec<bool>,
    /// Samples replaced by the outlier filter.
    pub repaired: Vec<bool>,
}

impl PupilSeries {
    pub fn new(eye: Eye, ts_ms: Vec<i64>, value: Vec<f64>, valid: Vec<bool>) -> Result<Self, PipelineError> {
        if ts_ms.len() != value.len() || ts_ms.len() != valid.len() {
            return Err(PipelineError::LengthMismatch);
        }
        if let Some(i) = ts_ms.windows(2).position(|w| w[1] <= w[0]) {
            return Err(PipelineError::NonMonotonic(i + 1));
        }
        let repaired = vec![false; ts_ms.len()];
        Ok(PupilSeries { eye, ts_ms, value, valid, repaired })
    }

    /// Pupil size of one eye. Frames without a usable measurement become
    /// invalid samples with a NaN value.
    pub fn from_frames(frames: &[GazeFrame], eye: Eye) -> Result<Self, PipelineError> {
        let ts = frames.iter().map(|f| f.ts_ms).collect();
        let sizes: Vec<Option<f64>> = frames.iter().map(|f| f.eye(eye).usable_pupil()).collect();
        let value = sizes.iter().map(|s| s.unwrap_or(f64::NAN)).collect();
        let valid = sizes.iter().map(Option::is_some).collect();
        PupilSeries::new(eye, ts, value, valid)
    }

    pub fn len(&self) -> usize {
        self.ts_ms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ts_ms.is_empty()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Copy with every value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        PupilSeries { value: self.value.iter().map(|v| v * factor).collect(), ..self.clone() }
    }

    /// Valid (timestamp, value) pairs.
    pub fn valid_samples(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        (0..self.len()).filter(|&i| self.valid[i]).map(|i| (self.ts_ms[i], self.value[i]))
    }
}

/// Cleaning constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    pub blink_guard_ms: i64,
    pub hampel: HampelParams,
    pub bin_ms: i64,
    pub epoch: EpochParams,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            blink_guard_ms: blinks::DEFAULT_GUARD_MS,
            hampel: HampelParams::default(),
            bin_ms: resample::DEFAULT_BIN_MS,
            epoch: EpochParams::default(),
        }
    }
}

/// Blink marking, outlier repair and downsampling, in that order.
pub fn clean(series: &PupilSeries, params: &PipelineParams) -> PupilSeries {
    let marked = mark_blinks(series, params.blink_guard_ms);
    let filtered = hampel(&marked, &params.hampel);
    downsample(&filtered, params.bin_ms)
}
