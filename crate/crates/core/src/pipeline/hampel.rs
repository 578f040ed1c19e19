use super::PupilSeries;
use crate::stats::{median_in_place, MAD_TO_SIGMA};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HampelParams {
    /// Window is [t − half_window_ms, t + half_window_ms], inclusive.
    pub half_window_ms: i64,
    pub n_sigma: f64,
}

impl Default for HampelParams {
    fn default() -> Self {
        HampelParams { half_window_ms: 83, n_sigma: 3.0 }
    }
}

/// Sliding-window Hampel filter over valid samples.
///
/// σ is estimated as 1.4826·MAD of the valid samples in the window. A sample
/// further than `n_sigma`·σ from the window median is replaced by the median
/// and flagged in `repaired`. When the MAD is zero the sample is replaced only
/// if it differs from the median while at least three valid samples are in the
/// window and every other one equals the median. Windows are always built from
/// the input values, never from earlier replacements.
pub fn hampel(series: &PupilSeries, params: &HampelParams) -> PupilSeries {
    let valid_idx: Vec<usize> = (0..series.len()).filter(|&i| series.valid[i]).collect();
    let mut out = series.clone();
    let mut window = Vec::new();
    let mut deviations = Vec::new();
    let (mut lo, mut hi) = (0usize, 0usize);

    for (p, &i) in valid_idx.iter().enumerate() {
        let t = series.ts_ms[i];
        while series.ts_ms[valid_idx[lo]] < t - params.half_window_ms {
            lo += 1;
        }
        if hi < p {
            hi = p;
        }
        while hi + 1 < valid_idx.len() && series.ts_ms[valid_idx[hi + 1]] <= t + params.half_window_ms {
            hi += 1;
        }

        window.clear();
        window.extend(valid_idx[lo..=hi].iter().map(|&j| series.value[j]));
        let x = series.value[i];
        let all_values = window.clone();
        let m = median_in_place(&mut window).expect("window holds the centre sample");
        deviations.clear();
        deviations.extend(all_values.iter().map(|v| (v - m).abs()));
        let mad = median_in_place(&mut deviations).expect("non-empty");
        let deviation = (x - m).abs();

        let outlier = if mad > 0.0 {
            deviation > params.n_sigma * MAD_TO_SIGMA * mad
        } else {
            let others_flat = all_values.iter().filter(|&&v| v != m).count() <= 1;
            deviation > 0.0 && all_values.len() >= 3 && others_flat
        };
        if outlier {
            out.value[i] = m;
            out.repaired[i] = true;
        }
    }
    out
}
