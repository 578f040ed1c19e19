use super::{PipelineError, PupilSeries};
use crate::scheduler::{Congruency, Cue};
use log::debug;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Grid that relative dilations are rounded to. Rescaling the raw signal by a
/// constant perturbs intermediate results at the last ulp; rounding to this
/// grid makes every curve independent of the input units.
pub const DILATION_QUANTUM: f64 = 1.0 / (1u64 << 24) as f64;

fn quantize(v: f64) -> f64 {
    (v / DILATION_QUANTUM).round() * DILATION_QUANTUM
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochParams {
    /// Bins per epoch; 30 × 100 ms covers [0, 3000) ms after the cue.
    pub bins: usize,
    /// Epochs with more invalid bins than this fraction are dropped.
    pub max_invalid_fraction: f64,
}

impl Default for EpochParams {
    fn default() -> Self {
        EpochParams { bins: 30, max_invalid_fraction: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConditionLabel {
    pub cue: Cue,
    pub congruency: Congruency,
}

/// Where and under which condition an epoch starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochAnchor {
    pub trial_index: u32,
    pub onset_ms: i64,
    pub condition: ConditionLabel,
}

/// Relative pupil dilation following one cue. `values[k]` covers
/// [k·bin_ms, (k+1)·bin_ms) after the anchor; 0 is the size at the anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DilationCurve {
    pub trial_index: u32,
    pub t0_ms: i64,
    pub bin_ms: i64,
    pub values: Vec<f64>,
    pub bin_valid: Vec<bool>,
    pub condition: ConditionLabel,
}

impl DilationCurve {
    pub fn valid_bins(&self) -> usize {
        self.bin_valid.iter().filter(|v| **v).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectReason {
    NoBaseline,
    TooManyInvalidBins { invalid: usize, bins: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedEpoch {
    pub anchor: EpochAnchor,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Epochs {
    pub curves: Vec<DilationCurve>,
    pub rejected: Vec<RejectedEpoch>,
}

/// Cut epochs from a downsampled series and express them relative to their
/// first valid bin (`v / b − 1`).
///
/// The series must be a regular grid (as produced by
/// [`downsample`](super::downsample)); each anchor is snapped to the nearest
/// bin start, so the anchor is quantized by at most half a bin.
pub fn epoch_and_normalize(
    series: &PupilSeries,
    anchors: &[EpochAnchor],
    params: &EpochParams,
) -> Result<Epochs, PipelineError> {
    let mut out = Epochs::default();
    if anchors.is_empty() || series.is_empty() {
        for &anchor in anchors {
            out.rejected.push(RejectedEpoch { anchor, reason: RejectReason::NoBaseline });
        }
        return Ok(out);
    }
    let origin = series.ts_ms[0];
    let bin_ms = if series.len() > 1 { series.ts_ms[1] - origin } else { 1 };
    if let Some(index) = (0..series.len()).find(|&k| series.ts_ms[k] != origin + k as i64 * bin_ms) {
        return Err(PipelineError::IrregularGrid { bin_ms, index });
    }

    for &anchor in anchors {
        let first = ((anchor.onset_ms - origin) as f64 / bin_ms as f64).round() as i64;
        let raw: Vec<Option<f64>> = (0..params.bins as i64)
            .map(|k| {
                let idx = first + k;
                if idx < 0 || idx >= series.len() as i64 {
                    return None;
                }
                let idx = idx as usize;
                series.valid[idx].then_some(series.value[idx])
            })
            .collect();

        let Some(baseline) = raw.iter().flatten().next().copied() else {
            debug!("epoch for trial {} dropped: no baseline bin", anchor.trial_index);
            out.rejected.push(RejectedEpoch { anchor, reason: RejectReason::NoBaseline });
            continue;
        };
        let invalid = raw.iter().filter(|v| v.is_none()).count();
        if invalid as f64 > params.max_invalid_fraction * params.bins as f64 {
            debug!("epoch for trial {} dropped: {invalid}/{} bins invalid", anchor.trial_index, params.bins);
            out.rejected.push(RejectedEpoch {
                anchor,
                reason: RejectReason::TooManyInvalidBins { invalid, bins: params.bins },
            });
            continue;
        }

        out.curves.push(DilationCurve {
            trial_index: anchor.trial_index,
            t0_ms: anchor.onset_ms,
            bin_ms,
            values: raw.iter().map(|v| v.map_or(f64::NAN, |v| quantize(v / baseline - 1.0))).collect(),
            bin_valid: raw.iter().map(Option::is_some).collect(),
            condition: anchor.condition,
        });
    }
    Ok(out)
}

/// Per-bin mean and standard error across epochs. Bins with `n == 0` carry NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanCurve {
    pub bin_ms: i64,
    pub values: Vec<f64>,
    pub sem: Vec<f64>,
    pub n: Vec<usize>,
}

impl MeanCurve {
    pub fn bin_valid(&self, k: usize) -> bool {
        self.n[k] > 0
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index of the largest valid bin.
    pub fn peak_bin(&self) -> Option<usize> {
        (0..self.len()).filter(|&k| self.bin_valid(k)).max_by(|&a, &b| self.values[a].total_cmp(&self.values[b]))
    }
}

/// Average a set of curves bin by bin over their valid bins.
pub fn mean_curve<'a>(curves: impl IntoIterator<Item = &'a DilationCurve>) -> Option<MeanCurve> {
    let curves: Vec<&DilationCurve> = curves.into_iter().collect();
    let first = curves.first()?;
    let bins = first.values.len();
    let mut values = Vec::with_capacity(bins);
    let mut sem = Vec::with_capacity(bins);
    let mut n = Vec::with_capacity(bins);
    let mut column = Vec::with_capacity(curves.len());
    for k in 0..bins {
        column.clear();
        column.extend(curves.iter().filter(|c| c.bin_valid[k]).map(|c| c.values[k]));
        n.push(column.len());
        values.push(crate::stats::mean(&column).unwrap_or(f64::NAN));
        sem.push(crate::stats::sem(&column).unwrap_or(f64::NAN));
    }
    Some(MeanCurve { bin_ms: first.bin_ms, values, sem, n })
}

/// Time-locked averaging. Groups with no curves do not appear in the map.
pub fn group_average<K, F>(curves: &[DilationCurve], key: F) -> BTreeMap<K, MeanCurve>
where
    K: Ord,
    F: Fn(&DilationCurve) -> K,
{
    let mut groups: BTreeMap<K, Vec<&DilationCurve>> = BTreeMap::new();
    for c in curves {
        groups.entry(key(c)).or_default().push(c);
    }
    groups.into_iter().filter_map(|(k, members)| mean_curve(members).map(|m| (k, m))).collect()
}
