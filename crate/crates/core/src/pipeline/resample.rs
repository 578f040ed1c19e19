use super::PupilSeries;

pub(super) const DEFAULT_BIN_MS: i64 = 100;

/// Non-overlapping `bin_ms` bins aligned to the first sample. Each bin holds
/// the mean of its valid samples and is stamped with its start time; a bin
/// without valid samples is invalid (value NaN). Every bin between the first
/// and last sample is emitted, so the output is a regular grid.
pub fn downsample(series: &PupilSeries, bin_ms: i64) -> PupilSeries {
    assert!(bin_ms > 0, "bin width must be positive");
    let Some(&origin) = series.ts_ms.first() else {
        return PupilSeries { value: vec![], valid: vec![], ts_ms: vec![], repaired: vec![], ..series.clone() };
    };
    let last = *series.ts_ms.last().expect("non-empty");
    let bins = ((last - origin) / bin_ms + 1) as usize;
    let mut sums = vec![0.0; bins];
    let mut counts = vec![0usize; bins];
    let mut repaired = vec![false; bins];

    for i in 0..series.len() {
        if !series.valid[i] {
            continue;
        }
        let k = ((series.ts_ms[i] - origin) / bin_ms) as usize;
        sums[k] += series.value[i];
        counts[k] += 1;
        repaired[k] |= series.repaired[i];
    }

    PupilSeries {
        eye: series.eye,
        ts_ms: (0..bins).map(|k| origin + k as i64 * bin_ms).collect(),
        value: sums.iter().zip(&counts).map(|(s, &c)| if c > 0 { s / c as f64 } else { f64::NAN }).collect(),
        valid: counts.iter().map(|&c| c > 0).collect(),
        repaired,
    }
}
