use super::PupilSeries;

pub(super) const DEFAULT_GUARD_MS: i64 = 50;

/// Invalidate every sample within `guard_ms` of an invalid run, on both sides.
/// Values are left untouched; only the flags change.
pub fn mark_blinks(series: &PupilSeries, guard_ms: i64) -> PupilSeries {
    let n = series.len();
    let ts = &series.ts_ms;
    let mut valid = series.valid.clone();

    let mut i = 0;
    while i < n {
        if series.valid[i] {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < n && !series.valid[j + 1] {
            j += 1;
        }
        let (start, end) = (ts[i] - guard_ms, ts[j] + guard_ms);
        let mut k = i;
        while k > 0 && ts[k - 1] >= start {
            k -= 1;
            valid[k] = false;
        }
        let mut k = j;
        while k + 1 < n && ts[k + 1] <= end {
            k += 1;
            valid[k] = false;
        }
        i = j + 1;
    }
    PupilSeries { valid, ..series.clone() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracker::Eye;

    fn sixty_hz(n: usize) -> Vec<i64> {
        (0..n).map(|k| (k as f64 * 1000.0 / 60.0).round() as i64).collect()
    }

    #[test]
    fn constant_valid_series_unchanged() {
        let s = PupilSeries::new(Eye::Left, sixty_hz(120), vec![4.0; 120], vec![true; 120]).unwrap();
        assert_eq!(mark_blinks(&s, 50), s);
    }

    #[test]
    fn blink_run_gets_guard_margins() {
        let ts = sixty_hz(240);
        // invalid run of 200 ms: samples 60..72 (12 samples)
        let valid: Vec<bool> = (0..240).map(|k| !(60..72).contains(&k)).collect();
        let s = PupilSeries::new(Eye::Left, ts.clone(), vec![4.0; 240], valid).unwrap();
        let out = mark_blinks(&s, 50);

        // oracle: a sample is invalid iff it lies within 50 ms of some invalid sample
        let expected: Vec<bool> = ts.iter().map(|&t| !(60..72).any(|k| (ts[k] - t).abs() <= 50)).collect();
        assert_eq!(out.valid, expected);
        let flagged = out.valid.iter().filter(|v| !**v).count();
        assert_eq!(flagged, 12 + 3 + 3);
        assert_eq!(out.value, s.value);
    }

    #[test]
    fn fully_invalid_stays_invalid() {
        let s = PupilSeries::new(Eye::Right, sixty_hz(30), vec![f64::NAN; 30], vec![false; 30]).unwrap();
        assert!(mark_blinks(&s, 50).valid.iter().all(|v| !v));
    }
}
