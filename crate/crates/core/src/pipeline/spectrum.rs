use super::{PipelineError, PupilSeries};
use crate::stats::median;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const MIN_DURATION_S: f64 = 120.0;
const BAND_HZ: (f64, f64) = (0.1, 1.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Periodogram {
    pub peak_hz: f64,
    pub resolution_hz: f64,
    pub freqs_hz: Vec<f64>,
    pub magnitude: Vec<f64>,
}

/// Linear interpolation of the valid samples onto `grid`; holds the end values
/// outside the valid span.
fn interpolate(samples: &[(f64, f64)], grid: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut j = 0;
    grid.map(|t| {
        while j + 1 < samples.len() && samples[j + 1].0 <= t {
            j += 1;
        }
        let (t0, v0) = samples[j];
        if t <= t0 || j + 1 == samples.len() {
            return v0;
        }
        let (t1, v1) = samples[j + 1];
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    })
    .collect()
}

/// Magnitude spectrum of the relative pupil signal and its strongest
/// frequency in 0.1–1 Hz.
///
/// The signal is divided by its median, gaps are bridged by linear
/// interpolation on a uniform grid at the mean sample interval, the mean is
/// removed and a Hann window applied before the transform.
pub fn periodogram_peak(series: &PupilSeries) -> Result<Periodogram, PipelineError> {
    let samples: Vec<(f64, f64)> = series.valid_samples().map(|(t, v)| (t as f64, v)).collect();
    let span_s = match (samples.first(), samples.last()) {
        (Some(a), Some(b)) => (b.0 - a.0) / 1000.0,
        _ => 0.0,
    };
    if samples.len() < 2 || span_s < MIN_DURATION_S {
        return Err(PipelineError::TooShort { seconds: span_s, required: MIN_DURATION_S });
    }

    let scale = median(&samples.iter().map(|s| s.1).collect::<Vec<_>>()).expect("non-empty");
    let relative: Vec<(f64, f64)> = samples.iter().map(|&(t, v)| (t, v / scale - 1.0)).collect();

    let (first, last) = (series.ts_ms[0] as f64, series.ts_ms[series.len() - 1] as f64);
    let n = series.len();
    let dt_ms = (last - first) / (n - 1) as f64;
    let mut signal = interpolate(&relative, (0..n).map(|k| first + k as f64 * dt_ms));
    let mean = signal.iter().sum::<f64>() / n as f64;

    let mut buf: Vec<Complex<f64>> = signal
        .iter_mut()
        .enumerate()
        .map(|(k, v)| {
            let w = 0.5 - 0.5 * (2.0 * PI * k as f64 / (n - 1) as f64).cos();
            Complex::new((*v - mean) * w, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let resolution_hz = 1000.0 / (n as f64 * dt_ms);
    let half = n / 2 + 1;
    let freqs_hz: Vec<f64> = (0..half).map(|k| k as f64 * resolution_hz).collect();
    let magnitude: Vec<f64> = buf[..half].iter().map(|c| c.norm()).collect();
    let peak = (0..half)
        .filter(|&k| freqs_hz[k] >= BAND_HZ.0 && freqs_hz[k] <= BAND_HZ.1)
        .max_by(|&a, &b| magnitude[a].total_cmp(&magnitude[b]))
        .expect("band lies inside the spectrum for series of at least 120 s");
    Ok(Periodogram { peak_hz: freqs_hz[peak], resolution_hz, freqs_hz, magnitude })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracker::Eye;

    fn sinusoid(freq_hz: f64, seconds: usize) -> PupilSeries {
        let n = seconds * 60;
        let ts: Vec<i64> = (0..n).map(|k| (k as f64 * 1000.0 / 60.0).round() as i64).collect();
        let values = ts.iter().map(|&t| 10.0 * (1.0 + 0.05 * (2.0 * PI * freq_hz * t as f64 / 1000.0).sin())).collect();
        PupilSeries::new(Eye::Left, ts, values, vec![true; n]).unwrap()
    }

    #[test]
    fn finds_quarter_hertz() {
        let p = periodogram_peak(&sinusoid(0.25, 300)).unwrap();
        assert!((p.peak_hz - 0.25).abs() <= p.resolution_hz, "{}", p.peak_hz);
    }

    #[test]
    fn finds_half_hertz_through_gaps() {
        let mut s = sinusoid(0.5, 200);
        for k in (0..s.len()).filter(|k| k % 300 < 15) {
            s.valid[k] = false;
            s.value[k] = f64::NAN;
        }
        let p = periodogram_peak(&s).unwrap();
        assert!((p.peak_hz - 0.5).abs() <= p.resolution_hz, "{}", p.peak_hz);
    }

    #[test]
    fn too_short() {
        assert!(matches!(periodogram_peak(&sinusoid(0.25, 60)), Err(PipelineError::TooShort { .. })));
    }

    #[test]
    fn interpolation_bridges_gap() {
        let v = interpolate(&[(0.0, 0.0), (10.0, 1.0)], [-5.0, 0.0, 5.0, 10.0, 20.0].into_iter());
        assert_eq!(v, vec![0.0, 0.0, 0.5, 1.0, 1.0]);
    }
}
