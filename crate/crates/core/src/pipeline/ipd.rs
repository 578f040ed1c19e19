use super::{hampel, HampelParams, PipelineError, PupilSeries};
use crate::stats::median;
use crate::tracker::{Eye, GazeFrame};

#[derive(Debug, Clone, PartialEq)]
pub struct IpdVariation {
    /// Hampel-filtered inter-pupil distance in camera coordinates. The `eye`
    /// field is meaningless here and set to `Left`.
    pub series: PupilSeries,
    /// (max − min) / median of the valid filtered distances.
    pub relative_range: f64,
}

/// Inter-pupil distance stability, a control for head movement.
pub fn ipd_variation(frames: &[GazeFrame]) -> Result<IpdVariation, PipelineError> {
    let distances: Vec<Option<f64>> =
        frames.iter().map(|f| Some(f.left.usable_center()?.distance(f.right.usable_center()?))).collect();
    let binocular = distances.iter().filter(|d| d.is_some()).count();
    let fraction = if frames.is_empty() { 0.0 } else { binocular as f64 / frames.len() as f64 };
    if fraction < 0.5 {
        return Err(PipelineError::InsufficientBinocular { fraction });
    }

    let raw = PupilSeries::new(
        Eye::Left,
        frames.iter().map(|f| f.ts_ms).collect(),
        distances.iter().map(|d| d.unwrap_or(f64::NAN)).collect(),
        distances.iter().map(Option::is_some).collect(),
    )?;
    let series = hampel(&raw, &HampelParams::default());
    let values: Vec<f64> = series.valid_samples().map(|(_, v)| v).collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mid = median(&values).expect("at least half the frames are binocular");
    Ok(IpdVariation { series, relative_range: (max - min) / mid })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracker::{EyeSample, Point};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn eye(x: f64) -> EyeSample {
        EyeSample { pupil_size: Some(15.0), pupil_center: Some(Point::new(x, 0.5)), gaze: None, valid: true }
    }

    fn frames(n: usize, right_x: impl Fn(usize) -> f64) -> Vec<GazeFrame> {
        (0..n)
            .map(|k| GazeFrame {
                ts_ms: (k as f64 * 1000.0 / 60.0).round() as i64,
                left: eye(0.325),
                right: eye(right_x(k)),
            })
            .collect()
    }

    #[test]
    fn fixed_centers_have_zero_range() {
        assert_eq!(ipd_variation(&frames(600, |_| 0.675)).unwrap().relative_range, 0.0);
    }

    #[test]
    fn small_jitter_small_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let offsets: Vec<f64> = (0..6000).map(|_| rng.random_range(-0.0005..=0.0005)).collect();
        let r = ipd_variation(&frames(6000, |k| 0.675 + offsets[k])).unwrap().relative_range;
        // distance stays within 0.35 ± 0.0005, so the range is at most 0.001 / 0.3495
        assert!(r <= 0.001 / 0.3495 + 1e-12, "{r}");
    }

    #[test]
    fn needs_binocular_data() {
        let mut f = frames(100, |_| 0.675);
        for fr in f.iter_mut().take(60) {
            fr.right = EyeSample::missing();
        }
        assert!(matches!(ipd_variation(&f), Err(PipelineError::InsufficientBinocular { .. })));
        assert!(ipd_variation(&[]).is_err());
    }
}
