//! One-session analysis: cleaning chain, epochs, condition averages and the
//! session report.

use crate::metrics::{session_report, MetricsError, PupilSummary, SessionReport};
use crate::pipeline::{
    clean, epoch_and_normalize, group_average, periodogram_peak, ConditionLabel, EpochAnchor, Epochs, MeanCurve,
    Periodogram, PipelineParams, PupilSeries,
};
use crate::scheduler::Congruency;
use crate::tracker::{Eye, GazeFrame, TrialRecord};
use chrono::NaiveDateTime;
use log::warn;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisParams {
    pub eye: Eye,
    pub pipeline: PipelineParams,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        AnalysisParams { eye: Eye::Left, pipeline: PipelineParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionAnalysis {
    pub report: SessionReport,
    /// Blink-marked, filtered and downsampled pupil series.
    pub cleaned: PupilSeries,
    pub epochs: Epochs,
    pub by_congruency: BTreeMap<Congruency, MeanCurve>,
    pub by_condition: BTreeMap<ConditionLabel, MeanCurve>,
    /// `None` when the recording is too short for a spectrum.
    pub periodogram: Option<Periodogram>,
}

/// Cue-locked anchors of every analysed (non-practice) trial.
pub fn anchors(trials: &[TrialRecord]) -> Vec<EpochAnchor> {
    trials
        .iter()
        .filter(|r| !r.trial.practice)
        .map(|r| EpochAnchor {
            trial_index: r.trial.index,
            onset_ms: r.cue_onset_ms,
            condition: ConditionLabel { cue: r.trial.cue, congruency: r.trial.congruency },
        })
        .collect()
}

/// Clean one eye and cut normalised epochs at the analysed trials.
pub fn epoch_session(
    frames: &[GazeFrame],
    trials: &[TrialRecord],
    eye: Eye,
    params: &PipelineParams,
) -> Result<(PupilSeries, Epochs), MetricsError> {
    let raw = PupilSeries::from_frames(frames, eye)?;
    let cleaned = clean(&raw, params);
    let epochs = epoch_and_normalize(&cleaned, &anchors(trials), &params.epoch)?;
    Ok((cleaned, epochs))
}

pub fn analyze_session(
    frames: &[GazeFrame],
    trials: &[TrialRecord],
    params: &AnalysisParams,
    wall_clock_start: Option<NaiveDateTime>,
) -> Result<SessionAnalysis, MetricsError> {
    let (cleaned, epochs) = epoch_session(frames, trials, params.eye, &params.pipeline)?;
    let by_congruency = group_average(&epochs.curves, |c| c.condition.congruency);
    let by_condition = group_average(&epochs.curves, |c| c.condition);
    let report = session_report(
        trials,
        PupilSummary {
            eye: params.eye,
            curves: &by_congruency,
            epochs_used: epochs.curves.len(),
            epochs_rejected: epochs.rejected.len(),
        },
        frames,
        wall_clock_start,
    )?;
    let periodogram = match periodogram_peak(&cleaned) {
        Ok(p) => Some(p),
        Err(e) => {
            warn!("no periodogram for {}: {e}", report.session_id);
            None
        }
    };
    Ok(SessionAnalysis { report, cleaned, epochs, by_congruency, by_condition, periodogram })
}
