//! Behavioural and pupillary session metrics.

use crate::pipeline::{ipd_variation, MeanCurve, PipelineError};
use crate::scheduler::{Congruency, Cue};
use crate::stats;
use crate::tracker::{Eye, GazeFrame, TrialRecord};
use chrono::{NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use thiserror::Error;

/// Responses slower than this are excluded from every RT mean.
pub const RT_CUTOFF_MS: i64 = 1700;
/// Area-under-curve window, milliseconds after cue onset.
pub const AUC_WINDOW_MS: (i64, i64) = (1500, 2500);
/// Session counts at or below this get their p-values flagged as low power.
pub const LOW_POWER_SESSIONS: usize = 17;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no analysable trials")]
    NoTrials,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("at least 3 sessions are needed for correlations, got {0}")]
    TooFewSessions(usize),
    #[error("field `{field}` missing in session {session}")]
    MissingField { field: ReportField, session: String },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// A correct response within the RT cutoff, from an analysed (non-practice,
/// non-baseline) trial.
pub fn qualifies(r: &TrialRecord) -> bool {
    !r.trial.practice
        && !r.trial.baseline_mode
        && r.correct == Some(true)
        && r.rt_ms.is_some_and(|rt| rt <= RT_CUTOFF_MS)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionMean {
    pub mean_ms: f64,
    pub sd_ms: Option<f64>,
    pub n: usize,
}

impl ConditionMean {
    fn of(rts: &[f64]) -> Option<Self> {
        Some(ConditionMean { mean_ms: stats::mean(rts)?, sd_ms: stats::sample_sd(rts), n: rts.len() })
    }

    fn variance_of_mean(&self) -> f64 {
        self.sd_ms.map_or(0.0, |sd| sd * sd / self.n as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntTimings {
    pub alertness_ms: f64,
    pub orientation_ms: f64,
    pub conflict_ms: f64,
    /// Standard errors of the three differences.
    pub alertness_sem_ms: f64,
    pub orientation_sem_ms: f64,
    pub conflict_sem_ms: f64,
    pub cue_means: BTreeMap<Cue, ConditionMean>,
    pub congruency_means: BTreeMap<Congruency, ConditionMean>,
}

fn grouped<K: Ord + Copy>(trials: &[TrialRecord], key: impl Fn(&TrialRecord) -> K) -> BTreeMap<K, ConditionMean> {
    let mut rts: BTreeMap<K, Vec<f64>> = BTreeMap::new();
    for r in trials.iter().filter(|r| qualifies(r)) {
        rts.entry(key(r)).or_default().push(r.rt_ms.expect("qualifying trials have an RT") as f64);
    }
    rts.into_iter().filter_map(|(k, v)| ConditionMean::of(&v).map(|m| (k, m))).collect()
}

/// Alertness, orientation and conflict timings from condition means over
/// qualifying trials.
pub fn ant_timings(trials: &[TrialRecord]) -> Result<AntTimings, MetricsError> {
    let cue_means = grouped(trials, |r| r.trial.cue);
    let congruency_means = grouped(trials, |r| r.trial.congruency);

    let cue = |c: Cue| {
        cue_means.get(&c).copied().ok_or_else(|| MetricsError::InsufficientData(format!("no qualifying {c} trials")))
    };
    let cong = |c: Congruency| {
        congruency_means
            .get(&c)
            .copied()
            .ok_or_else(|| MetricsError::InsufficientData(format!("no qualifying {c} trials")))
    };
    let diff = |a: ConditionMean, b: ConditionMean| {
        (a.mean_ms - b.mean_ms, (a.variance_of_mean() + b.variance_of_mean()).sqrt())
    };

    let (alertness_ms, alertness_sem_ms) = diff(cue(Cue::NoCue)?, cue(Cue::DoubleCue)?);
    let (orientation_ms, orientation_sem_ms) = diff(cue(Cue::CenterCue)?, cue(Cue::SpatialCue)?);
    let (conflict_ms, conflict_sem_ms) = diff(cong(Congruency::Incongruent)?, cong(Congruency::Congruent)?);

    Ok(AntTimings {
        alertness_ms,
        orientation_ms,
        conflict_ms,
        alertness_sem_ms,
        orientation_sem_ms,
        conflict_sem_ms,
        cue_means,
        congruency_means,
    })
}

/// Mean RT over qualifying trials and the fraction of analysed trials that
/// were answered wrongly or not at all.
pub fn mean_rt_and_error(trials: &[TrialRecord]) -> Result<(f64, f64), MetricsError> {
    let analysed: Vec<&TrialRecord> = trials.iter().filter(|r| !r.trial.practice && !r.trial.baseline_mode).collect();
    if analysed.is_empty() {
        return Err(MetricsError::NoTrials);
    }
    let rts: Vec<f64> = analysed.iter().filter(|r| qualifies(r)).filter_map(|r| r.rt_ms).map(|v| v as f64).collect();
    let mean = stats::mean(&rts).ok_or_else(|| MetricsError::InsufficientData("no correct responses".into()))?;
    let errors = analysed.iter().filter(|r| r.correct != Some(true)).count();
    Ok((mean, errors as f64 / analysed.len() as f64))
}

/// Trapezoidal area under a mean curve between two times after cue onset,
/// in (relative dilation)·seconds. Bin `k` is placed at `k·bin_ms`.
pub fn auc(curve: &MeanCurve, window_ms: (i64, i64)) -> Result<f64, MetricsError> {
    let (start, end) = window_ms;
    if start % curve.bin_ms != 0 || end % curve.bin_ms != 0 || end <= start {
        return Err(MetricsError::InsufficientData(format!(
            "window {start}..{end} ms does not fall on the {} ms grid",
            curve.bin_ms
        )));
    }
    let (first, last) = ((start / curve.bin_ms) as usize, (end / curve.bin_ms) as usize);
    if last >= curve.len() {
        return Err(MetricsError::InsufficientData(format!("curve ends before {end} ms")));
    }
    if let Some(k) = (first..=last).find(|&k| !curve.bin_valid(k)) {
        return Err(MetricsError::InsufficientData(format!("bin at {} ms has no data", k as i64 * curve.bin_ms)));
    }
    let dt = curve.bin_ms as f64 / 1000.0;
    Ok((first..last).map(|k| 0.5 * (curve.values[k] + curve.values[k + 1]) * dt).sum())
}

pub fn time_of_day_hours(start: NaiveDateTime) -> f64 {
    start.hour() as f64
        + start.minute() as f64 / 60.0
        + (start.second() as f64 + start.nanosecond() as f64 * 1e-9) / 3600.0
}

/// All derived metrics of one session. Behavioural fields are `None` for
/// baseline sessions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub session_id: String,
    pub eye: Eye,
    pub baseline: bool,
    pub mean_rt_ms: Option<f64>,
    pub error_rate: Option<f64>,
    pub timings: Option<AntTimings>,
    /// Area under the mean curve per congruency over the AUC window.
    pub auc: BTreeMap<Congruency, f64>,
    pub delta_incon: Option<f64>,
    pub ipd_relative_range: Option<f64>,
    pub time_of_day_hours: Option<f64>,
    pub epochs_used: usize,
    pub epochs_rejected: usize,
}

/// Inputs to [`session_report`] that come from the pupil pipeline.
pub struct PupilSummary<'a> {
    pub eye: Eye,
    pub curves: &'a BTreeMap<Congruency, MeanCurve>,
    pub epochs_used: usize,
    pub epochs_rejected: usize,
}

pub fn session_report(
    trials: &[TrialRecord],
    pupil: PupilSummary<'_>,
    frames: &[GazeFrame],
    wall_clock_start: Option<NaiveDateTime>,
) -> Result<SessionReport, MetricsError> {
    let analysed: Vec<&TrialRecord> = trials.iter().filter(|r| !r.trial.practice).collect();
    let Some(first) = analysed.first() else {
        return Err(MetricsError::NoTrials);
    };
    if frames.is_empty() {
        return Err(MetricsError::InsufficientData("no gaze frames".into()));
    }
    let baseline = analysed.iter().all(|r| r.trial.baseline_mode);

    let (mean_rt_ms, error_rate, timings) = if baseline {
        (None, None, None)
    } else {
        let (rt, err) = mean_rt_and_error(trials)?;
        (Some(rt), Some(err), Some(ant_timings(trials)?))
    };

    let auc: BTreeMap<Congruency, f64> =
        pupil.curves.iter().map(|(&k, c)| auc(c, AUC_WINDOW_MS).map(|a| (k, a))).collect::<Result<_, _>>()?;
    let delta_incon = match (auc.get(&Congruency::Incongruent), auc.get(&Congruency::Congruent)) {
        (Some(i), Some(c)) => Some(i - c),
        _ => None,
    };

    Ok(SessionReport {
        session_id: first.session_id.clone(),
        eye: pupil.eye,
        baseline,
        mean_rt_ms,
        error_rate,
        timings,
        auc,
        delta_incon,
        ipd_relative_range: Some(ipd_variation(frames)?.relative_range),
        time_of_day_hours: wall_clock_start.map(time_of_day_hours),
        epochs_used: pupil.epochs_used,
        epochs_rejected: pupil.epochs_rejected,
    })
}

/// Report fields that can enter a correlation matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ReportField {
    MeanRt,
    ErrorRate,
    Alertness,
    Orientation,
    Conflict,
    AucIncongruent,
    AucNeutral,
    AucCongruent,
    DeltaIncon,
    IpdRange,
    TimeOfDay,
}

impl ReportField {
    pub const ALL: [ReportField; 11] = [
        ReportField::MeanRt,
        ReportField::ErrorRate,
        ReportField::Alertness,
        ReportField::Orientation,
        ReportField::Conflict,
        ReportField::AucIncongruent,
        ReportField::AucNeutral,
        ReportField::AucCongruent,
        ReportField::DeltaIncon,
        ReportField::IpdRange,
        ReportField::TimeOfDay,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ReportField::MeanRt => "mean_rt",
            ReportField::ErrorRate => "error_rate",
            ReportField::Alertness => "alertness",
            ReportField::Orientation => "orientation",
            ReportField::Conflict => "conflict",
            ReportField::AucIncongruent => "auc_incongruent",
            ReportField::AucNeutral => "auc_neutral",
            ReportField::AucCongruent => "auc_congruent",
            ReportField::DeltaIncon => "delta_incon",
            ReportField::IpdRange => "ipd_range",
            ReportField::TimeOfDay => "time_of_day",
        }
    }

    pub fn value(self, r: &SessionReport) -> Option<f64> {
        match self {
            ReportField::MeanRt => r.mean_rt_ms,
            ReportField::ErrorRate => r.error_rate,
            ReportField::Alertness => r.timings.as_ref().map(|t| t.alertness_ms),
            ReportField::Orientation => r.timings.as_ref().map(|t| t.orientation_ms),
            ReportField::Conflict => r.timings.as_ref().map(|t| t.conflict_ms),
            ReportField::AucIncongruent => r.auc.get(&Congruency::Incongruent).copied(),
            ReportField::AucNeutral => r.auc.get(&Congruency::Neutral).copied(),
            ReportField::AucCongruent => r.auc.get(&Congruency::Congruent).copied(),
            ReportField::DeltaIncon => r.delta_incon,
            ReportField::IpdRange => r.ipd_relative_range,
            ReportField::TimeOfDay => r.time_of_day_hours,
        }
    }
}

impl fmt::Display for ReportField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ReportField {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ReportField::ALL.into_iter().find(|f| f.name() == s).ok_or_else(|| format!("unknown report field {s:?}"))
    }
}

/// Two-tailed p-value of a Pearson r over `n` pairs, from the t statistic
/// with n − 2 degrees of freedom.
pub fn pearson_p_value(r: f64, n: usize) -> f64 {
    assert!(n >= 3, "p-value needs at least 3 pairs");
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t2 = r * r * df / (1.0 - r * r);
    beta_reg(df / 2.0, 0.5, df / (df + t2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub fields: Vec<ReportField>,
    pub n: usize,
    /// `None` where a field has zero variance.
    pub r: Vec<Vec<Option<f64>>>,
    pub p: Vec<Vec<Option<f64>>>,
    /// Few sessions: treat p-values with caution.
    pub low_power: bool,
}

pub fn pearson_matrix(reports: &[SessionReport], fields: &[ReportField]) -> Result<CorrelationMatrix, MetricsError> {
    let n = reports.len();
    if n < 3 {
        return Err(MetricsError::TooFewSessions(n));
    }
    let columns: Vec<Vec<f64>> = fields
        .iter()
        .map(|&field| {
            reports
                .iter()
                .map(|r| {
                    field.value(r).ok_or_else(|| MetricsError::MissingField { field, session: r.session_id.clone() })
                })
                .collect::<Result<Vec<f64>, _>>()
        })
        .collect::<Result<_, _>>()?;

    let k = fields.len();
    let mut r = vec![vec![None; k]; k];
    let mut p = vec![vec![None; k]; k];
    for i in 0..k {
        for j in i..k {
            let rij = stats::pearson(&columns[i], &columns[j]);
            let pij = rij.map(|v| pearson_p_value(v, n));
            r[i][j] = rij;
            r[j][i] = rij;
            p[i][j] = pij;
            p[j][i] = pij;
        }
    }
    Ok(CorrelationMatrix { fields: fields.to_vec(), n, r, p, low_power: n <= LOW_POWER_SESSIONS })
}

impl CorrelationMatrix {
    fn write<W: Write>(&self, cells: &[Vec<Option<f64>>], sink: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        let mut header = vec!["field".to_string()];
        header.extend(self.fields.iter().map(|f| f.to_string()));
        w.write_record(&header)?;
        for (field, row) in self.fields.iter().zip(cells) {
            let mut rec = vec![field.to_string()];
            rec.extend(row.iter().map(|v| v.map(|v| v.to_string()).unwrap_or_default()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_r_csv<W: Write>(&self, sink: W) -> csv::Result<()> {
        self.write(&self.r, sink)
    }

    pub fn write_p_csv<W: Write>(&self, sink: W) -> csv::Result<()> {
        self.write(&self.p, sink)
    }
}

/// Mean and sample standard deviation of per-session values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rollup {
    pub mean: f64,
    pub sd: Option<f64>,
    pub sessions: usize,
}

pub fn rollup(reports: &[SessionReport], field: ReportField) -> Option<Rollup> {
    let values: Vec<f64> = reports.iter().filter_map(|r| field.value(r)).collect();
    Some(Rollup { mean: stats::mean(&values)?, sd: stats::sample_sd(&values), sessions: values.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheduler::{generate_session, SessionConfig, TrialSpec};
    use crate::tracker::ResponseKey;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn record(trial: TrialSpec, rt: Option<i64>, correct: Option<bool>) -> TrialRecord {
        let response_key = match correct {
            None => ResponseKey::None,
            Some(_) => ResponseKey::Left,
        };
        TrialRecord {
            session_id: "s".into(),
            trial,
            cue_onset_ms: 0,
            target_onset_ms: 500,
            response_key,
            rt_ms: rt,
            correct,
        }
    }

    fn session() -> Vec<TrialSpec> {
        generate_session(&SessionConfig::with_seed(2)).unwrap()
    }

    #[test]
    fn equal_means_give_zero_timings() {
        let trials: Vec<_> = session().into_iter().map(|t| record(t, Some(550), Some(true))).collect();
        let t = ant_timings(&trials).unwrap();
        assert_eq!((t.alertness_ms, t.orientation_ms, t.conflict_ms), (0.0, 0.0, 0.0));
    }

    #[test]
    fn table_one_subject_a_contrasts() {
        // condition means 600/573/595/573 (cues) and 620/535 (congruency): build
        // RTs additively so each marginal mean is exact.
        let cue_rt = |c: Cue| match c {
            Cue::NoCue => 600,
            Cue::DoubleCue => 573,
            Cue::CenterCue => 595,
            Cue::SpatialCue => 573,
        };
        let cong_rt = |c: Congruency| match c {
            Congruency::Incongruent => 42,
            Congruency::Neutral => 0,
            Congruency::Congruent => -43,
        };
        let trials: Vec<_> = session()
            .into_iter()
            .map(|t| {
                let rt = cue_rt(t.cue) + cong_rt(t.congruency);
                record(t, Some(rt), Some(true))
            })
            .collect();
        let t = ant_timings(&trials).unwrap();
        assert_eq!(t.alertness_ms, 27.0);
        assert_eq!(t.orientation_ms, 22.0);
        assert_eq!(t.conflict_ms, 85.0);
        assert_eq!(t.cue_means[&Cue::NoCue].n, 72);
    }

    #[test]
    fn slow_or_wrong_trials_are_excluded() {
        let base: Vec<_> = session()
            .into_iter()
            .map(|t| {
                let rt = 500 + t_idx(&t) % 50;
                record(t, Some(rt), Some(true))
            })
            .collect();
        let reference = ant_timings(&base).unwrap();
        let mut extra = base.clone();
        let template = base[0].trial.clone();
        extra.push(record(template.clone(), Some(1750), Some(true)));
        extra.push(record(template.clone(), Some(300), Some(false)));
        extra.push(record(template, None, None));
        assert_eq!(ant_timings(&extra).unwrap(), reference);
    }

    fn t_idx(t: &TrialSpec) -> i64 {
        t.index as i64
    }

    #[test]
    fn empty_condition_is_named() {
        let trials: Vec<_> = session()
            .into_iter()
            .filter(|t| t.cue != Cue::SpatialCue)
            .map(|t| record(t, Some(500), Some(true)))
            .collect();
        match ant_timings(&trials) {
            Err(MetricsError::InsufficientData(msg)) => assert!(msg.contains("spatial_cue"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rt_cutoff_is_inclusive() {
        let t = session()[0].clone();
        assert!(qualifies(&record(t.clone(), Some(1700), Some(true))));
        assert!(!qualifies(&record(t, Some(1701), Some(true))));
    }

    #[test]
    fn mean_rt_all_correct() {
        let trials: Vec<_> = session().into_iter().map(|t| record(t, Some(577), Some(true))).collect();
        assert_eq!(mean_rt_and_error(&trials).unwrap(), (577.0, 0.0));
    }

    #[test]
    fn half_missing_is_half_errors() {
        let trials: Vec<_> = session()
            .into_iter()
            .enumerate()
            .map(|(i, t)| if i % 2 == 0 { record(t, Some(600), Some(true)) } else { record(t, None, None) })
            .collect();
        assert_eq!(mean_rt_and_error(&trials).unwrap().1, 0.5);
        assert_eq!(mean_rt_and_error(&[]), Err(MetricsError::NoTrials));
    }

    #[test]
    fn mean_rt_matches_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let trials: Vec<_> = session()
            .into_iter()
            .map(|t| match rng.random_range(0..10) {
                0 => record(t, None, None),
                1 => record(t, Some(rng.random_range(200..900)), Some(false)),
                2 => record(t, Some(rng.random_range(1701..2500)), Some(true)),
                _ => record(t, Some(rng.random_range(200..1701)), Some(true)),
            })
            .collect();
        // direct recomputation
        let mut sum = 0i64;
        let mut count = 0i64;
        let mut wrong = 0;
        for r in &trials {
            match (r.correct, r.rt_ms) {
                (Some(true), Some(rt)) if rt <= 1700 => {
                    sum += rt;
                    count += 1;
                }
                (Some(true), _) => {}
                _ => wrong += 1,
            }
        }
        let (mean, err) = mean_rt_and_error(&trials).unwrap();
        assert_eq!(mean, sum as f64 / count as f64);
        assert_eq!(err, wrong as f64 / 288.0);
    }

    proptest! {
        #[test]
        fn timings_ignore_trial_order(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut trials: Vec<_> = session()
                .into_iter()
                .map(|t| record(t, Some(rng.random_range(300..1800)), Some(rng.random_bool(0.9))))
                .collect();
            let a = ant_timings(&trials).unwrap();
            trials.shuffle(&mut rng);
            let b = ant_timings(&trials).unwrap();
            prop_assert!((a.alertness_ms - b.alertness_ms).abs() < 1e-9);
            prop_assert!((a.orientation_ms - b.orientation_ms).abs() < 1e-9);
            prop_assert!((a.conflict_ms - b.conflict_ms).abs() < 1e-9);
        }
    }

    fn flat(values: Vec<f64>) -> MeanCurve {
        let n = values.len();
        MeanCurve { bin_ms: 100, values, sem: vec![0.0; n], n: vec![10; n] }
    }

    #[test]
    fn auc_cases() {
        assert!((auc(&flat(vec![0.02; 30]), AUC_WINDOW_MS).unwrap() - 0.02).abs() < 1e-15);
        assert_eq!(auc(&flat(vec![0.0; 30]), AUC_WINDOW_MS).unwrap(), 0.0);
        let ramp: Vec<f64> = (0..30).map(|k| ((k as f64 - 15.0) * 0.003).clamp(0.0, 0.03)).collect();
        assert!((auc(&flat(ramp), AUC_WINDOW_MS).unwrap() - 0.015).abs() < 1e-15);

        let mut gap = flat(vec![0.01; 30]);
        gap.n[20] = 0;
        assert!(matches!(auc(&gap, AUC_WINDOW_MS), Err(MetricsError::InsufficientData(_))));
        gap.n[20] = 1;
        gap.n[26] = 0;
        assert!(auc(&gap, AUC_WINDOW_MS).is_ok());
    }

    #[test]
    fn p_value_edges() {
        assert_eq!(pearson_p_value(1.0, 10), 0.0);
        assert_eq!(pearson_p_value(-1.0, 10), 0.0);
        assert!((pearson_p_value(0.0, 10) - 1.0).abs() < 1e-15);
    }

    fn report(i: usize, x: f64, y: f64) -> SessionReport {
        SessionReport {
            session_id: format!("s{i}"),
            eye: Eye::Left,
            baseline: false,
            mean_rt_ms: Some(x),
            error_rate: Some(y),
            timings: None,
            auc: BTreeMap::new(),
            delta_incon: None,
            ipd_relative_range: Some(0.001),
            time_of_day_hours: Some(9.0 + i as f64),
            epochs_used: 0,
            epochs_rejected: 0,
        }
    }

    #[test]
    fn matrix_shape_and_missing() {
        let reports: Vec<_> = (0..5).map(|i| report(i, i as f64, -(i as f64))).collect();
        let m =
            pearson_matrix(&reports, &[ReportField::MeanRt, ReportField::ErrorRate, ReportField::IpdRange]).unwrap();
        assert_eq!(m.r[0][0], Some(1.0));
        assert_eq!(m.r[0][1], Some(-1.0));
        assert_eq!(m.r[1][0], Some(-1.0));
        assert_eq!(m.p[0][0], Some(0.0));
        assert_eq!(m.r[2][0], None);
        assert_eq!(m.r[2][2], None);
        assert!(m.low_power);

        assert_eq!(pearson_matrix(&reports[..2], &[ReportField::MeanRt]), Err(MetricsError::TooFewSessions(2)));
        assert!(matches!(
            pearson_matrix(&reports, &[ReportField::Conflict]),
            Err(MetricsError::MissingField { field: ReportField::Conflict, .. })
        ));

        let mut buf = Vec::new();
        m.write_r_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "field,mean_rt,error_rate,ipd_range");
        assert_eq!(text.lines().nth(3).unwrap(), "ipd_range,,,");
    }

    #[test]
    fn affine_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let reports: Vec<_> = (0..10).map(|i| report(i, rng.random(), rng.random())).collect();
        let scaled: Vec<_> = reports
            .iter()
            .map(|r| SessionReport { mean_rt_ms: r.mean_rt_ms.map(|v| 3.0 * v + 7.0), ..r.clone() })
            .collect();
        let f = [ReportField::MeanRt, ReportField::ErrorRate];
        let a = pearson_matrix(&reports, &f).unwrap();
        let b = pearson_matrix(&scaled, &f).unwrap();
        assert!((a.r[0][1].unwrap() - b.r[0][1].unwrap()).abs() < 1e-12);
    }

    #[test]
    fn time_of_day() {
        let t = NaiveDateTime::parse_from_str("2015-09-21 13:45:00", "%Y-%m-%d %H:%M:%S").unwrap();
        assert_eq!(time_of_day_hours(t), 13.75);
    }
}
