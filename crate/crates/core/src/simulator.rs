//! Synthetic subject: gaze frames and trial records with known injected
//! effects.
//!
//! Every random component draws from its own ChaCha stream of the session
//! seed, so a baseline session and an active session built from the same seed
//! share drift, noise, blinks and head jitter exactly.

use crate::scheduler::{Congruency, Cue, SessionConfig, TrialSpec};
use crate::tracker::{EyeSample, GazeFrame, Point, ResponseKey, TrialRecord, FRAME_RATE_HZ};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::TAU;
use thiserror::Error;

const BEHAVIOUR_STREAM: u64 = 0;
const DRIFT_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const BLINK_STREAM: u64 = 3;
const HEAD_STREAM: u64 = 4;

/// Gamma kernels are cut off this many time constants after their peak.
const KERNEL_SPAN: f64 = 8.0;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("{name} = {value} is not a probability")]
    Probability { name: String, value: f64 },
    #[error("{name} = {value} must be non-negative")]
    Negative { name: String, value: f64 },
    #[error("drift period {0} s is outside [20, 60]")]
    DriftPeriod(f64),
    #[error("kernel peak ({peak_ms} ms) must come after its onset ({onset_ms} ms)")]
    KernelTiming { onset_ms: f64, peak_ms: f64 },
    #[error("blink duration range {0:?} is empty or negative")]
    BlinkDuration((f64, f64)),
}

/// Gamma-shaped impulse response, 1 at its peak:
/// `h(s) = s^k · exp(k·(1 − s))` with `s = (t − onset) / (peak − onset)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaKernel {
    pub onset_ms: f64,
    pub peak_ms: f64,
    pub shape: f64,
}

impl GammaKernel {
    pub fn at(&self, t_ms: f64) -> f64 {
        let s = (t_ms - self.onset_ms) / (self.peak_ms - self.onset_ms);
        if s <= 0.0 || s > KERNEL_SPAN {
            return 0.0;
        }
        (self.shape * (s.ln() + 1.0 - s)).exp()
    }

    fn span_ms(&self) -> f64 {
        self.onset_ms + KERNEL_SPAN * (self.peak_ms - self.onset_ms)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectModel {
    pub base_rt_ms: f64,
    pub cue_effects_ms: BTreeMap<Cue, f64>,
    pub congruency_effects_ms: BTreeMap<Congruency, f64>,
    pub rt_noise_sd_ms: f64,
    /// Probability of pressing the wrong key.
    pub error_prob: BTreeMap<Congruency, f64>,
    /// Probability of not responding at all.
    pub miss_prob: f64,

    pub pupil_base: f64,
    /// Right pupil size relative to the left.
    pub right_eye_ratio: f64,
    /// Target-locked response, amplitude per congruency as a fraction of
    /// `pupil_base`.
    pub target_kernel: GammaKernel,
    pub kernel_amplitude: BTreeMap<Congruency, f64>,
    /// Cue-locked response, amplitude as a fraction of the trial's
    /// target-locked amplitude.
    pub cue_kernel: GammaKernel,
    pub cue_kernel_fraction: f64,
    pub drift_amplitude: f64,
    pub drift_period_s: f64,
    pub noise_sd_fraction: f64,
    pub blink_rate_hz: f64,
    pub blink_duration_ms: (f64, f64),
    /// Standard deviation of pupil-centre jitter, normalised camera units.
    pub head_jitter_sd: f64,
}

impl Default for SubjectModel {
    /// Behavioural aggregates of subject A: mean RT 577 ms, alertness 27,
    /// orientation 22, conflict 85 ms.
    fn default() -> Self {
        SubjectModel {
            base_rt_ms: 574.25,
            cue_effects_ms: BTreeMap::from([
                (Cue::NoCue, 20.0),
                (Cue::CenterCue, 10.0),
                (Cue::DoubleCue, -7.0),
                (Cue::SpatialCue, -12.0),
            ]),
            congruency_effects_ms: BTreeMap::from([
                (Congruency::Incongruent, 42.5),
                (Congruency::Neutral, 0.0),
                (Congruency::Congruent, -42.5),
            ]),
            rt_noise_sd_ms: 50.0,
            error_prob: BTreeMap::from([
                (Congruency::Incongruent, 0.05),
                (Congruency::Neutral, 0.02),
                (Congruency::Congruent, 0.02),
            ]),
            miss_prob: 0.005,
            pupil_base: 15.0,
            right_eye_ratio: 0.97,
            target_kernel: GammaKernel { onset_ms: 700.0, peak_ms: 1300.0, shape: 3.0 },
            kernel_amplitude: BTreeMap::from([
                (Congruency::Incongruent, 0.03),
                (Congruency::Neutral, 0.02),
                (Congruency::Congruent, 0.02),
            ]),
            cue_kernel: GammaKernel { onset_ms: 150.0, peak_ms: 900.0, shape: 3.0 },
            cue_kernel_fraction: 0.2,
            drift_amplitude: 0.03,
            drift_period_s: 40.0,
            noise_sd_fraction: 0.005,
            blink_rate_hz: 0.2,
            blink_duration_ms: (100.0, 300.0),
            head_jitter_sd: 2e-5,
        }
    }
}

impl SubjectModel {
    /// No behavioural or evoked structure beyond noise, drift and blinks.
    pub fn without_effects(mut self) -> Self {
        self.kernel_amplitude.values_mut().for_each(|a| *a = 0.0);
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let probability = |name: String, value: f64| {
            if (0.0..=1.0).contains(&value) {
                Ok(())
            } else {
                Err(SimError::Probability { name, value })
            }
        };
        let non_negative = |name: String, value: f64| {
            if value >= 0.0 {
                Ok(())
            } else {
                Err(SimError::Negative { name, value })
            }
        };
        for (c, p) in &self.error_prob {
            probability(format!("error_prob[{c}]"), *p)?;
        }
        probability("miss_prob".into(), self.miss_prob)?;
        probability("cue_kernel_fraction".into(), self.cue_kernel_fraction)?;
        for (c, a) in &self.kernel_amplitude {
            non_negative(format!("kernel_amplitude[{c}]"), *a)?;
        }
        non_negative("rt_noise_sd_ms".into(), self.rt_noise_sd_ms)?;
        non_negative("noise_sd_fraction".into(), self.noise_sd_fraction)?;
        non_negative("blink_rate_hz".into(), self.blink_rate_hz)?;
        non_negative("head_jitter_sd".into(), self.head_jitter_sd)?;
        non_negative("drift_amplitude".into(), self.drift_amplitude)?;
        if !(20.0..=60.0).contains(&self.drift_period_s) {
            return Err(SimError::DriftPeriod(self.drift_period_s));
        }
        for k in [self.target_kernel, self.cue_kernel] {
            if k.peak_ms <= k.onset_ms {
                return Err(SimError::KernelTiming { onset_ms: k.onset_ms, peak_ms: k.peak_ms });
            }
        }
        let (lo, hi) = self.blink_duration_ms;
        if lo < 0.0 || hi < lo {
            return Err(SimError::BlinkDuration(self.blink_duration_ms));
        }
        Ok(())
    }

    pub fn expected_rt_ms(&self, cue: Cue, congruency: Congruency) -> f64 {
        self.base_rt_ms
            + self.cue_effects_ms.get(&cue).copied().unwrap_or(0.0)
            + self.congruency_effects_ms.get(&congruency).copied().unwrap_or(0.0)
    }

    fn amplitude(&self, congruency: Congruency) -> f64 {
        self.kernel_amplitude.get(&congruency).copied().unwrap_or(0.0)
    }

    /// Evoked relative dilation `t_ms` after a cue, for one isolated trial.
    pub fn evoked(&self, congruency: Congruency, t_ms: f64, cue_to_target_ms: f64) -> f64 {
        let a = self.amplitude(congruency);
        a * (self.cue_kernel_fraction * self.cue_kernel.at(t_ms) + self.target_kernel.at(t_ms - cue_to_target_ms))
    }

    /// Noise-free epoch curve of an isolated trial: the evoked response
    /// averaged over each bin and expressed relative to the first bin.
    pub fn expected_curve(&self, congruency: Congruency, bin_ms: i64, bins: usize, cue_to_target_ms: f64) -> Vec<f64> {
        const STEPS: i64 = 20;
        let bin_mean = |k: usize| {
            let start = k as f64 * bin_ms as f64;
            (0..STEPS)
                .map(|j| {
                    self.evoked(congruency, start + (j as f64 + 0.5) * bin_ms as f64 / STEPS as f64, cue_to_target_ms)
                })
                .sum::<f64>()
                / STEPS as f64
        };
        let b = 1.0 + bin_mean(0);
        (0..bins).map(|k| (1.0 + bin_mean(k)) / b - 1.0).collect()
    }
}

/// Wall-clock layout of a simulated session on the gaze clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionTiming {
    pub clock_origin_ms: i64,
    pub lead_ms: i64,
    /// Pause inserted whenever the block (or practice/main phase) changes.
    pub break_ms: i64,
    pub tail_ms: i64,
    pub trial_period_ms: i64,
    pub cue_to_target_ms: i64,
}

impl Default for SessionTiming {
    fn default() -> Self {
        SessionTiming::from_config(&SessionConfig::default())
    }
}

impl SessionTiming {
    pub fn from_config(config: &SessionConfig) -> Self {
        SessionTiming {
            clock_origin_ms: 0,
            lead_ms: 2000,
            break_ms: 20_000,
            tail_ms: 4000,
            trial_period_ms: config.trial_period_ms as i64,
            cue_to_target_ms: config.cue_to_target_ms as i64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialTruth {
    pub index: u32,
    pub practice: bool,
    pub congruency: Congruency,
    pub cue_onset_ms: i64,
    pub target_onset_ms: i64,
    /// Latent RT before rounding; present even when the subject did not
    /// respond.
    pub latent_rt_ms: Option<f64>,
    pub evoked_amplitude: f64,
}

/// Everything that was injected into a simulated session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTruth {
    pub session_id: String,
    pub seed: u64,
    pub baseline: bool,
    pub model: SubjectModel,
    pub timing: SessionTiming,
    pub start_ms: i64,
    pub end_ms: i64,
    pub drift_phase_rad: f64,
    pub blinks_ms: Vec<(i64, i64)>,
    pub trials: Vec<TrialTruth>,
    /// Injected (alertness, orientation, conflict) in ms.
    pub ant_timings_ms: (f64, f64, f64),
}

impl SessionTruth {
    /// Noise-free relative pupil signal (drift plus evoked responses) at `t`.
    pub fn relative_signal(&self, t_ms: i64) -> f64 {
        let m = &self.model;
        let secs = (t_ms - self.start_ms) as f64 / 1000.0;
        let drift = m.drift_amplitude * (TAU * secs / m.drift_period_s + self.drift_phase_rad).sin();
        let evoked: f64 = self
            .trials
            .iter()
            .map(|tr| {
                let since_cue = (t_ms - tr.cue_onset_ms) as f64;
                tr.evoked_amplitude
                    * (m.cue_kernel_fraction * m.cue_kernel.at(since_cue)
                        + m.target_kernel.at((t_ms - tr.target_onset_ms) as f64))
            })
            .sum();
        drift + evoked
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSession {
    pub frames: Vec<GazeFrame>,
    pub trials: Vec<TrialRecord>,
    pub truth: SessionTruth,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Simulate an active session. Trials flagged `baseline_mode` get no
/// response and no evoked dilation.
pub fn simulate_session(
    model: &SubjectModel,
    schedule: &[TrialSpec],
    timing: &SessionTiming,
    seed: u64,
) -> Result<SimulatedSession, SimError> {
    model.validate()?;
    let session_id = format!("sim-{seed}");

    let mut behaviour = stream(seed, BEHAVIOUR_STREAM);
    let rt_noise = Normal::new(0.0, model.rt_noise_sd_ms).expect("validated sd");
    let mut cursor = timing.clock_origin_ms + timing.lead_ms;
    let mut phase = None;
    let mut records = Vec::with_capacity(schedule.len());
    let mut truths = Vec::with_capacity(schedule.len());
    for spec in schedule {
        let key = (spec.practice, spec.block);
        if phase.is_some_and(|p| p != key) {
            cursor += timing.break_ms;
        }
        phase = Some(key);
        let cue_onset_ms = cursor + spec.fixation_delay_ms as i64;
        let target_onset_ms = cue_onset_ms + timing.cue_to_target_ms;
        cursor += timing.trial_period_ms;

        // Draws happen for every trial so that baseline and active sessions
        // stay aligned on the behaviour stream.
        let latent = (model.expected_rt_ms(spec.cue, spec.congruency) + rt_noise.sample(&mut behaviour)).max(0.0);
        let wrong = behaviour.random_bool(model.error_prob.get(&spec.congruency).copied().unwrap_or(0.0));
        let missed = behaviour.random_bool(model.miss_prob);

        let mut record = TrialRecord::pending(&session_id, spec.clone(), cue_onset_ms, target_onset_ms);
        if !spec.baseline_mode && !missed {
            let correct_key = match spec.direction {
                crate::scheduler::Direction::Left => ResponseKey::Left,
                crate::scheduler::Direction::Right => ResponseKey::Right,
            };
            let key = match (wrong, correct_key) {
                (false, k) => k,
                (true, ResponseKey::Left) => ResponseKey::Right,
                (true, _) => ResponseKey::Left,
            };
            record.response_key = key;
            record.rt_ms = Some(latent.round() as i64);
            record.correct = Some(!wrong);
        }
        records.push(record);
        truths.push(TrialTruth {
            index: spec.index,
            practice: spec.practice,
            congruency: spec.congruency,
            cue_onset_ms,
            target_onset_ms,
            latent_rt_ms: (!spec.baseline_mode).then_some(latent),
            evoked_amplitude: if spec.baseline_mode { 0.0 } else { model.amplitude(spec.congruency) },
        });
    }

    let start_ms = timing.clock_origin_ms;
    let end_ms = cursor + timing.tail_ms;
    let drift_phase_rad = stream(seed, DRIFT_STREAM).random_range(0.0..TAU);
    let blinks_ms = blinks(model, seed, start_ms, end_ms);
    let baseline = !schedule.is_empty() && schedule.iter().all(|t| t.baseline_mode);
    let ant_timings_ms = {
        let cue = |c| model.cue_effects_ms.get(&c).copied().unwrap_or(0.0);
        let cong = |c| model.congruency_effects_ms.get(&c).copied().unwrap_or(0.0);
        (
            cue(Cue::NoCue) - cue(Cue::DoubleCue),
            cue(Cue::CenterCue) - cue(Cue::SpatialCue),
            cong(Congruency::Incongruent) - cong(Congruency::Congruent),
        )
    };
    let truth = SessionTruth {
        session_id,
        seed,
        baseline,
        model: model.clone(),
        timing: *timing,
        start_ms,
        end_ms,
        drift_phase_rad,
        blinks_ms,
        trials: truths,
        ant_timings_ms,
    };
    let frames = frames(&truth);
    Ok(SimulatedSession { frames, trials: records, truth })
}

/// Same schedule with every trial in baseline mode: no responses and no
/// evoked dilation, identical drift, noise and blinks for the same seed.
pub fn simulate_baseline(
    model: &SubjectModel,
    schedule: &[TrialSpec],
    timing: &SessionTiming,
    seed: u64,
) -> Result<SimulatedSession, SimError> {
    let schedule: Vec<TrialSpec> = schedule.iter().map(|t| TrialSpec { baseline_mode: true, ..t.clone() }).collect();
    simulate_session(model, &schedule, timing, seed)
}

fn blinks(model: &SubjectModel, seed: u64, start_ms: i64, end_ms: i64) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    if model.blink_rate_hz <= 0.0 {
        return out;
    }
    let mut rng = stream(seed, BLINK_STREAM);
    let gap = Exp::new(model.blink_rate_hz / 1000.0).expect("positive rate");
    let (lo, hi) = model.blink_duration_ms;
    let mut t = start_ms as f64;
    loop {
        t += gap.sample(&mut rng);
        if t >= end_ms as f64 {
            return out;
        }
        let duration = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        out.push((t.round() as i64, (t + duration).round() as i64));
        t += duration;
    }
}

fn frames(truth: &SessionTruth) -> Vec<GazeFrame> {
    let m = &truth.model;
    let mut noise_rng = stream(truth.seed, NOISE_STREAM);
    let mut head_rng = stream(truth.seed, HEAD_STREAM);
    let noise = Normal::new(0.0, m.noise_sd_fraction).expect("validated sd");
    let jitter = Normal::new(0.0, m.head_jitter_sd).expect("validated sd");
    let gaze_jitter = Normal::new(0.0, 15.0).expect("constant sd");

    let span = m.target_kernel.span_ms().max(m.cue_kernel.span_ms()) as i64 + truth.timing.cue_to_target_ms;
    let mut first_trial = 0usize;
    let mut blink = 0usize;
    let mut out = Vec::new();
    for k in 0i64.. {
        let ts_ms = truth.start_ms + (k as f64 * 1000.0 / FRAME_RATE_HZ).round() as i64;
        if ts_ms > truth.end_ms {
            break;
        }
        // Random draws happen unconditionally so the streams stay aligned
        // across sessions that differ only in their evoked responses.
        let n_left = noise.sample(&mut noise_rng);
        let n_right = noise.sample(&mut noise_rng);
        let head = [(); 4].map(|_| jitter.sample(&mut head_rng));
        let gaze = [(); 4].map(|_| gaze_jitter.sample(&mut head_rng));

        while first_trial < truth.trials.len() && truth.trials[first_trial].cue_onset_ms + span < ts_ms {
            first_trial += 1;
        }
        while blink < truth.blinks_ms.len() && truth.blinks_ms[blink].1 < ts_ms {
            blink += 1;
        }
        let blinking = truth.blinks_ms.get(blink).is_some_and(|&(a, b)| a <= ts_ms && ts_ms <= b);
        if blinking {
            out.push(GazeFrame { ts_ms, left: EyeSample::missing(), right: EyeSample::missing() });
            continue;
        }

        let secs = (ts_ms - truth.start_ms) as f64 / 1000.0;
        let drift = m.drift_amplitude * (TAU * secs / m.drift_period_s + truth.drift_phase_rad).sin();
        let evoked: f64 = truth.trials[first_trial..]
            .iter()
            .take_while(|tr| tr.cue_onset_ms <= ts_ms)
            .map(|tr| {
                tr.evoked_amplitude
                    * (m.cue_kernel_fraction * m.cue_kernel.at((ts_ms - tr.cue_onset_ms) as f64)
                        + m.target_kernel.at((ts_ms - tr.target_onset_ms) as f64))
            })
            .sum();
        let signal = 1.0 + drift + evoked;
        let eye = |size: f64, cx: f64, dx: f64, dy: f64, gx: f64, gy: f64| EyeSample {
            pupil_size: Some(size),
            pupil_center: Some(Point::new(cx + dx, 0.5 + dy)),
            gaze: Some(Point::new(960.0 + gx, 540.0 + gy)),
            valid: true,
        };
        out.push(GazeFrame {
            ts_ms,
            left: eye(m.pupil_base * (signal + n_left), 0.325, head[0], head[1], gaze[0], gaze[1]),
            right: eye(
                m.pupil_base * m.right_eye_ratio * (signal + n_right),
                0.675,
                head[2],
                head[3],
                gaze[2],
                gaze[3],
            ),
        });
    }
    out
}
