//! Counterbalanced ANT trial schedules.
//!
//! A main block is an exact enumeration of the 48 (cue × congruency ×
//! location × direction) combinations, repeated `trials_per_block / 48`
//! times and shuffled with a seeded ChaCha stream. Fixation delays are drawn
//! uniformly in whole milliseconds from [`MIN_FIXATION_MS`, `MAX_FIXATION_MS`].

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub const MIN_FIXATION_MS: u32 = 400;
pub const MAX_FIXATION_MS: u32 = 1600;
/// Number of distinct (cue, congruency, location, direction) combinations.
pub const COMBINATIONS: usize = 48;

const MAIN_STREAM: u64 = 0;
const PRACTICE_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cue {
    NoCue,
    CenterCue,
    DoubleCue,
    SpatialCue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Congruency {
    Incongruent,
    Neutral,
    Congruent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    Above,
    Below,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Left,
    Right,
}

impl Cue {
    pub const ALL: [Cue; 4] = [Cue::NoCue, Cue::CenterCue, Cue::DoubleCue, Cue::SpatialCue];
}

impl Congruency {
    pub const ALL: [Congruency; 3] = [Congruency::Incongruent, Congruency::Neutral, Congruency::Congruent];
}

impl Location {
    pub const ALL: [Location; 2] = [Location::Above, Location::Below];
}

impl Direction {
    pub const ALL: [Direction; 2] = [Direction::Left, Direction::Right];
}

macro_rules! text_enum {
    ($ty:ty { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self { $(<$ty>::$variant => $text),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok(<$ty>::$variant),)+
                    other => Err(format!("unknown {} value {other:?}", stringify!($ty))),
                }
            }
        }
    };
}

text_enum!(Cue { NoCue => "no_cue", CenterCue => "center_cue", DoubleCue => "double_cue", SpatialCue => "spatial_cue" });
text_enum!(Congruency { Incongruent => "incongruent", Neutral => "neutral", Congruent => "congruent" });
text_enum!(Location { Above => "above", Below => "below" });
text_enum!(Direction { Left => "left", Right => "right" });

/// One cell of the full factorial design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Combination {
    pub cue: Cue,
    pub congruency: Congruency,
    pub location: Location,
    pub direction: Direction,
}

impl Combination {
    /// All 48 combinations in a fixed canonical order.
    pub fn all() -> Vec<Combination> {
        let mut out = Vec::with_capacity(COMBINATIONS);
        for cue in Cue::ALL {
            for congruency in Congruency::ALL {
                for location in Location::ALL {
                    for direction in Direction::ALL {
                        out.push(Combination { cue, congruency, location, direction });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub index: u32,
    pub block: u32,
    pub cue: Cue,
    pub congruency: Congruency,
    pub location: Location,
    pub direction: Direction,
    pub fixation_delay_ms: u32,
    pub baseline_mode: bool,
    /// Practice trials are never analysed.
    #[serde(default)]
    pub practice: bool,
}

impl TrialSpec {
    pub fn combination(&self) -> Combination {
        Combination { cue: self.cue, congruency: self.congruency, location: self.location, direction: self.direction }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub seed: u64,
    pub trial_period_ms: u32,
    pub cue_to_target_ms: u32,
    pub blocks: u32,
    pub trials_per_block: u32,
    pub baseline_mode: bool,
    pub practice_trials: u32,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            seed: 0,
            trial_period_ms: 4000,
            cue_to_target_ms: 500,
            blocks: 3,
            trials_per_block: 96,
            baseline_mode: false,
            practice_trials: 24,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("trials_per_block ({0}) must be a positive multiple of 48")]
    BlockSize(u32),
    #[error("blocks must be at least 1")]
    NoBlocks,
    #[error("cue_to_target_ms ({cue_to_target_ms}) must be shorter than trial_period_ms ({trial_period_ms})")]
    Timing { cue_to_target_ms: u32, trial_period_ms: u32 },
}

impl SessionConfig {
    pub fn with_seed(seed: u64) -> Self {
        SessionConfig { seed, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        if self.trials_per_block == 0 || !(self.trials_per_block as usize).is_multiple_of(COMBINATIONS) {
            return Err(ScheduleError::BlockSize(self.trials_per_block));
        }
        if self.blocks == 0 {
            return Err(ScheduleError::NoBlocks);
        }
        if self.cue_to_target_ms >= self.trial_period_ms {
            return Err(ScheduleError::Timing {
                cue_to_target_ms: self.cue_to_target_ms,
                trial_period_ms: self.trial_period_ms,
            });
        }
        Ok(())
    }

    pub fn total_trials(&self) -> u32 {
        self.blocks * self.trials_per_block
    }
}

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn fixation_delay(rng: &mut ChaCha8Rng) -> u32 {
    rng.random_range(MIN_FIXATION_MS..=MAX_FIXATION_MS)
}

/// Generate the main (analysed) trials of a session.
pub fn generate_session(config: &SessionConfig) -> Result<Vec<TrialSpec>, ScheduleError> {
    config.validate()?;
    let mut rng = stream(config.seed, MAIN_STREAM);
    let combos = Combination::all();
    let repeats = config.trials_per_block as usize / COMBINATIONS;
    let mut trials = Vec::with_capacity(config.total_trials() as usize);

    for block in 0..config.blocks {
        let mut cells: Vec<Combination> = combos.iter().copied().cycle().take(repeats * COMBINATIONS).collect();
        cells.shuffle(&mut rng);
        for combo in cells {
            let index = trials.len() as u32;
            trials.push(TrialSpec {
                index,
                block,
                cue: combo.cue,
                congruency: combo.congruency,
                location: combo.location,
                direction: combo.direction,
                fixation_delay_ms: fixation_delay(&mut rng),
                baseline_mode: config.baseline_mode,
                practice: false,
            });
        }
    }
    Ok(trials)
}

/// Practice trials: sampled with replacement from the 48 combinations, no balance.
pub fn generate_practice(config: &SessionConfig) -> Vec<TrialSpec> {
    let mut rng = stream(config.seed, PRACTICE_STREAM);
    let combos = Combination::all();
    (0..config.practice_trials)
        .map(|index| {
            let combo = combos[rng.random_range(0..combos.len())];
            TrialSpec {
                index,
                block: 0,
                cue: combo.cue,
                congruency: combo.congruency,
                location: combo.location,
                direction: combo.direction,
                fixation_delay_ms: fixation_delay(&mut rng),
                baseline_mode: config.baseline_mode,
                practice: true,
            }
        })
        .collect()
}

/// Trial counts after which a break is offered.
pub fn break_points(config: &SessionConfig) -> Vec<u32> {
    (1..config.blocks).map(|b| b * config.trials_per_block).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn histogram<'a>(trials: impl IntoIterator<Item = &'a TrialSpec>) -> HashMap<Combination, usize> {
        let mut counts = HashMap::new();
        for t in trials {
            *counts.entry(t.combination()).or_insert(0) += 1;
        }
        counts
    }

    #[test]
    fn default_session_is_fully_crossed() {
        let trials = generate_session(&SessionConfig::default()).unwrap();
        assert_eq!(trials.len(), 288);

        let full = histogram(&trials);
        assert_eq!(full.len(), 48);
        assert!(full.values().all(|&n| n == 6));

        let mut pairs: HashMap<(Cue, Congruency), usize> = HashMap::new();
        for t in &trials {
            *pairs.entry((t.cue, t.congruency)).or_insert(0) += 1;
        }
        assert_eq!(pairs.len(), 12);
        assert!(pairs.values().all(|&n| n == 24));

        assert_eq!(trials.iter().filter(|t| t.location == Location::Above).count(), 144);
        assert_eq!(trials.iter().filter(|t| t.direction == Direction::Left).count(), 144);
    }

    #[test]
    fn each_block_holds_every_combination_twice() {
        let trials = generate_session(&SessionConfig::with_seed(99)).unwrap();
        for block in trials.chunks(96) {
            let hist = histogram(block);
            assert_eq!(hist.len(), 48);
            assert!(hist.values().all(|&n| n == 2));
            let probe = Combination {
                cue: Cue::SpatialCue,
                congruency: Congruency::Incongruent,
                location: Location::Above,
                direction: Direction::Left,
            };
            assert_eq!(hist[&probe], 2);
            assert!(block.iter().all(|t| t.block == block[0].block));
        }
    }

    #[test]
    fn same_seed_same_schedule() {
        let cfg = SessionConfig::with_seed(7);
        let a = serde_json::to_vec(&generate_session(&cfg).unwrap()).unwrap();
        let b = serde_json::to_vec(&generate_session(&cfg).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn delays_stay_in_range() {
        let trials = generate_session(&SessionConfig::with_seed(3)).unwrap();
        assert!(trials.iter().all(|t| (MIN_FIXATION_MS..=MAX_FIXATION_MS).contains(&t.fixation_delay_ms)));
    }

    #[test]
    fn rejects_bad_block_size() {
        let cfg = SessionConfig { trials_per_block: 50, ..Default::default() };
        assert_eq!(generate_session(&cfg), Err(ScheduleError::BlockSize(50)));
        let cfg = SessionConfig { cue_to_target_ms: 4000, ..Default::default() };
        assert!(matches!(generate_session(&cfg), Err(ScheduleError::Timing { .. })));
    }

    #[test]
    fn practice_block() {
        let empty = SessionConfig { practice_trials: 0, ..Default::default() };
        assert!(generate_practice(&empty).is_empty());

        let practice = generate_practice(&SessionConfig::with_seed(11));
        assert_eq!(practice.len(), 24);
        assert!(practice.iter().all(|t| t.practice));
        assert!(practice.iter().all(|t| (MIN_FIXATION_MS..=MAX_FIXATION_MS).contains(&t.fixation_delay_ms)));

        let other = generate_practice(&SessionConfig::with_seed(12));
        assert_ne!(practice, other);
    }

    #[test]
    fn practice_orderings_differ_across_seeds() {
        // 24 draws from 48 combinations: a collision between two seeds is
        // astronomically unlikely, so every pair in a small set must differ.
        let lists: Vec<_> = (0..50).map(|s| generate_practice(&SessionConfig::with_seed(s))).collect();
        for i in 0..lists.len() {
            for j in i + 1..lists.len() {
                assert_ne!(lists[i], lists[j]);
            }
        }
    }

    #[test]
    fn break_points_at_block_boundaries() {
        assert_eq!(break_points(&SessionConfig::default()), vec![96, 192]);
        assert!(break_points(&SessionConfig { blocks: 1, ..Default::default() }).is_empty());
        let cfg = SessionConfig { blocks: 4, trials_per_block: 48, ..Default::default() };
        assert_eq!(break_points(&cfg), vec![48, 96, 144]);
    }

    #[test]
    fn baseline_only_sets_flag() {
        let active = generate_session(&SessionConfig::with_seed(5)).unwrap();
        let base = generate_session(&SessionConfig { baseline_mode: true, ..SessionConfig::with_seed(5) }).unwrap();
        for (a, b) in active.iter().zip(&base) {
            assert!(b.baseline_mode);
            assert_eq!(TrialSpec { baseline_mode: true, ..a.clone() }, *b);
        }
    }

    #[test]
    fn fixation_delays_are_uniform() {
        // Kolmogorov-Smirnov distance to U[400,1600] over many sessions.
        let mut delays: Vec<f64> = (0..40)
            .flat_map(|s| generate_session(&SessionConfig::with_seed(s)).unwrap())
            .map(|t| t.fixation_delay_ms as f64)
            .collect();
        assert!(delays.len() >= 10_000);
        delays.sort_by(f64::total_cmp);
        let n = delays.len() as f64;
        let span = (MAX_FIXATION_MS - MIN_FIXATION_MS + 1) as f64;
        let mut ks: f64 = 0.0;
        let mut i = 0;
        while i < delays.len() {
            let d = delays[i];
            let mut j = i;
            while j < delays.len() && delays[j] == d {
                j += 1;
            }
            // discrete uniform CDF just below and at d
            let below = (d - MIN_FIXATION_MS as f64) / span;
            let at = below + 1.0 / span;
            ks = ks.max((below - i as f64 / n).abs()).max((at - j as f64 / n).abs());
            i = j;
        }
        assert!(ks < 0.02, "KS statistic {ks}");
    }
}
