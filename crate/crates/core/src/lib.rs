//! Attention Network Test sessions with concurrent pupillometry.
//!
//! * [`scheduler`] builds counterbalanced trial sequences.
//! * [`tracker`] speaks the eye-tracker push protocol and persists logs.
//! * [`pipeline`] cleans, epochs and averages pupil signals.
//! * [`metrics`] derives attention-network timings and cognitive-load indicators.
//! * [`classifier`] predicts the incongruent curve among condition averages.
//! * [`simulator`] generates synthetic subjects with known injected effects.
//! * [`analysis`] ties the stages together for one recorded session.
//! * [`service`] runs a live session against a tracker and a UI socket.

pub mod analysis;
pub mod classifier;
pub mod metrics;
pub mod pipeline;
pub mod scheduler;
pub mod service;
pub mod simulator;
pub mod stats;
pub mod tracker;
