//! Which of three condition-averaged dilation curves is the incongruent one?
//!
//! Each session contributes 96 epochs per congruency. They are split into
//! disjoint groups, averaged, and the three group means are presented in all
//! six orders. Train/test splits happen at the level of the unordered triple
//! so that no permutation of a test triple is ever trained on.

use crate::pipeline::{mean_curve, DilationCurve};
use crate::scheduler::Congruency;
use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub const EPOCHS_PER_CONDITION: usize = 96;
pub const GROUP_SIZES: [usize; 4] = [24, 32, 48, 96];
pub const TEST_FRACTION: f64 = 0.1;

const PERMUTATIONS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
/// Condition order inside a base triple; index 0 is the target class.
const CONDITIONS: [Congruency; 3] = [Congruency::Incongruent, Congruency::Neutral, Congruency::Congruent];

#[derive(Debug, Error, PartialEq)]
pub enum ClassifierError {
    #[error("group size {0} does not divide {EPOCHS_PER_CONDITION}")]
    GroupSize(usize),
    #[error("need at least 10 samples from 2 triples, got {samples} from {triples}")]
    Degenerate { samples: usize, triples: usize },
    #[error("no session has {EPOCHS_PER_CONDITION} epochs in every condition")]
    NoSessions,
}

/// Epochs of one session, in trial order.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionCurves {
    pub session_id: String,
    pub curves: Vec<DilationCurve>,
}

/// Three group-mean curves in some order; `label` is the position of the
/// incongruent one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveTriple {
    pub curves: [Vec<f64>; 3],
    pub label: usize,
    pub group_size: usize,
    pub source_session: String,
    /// Shared by the six orderings of one triple.
    pub base_id: usize,
}

impl CurveTriple {
    fn features(&self) -> Vec<f64> {
        self.curves.concat()
    }
}

/// Fill NaN bins by linear interpolation between their valid neighbours,
/// holding the end values.
fn fill_gaps(values: &[f64]) -> Vec<f64> {
    let known: Vec<usize> = (0..values.len()).filter(|&k| values[k].is_finite()).collect();
    let Some((&first, &last)) = known.first().zip(known.last()) else {
        return vec![0.0; values.len()];
    };
    let mut out = values.to_vec();
    for k in 0..values.len() {
        if values[k].is_finite() {
            continue;
        }
        out[k] = if k < first {
            values[first]
        } else if k > last {
            values[last]
        } else {
            let hi = known.partition_point(|&j| j < k);
            let (a, b) = (known[hi - 1], known[hi]);
            values[a] + (values[b] - values[a]) * (k - a) as f64 / (b - a) as f64
        };
    }
    out
}

/// Group-mean triples for every session with enough epochs, each in all six
/// orders.
pub fn build_dataset(sessions: &[SessionCurves], group_size: usize) -> Result<Vec<CurveTriple>, ClassifierError> {
    if group_size == 0 || !EPOCHS_PER_CONDITION.is_multiple_of(group_size) {
        return Err(ClassifierError::GroupSize(group_size));
    }
    let groups = EPOCHS_PER_CONDITION / group_size;
    let mut out = Vec::new();
    let mut base_id = 0;
    for session in sessions {
        let per_condition: Vec<Vec<&DilationCurve>> = CONDITIONS
            .iter()
            .map(|&c| session.curves.iter().filter(|e| e.condition.congruency == c).collect())
            .collect();
        if let Some((c, v)) = CONDITIONS.iter().zip(&per_condition).find(|(_, v)| v.len() < EPOCHS_PER_CONDITION) {
            warn!("session {} skipped: {} valid {c} epochs", session.session_id, v.len());
            continue;
        }
        for g in 0..groups {
            let means: Vec<Vec<f64>> = per_condition
                .iter()
                .map(|curves| {
                    let chunk = &curves[g * group_size..(g + 1) * group_size];
                    fill_gaps(&mean_curve(chunk.iter().copied()).expect("non-empty group").values)
                })
                .collect();
            for perm in PERMUTATIONS {
                out.push(CurveTriple {
                    curves: perm.map(|i| means[i].clone()),
                    label: perm.iter().position(|&i| i == 0).expect("permutation of 0..3"),
                    group_size,
                    source_session: session.session_id.clone(),
                    base_id,
                });
            }
            base_id += 1;
        }
    }
    if out.is_empty() && !sessions.is_empty() {
        return Err(ClassifierError::NoSessions);
    }
    Ok(out)
}

/// Replace every label with a random position. A control that destroys the
/// signal while keeping the inputs.
pub fn shuffle_labels(dataset: &mut [CurveTriple], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in dataset {
        t.label = rng.random_range(0..3);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// One tanh hidden layer.
    Mlp,
    /// Multinomial logistic regression, no hidden layer.
    Logistic,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Mlp => "mlp",
            ModelKind::Logistic => "logistic",
        })
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mlp" => Ok(ModelKind::Mlp),
            "logistic" => Ok(ModelKind::Logistic),
            other => Err(format!("unknown model {other:?}, expected mlp or logistic")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub model: ModelKind,
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub test_fraction: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            model: ModelKind::Mlp,
            hidden: 16,
            epochs: 300,
            learning_rate: 0.2,
            l2: 1e-3,
            test_fraction: TEST_FRACTION,
        }
    }
}

/// Dense layer, row-major `out × in` weights.
#[derive(Debug, Clone)]
struct Dense {
    w: Vec<f64>,
    b: Vec<f64>,
    inputs: usize,
    outputs: usize,
}

impl Dense {
    fn new(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let init = Normal::new(0.0, (1.0 / inputs as f64).sqrt()).expect("positive sd");
        Dense { w: (0..inputs * outputs).map(|_| init.sample(rng)).collect(), b: vec![0.0; outputs], inputs, outputs }
    }

    fn forward(&self, x: &[f64], out: &mut [f64]) {
        for (o, slot) in out.iter_mut().enumerate() {
            let row = &self.w[o * self.inputs..(o + 1) * self.inputs];
            *slot = self.b[o] + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
        }
    }
}

#[derive(Debug, Clone)]
struct Network {
    hidden: Option<Dense>,
    output: Dense,
}

impl Network {
    fn new(features: usize, params: &TrainParams, rng: &mut ChaCha8Rng) -> Self {
        match params.model {
            ModelKind::Mlp => Network {
                hidden: Some(Dense::new(features, params.hidden, rng)),
                output: Dense::new(params.hidden, 3, rng),
            },
            ModelKind::Logistic => Network { hidden: None, output: Dense::new(features, 3, rng) },
        }
    }

    /// Hidden activations (empty without a hidden layer) and class
    /// probabilities.
    fn forward(&self, x: &[f64]) -> (Vec<f64>, [f64; 3]) {
        let h = match &self.hidden {
            Some(layer) => {
                let mut h = vec![0.0; layer.outputs];
                layer.forward(x, &mut h);
                h.iter_mut().for_each(|v| *v = v.tanh());
                h
            }
            None => Vec::new(),
        };
        let mut z = [0.0; 3];
        self.output.forward(if self.hidden.is_some() { &h } else { x }, &mut z);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e = z.map(|v| (v - max).exp());
        let sum: f64 = e.iter().sum();
        (h, e.map(|v| v / sum))
    }

    fn predict(&self, x: &[f64]) -> usize {
        let (_, p) = self.forward(x);
        (0..3).max_by(|&a, &b| p[a].total_cmp(&p[b])).expect("three classes")
    }

    /// One full-batch gradient step on mean cross-entropy plus L2.
    fn step(&mut self, xs: &[Vec<f64>], ys: &[usize], lr: f64, l2: f64) {
        let n = xs.len() as f64;
        let mut g_out = vec![0.0; self.output.w.len()];
        let mut gb_out = [0.0; 3];
        let mut g_hid = self.hidden.as_ref().map(|l| vec![0.0; l.w.len()]);
        let mut gb_hid = self.hidden.as_ref().map(|l| vec![0.0; l.outputs]);

        for (x, &y) in xs.iter().zip(ys) {
            let (h, p) = self.forward(x);
            let dz: [f64; 3] = std::array::from_fn(|c| p[c] - if c == y { 1.0 } else { 0.0 });
            let input = if self.hidden.is_some() { &h[..] } else { &x[..] };
            let width = self.output.inputs;
            for c in 0..3 {
                gb_out[c] += dz[c];
                let row = &mut g_out[c * width..(c + 1) * width];
                row.iter_mut().zip(input).for_each(|(g, v)| *g += dz[c] * v);
            }
            if let (Some(layer), Some(gw), Some(gb)) = (&self.hidden, g_hid.as_mut(), gb_hid.as_mut()) {
                for j in 0..layer.outputs {
                    let back: f64 = (0..3).map(|c| dz[c] * self.output.w[c * width + j]).sum();
                    let dh = back * (1.0 - h[j] * h[j]);
                    gb[j] += dh;
                    let row = &mut gw[j * layer.inputs..(j + 1) * layer.inputs];
                    row.iter_mut().zip(x).for_each(|(g, v)| *g += dh * v);
                }
            }
        }

        let apply = |layer: &mut Dense, gw: &[f64], gb: &[f64]| {
            layer.w.iter_mut().zip(gw).for_each(|(w, g)| *w -= lr * (g / n + l2 * *w));
            layer.b.iter_mut().zip(gb).for_each(|(b, g)| *b -= lr * g / n);
        };
        apply(&mut self.output, &g_out, &gb_out);
        if let (Some(layer), Some(gw), Some(gb)) = (self.hidden.as_mut(), g_hid, gb_hid) {
            apply(layer, &gw, &gb);
        }
    }
}

/// Per-feature standardisation with statistics from the training set.
struct Scaler {
    mean: Vec<f64>,
    sd: Vec<f64>,
}

impl Scaler {
    fn fit(xs: &[Vec<f64>]) -> Self {
        let d = xs[0].len();
        let n = xs.len() as f64;
        let mean: Vec<f64> = (0..d).map(|j| xs.iter().map(|x| x[j]).sum::<f64>() / n).collect();
        let sd = (0..d)
            .map(|j| {
                let var = xs.iter().map(|x| (x[j] - mean[j]).powi(2)).sum::<f64>() / n;
                if var > 1e-24 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Scaler { mean, sd }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.sd).map(|((v, m), s)| (v - m) / s).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub test_error: f64,
    pub train_samples: usize,
    pub test_samples: usize,
    pub train_triples: BTreeSet<usize>,
    pub test_triples: BTreeSet<usize>,
}

/// Train on a seeded triple-level split and report the test error rate.
pub fn train_eval(dataset: &[CurveTriple], seed: u64, params: &TrainParams) -> Result<EvalResult, ClassifierError> {
    let mut bases: Vec<usize> = dataset.iter().map(|t| t.base_id).collect::<BTreeSet<_>>().into_iter().collect();
    if dataset.len() < 10 || bases.len() < 2 {
        return Err(ClassifierError::Degenerate { samples: dataset.len(), triples: bases.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    bases.shuffle(&mut rng);
    let n_test = ((bases.len() as f64 * params.test_fraction).round() as usize).clamp(1, bases.len() - 1);
    let test_triples: BTreeSet<usize> = bases[..n_test].iter().copied().collect();
    let train_triples: BTreeSet<usize> = bases[n_test..].iter().copied().collect();
    assert!(test_triples.is_disjoint(&train_triples));

    let (train, test): (Vec<&CurveTriple>, Vec<&CurveTriple>) =
        dataset.iter().partition(|t| train_triples.contains(&t.base_id));
    let raw: Vec<Vec<f64>> = train.iter().map(|t| t.features()).collect();
    let scaler = Scaler::fit(&raw);
    let xs: Vec<Vec<f64>> = raw.iter().map(|x| scaler.apply(x)).collect();
    let ys: Vec<usize> = train.iter().map(|t| t.label).collect();

    let mut net = Network::new(xs[0].len(), params, &mut rng);
    for _ in 0..params.epochs {
        net.step(&xs, &ys, params.learning_rate, params.l2);
    }
    let wrong = test.iter().filter(|t| net.predict(&scaler.apply(&t.features())) != t.label).count();
    Ok(EvalResult {
        test_error: wrong as f64 / test.len() as f64,
        train_samples: train.len(),
        test_samples: test.len(),
        train_triples,
        test_triples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub group_size: usize,
    pub seed: u64,
    pub test_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub mean: f64,
    pub sd: Option<f64>,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCurve {
    pub rows: Vec<ErrorRow>,
    pub by_group_size: BTreeMap<usize, ErrorSummary>,
}

impl ErrorCurve {
    /// `group_size,seed,test_error`, one row per run.
    pub fn write_csv<W: std::io::Write>(&self, sink: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["group_size", "seed", "test_error"])?;
        for r in &self.rows {
            w.write_record([r.group_size.to_string(), r.seed.to_string(), r.test_error.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Spearman correlation between group size and mean error; 0 for a flat
    /// curve. `None` with fewer than two group sizes.
    pub fn trend(&self) -> Option<f64> {
        let (sizes, errors): (Vec<f64>, Vec<f64>) = self.by_group_size.iter().map(|(&g, s)| (g as f64, s.mean)).unzip();
        if sizes.len() < 2 {
            return None;
        }
        if errors.iter().all(|e| *e == errors[0]) {
            return Some(0.0);
        }
        crate::stats::spearman(&sizes, &errors)
    }
}

pub fn error_curve(
    sessions: &[SessionCurves],
    group_sizes: &[usize],
    seeds: &[u64],
    params: &TrainParams,
) -> Result<ErrorCurve, ClassifierError> {
    let mut rows = Vec::new();
    let mut by_group_size = BTreeMap::new();
    for &g in group_sizes {
        let dataset = build_dataset(sessions, g)?;
        let errors: Vec<f64> =
            seeds.iter().map(|&s| train_eval(&dataset, s, params).map(|r| r.test_error)).collect::<Result<_, _>>()?;
        rows.extend(seeds.iter().zip(&errors).map(|(&seed, &test_error)| ErrorRow { group_size: g, seed, test_error }));
        by_group_size.insert(
            g,
            ErrorSummary {
                mean: crate::stats::mean(&errors).unwrap_or(f64::NAN),
                sd: crate::stats::sample_sd(&errors),
                runs: errors.len(),
            },
        );
    }
    Ok(ErrorCurve { rows, by_group_size })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::ConditionLabel;
    use crate::scheduler::Cue;

    fn epoch(congruency: Congruency, values: Vec<f64>) -> DilationCurve {
        let n = values.len();
        DilationCurve {
            trial_index: 0,
            t0_ms: 0,
            bin_ms: 100,
            values,
            bin_valid: vec![true; n],
            condition: ConditionLabel { cue: Cue::NoCue, congruency },
        }
    }

    /// Random curves; the incongruent ones get `effect` added to bins 15..25.
    fn sessions(n: usize, effect: f64, seed: u64) -> Vec<SessionCurves> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.01).unwrap();
        (0..n)
            .map(|s| SessionCurves {
                session_id: format!("s{s}"),
                curves: CONDITIONS
                    .iter()
                    .flat_map(|&c| std::iter::repeat_n(c, 96))
                    .map(|c| {
                        let bump = if c == Congruency::Incongruent { effect } else { 0.0 };
                        let v =
                            (0..30).map(|k| noise.sample(&mut rng) + if (15..25).contains(&k) { bump } else { 0.0 });
                        epoch(c, v.collect())
                    })
                    .collect(),
            })
            .collect()
    }

    #[test]
    fn dataset_sizes() {
        let s = sessions(1, 0.0, 1);
        assert_eq!(build_dataset(&s, 96).unwrap().len(), 6);
        assert_eq!(build_dataset(&s, 24).unwrap().len(), 24);
        assert_eq!(build_dataset(&s, 32).unwrap().len(), 18);
        assert_eq!(build_dataset(&s, 40), Err(ClassifierError::GroupSize(40)));
    }

    #[test]
    fn labels_balanced_and_consistent() {
        let d = build_dataset(&sessions(2, 0.05, 2), 48).unwrap();
        for label in 0..3 {
            assert_eq!(d.iter().filter(|t| t.label == label).count() * 3, d.len());
        }
        // the incongruent group mean carries the bump
        for t in &d {
            let late = |c: &Vec<f64>| c[15..25].iter().sum::<f64>();
            let best = (0..3).max_by(|&a, &b| late(&t.curves[a]).total_cmp(&late(&t.curves[b]))).unwrap();
            assert_eq!(best, t.label);
        }
    }

    #[test]
    fn short_sessions_skipped() {
        let mut s = sessions(2, 0.0, 3);
        s[0].curves.remove(0);
        let d = build_dataset(&s, 96).unwrap();
        assert_eq!(d.len(), 6);
        assert!(d.iter().all(|t| t.source_session == "s1"));
        assert_eq!(build_dataset(&s[..1], 96), Err(ClassifierError::NoSessions));
    }

    #[test]
    fn gaps_are_interpolated() {
        assert_eq!(fill_gaps(&[f64::NAN, 1.0, f64::NAN, 3.0, f64::NAN]), vec![1.0, 1.0, 2.0, 3.0, 3.0]);
        let ramp = fill_gaps(&[0.0, f64::NAN, f64::NAN, 0.3]);
        for (got, want) in ramp.iter().zip([0.0, 0.1, 0.2, 0.3]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn split_never_leaks() {
        let d = build_dataset(&sessions(10, 0.0, 4), 24).unwrap();
        for seed in 0..5 {
            let r = train_eval(&d, seed, &TrainParams { epochs: 5, ..TrainParams::default() }).unwrap();
            assert!(r.train_triples.is_disjoint(&r.test_triples));
            assert_eq!(r.test_triples.len(), 4);
            assert_eq!(r.test_samples, 24);
            assert_eq!(r.train_samples + r.test_samples, d.len());
        }
    }

    #[test]
    fn learns_a_clear_signal() {
        let d = build_dataset(&sessions(10, 0.01, 5), 24).unwrap();
        for model in [ModelKind::Mlp, ModelKind::Logistic] {
            let errs: Vec<f64> = (0..5)
                .map(|s| train_eval(&d, s, &TrainParams { model, ..TrainParams::default() }).unwrap().test_error)
                .collect();
            let mean = crate::stats::mean(&errs).unwrap();
            assert!(mean < 0.2, "{model}: {mean}");
        }
    }

    #[test]
    fn shuffled_labels_fall_to_chance() {
        let mut d = build_dataset(&sessions(10, 0.01, 6), 24).unwrap();
        shuffle_labels(&mut d, 6);
        let errs: Vec<f64> = (0..20).map(|s| train_eval(&d, s, &TrainParams::default()).unwrap().test_error).collect();
        let mean = crate::stats::mean(&errs).unwrap();
        assert!((mean - 2.0 / 3.0).abs() < 0.1, "{mean}");
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(train_eval(&[], 0, &TrainParams::default()), Err(ClassifierError::Degenerate { .. })));
        let d = build_dataset(&sessions(1, 0.0, 7), 96).unwrap();
        assert!(matches!(train_eval(&d, 0, &TrainParams::default()), Err(ClassifierError::Degenerate { .. })));
    }

    #[test]
    fn seed_averaging_reduces_spread() {
        let s = sessions(6, 0.004, 8);
        let params = TrainParams { epochs: 100, ..TrainParams::default() };
        let single: Vec<f64> =
            (0..8u64).map(|r| error_curve(&s, &[24], &[r], &params).unwrap().by_group_size[&24].mean).collect();
        let averaged: Vec<f64> = (0..8u64)
            .map(|r| {
                let seeds: Vec<u64> = (0..20).map(|k| 1000 * r + k).collect();
                error_curve(&s, &[24], &seeds, &params).unwrap().by_group_size[&24].mean
            })
            .collect();
        let var = |v: &[f64]| crate::stats::sample_sd(v).unwrap().powi(2);
        assert!(var(&averaged) < var(&single), "{} vs {}", var(&averaged), var(&single));
    }

    #[test]
    fn csv_rows() {
        let curve = ErrorCurve {
            rows: vec![ErrorRow { group_size: 24, seed: 3, test_error: 0.5 }],
            by_group_size: BTreeMap::new(),
        };
        let mut buf = Vec::new();
        curve.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "group_size,seed,test_error\n24,3,0.5\n");
    }
}
