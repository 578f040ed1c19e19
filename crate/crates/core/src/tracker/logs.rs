//! Gaze and trial logs as CSV. Missing values are empty cells, never sentinels.

use super::{EyeSample, GazeFrame, Point, ResponseKey, Result, TrackerError, TrialRecord};
use crate::scheduler::TrialSpec;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

pub const GAZE_HEADER: [&str; 13] = [
    "ts_ms",
    "left_psize",
    "left_pcx",
    "left_pcy",
    "left_gx",
    "left_gy",
    "left_valid",
    "right_psize",
    "right_pcx",
    "right_pcy",
    "right_gx",
    "right_gy",
    "right_valid",
];

pub const TRIAL_HEADER: [&str; 14] = [
    "session_id",
    "trial_idx",
    "block",
    "cue",
    "congruency",
    "location",
    "direction",
    "baseline",
    "fixation_delay_ms",
    "cue_onset_ms",
    "target_onset_ms",
    "response_key",
    "rt_ms",
    "correct",
];

/// Block cell used for practice trials in the trial log.
const PRACTICE_BLOCK: &str = "practice";

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn eye_cells(eye: &EyeSample, out: &mut Vec<String>) {
    out.push(opt(eye.pupil_size));
    out.push(opt(eye.pupil_center.map(|p| p.x)));
    out.push(opt(eye.pupil_center.map(|p| p.y)));
    out.push(opt(eye.gaze.map(|p| p.x)));
    out.push(opt(eye.gaze.map(|p| p.y)));
    out.push(eye.valid.to_string());
}

/// Incremental gaze-log writer, for recording a live stream.
pub struct GazeWriter<W: Write> {
    inner: csv::Writer<W>,
    count: usize,
    row: Vec<String>,
}

impl GazeWriter<File> {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        GazeWriter::new(File::create(path)?)
    }
}

impl<W: Write> GazeWriter<W> {
    pub fn new(sink: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(sink);
        inner.write_record(GAZE_HEADER)?;
        Ok(GazeWriter { inner, count: 0, row: Vec::with_capacity(GAZE_HEADER.len()) })
    }

    pub fn write(&mut self, frame: &GazeFrame) -> Result<()> {
        self.row.clear();
        self.row.push(frame.ts_ms.to_string());
        eye_cells(&frame.left, &mut self.row);
        eye_cells(&frame.right, &mut self.row);
        self.inner.write_record(&self.row)?;
        self.count += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<usize> {
        self.inner.flush()?;
        Ok(self.count)
    }
}

pub fn write_gaze<'a, W: Write>(frames: impl IntoIterator<Item = &'a GazeFrame>, sink: W) -> Result<usize> {
    let mut w = GazeWriter::new(sink)?;
    for f in frames {
        w.write(f)?;
    }
    w.finish()
}

/// Persist a frame stream; returns the number of frames written.
fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|source| TrackerError::Open { path: path.display().to_string(), source })
}

pub fn record_gaze<'a>(frames: impl IntoIterator<Item = &'a GazeFrame>, path: impl AsRef<Path>) -> Result<usize> {
    write_gaze(frames, create(path.as_ref())?)
}

pub fn write_trials<W: Write>(trials: &[TrialRecord], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(TRIAL_HEADER)?;
    for r in trials {
        let t = &r.trial;
        let block = if t.practice { PRACTICE_BLOCK.to_string() } else { t.block.to_string() };
        w.write_record([
            r.session_id.clone(),
            t.index.to_string(),
            block,
            t.cue.to_string(),
            t.congruency.to_string(),
            t.location.to_string(),
            t.direction.to_string(),
            t.baseline_mode.to_string(),
            t.fixation_delay_ms.to_string(),
            r.cue_onset_ms.to_string(),
            r.target_onset_ms.to_string(),
            r.response_key.as_str().to_string(),
            opt(r.rt_ms),
            opt(r.correct),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn record_trials(trials: &[TrialRecord], path: impl AsRef<Path>) -> Result<()> {
    write_trials(trials, create(path.as_ref())?)
}

/// Column lookup by header name, so column order in a file does not matter.
struct Columns<'a> {
    index: Vec<usize>,
    names: &'a [&'a str],
    source: String,
}

impl<'a> Columns<'a> {
    fn resolve(headers: &csv::StringRecord, names: &'a [&'a str], source: &str) -> Result<Self> {
        let index = names
            .iter()
            .map(|name| {
                headers
                    .iter()
                    .position(|h| h == *name)
                    .ok_or_else(|| TrackerError::MissingColumn { path: source.to_string(), column: name.to_string() })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Columns { index, names, source: source.to_string() })
    }

    fn raw<'r>(&self, rec: &'r csv::StringRecord, col: usize, row: usize) -> Result<&'r str> {
        rec.get(self.index[col]).ok_or_else(|| TrackerError::BadCell {
            path: self.source.clone(),
            row,
            column: self.names[col].to_string(),
            value: String::new(),
        })
    }

    fn bad(&self, col: usize, row: usize, value: &str) -> TrackerError {
        TrackerError::BadCell {
            path: self.source.clone(),
            row,
            column: self.names[col].to_string(),
            value: value.to_string(),
        }
    }

    fn get<T: FromStr>(&self, rec: &csv::StringRecord, col: usize, row: usize) -> Result<T> {
        let s = self.raw(rec, col, row)?;
        s.parse().map_err(|_| self.bad(col, row, s))
    }

    fn get_opt<T: FromStr>(&self, rec: &csv::StringRecord, col: usize, row: usize) -> Result<Option<T>> {
        let s = self.raw(rec, col, row)?;
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| self.bad(col, row, s))
        }
    }

    fn point(&self, rec: &csv::StringRecord, x: usize, row: usize) -> Result<Option<Point>> {
        match (self.get_opt::<f64>(rec, x, row)?, self.get_opt::<f64>(rec, x + 1, row)?) {
            (Some(px), Some(py)) => Ok(Some(Point::new(px, py))),
            (None, None) => Ok(None),
            (Some(_), None) => Err(self.bad(x + 1, row, "")),
            (None, Some(_)) => Err(self.bad(x, row, "")),
        }
    }

    fn eye(&self, rec: &csv::StringRecord, first: usize, row: usize) -> Result<EyeSample> {
        Ok(EyeSample {
            pupil_size: self.get_opt(rec, first, row)?,
            pupil_center: self.point(rec, first + 1, row)?,
            gaze: self.point(rec, first + 3, row)?,
            valid: self.get(rec, first + 5, row)?,
        })
    }
}

fn reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(source)
}

pub fn read_gaze<R: Read>(source: R, name: &str) -> Result<Vec<GazeFrame>> {
    let mut rdr = reader(source);
    let cols = Columns::resolve(rdr.headers()?, &GAZE_HEADER, name)?;
    let mut frames = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        frames.push(GazeFrame {
            ts_ms: cols.get(&rec, 0, row)?,
            left: cols.eye(&rec, 1, row)?,
            right: cols.eye(&rec, 7, row)?,
        });
    }
    Ok(frames)
}

pub fn load_gaze(path: impl AsRef<Path>) -> Result<Vec<GazeFrame>> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let file = File::open(path).map_err(|source| TrackerError::Open { path: name.clone(), source })?;
    read_gaze(file, &name)
}

pub fn read_trials<R: Read>(source: R, name: &str) -> Result<Vec<TrialRecord>> {
    let mut rdr = reader(source);
    let cols = Columns::resolve(rdr.headers()?, &TRIAL_HEADER, name)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let block_cell = cols.raw(&rec, 2, row)?;
        let (block, practice) = if block_cell == PRACTICE_BLOCK { (0, true) } else { (cols.get(&rec, 2, row)?, false) };
        let trial = TrialSpec {
            index: cols.get(&rec, 1, row)?,
            block,
            cue: cols.get(&rec, 3, row)?,
            congruency: cols.get(&rec, 4, row)?,
            location: cols.get(&rec, 5, row)?,
            direction: cols.get(&rec, 6, row)?,
            baseline_mode: cols.get(&rec, 7, row)?,
            fixation_delay_ms: cols.get(&rec, 8, row)?,
            practice,
        };
        out.push(TrialRecord {
            session_id: cols.raw(&rec, 0, row)?.to_string(),
            trial,
            cue_onset_ms: cols.get(&rec, 9, row)?,
            target_onset_ms: cols.get(&rec, 10, row)?,
            response_key: cols.get::<ResponseKey>(&rec, 11, row)?,
            rt_ms: cols.get_opt(&rec, 12, row)?,
            correct: cols.get_opt(&rec, 13, row)?,
        });
    }
    Ok(out)
}

pub fn load_trials(path: impl AsRef<Path>) -> Result<Vec<TrialRecord>> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let file = File::open(path).map_err(|source| TrackerError::Open { path: name.clone(), source })?;
    read_trials(file, &name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheduler::{generate_session, Cue, SessionConfig};
    use proptest::prelude::*;

    fn arb_point() -> impl Strategy<Value = Option<Point>> {
        proptest::option::of((-1e4f64..1e4, -1e4f64..1e4).prop_map(|(x, y)| Point::new(x, y)))
    }

    fn arb_eye() -> impl Strategy<Value = EyeSample> {
        (proptest::option::of(0f64..100.0), arb_point(), arb_point(), any::<bool>())
            .prop_map(|(pupil_size, pupil_center, gaze, valid)| EyeSample { pupil_size, pupil_center, gaze, valid })
    }

    proptest! {
        #[test]
        fn gaze_round_trip(frames in proptest::collection::vec((any::<i64>(), arb_eye(), arb_eye()), 0..200)) {
            let frames: Vec<GazeFrame> = frames
                .into_iter()
                .map(|(ts_ms, left, right)| GazeFrame { ts_ms, left, right })
                .collect();
            let mut buf = Vec::new();
            prop_assert_eq!(write_gaze(&frames, &mut buf).unwrap(), frames.len());
            prop_assert_eq!(read_gaze(buf.as_slice(), "mem").unwrap(), frames);
        }
    }

    #[test]
    fn empty_gaze_log_is_header_only() {
        let mut buf = Vec::new();
        write_gaze(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), format!("{}\n", GAZE_HEADER.join(",")));
        assert!(read_gaze(buf.as_slice(), "mem").unwrap().is_empty());
    }

    #[test]
    fn missing_gaze_column_is_named() {
        let text = "ts_ms,left_psize,left_pcx,left_pcy,left_gx,left_gy,left_valid,right_psize,right_pcx,right_pcy,right_gx,right_valid\n";
        match read_gaze(text.as_bytes(), "g.csv") {
            Err(TrackerError::MissingColumn { column, .. }) => assert_eq!(column, "right_gy"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_eye_is_empty_cells() {
        let frame = GazeFrame { ts_ms: 5, left: EyeSample::missing(), right: EyeSample::missing() };
        let mut buf = Vec::new();
        write_gaze([&frame], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "5,,,,,,false,,,,,,false");
    }

    fn sample_records() -> Vec<TrialRecord> {
        let cfg = SessionConfig::with_seed(1);
        let mut out: Vec<TrialRecord> = crate::scheduler::generate_practice(&cfg)
            .into_iter()
            .chain(generate_session(&cfg).unwrap())
            .enumerate()
            .map(|(i, t)| {
                let cue = 1000 + i as i64 * 4000;
                let mut r = TrialRecord::pending("s01", t, cue, cue + 500);
                if i % 3 != 0 {
                    r.response_key = if i % 2 == 0 { ResponseKey::Left } else { ResponseKey::Right };
                    r.rt_ms = Some(400 + i as i64);
                    r.correct = Some(r.response_key.matches(r.trial.direction));
                }
                r
            })
            .collect();
        out[5].trial.cue = Cue::NoCue;
        out
    }

    #[test]
    fn trial_round_trip() {
        let records = sample_records();
        let mut buf = Vec::new();
        write_trials(&records, &mut buf).unwrap();
        assert_eq!(read_trials(buf.as_slice(), "mem").unwrap(), records);
    }

    #[test]
    fn empty_trial_log() {
        let mut buf = Vec::new();
        write_trials(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap().trim_end(), TRIAL_HEADER.join(","));
        assert!(read_trials(buf.as_slice(), "mem").unwrap().is_empty());
    }

    #[test]
    fn missing_trial_column_is_named() {
        let header: Vec<&str> = TRIAL_HEADER.iter().copied().filter(|c| *c != "rt_ms").collect();
        let text = format!("{}\n", header.join(","));
        match read_trials(text.as_bytes(), "t.csv") {
            Err(TrackerError::MissingColumn { column, path }) => {
                assert_eq!(column, "rt_ms");
                assert_eq!(path, "t.csv");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_cell_reports_row_and_column() {
        let mut buf = Vec::new();
        write_trials(&sample_records()[..2], &mut buf).unwrap();
        let text: String = String::from_utf8(buf)
            .unwrap()
            .lines()
            .enumerate()
            .map(|(i, line)| {
                let mut cells: Vec<&str> = line.split(',').collect();
                if i == 1 {
                    cells[6] = "sideways";
                }
                cells.join(",") + "\n"
            })
            .collect();
        let err = read_trials(text.as_bytes(), "t.csv").unwrap_err();
        assert!(matches!(err, TrackerError::BadCell { ref column, .. } if column == "direction"), "{err}");
    }
}
