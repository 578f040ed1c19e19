use ant_pupil::analysis::{analyze_session, epoch_session, AnalysisParams, SessionAnalysis};
use ant_pupil::classifier::{error_curve, ModelKind, SessionCurves, TrainParams, GROUP_SIZES};
use ant_pupil::metrics::{pearson_matrix, rollup, ReportField, SessionReport};
use ant_pupil::pipeline::{write_curves_csv, write_spectrum_csv};
use ant_pupil::scheduler::{generate_practice, generate_session, SessionConfig};
use ant_pupil::service::{ServeConfig, SessionServer, TrackerSource};
use ant_pupil::simulator::{simulate_baseline, simulate_session, SessionTiming, SubjectModel};
use ant_pupil::tracker::{
    load_gaze, load_trials, record_gaze, record_trials, Eye, FrameSource, MockTracker, Pacing, TrialRecord,
};
use chrono::{NaiveDate, NaiveDateTime};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Attention Network Test sessions with pupillometry.
#[derive(Parser)]
#[command(name = "antpupil", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a session and write gaze.csv, trials.csv and truth.json.
    Simulate(SimulateArgs),
    /// Analyse one session, or every session matched by --glob.
    Analyze(AnalyzeArgs),
    /// Train and test the congruency classifier over several sessions.
    Classify(ClassifyArgs),
    /// Run a live session against a presenter and a tracker.
    Serve(ServeArgs),
    /// Stand-alone mock tracker.
    MockTracker(MockArgs),
}

#[derive(Args)]
struct ScheduleArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Targets without arrowheads and no responses.
    #[arg(long)]
    baseline: bool,
    #[arg(long, default_value_t = 24)]
    practice: u32,
}

impl ScheduleArgs {
    fn config(&self) -> SessionConfig {
        SessionConfig {
            baseline_mode: self.baseline,
            practice_trials: self.practice,
            ..SessionConfig::with_seed(self.seed)
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    schedule: ScheduleArgs,
    #[arg(long)]
    out: PathBuf,
    /// Subject model as JSON; defaults to the built-in subject.
    #[arg(long)]
    subject: Option<PathBuf>,
    /// Wall-clock start, e.g. 2024-03-01T09:30:00; derived from the seed if
    /// omitted.
    #[arg(long)]
    start_time: Option<NaiveDateTime>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long, requires = "trials", conflicts_with = "glob")]
    gaze: Option<PathBuf>,
    #[arg(long, requires = "gaze")]
    trials: Option<PathBuf>,
    /// Session directories holding gaze.csv and trials.csv.
    #[arg(long)]
    glob: Option<String>,
    #[arg(long, default_value = "left")]
    eye: Eye,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    start_time: Option<NaiveDateTime>,
}

#[derive(Args)]
struct ClassifyArgs {
    /// Session directories holding gaze.csv and trials.csv.
    #[arg(long)]
    glob: String,
    #[arg(long, value_delimiter = ',', default_values_t = GROUP_SIZES)]
    group_sizes: Vec<usize>,
    /// Number of train/test splits per group size.
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    /// First split seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "mlp")]
    model: ModelKind,
    #[arg(long, default_value = "left")]
    eye: Eye,
    /// Error-curve CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    schedule: ScheduleArgs,
    #[arg(long)]
    out: PathBuf,
    /// Tracker to record from; a mock replaying a simulated session is
    /// started when omitted.
    #[arg(long)]
    tracker_addr: Option<String>,
    #[arg(long, default_value_t = 8765)]
    ui_port: u16,
    /// Let the spawned mock push frames as fast as possible.
    #[arg(long)]
    accelerated: bool,
    #[arg(long)]
    session_id: Option<String>,
}

#[derive(Args)]
struct MockArgs {
    /// Address to listen on.
    #[arg(long, default_value = "127.0.0.1:6555")]
    tracker_addr: String,
    /// Replay this gaze log instead of a simulated session.
    #[arg(long)]
    gaze: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    accelerated: bool,
}

enum CliError {
    Config(String),
    Data(String),
}

impl CliError {
    fn data(e: impl std::fmt::Display) -> Self {
        CliError::Data(e.to_string())
    }

    fn config(e: impl std::fmt::Display) -> Self {
        CliError::Config(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Analyze(a) => analyze(a),
        Command::Classify(a) => classify(a),
        Command::Serve(a) => serve(a),
        Command::MockTracker(a) => mock_tracker(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(CliError::data)?;
    fs::write(path, text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn out_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn default_start(seed: u64) -> NaiveDateTime {
    let minutes = (seed.wrapping_mul(2_654_435_761) % 600) as i64;
    NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date").and_hms_opt(8, 0, 0).expect("valid time")
        + chrono::Duration::minutes(minutes)
}

#[derive(Serialize)]
struct Sidecar<'a> {
    wall_clock_start: NaiveDateTime,
    truth: &'a ant_pupil::simulator::SessionTruth,
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let config = args.schedule.config();
    let model = match &args.subject {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
        }
        None => SubjectModel::default(),
    };
    let mut schedule = generate_practice(&config);
    schedule.extend(generate_session(&config).map_err(CliError::config)?);
    let timing = SessionTiming::from_config(&config);
    let sim = if config.baseline_mode {
        simulate_baseline(&model, &schedule, &timing, config.seed)
    } else {
        simulate_session(&model, &schedule, &timing, config.seed)
    }
    .map_err(CliError::config)?;

    out_dir(&args.out)?;
    record_gaze(&sim.frames, args.out.join("gaze.csv")).map_err(CliError::data)?;
    record_trials(&sim.trials, args.out.join("trials.csv")).map_err(CliError::data)?;
    let start = args.start_time.unwrap_or_else(|| default_start(config.seed));
    write_json(&args.out.join("truth.json"), &Sidecar { wall_clock_start: start, truth: &sim.truth })?;
    println!("{}: {} frames, {} trials", args.out.display(), sim.frames.len(), sim.trials.len());
    Ok(())
}

/// Wall-clock start recorded next to the trial log, if any.
fn recorded_start(dir: &Path) -> Option<NaiveDateTime> {
    ["session.json", "truth.json"].iter().find_map(|name| {
        let text = fs::read_to_string(dir.join(name)).ok()?;
        let value: serde_json::Value = serde_json::from_str(&text).ok()?;
        serde_json::from_value(value.get("wall_clock_start")?.clone()).ok()
    })
}

struct SessionInput {
    gaze: PathBuf,
    trials: PathBuf,
    start: Option<NaiveDateTime>,
}

fn session_dirs(pattern: &str) -> Result<Vec<PathBuf>> {
    let paths = glob::glob(pattern).map_err(CliError::config)?;
    let mut dirs: Vec<PathBuf> = paths.filter_map(|p| p.ok()).filter(|p| p.join("trials.csv").is_file()).collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(CliError::Data(format!("no session directories with trials.csv match {pattern:?}")));
    }
    Ok(dirs)
}

fn load_session(input: &SessionInput) -> Result<(Vec<ant_pupil::tracker::GazeFrame>, Vec<TrialRecord>)> {
    let frames = load_gaze(&input.gaze).map_err(CliError::data)?;
    let trials = load_trials(&input.trials).map_err(CliError::data)?;
    Ok((frames, trials))
}

fn write_session_outputs(dir: &Path, a: &SessionAnalysis) -> Result<()> {
    out_dir(dir)?;
    write_json(&dir.join("report.json"), &a.report)?;
    write_curves_csv(a.by_congruency.iter(), create(&dir.join("curves_congruency.csv"))?).map_err(CliError::data)?;
    write_curves_csv(
        a.by_condition.iter().map(|(k, c)| (format!("{}/{}", k.cue, k.congruency), c)),
        create(&dir.join("curves_condition.csv"))?,
    )
    .map_err(CliError::data)?;
    if let Some(p) = &a.periodogram {
        write_spectrum_csv(p, create(&dir.join("spectrum.csv"))?).map_err(CliError::data)?;
    }
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> Result<()> {
    let params = AnalysisParams { eye: args.eye, ..AnalysisParams::default() };
    let inputs: Vec<(String, SessionInput)> = match (&args.gaze, &args.trials, &args.glob) {
        (Some(gaze), Some(trials), None) => {
            let dir = trials.parent().unwrap_or(Path::new("."));
            let start = args.start_time.or_else(|| recorded_start(dir));
            vec![(String::new(), SessionInput { gaze: gaze.clone(), trials: trials.clone(), start })]
        }
        (None, None, Some(pattern)) => session_dirs(pattern)?
            .into_iter()
            .map(|d| {
                let name = d.file_name().map_or_else(|| d.display().to_string(), |n| n.to_string_lossy().into_owned());
                let start = args.start_time.or_else(|| recorded_start(&d));
                (name, SessionInput { gaze: d.join("gaze.csv"), trials: d.join("trials.csv"), start })
            })
            .collect(),
        _ => return Err(CliError::Config("give either --gaze and --trials, or --glob".into())),
    };

    let single = inputs.len() == 1 && args.glob.is_none();
    let mut reports: Vec<SessionReport> = Vec::new();
    for (name, input) in &inputs {
        let (frames, trials) = load_session(input)?;
        let analysis = analyze_session(&frames, &trials, &params, input.start)
            .map_err(|e| CliError::Data(format!("{name}: {e}")))?;
        let dir = if single { args.out.clone() } else { args.out.join(name) };
        write_session_outputs(&dir, &analysis)?;
        println!("{}", serde_json::to_string(&analysis.report).map_err(CliError::data)?);
        reports.push(analysis.report);
    }

    if !single {
        write_json(&args.out.join("reports.json"), &reports)?;
        let fields: Vec<ReportField> =
            ReportField::ALL.iter().copied().filter(|f| reports.iter().all(|r| f.value(r).is_some())).collect();
        let rollups: Vec<_> = fields.iter().map(|&f| (f.name(), rollup(&reports, f))).collect();
        write_json(&args.out.join("rollup.json"), &rollups)?;
        if reports.len() >= 3 && fields.len() >= 2 {
            let m = pearson_matrix(&reports, &fields).map_err(CliError::data)?;
            m.write_r_csv(create(&args.out.join("correlation_r.csv"))?).map_err(CliError::data)?;
            m.write_p_csv(create(&args.out.join("correlation_p.csv"))?).map_err(CliError::data)?;
            if m.low_power {
                eprintln!("note: {} sessions; p-values are low power", m.n);
            }
        }
    }
    Ok(())
}

fn classify(args: ClassifyArgs) -> Result<()> {
    let mut sessions = Vec::new();
    for dir in session_dirs(&args.glob)? {
        let input = SessionInput { gaze: dir.join("gaze.csv"), trials: dir.join("trials.csv"), start: None };
        let (frames, trials) = load_session(&input)?;
        let (_, epochs) = epoch_session(&frames, &trials, args.eye, &AnalysisParams::default().pipeline)
            .map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
        let session_id = trials.first().map_or_else(|| dir.display().to_string(), |t| t.session_id.clone());
        sessions.push(SessionCurves { session_id, curves: epochs.curves });
    }
    let seeds: Vec<u64> = (args.seed..args.seed + args.seeds).collect();
    let params = TrainParams { model: args.model, ..TrainParams::default() };
    let curve = error_curve(&sessions, &args.group_sizes, &seeds, &params).map_err(CliError::data)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        out_dir(parent)?;
    }
    curve.write_csv(create(&args.out)?).map_err(CliError::data)?;
    for (g, s) in &curve.by_group_size {
        println!("group {g:>3}: test error {:.3} ± {:.3} over {} splits", s.mean, s.sd.unwrap_or(0.0), s.runs);
    }
    Ok(())
}

fn serve(args: ServeArgs) -> Result<()> {
    let config = args.schedule.config();
    config.validate().map_err(CliError::config)?;
    let pacing = if args.accelerated { Pacing::Accelerated } else { Pacing::RealTime };
    let mut serve_config = ServeConfig::new(config, &args.out);
    serve_config.ui_addr = format!("127.0.0.1:{}", args.ui_port);
    serve_config.tracker = match args.tracker_addr {
        Some(addr) => TrackerSource::Connect(addr),
        None => TrackerSource::Mock { pacing, model: Box::default() },
    };
    if let Some(id) = args.session_id {
        serve_config.session_id = id;
    }
    let server = SessionServer::bind(serve_config).map_err(|e| match e {
        ant_pupil::service::ServiceError::Bind { .. } => CliError::config(e),
        other => CliError::data(other),
    })?;
    println!("presenter socket: ws://{}", server.ui_addr().map_err(CliError::data)?);
    let report = server.run().map_err(CliError::data)?;
    for f in &report.files {
        println!("wrote {}", f.display());
    }
    if report.meta.partial {
        eprintln!("session ended early: {:?}", report.meta.outcome);
    }
    Ok(())
}

fn mock_tracker(args: MockArgs) -> Result<()> {
    let frames = match &args.gaze {
        Some(path) => load_gaze(path).map_err(CliError::data)?,
        None => {
            let config = SessionConfig::with_seed(args.seed);
            let mut schedule = generate_practice(&config);
            schedule.extend(generate_session(&config).map_err(CliError::config)?);
            simulate_session(&SubjectModel::default(), &schedule, &SessionTiming::from_config(&config), args.seed)
                .map_err(CliError::config)?
                .frames
        }
    };
    let pacing = if args.accelerated { Pacing::Accelerated } else { Pacing::RealTime };
    let mock = MockTracker::serve(FrameSource::replay(frames), args.tracker_addr.as_str(), pacing)
        .map_err(CliError::config)?;
    println!("mock tracker listening on {}", mock.local_addr());
    mock.wait();
    Ok(())
}
