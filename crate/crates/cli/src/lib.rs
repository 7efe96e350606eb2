//! The `edgefall` command line: argument parsing, configuration resolution,
//! command execution, run manifests and replay.

pub mod args;
pub mod manifest;
mod window_csv;

use std::path::{Path, PathBuf};

use edgefall::config::{parse_u32_list, RunConfig};
use edgefall::data::{
    ingest_csv, normalize, parse_sensor_sets, split, window_and_label, NormStats, SynthConfig,
};
use edgefall::distill::{compare_three, distill, train_teacher, CompareConfig};
use edgefall::eval::{bench_latency, evaluate, run_ablation_subsets, AblationConfig};
use edgefall::model::{init_params, load_model};
use edgefall::power::{select, run_selection_loop, CandidateConfig};
use edgefall::train::train;
use edgefall::{Error, ErrorCategory, LstmClassifier, ModelTopology, Result, SensorSet, WindowedDataset};
use serde::Deserialize;

pub use args::{Cli, Command};
use args::{DataArgs, KdArgs, ModelArgs, TrainingArgs};
pub use manifest::{Artifact, OutputRecord, RunManifest, Seeds, MANIFEST_FILE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;
pub const EXIT_REPLAY_MISMATCH: i32 = 5;

/// Environment variable that caps the worker-thread count.
pub const THREADS_ENV: &str = "EDGEFALL_THREADS";

pub fn exit_code(err: &Error) -> i32 {
    match err.category() {
        ErrorCategory::Config => EXIT_CONFIG,
        ErrorCategory::Data => EXIT_DATA,
        ErrorCategory::Numerical => EXIT_NUMERICAL,
    }
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// What a command produced: files to write and a human-readable summary.
#[derive(Debug, Default)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub summary: String,
    pub inputs: Vec<PathBuf>,
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    let out = absolute(&cli.out)?;
    let mut command = cli.command;
    absolutize(&mut command)?;
    match command {
        Command::Replay(r) => replay(&r.manifest, &out, cli.quiet),
        Command::Infer(ref a) => {
            let line = infer(&a.model, &a.window, a.threshold)?;
            println!("{line}");
            Ok(EXIT_OK)
        }
        command => {
            let mut cfg = match &cli.config {
                Some(path) => RunConfig::from_file(path)?,
                None => RunConfig::default(),
            };
            if let Some(seed) = cli.seed {
                cfg.set_seed(seed);
            }
            apply_flags(&mut cfg, &command)?;
            let mut extra_inputs = Vec::new();
            if let Some(path) = &cli.config {
                extra_inputs.push(absolute(path)?);
            }
            let manifest = execute(&command, &cfg, &out, extra_inputs)?;
            if !cli.quiet {
                print!("{}", manifest.1);
                println!("wrote {} files and {} to {}", manifest.0.outputs.len(), MANIFEST_FILE, out.display());
            }
            Ok(EXIT_OK)
        }
    }
}

/// Runs an artifact-producing command with a fully resolved configuration,
/// writes its outputs and manifest into `out`, and returns the manifest and
/// the command's summary.
pub fn execute(command: &Command, cfg: &RunConfig, out: &Path, extra_inputs: Vec<PathBuf>) -> Result<(RunManifest, String)> {
    cfg.validate()?;
    let started_at = now();
    let outcome = match command {
        Command::Ingest(a) => cmd_ingest(&a.data, cfg)?,
        Command::Synth(_) => cmd_synth(cfg)?,
        Command::Train(a) => cmd_train(&a.data, a.sensors.as_deref(), cfg)?,
        Command::Distill(a) => cmd_distill(&a.data, &a.teacher, &a.sensors, cfg)?,
        Command::Ablate(a) => cmd_ablate(&a.data, a.subsets.as_deref(), cfg)?,
        Command::Compare(a) => cmd_compare(&a.data, a.subsets.as_deref(), a.teacher.as_deref(), cfg)?,
        Command::Select(a) => match &a.candidates {
            Some(path) => cmd_select_prepared(path, cfg)?,
            None => cmd_select_loop(&a.data, a.teacher.as_deref(), a.subsets.as_deref(), cfg)?,
        },
        Command::Bench(a) => cmd_bench(a, cfg)?,
        Command::Infer(_) | Command::Replay(_) => {
            return Err(config_error(format!("`{}` writes no run manifest", command.name())))
        }
    };
    let outputs = manifest::write_artifacts(out, &outcome.artifacts)?;
    let mut inputs = extra_inputs;
    inputs.extend(outcome.inputs);
    let manifest = RunManifest {
        command: command.name().to_string(),
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        invocation: command.clone(),
        resolved_config: cfg.clone(),
        seeds: Seeds {
            synth: cfg.synth.seed,
            split: cfg.split.seed,
            train: cfg.train.seed,
        },
        inputs,
        out_dir: out.to_path_buf(),
        outputs,
        started_at,
        finished_at: now(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    edgefall::util::write_atomic(&out.join(MANIFEST_FILE), text.as_bytes())?;
    Ok((manifest, outcome.summary))
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn absolute(path: &Path) -> Result<PathBuf> {
    std::path::absolute(path).map_err(|e| Error::io(path, e))
}

fn absolutize_opt(path: &mut Option<PathBuf>) -> Result<()> {
    if let Some(p) = path {
        *p = absolute(p)?;
    }
    Ok(())
}

/// Makes every path in the command absolute, so a manifest can be replayed
/// from any working directory.
fn absolutize(command: &mut Command) -> Result<()> {
    match command {
        Command::Ingest(a) => a.data = absolute(&a.data)?,
        Command::Synth(_) => {}
        Command::Train(a) => absolutize_opt(&mut a.data.data)?,
        Command::Distill(a) => {
            absolutize_opt(&mut a.data.data)?;
            a.teacher = absolute(&a.teacher)?;
        }
        Command::Ablate(a) => absolutize_opt(&mut a.data.data)?,
        Command::Compare(a) => {
            absolutize_opt(&mut a.data.data)?;
            absolutize_opt(&mut a.teacher)?;
        }
        Command::Select(a) => {
            absolutize_opt(&mut a.data.data)?;
            absolutize_opt(&mut a.teacher)?;
            absolutize_opt(&mut a.candidates)?;
        }
        Command::Bench(a) => absolutize_opt(&mut a.model)?,
        Command::Infer(a) => {
            a.model = absolute(&a.model)?;
            a.window = absolute(&a.window)?;
        }
        Command::Replay(a) => a.manifest = absolute(&a.manifest)?,
    }
    Ok(())
}

/// Folds command-line flags into the configuration. Flags win over the
/// configuration file and the built-in defaults.
pub fn apply_flags(cfg: &mut RunConfig, command: &Command) -> Result<()> {
    match command {
        Command::Ingest(a) => {
            if let Some(codes) = &a.fall_codes {
                cfg.fall_codes = parse_u32_list(codes).map_err(|e| config_error(format!("--fall-codes: {e}")))?;
            }
            set_window(cfg, a.window);
            if let Some(s) = a.stride {
                cfg.stride = s;
            }
        }
        Command::Synth(a) => apply_data(
            cfg,
            &DataArgs {
                synth: true,
                data: None,
                n_per_class: a.n_per_class,
                noise: a.noise,
                window: a.window,
            },
        ),
        Command::Train(a) => {
            apply_data(cfg, &a.data);
            apply_model(cfg, &a.model);
            apply_training(cfg, &a.training);
        }
        Command::Distill(a) => {
            apply_data(cfg, &a.data);
            apply_kd(cfg, &a.kd);
            apply_training(cfg, &a.training);
        }
        Command::Ablate(a) => {
            apply_data(cfg, &a.data);
            apply_model(cfg, &a.model);
            apply_training(cfg, &a.training);
        }
        Command::Compare(a) => {
            apply_data(cfg, &a.data);
            apply_model(cfg, &a.model);
            apply_kd(cfg, &a.kd);
            apply_training(cfg, &a.training);
        }
        Command::Select(a) => {
            apply_data(cfg, &a.data);
            apply_model(cfg, &a.model);
            apply_kd(cfg, &a.kd);
            apply_training(cfg, &a.training);
            if let Some(f) = a.floor {
                cfg.accuracy_floor = f;
            }
        }
        Command::Bench(_) | Command::Infer(_) | Command::Replay(_) => {}
    }
    cfg.validate()
}

fn set_window(cfg: &mut RunConfig, window: Option<usize>) {
    if let Some(len) = window {
        cfg.window_len = len;
        cfg.stride = (len / 2).max(1);
    }
}

fn apply_data(cfg: &mut RunConfig, a: &DataArgs) {
    if let Some(n) = a.n_per_class {
        cfg.synth.n_per_class = n;
    }
    if let Some(noise) = a.noise {
        cfg.synth.noise_std = noise;
    }
    set_window(cfg, a.window);
}

fn apply_model(cfg: &mut RunConfig, a: &ModelArgs) {
    if let Some(u) = a.lstm_units {
        cfg.model.lstm_units = u;
    }
    if let Some(u) = a.hidden_units {
        cfg.model.hidden_units = u;
    }
}

fn apply_training(cfg: &mut RunConfig, a: &TrainingArgs) {
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(b) = a.batch_size {
        cfg.train.batch_size = b;
    }
    if let Some(lr) = a.learning_rate {
        cfg.train.learning_rate = lr;
    }
}

fn apply_kd(cfg: &mut RunConfig, a: &KdArgs) {
    if let Some(t) = a.temperature {
        cfg.distill.temperature = t;
    }
    if let Some(alpha) = a.alpha {
        cfg.distill.alpha = alpha;
    }
    if let Some(w) = a.width_factor {
        cfg.distill.width_factor = w;
    }
}

fn json_artifact<T: serde::Serialize>(file: &str, value: &T) -> Result<Artifact> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(Artifact::new(file, text))
}

fn parse_sensors(label: &str) -> Result<SensorSet> {
    label.parse()
}

fn parse_subsets(list: Option<&str>) -> Result<Vec<SensorSet>> {
    match list {
        Some(l) => {
            let sets = parse_sensor_sets(l)?;
            if sets.is_empty() {
                return Err(config_error("--subsets lists no sensor sets"));
            }
            Ok(sets)
        }
        None => Ok(SensorSet::all_nonempty().to_vec()),
    }
}

fn ingest_dir(dir: &Path, cfg: &RunConfig) -> Result<(WindowedDataset, String)> {
    if cfg.fall_codes.is_empty() {
        return Err(config_error(
            "recorded data needs the activity codes that count as falls (fall_codes in the configuration or --fall-codes)",
        ));
    }
    let ingested = ingest_csv(dir, &cfg.ingest_schema())?;
    let outcome = window_and_label(&ingested.recordings, cfg.sensors, cfg.window_len, cfg.stride, &cfg.fall_code_set())?;
    let ds = outcome.dataset;
    let summary = format!(
        "ingested {} recordings ({} other placements, {} unrecognised names, {} too short)\n{} windows, {} falls, {} subjects\n",
        ingested.recordings.len(),
        ingested.skipped_placement,
        ingested.skipped_unnamed,
        outcome.skipped_short,
        ds.len(),
        ds.n_falls(),
        ds.distinct_subjects().len()
    );
    Ok((ds, summary))
}

fn synth_dataset(cfg: &RunConfig) -> Result<WindowedDataset> {
    SynthConfig::new(cfg.synth.n_per_class, cfg.window_len, cfg.sensors, cfg.synth.seed, cfg.synth.noise_std).generate()
}

/// Loads the dataset named by the data flags.
fn load_dataset(data: &DataArgs, cfg: &RunConfig) -> Result<(WindowedDataset, Vec<PathBuf>)> {
    if data.synth {
        return Ok((synth_dataset(cfg)?, Vec::new()));
    }
    let Some(path) = &data.data else {
        return Err(config_error("no input data: pass --data <PATH> or --synth"));
    };
    let ds = if path.is_dir() {
        ingest_dir(path, cfg)?.0
    } else {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        WindowedDataset::from_json(&text).map_err(|e| e.context(format!("reading dataset {}", path.display())))?
    };
    Ok((ds, vec![path.clone()]))
}

/// Train and test sets ready for a model.
struct Prepared {
    train: WindowedDataset,
    test: WindowedDataset,
    inputs: Vec<PathBuf>,
}

/// Loads, optionally restricts to `sensors`, splits and normalises. With
/// `stats` the given statistics are applied to both sets (a teacher's);
/// otherwise they are fitted on the training set when normalisation is on.
fn prepare(data: &DataArgs, cfg: &RunConfig, sensors: Option<SensorSet>, stats: Option<&NormStats>) -> Result<Prepared> {
    let (mut ds, inputs) = load_dataset(data, cfg)?;
    if let Some(s) = sensors {
        if s != ds.sensor_set {
            ds = ds.restrict(s)?;
        }
    }
    let spec = cfg.split.resolve(&ds.distinct_subjects())?;
    let (train, test) = split(&ds, &spec)?;
    let (train, test) = match stats {
        Some(s) => (normalize(&train, Some(s))?.0, normalize(&test, Some(s))?.0),
        None if cfg.normalize => {
            let (train, s) = normalize(&train, None)?;
            let test = normalize(&test, Some(&s))?.0;
            (train, test)
        }
        None => (train, test),
    };
    if train.is_empty() || test.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "split left {} training and {} test windows",
            train.len(),
            test.len()
        )));
    }
    Ok(Prepared { train, test, inputs })
}

fn load_teacher(path: &Path) -> Result<LstmClassifier> {
    load_model(path)
}

fn cmd_ingest(dir: &Path, cfg: &RunConfig) -> Result<Outcome> {
    let (ds, summary) = ingest_dir(dir, cfg)?;
    Ok(Outcome {
        artifacts: vec![Artifact::new("dataset.json", ds.to_json()?)],
        summary,
        inputs: vec![dir.to_path_buf()],
    })
}

fn cmd_synth(cfg: &RunConfig) -> Result<Outcome> {
    let ds = synth_dataset(cfg)?;
    let summary = format!("{} synthetic windows ({} falls), {} channels\n", ds.len(), ds.n_falls(), ds.channels());
    Ok(Outcome {
        artifacts: vec![Artifact::new("dataset.json", ds.to_json()?)],
        summary,
        inputs: Vec::new(),
    })
}

fn log_artifact(file: &str, csv: String) -> Artifact {
    Artifact::new(file, csv).with_timing_fields(&["seconds"])
}

fn cmd_train(data: &DataArgs, sensors: Option<&str>, cfg: &RunConfig) -> Result<Outcome> {
    let sensors = sensors.map(parse_sensors).transpose()?;
    let p = prepare(data, cfg, sensors, None)?;
    let sensors = p.train.sensor_set;
    let topology = ModelTopology::new(sensors.channel_count(), cfg.model.lstm_units, cfg.model.hidden_units)?;
    let model = init_params(topology, sensors, cfg.train.seed)?;
    let (model, log) = train(&model, &p.train, &p.test, &cfg.train)?;
    let report = evaluate(&model, &p.test)?;
    let summary = format!(
        "model {topology} on sensors {}: test accuracy {:.2}% (best epoch {})\n",
        sensors.label(),
        100.0 * report.accuracy,
        log.best_epoch.map_or("-".to_string(), |e| e.to_string())
    );
    Ok(Outcome {
        artifacts: vec![
            Artifact::new("model.json", model.to_json()?),
            log_artifact("train_log.csv", log.to_csv()),
            json_artifact("eval.json", &report)?,
        ],
        summary,
        inputs: p.inputs,
    })
}

fn cmd_distill(data: &DataArgs, teacher_path: &Path, student: &str, cfg: &RunConfig) -> Result<Outcome> {
    let teacher = load_teacher(teacher_path)?;
    let student_set = parse_sensors(student)?;
    let dcfg = cfg.distill_config(student_set);
    dcfg.validate()?;
    if !student_set.is_subset_of(teacher.sensor_set) {
        return Err(config_error(format!(
            "student sensors {student_set} are not a subset of the teacher's {}",
            teacher.sensor_set
        )));
    }
    let p = prepare(data, cfg, Some(teacher.sensor_set), teacher.normalization.as_ref())?;
    let (student, log) = distill(&teacher, &p.train, &p.test, &dcfg)?;
    let report = evaluate(&student, &p.test.restrict(student_set)?)?;
    let summary = format!(
        "student {} on sensors {}: test accuracy {:.2}%\n",
        student.topology,
        student_set.label(),
        100.0 * report.accuracy
    );
    let mut inputs = vec![teacher_path.to_path_buf()];
    inputs.extend(p.inputs);
    Ok(Outcome {
        artifacts: vec![
            Artifact::new("student.json", student.to_json()?),
            log_artifact("distill_log.csv", log.to_csv()),
            json_artifact("eval.json", &report)?,
        ],
        summary,
        inputs,
    })
}

fn cmd_ablate(data: &DataArgs, subsets: Option<&str>, cfg: &RunConfig) -> Result<Outcome> {
    let subsets = parse_subsets(subsets)?;
    let p = prepare(data, cfg, None, None)?;
    let acfg = AblationConfig {
        lstm_units: cfg.model.lstm_units,
        hidden_units: cfg.model.hidden_units,
        train: cfg.train.clone(),
    };
    let table = run_ablation_subsets(&p.train, &p.test, &acfg, cfg.train.seed, &subsets)?;
    Ok(Outcome {
        artifacts: vec![
            Artifact::new("ablation.csv", table.to_csv()),
            json_artifact("ablation.json", &table)?,
        ],
        summary: table.to_text_table(),
        inputs: p.inputs,
    })
}

fn compare_config(cfg: &RunConfig) -> CompareConfig {
    CompareConfig {
        teacher_lstm_units: cfg.model.lstm_units,
        teacher_hidden_units: cfg.model.hidden_units,
        distill: cfg.distill_config(cfg.sensors),
    }
}

fn cmd_compare(data: &DataArgs, subsets: Option<&str>, teacher_path: Option<&Path>, cfg: &RunConfig) -> Result<Outcome> {
    let subsets = parse_subsets(subsets)?;
    let teacher = teacher_path.map(load_teacher).transpose()?;
    let p = match &teacher {
        Some(t) => prepare(data, cfg, Some(t.sensor_set), t.normalization.as_ref())?,
        None => prepare(data, cfg, None, None)?,
    };
    let report = compare_three(&subsets, &p.train, &p.test, &compare_config(cfg), teacher.as_ref())?;
    let summary = format!(
        "teacher {} accuracy {:.2}%\n{}",
        report.teacher_topology,
        report.teacher_accuracy,
        report.to_text_table()
    );
    let mut inputs: Vec<PathBuf> = teacher_path.map(Path::to_path_buf).into_iter().collect();
    inputs.extend(p.inputs);
    Ok(Outcome {
        artifacts: vec![
            Artifact::new("comparison.csv", report.to_csv()),
            json_artifact("comparison.json", &report)?,
            Artifact::new("comparison_plot.csv", report.to_plot_csv()),
        ],
        summary,
        inputs,
    })
}

/// A candidate as listed in a `--candidates` file; power is derived from the
/// configured specifications.
#[derive(Debug, Deserialize)]
struct PreparedCandidate {
    sensor_set: SensorSet,
    topology: ModelTopology,
    window_len: usize,
    accuracy: f64,
}

fn selection_summary(report: &edgefall::power::SelectionReport) -> String {
    let mut s = report.to_text_table();
    if report.chosen.is_none() {
        s.push_str(&format!("no configuration reaches accuracy {}\n", report.accuracy_floor));
    }
    s
}

fn cmd_select_prepared(path: &Path, cfg: &RunConfig) -> Result<Outcome> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let listed: Vec<PreparedCandidate> = serde_json::from_str(&text).map_err(|e| Error::Schema {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let mut candidates = Vec::with_capacity(listed.len());
    for c in listed {
        c.topology.validate()?;
        if c.topology.input_channels != c.sensor_set.channel_count() {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                msg: format!(
                    "candidate {} has {} input channels, its sensors provide {}",
                    c.sensor_set,
                    c.topology.input_channels,
                    c.sensor_set.channel_count()
                ),
            });
        }
        if !(0.0..=1.0).contains(&c.accuracy) {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                msg: format!("candidate {} accuracy {} is not a fraction", c.sensor_set, c.accuracy),
            });
        }
        candidates.push(CandidateConfig::new(c.sensor_set, c.topology, c.window_len, c.accuracy, &cfg.power));
    }
    let report = select(candidates, cfg.accuracy_floor);
    Ok(Outcome {
        artifacts: vec![json_artifact("selection.json", &report)?],
        summary: selection_summary(&report),
        inputs: vec![path.to_path_buf()],
    })
}

fn cmd_select_loop(data: &DataArgs, teacher_path: Option<&Path>, subsets: Option<&str>, cfg: &RunConfig) -> Result<Outcome> {
    let subsets = parse_subsets(subsets)?;
    let mut artifacts = Vec::new();
    let mut inputs = Vec::new();
    let (teacher, p) = match teacher_path {
        Some(path) => {
            let t = load_teacher(path)?;
            inputs.push(path.to_path_buf());
            let p = prepare(data, cfg, Some(t.sensor_set), t.normalization.as_ref())?;
            (t, p)
        }
        None => {
            let p = prepare(data, cfg, None, None)?;
            let (t, log) = train_teacher(&p.train, &p.test, &compare_config(cfg)).map_err(|e| e.context("training the teacher"))?;
            artifacts.push(Artifact::new("teacher.json", t.to_json()?));
            artifacts.push(log_artifact("teacher_log.csv", log.to_csv()));
            (t, p)
        }
    };
    inputs.extend(p.inputs.iter().cloned());
    let report = run_selection_loop(
        &teacher,
        &p.train,
        &p.test,
        &subsets,
        &cfg.distill_config(teacher.sensor_set),
        &cfg.power,
        cfg.accuracy_floor,
    )?;
    artifacts.push(json_artifact("selection.json", &report)?);
    Ok(Outcome {
        artifacts,
        summary: selection_summary(&report),
        inputs,
    })
}

/// Keys of the latency report that hold wall-clock measurements.
pub const LATENCY_TIMING_FIELDS: [&str; 5] = ["trials_ms", "min_ms", "median_ms", "p95_ms", "machine"];

fn cmd_bench(a: &args::BenchArgs, cfg: &RunConfig) -> Result<Outcome> {
    let (model, inputs) = match &a.model {
        Some(path) => (load_model(path)?, vec![path.clone()]),
        None => {
            let sensors = parse_sensors(&a.sensors)?;
            let topology = ModelTopology::new(sensors.channel_count(), a.lstm_units, a.hidden_units)?;
            (init_params(topology, sensors, cfg.train.seed)?, Vec::new())
        }
    };
    let report = bench_latency(&model, a.window, a.trials)?;
    Ok(Outcome {
        artifacts: vec![json_artifact("latency.json", &report)?.with_timing_fields(&LATENCY_TIMING_FIELDS)],
        summary: report.to_text_table(),
        inputs,
    })
}

/// Scores one window and returns the printed result line.
pub fn infer(model_path: &Path, window_path: &Path, threshold: f64) -> Result<String> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(config_error(format!("--threshold must lie in [0, 1], got {threshold}")));
    }
    let model = load_model(model_path)?;
    let text = std::fs::read_to_string(window_path).map_err(|e| Error::io(window_path, e))?;
    let mut window = window_csv::parse_window(&text, window_path, model.sensor_set)?;
    if let Some(stats) = &model.normalization {
        stats.apply(&mut window);
    }
    let p = model.probability(&window)?;
    let label = u8::from(p >= threshold);
    Ok(format!("probability={p} label={label}"))
}

/// One line of the replay comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayCheck {
    pub file: String,
    pub expected: String,
    pub actual: Option<String>,
}

impl ReplayCheck {
    pub fn matches(&self) -> bool {
        self.actual.as_deref() == Some(self.expected.as_str())
    }
}

/// Re-executes the manifest's command with its resolved configuration into
/// `out` and compares the digests of every recorded output.
pub fn replay_checks(manifest_path: &Path, out: &Path) -> Result<Vec<ReplayCheck>> {
    let recorded = RunManifest::load(manifest_path)?;
    if out == recorded.out_dir {
        return Err(config_error(format!(
            "replay would overwrite the recorded outputs in {}; pass a different --out",
            out.display()
        )));
    }
    let (fresh, _) = execute(&recorded.invocation, &recorded.resolved_config, out, Vec::new())?;
    Ok(recorded
        .outputs
        .iter()
        .map(|r| ReplayCheck {
            file: r.file.clone(),
            expected: r.sha256.clone(),
            actual: fresh.outputs.iter().find(|f| f.file == r.file).map(|f| f.sha256.clone()),
        })
        .collect())
}

fn replay(manifest_path: &Path, out: &Path, quiet: bool) -> Result<i32> {
    let checks = replay_checks(manifest_path, out)?;
    let ok = checks.iter().all(ReplayCheck::matches);
    if !quiet || !ok {
        for c in &checks {
            let status = match (&c.actual, c.matches()) {
                (_, true) => "same",
                (None, _) => "missing",
                (Some(_), false) => "DIFFERENT",
            };
            println!("{:<24} {status}", c.file);
        }
    }
    Ok(if ok { EXIT_OK } else { EXIT_REPLAY_MISMATCH })
}
