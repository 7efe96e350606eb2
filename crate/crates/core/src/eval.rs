//! Accuracy metrics, the per-sensor-subset ablation sweep and the forward
//! latency microbenchmark.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{SensorSet, WindowedDataset};
use crate::error::{Error, Result};
use crate::model::{
    count_macs, init_params, LstmClassifier, ModelTopology, DEFAULT_THRESHOLD, TEACHER_HIDDEN_UNITS,
    TEACHER_LSTM_UNITS,
};
use crate::tensor::Matrix2D;
use crate::train::{train, TrainConfig, TrainLog};
use crate::util::fingerprint;

/// Published per-subset accuracies (percent) on the wrist recordings of the
/// FallAllD dataset, in the same row order as [`SensorSet::all_nonempty`].
pub const TABLE1_REFERENCE: [(&str, f64); 7] = [
    ("ABG", 93.55),
    ("AG", 82.37),
    ("BG", 89.43),
    ("AB", 92.28),
    ("A", 80.39),
    ("G", 79.18),
    ("B", 88.09),
];

/// Accuracy (percent) the FallAllD authors report for their own LSTM. Kept
/// as an annotation only.
pub const FALLALLD_BASELINE_ACCURACY: f64 = 87.18;

pub const MIN_LATENCY_TRIALS: usize = 30;
pub const LATENCY_WARMUP_CALLS: usize = 5;

/// Reference accuracy (percent) for a subset label, if published.
pub fn table1_reference(sensors: SensorSet) -> Option<f64> {
    let label = sensors.label();
    TABLE1_REFERENCE.iter().find(|(l, _)| *l == label).map(|&(_, a)| a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub n_windows: usize,
    pub sensor_set: SensorSet,
    /// Topology summary such as `3->256->64->1`.
    pub topology: String,
}

impl EvalReport {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize, sensor_set: SensorSet, topology: &ModelTopology) -> Self {
        let n_windows = tp + fp + tn + fn_;
        Self {
            accuracy: (tp + tn) as f64 / n_windows as f64,
            tp,
            fp,
            tn,
            fn_,
            n_windows,
            sensor_set,
            topology: topology.to_string(),
        }
    }

    /// Checks the confusion counts against `n_windows` and `accuracy`.
    pub fn is_consistent(&self) -> bool {
        self.tp + self.fp + self.tn + self.fn_ == self.n_windows
            && self.n_windows > 0
            && self.accuracy == (self.tp + self.tn) as f64 / self.n_windows as f64
    }
}

/// Scores every window at the default threshold.
pub fn evaluate(model: &LstmClassifier, test_ds: &WindowedDataset) -> Result<EvalReport> {
    if test_ds.is_empty() {
        return Err(Error::EmptyDataset("evaluation set has no windows".into()));
    }
    if test_ds.sensor_set != model.sensor_set {
        return Err(Error::config(format!(
            "evaluation set carries sensors {} but the model expects {}",
            test_ds.sensor_set, model.sensor_set
        )));
    }
    let predictions = test_ds
        .windows
        .par_iter()
        .map(|w| model.predict_label(w, DEFAULT_THRESHOLD))
        .collect::<Result<Vec<_>>>()?;
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&pred, &truth) in predictions.iter().zip(&test_ds.labels) {
        match (pred, truth) {
            (1, 1) => tp += 1,
            (1, _) => fp += 1,
            (_, 1) => fn_ += 1,
            _ => tn += 1,
        }
    }
    Ok(EvalReport::from_counts(tp, fp, tn, fn_, model.sensor_set, &model.topology))
}

/// Model width and training schedule shared by every ablation row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub lstm_units: usize,
    pub hidden_units: usize,
    pub train: TrainConfig,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            lstm_units: TEACHER_LSTM_UNITS,
            hidden_units: TEACHER_HIDDEN_UNITS,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub report: EvalReport,
    /// Seed used for both initialisation and shuffling of this row.
    pub seed: u64,
    pub best_epoch: Option<usize>,
    /// Published accuracy for the same subset, percent.
    pub reference_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    pub seed: u64,
    pub config: AblationConfig,
    /// SHA-256 of the serialized configuration and seed.
    pub config_fingerprint: String,
    pub fallalld_baseline_accuracy: f64,
}

pub const ABLATION_CSV_HEADER: &str = "sensors,accuracy";

impl AblationTable {
    /// `sensors,accuracy` with accuracy in percent, two decimals.
    pub fn to_csv(&self) -> String {
        let mut s = format!("{ABLATION_CSV_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{:.2}", r.report.sensor_set, r.report.accuracy * 100.0);
        }
        s
    }

    pub fn to_text_table(&self) -> String {
        let mut s = format!("{:<8} {:>9} {:>10}\n", "sensors", "accuracy", "reference");
        for r in &self.rows {
            let reference = r
                .reference_accuracy
                .map_or_else(|| "-".to_string(), |a| format!("{a:.2}"));
            let _ = writeln!(
                s,
                "{:<8} {:>9.2} {:>10}",
                r.report.sensor_set.label(),
                r.report.accuracy * 100.0,
                reference
            );
        }
        s
    }

    pub fn row(&self, sensors: SensorSet) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.report.sensor_set == sensors)
    }
}

/// Seed for the ablation row of `sensors`: the base seed plus the subset's
/// position in the canonical row order, so a row's result does not depend on
/// which other subsets were requested.
pub fn ablation_seed(seed: u64, sensors: SensorSet) -> u64 {
    let index = SensorSet::all_nonempty()
        .iter()
        .position(|&s| s == sensors)
        .expect("every nonempty set is listed");
    seed.wrapping_add(index as u64)
}

/// Trains one model per nonempty sensor subset on channel slices of the full
/// datasets and evaluates each on the matching test slice.
pub fn run_ablation(
    train_full: &WindowedDataset,
    test_full: &WindowedDataset,
    cfg: &AblationConfig,
    seed: u64,
) -> Result<AblationTable> {
    run_ablation_subsets(train_full, test_full, cfg, seed, &SensorSet::all_nonempty())
}

/// [`run_ablation`] restricted to the listed subsets (rows keep the given order).
pub fn run_ablation_subsets(
    train_full: &WindowedDataset,
    test_full: &WindowedDataset,
    cfg: &AblationConfig,
    seed: u64,
    subsets: &[SensorSet],
) -> Result<AblationTable> {
    if subsets.is_empty() {
        return Err(Error::config("no sensor subsets requested"));
    }
    for (i, s) in subsets.iter().enumerate() {
        if subsets[..i].contains(s) {
            return Err(Error::config(format!("sensor subset {s} requested twice")));
        }
    }
    let rows = subsets
        .par_iter()
        .map(|&sensors| {
            ablation_row(train_full, test_full, cfg, seed, sensors)
                .map_err(|e| e.context(format!("ablation subset {sensors}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let config_fingerprint = fingerprint(&format!("{}|{seed}", serde_json::to_string(cfg)?));
    Ok(AblationTable {
        rows,
        seed,
        config: cfg.clone(),
        config_fingerprint,
        fallalld_baseline_accuracy: FALLALLD_BASELINE_ACCURACY,
    })
}

fn ablation_row(
    train_full: &WindowedDataset,
    test_full: &WindowedDataset,
    cfg: &AblationConfig,
    seed: u64,
    sensors: SensorSet,
) -> Result<AblationRow> {
    let row_seed = ablation_seed(seed, sensors);
    let (model, log) = train_on_subset(train_full, test_full, cfg.lstm_units, cfg.hidden_units, &cfg.train, row_seed, sensors)?;
    let report = evaluate(&model, &test_full.restrict(sensors)?)?;
    Ok(AblationRow {
        report,
        seed: row_seed,
        best_epoch: log.best_epoch,
        reference_accuracy: table1_reference(sensors),
    })
}

/// Initialises a `lstm_units`/`hidden_units` model for `sensors` from `seed`
/// and trains it on the matching channel slices. The training seed is also
/// `seed`.
pub fn train_on_subset(
    train_full: &WindowedDataset,
    test_full: &WindowedDataset,
    lstm_units: usize,
    hidden_units: usize,
    train_cfg: &TrainConfig,
    seed: u64,
    sensors: SensorSet,
) -> Result<(LstmClassifier, TrainLog)> {
    let train_ds = train_full.restrict(sensors)?;
    let test_ds = test_full.restrict(sensors)?;
    let topology = ModelTopology::new(sensors.channel_count(), lstm_units, hidden_units)?;
    let model = init_params(topology, sensors, seed)?;
    let cfg = TrainConfig {
        seed,
        ..train_cfg.clone()
    };
    train(&model, &train_ds, &test_ds, &cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub min_ms: f64,
    pub median_ms: f64,
    /// Nearest-rank 95th percentile.
    pub p95_ms: f64,
}

impl LatencyStats {
    pub fn from_trials(trials_ms: &[f64]) -> Result<Self> {
        if trials_ms.is_empty() {
            return Err(Error::config("no latency trials"));
        }
        let mut sorted = trials_ms.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median_ms = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        };
        let rank = (0.95 * n as f64).ceil() as usize;
        Ok(Self {
            min_ms: sorted[0],
            median_ms,
            p95_ms: sorted[rank.max(1) - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub window_len: usize,
    pub n_trials: usize,
    pub topology: String,
    pub input_channels: usize,
    /// Multiply-accumulates of one forward pass.
    pub macs: u64,
    pub trials_ms: Vec<f64>,
    #[serde(flatten)]
    pub stats: LatencyStats,
    pub machine: String,
}

impl LatencyReport {
    pub fn to_text_table(&self) -> String {
        format!(
            "topology {}  window {}  macs {}\ntrials {}  min {:.4} ms  median {:.4} ms  p95 {:.4} ms\nmachine {}\n",
            self.topology,
            self.window_len,
            self.macs,
            self.n_trials,
            self.stats.min_ms,
            self.stats.median_ms,
            self.stats.p95_ms,
            self.machine
        )
    }
}

/// Short description of the host the benchmark ran on.
pub fn machine_descriptor() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo").ok().and_then(|info| {
        info.lines()
            .find(|l| l.starts_with("model name"))
            .and_then(|l| l.split(':').nth(1))
            .map(|s| s.trim().to_string())
    });
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!(
        "{}-{}; {}; {threads} hardware threads",
        std::env::consts::ARCH,
        std::env::consts::OS,
        cpu.unwrap_or_else(|| "unknown cpu".into())
    )
}

/// Times `n_trials` single-window forward passes on the calling thread after
/// [`LATENCY_WARMUP_CALLS`] untimed calls. The input window is drawn from a
/// fixed seed so repeated benchmarks see the same data.
pub fn bench_latency(model: &LstmClassifier, window_len: usize, n_trials: usize) -> Result<LatencyReport> {
    if n_trials < MIN_LATENCY_TRIALS {
        return Err(Error::config(format!(
            "latency benchmark needs at least {MIN_LATENCY_TRIALS} trials, got {n_trials}"
        )));
    }
    if window_len == 0 {
        return Err(Error::config("window length must be at least 1"));
    }
    let d = model.topology.input_channels;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let data = (0..d * window_len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let window = Matrix2D::from_vec(d, window_len, data)?;
    for _ in 0..LATENCY_WARMUP_CALLS {
        std::hint::black_box(model.probability(&window)?);
    }
    let mut trials_ms = Vec::with_capacity(n_trials);
    for _ in 0..n_trials {
        let start = Instant::now();
        std::hint::black_box(model.probability(std::hint::black_box(&window))?);
        trials_ms.push(start.elapsed().as_secs_f64() * 1e3);
    }
    Ok(LatencyReport {
        window_len,
        n_trials,
        topology: model.topology.to_string(),
        input_channels: d,
        macs: count_macs(&model.topology, window_len),
        stats: LatencyStats::from_trials(&trials_ms)?,
        trials_ms,
        machine: machine_descriptor(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, SensorKind};
    use crate::model::LstmParams;

    fn constant_one_model(sensors: SensorSet) -> LstmClassifier {
        let t = ModelTopology::new(sensors.channel_count(), 2, 2).unwrap();
        let mut params = LstmParams::zeros(&t).unwrap();
        params.b_out[0] = 10.0;
        LstmClassifier::from_params(t, sensors, 0, params).unwrap()
    }

    #[test]
    fn constant_fall_prediction_on_balanced_set() {
        let sensors = SensorSet::single(SensorKind::Accelerometer);
        let ds = synth_generate(10, 8, sensors, 1, 0.0).unwrap();
        let r = evaluate(&constant_one_model(sensors), &ds).unwrap();
        assert_eq!(r.accuracy, 0.5);
        assert_eq!((r.tp, r.fp, r.tn, r.fn_), (10, 10, 0, 0));
        assert!(r.is_consistent());
    }

    #[test]
    fn evaluate_is_repeatable() {
        let sensors = SensorSet::FULL;
        let ds = synth_generate(8, 6, sensors, 3, 0.3).unwrap();
        let m = init_params(ModelTopology::new(7, 4, 3).unwrap(), sensors, 9).unwrap();
        let a = evaluate(&m, &ds).unwrap();
        assert_eq!(a, evaluate(&m, &ds).unwrap());
        assert!(a.is_consistent());
    }

    #[test]
    fn evaluate_rejects_empty_and_mismatched_sets() {
        let sensors = SensorSet::single(SensorKind::Accelerometer);
        let ds = synth_generate(2, 6, sensors, 3, 0.0).unwrap();
        let m = constant_one_model(sensors);
        assert!(matches!(evaluate(&m, &ds.subset(&[])), Err(Error::EmptyDataset(_))));
        let other = constant_one_model(SensorSet::FULL);
        assert!(matches!(evaluate(&other, &ds), Err(Error::Config(_))));
    }

    #[test]
    fn reference_rows_cover_every_subset() {
        for s in SensorSet::all_nonempty() {
            assert!(table1_reference(s).is_some(), "{s}");
        }
        assert_eq!(table1_reference("ABG".parse().unwrap()), Some(93.55));
        assert_eq!(table1_reference("B".parse().unwrap()), Some(88.09));
    }

    #[test]
    fn ablation_seeds_follow_row_order() {
        let all = SensorSet::all_nonempty();
        for (i, s) in all.iter().enumerate() {
            assert_eq!(ablation_seed(100, *s), 100 + i as u64);
        }
    }

    #[test]
    fn latency_stats_nearest_rank() {
        let trials: Vec<f64> = (1..=40).rev().map(f64::from).collect();
        let s = LatencyStats::from_trials(&trials).unwrap();
        assert_eq!(s.min_ms, 1.0);
        assert_eq!(s.median_ms, 20.5);
        assert_eq!(s.p95_ms, 38.0);
        let odd = LatencyStats::from_trials(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!((odd.median_ms, odd.p95_ms), (2.0, 3.0));
    }

    #[test]
    fn bench_records_every_trial_and_mac_count() {
        let sensors = SensorSet::single(SensorKind::Accelerometer);
        let m = init_params(ModelTopology::new(3, 4, 2).unwrap(), sensors, 1).unwrap();
        let r = bench_latency(&m, 20, 30).unwrap();
        assert_eq!(r.trials_ms.len(), 30);
        assert_eq!(r.stats, LatencyStats::from_trials(&r.trials_ms).unwrap());
        let doubled = bench_latency(&m, 40, 30).unwrap();
        let per_step = 4 * 4 * (3 + 4 + 1) as u64;
        assert_eq!(doubled.macs - r.macs, 20 * per_step);
        assert!(matches!(bench_latency(&m, 20, 29), Err(Error::Config(_))));
    }
}
