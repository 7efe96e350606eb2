//! Knowledge distillation from a full-sensor teacher into narrower students
//! that see only a subset of the sensor channels, plus the three-way
//! big/small/distilled comparison.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Label, SensorSet, WindowedDataset};
use crate::error::{Error, Result};
use crate::eval::{evaluate, train_on_subset};
use crate::model::{init_params, LstmClassifier, ModelTopology, TEACHER_HIDDEN_UNITS, TEACHER_LSTM_UNITS};
use crate::tensor::sigmoid_scalar;
use crate::train::{bce_loss, fit, train, Objective, TrainConfig, TrainLog};

pub const DEFAULT_TEMPERATURE: f64 = 2.0;
pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_WIDTH_FACTOR: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillConfig {
    pub temperature: f64,
    /// Weight of the hard-label term; `1 - alpha` weighs the soft term.
    pub alpha: f64,
    pub student_sensor_set: SensorSet,
    /// Student width relative to the teacher, applied to both layers.
    pub width_factor: f64,
    pub train: TrainConfig,
}

impl DistillConfig {
    pub fn new(student_sensor_set: SensorSet) -> Self {
        Self {
            temperature: DEFAULT_TEMPERATURE,
            alpha: DEFAULT_ALPHA,
            student_sensor_set,
            width_factor: DEFAULT_WIDTH_FACTOR,
            train: TrainConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::config(format!(
                "distillation temperature must be > 0, got {}",
                self.temperature
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !(self.width_factor > 0.0 && self.width_factor <= 1.0) {
            return Err(Error::config(format!(
                "width factor must lie in (0, 1], got {}",
                self.width_factor
            )));
        }
        self.train.validate()
    }
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self::new(SensorSet::FULL)
    }
}

fn scaled_units(units: usize, factor: f64, layer: &str) -> Result<usize> {
    let scaled = (units as f64 * factor).round() as usize;
    if scaled == 0 {
        return Err(Error::config(format!(
            "width factor {factor} leaves the {layer} layer with no units (teacher has {units})"
        )));
    }
    Ok(scaled)
}

/// Topology of a student derived from `teacher` under `cfg`.
pub fn student_topology(teacher: &ModelTopology, cfg: &DistillConfig) -> Result<ModelTopology> {
    cfg.validate()?;
    ModelTopology::new(
        cfg.student_sensor_set.channel_count(),
        scaled_units(teacher.lstm_units, cfg.width_factor, "LSTM")?,
        scaled_units(teacher.hidden_units, cfg.width_factor, "hidden")?,
    )
}

/// Freshly initialised student for the sensors in `cfg`.
pub fn make_student(teacher: &ModelTopology, cfg: &DistillConfig, seed: u64) -> Result<LstmClassifier> {
    init_params(student_topology(teacher, cfg)?, cfg.student_sensor_set, seed)
}

/// Distillation loss and its derivative with respect to the student logit.
///
/// `alpha · BCE(σ(z_s), y) + (1 − alpha) · T² · BCE(σ(z_s/T), σ(z_t/T))`.
/// The derivative is `alpha (σ(z_s) − y) + (1 − alpha) T (σ(z_s/T) − σ(z_t/T))`.
pub fn kd_loss_and_grad(z_s: f64, z_t: f64, y: f64, temperature: f64, alpha: f64) -> (f64, f64) {
    let p = sigmoid_scalar(z_s);
    let p_soft = sigmoid_scalar(z_s / temperature);
    let q = sigmoid_scalar(z_t / temperature);
    let t2 = temperature * temperature;
    let loss = alpha * bce_loss(p, y) + (1.0 - alpha) * t2 * bce_loss(p_soft, q);
    let grad = alpha * (p - y) + (1.0 - alpha) * temperature * (p_soft - q);
    (loss, grad)
}

pub fn kd_loss(z_s: f64, z_t: f64, y: f64, cfg: &DistillConfig) -> f64 {
    kd_loss_and_grad(z_s, z_t, y, cfg.temperature, cfg.alpha).0
}

/// Training objective with teacher logits precomputed per training window.
#[derive(Debug, Clone)]
pub struct DistillationObjective {
    pub teacher_logits: Vec<f64>,
    pub temperature: f64,
    pub alpha: f64,
}

impl Objective for DistillationObjective {
    fn loss_and_grad(&self, index: usize, logit: f64, label: Label) -> (f64, f64) {
        kd_loss_and_grad(
            logit,
            self.teacher_logits[index],
            f64::from(label),
            self.temperature,
            self.alpha,
        )
    }
}

/// Teacher logits for every window, computed in parallel.
pub fn teacher_logits(teacher: &LstmClassifier, ds: &WindowedDataset) -> Result<Vec<f64>> {
    ds.windows.par_iter().map(|w| teacher.logit(w)).collect()
}

fn check_teacher(teacher: &LstmClassifier, cfg: &DistillConfig, datasets: [&WindowedDataset; 2]) -> Result<()> {
    if !cfg.student_sensor_set.is_subset_of(teacher.sensor_set) {
        return Err(Error::config(format!(
            "student sensors {} are not a subset of the teacher's {}",
            cfg.student_sensor_set, teacher.sensor_set
        )));
    }
    for ds in datasets {
        if ds.sensor_set != teacher.sensor_set {
            return Err(Error::config(format!(
                "distillation data carries sensors {} but the teacher expects {}",
                ds.sensor_set, teacher.sensor_set
            )));
        }
    }
    Ok(())
}

/// Trains a student from `cfg` against a frozen teacher. The datasets carry
/// the teacher's channels; the student sees only its own channel slice.
/// The student is initialised from `cfg.train.seed`.
pub fn distill(
    teacher: &LstmClassifier,
    train_full: &WindowedDataset,
    test_full: &WindowedDataset,
    cfg: &DistillConfig,
) -> Result<(LstmClassifier, TrainLog)> {
    cfg.validate()?;
    check_teacher(teacher, cfg, [train_full, test_full])?;
    let student = make_student(&teacher.topology, cfg, cfg.train.seed)?;
    let objective = DistillationObjective {
        teacher_logits: teacher_logits(teacher, train_full)?,
        temperature: cfg.temperature,
        alpha: cfg.alpha,
    };
    let train_s = train_full.restrict(cfg.student_sensor_set)?;
    let test_s = test_full.restrict(cfg.student_sensor_set)?;
    fit(&student, &train_s, &test_s, &cfg.train, &objective)
}

/// Published figures used to annotate comparison reports (percent or
/// percentage points). They describe the wrist FallAllD recordings and are
/// not expected to hold on other data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReference {
    pub kd_minus_small_max: f64,
    pub big_minus_kd_max: f64,
    pub kd_ab_accuracy: f64,
    pub kd_ab_below_teacher: f64,
}

pub const COMPARISON_REFERENCE: ComparisonReference = ComparisonReference {
    kd_minus_small_max: 2.0,
    big_minus_kd_max: 6.0,
    kd_ab_accuracy: 89.52,
    kd_ab_below_teacher: 2.76,
};

/// Settings for the three-way comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub teacher_lstm_units: usize,
    pub teacher_hidden_units: usize,
    /// Distillation settings; the student sensor set is replaced per row.
    pub distill: DistillConfig,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            teacher_lstm_units: TEACHER_LSTM_UNITS,
            teacher_hidden_units: TEACHER_HIDDEN_UNITS,
            distill: DistillConfig::default(),
        }
    }
}

/// Accuracies in percent; deltas in percentage points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub sensor_set: SensorSet,
    pub big_acc: f64,
    pub small_acc: f64,
    pub kd_acc: f64,
    pub kd_minus_small: f64,
    pub big_minus_kd: f64,
}

impl ComparisonRow {
    pub fn new(sensor_set: SensorSet, big_acc: f64, small_acc: f64, kd_acc: f64) -> Self {
        Self {
            sensor_set,
            big_acc,
            small_acc,
            kd_acc,
            kd_minus_small: kd_acc - small_acc,
            big_minus_kd: big_acc - kd_acc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    /// Accuracy of the full-sensor teacher used for distillation, percent.
    pub teacher_accuracy: f64,
    pub teacher_topology: String,
    pub student_topology_example: String,
    pub config: CompareConfig,
    pub reference: ComparisonReference,
}

pub const COMPARISON_CSV_HEADER: &str = "sensor_set,big_acc,small_acc,kd_acc,kd_minus_small,big_minus_kd";
pub const COMPARISON_PLOT_HEADER: &str = "sensor_set,big,small,kd";

impl ComparisonReport {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{COMPARISON_CSV_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.sensor_set, r.big_acc, r.small_acc, r.kd_acc, r.kd_minus_small, r.big_minus_kd
            );
        }
        s
    }

    /// One x value (sensor set) per line with the three accuracy series.
    pub fn to_plot_csv(&self) -> String {
        let mut s = format!("{COMPARISON_PLOT_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{:.4},{:.4},{:.4}", r.sensor_set, r.big_acc, r.small_acc, r.kd_acc);
        }
        s
    }

    pub fn to_text_table(&self) -> String {
        let mut s = format!(
            "{:<8} {:>8} {:>8} {:>8} {:>9} {:>9}\n",
            "sensors", "big", "small", "kd", "kd-small", "big-kd"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<8} {:>8.2} {:>8.2} {:>8.2} {:>9.2} {:>9.2}",
                r.sensor_set.label(),
                r.big_acc,
                r.small_acc,
                r.kd_acc,
                r.kd_minus_small,
                r.big_minus_kd
            );
        }
        s
    }

    /// Every delta equals the difference of the stored accuracies.
    pub fn is_consistent(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.kd_minus_small == r.kd_acc - r.small_acc && r.big_minus_kd == r.big_acc - r.kd_acc)
    }
}

/// Trains the full-sensor teacher used by [`compare_three`].
pub fn train_teacher(
    train_full: &WindowedDataset,
    test_full: &WindowedDataset,
    cfg: &CompareConfig,
) -> Result<(LstmClassifier, TrainLog)> {
    let sensors = train_full.sensor_set;
    let topology = ModelTopology::new(sensors.channel_count(), cfg.teacher_lstm_units, cfg.teacher_hidden_units)?;
    let model = init_params(topology, sensors, cfg.distill.train.seed)?;
    train(&model, train_full, test_full, &cfg.distill.train)
}

/// For each sensor set trains a teacher-width model, a student-width model
/// without distillation and a distilled student, all on the same channel
/// slice, and reports their test accuracies. The small and distilled models
/// share their initial weights. A teacher is trained on the datasets' full
/// channel set unless one is supplied.
pub fn compare_three(
    sensor_sets: &[SensorSet],
    train_full: &WindowedDataset,
    test_full: &WindowedDataset,
    cfg: &CompareConfig,
    teacher: Option<&LstmClassifier>,
) -> Result<ComparisonReport> {
    if sensor_sets.is_empty() {
        return Err(Error::config("no sensor subsets requested"));
    }
    cfg.distill.validate()?;
    let trained;
    let teacher = match teacher {
        Some(t) => t,
        None => {
            trained = train_teacher(train_full, test_full, cfg).map_err(|e| e.context("training the teacher"))?.0;
            &trained
        }
    };
    let teacher_accuracy = 100.0 * evaluate(teacher, test_full)?.accuracy;
    let rows = sensor_sets
        .par_iter()
        .map(|&sensors| compare_row(teacher, train_full, test_full, cfg, sensors).map_err(|e| e.context(format!("comparison for sensors {sensors}"))))
        .collect::<Result<Vec<_>>>()?;
    let example = DistillConfig {
        student_sensor_set: teacher.sensor_set,
        ..cfg.distill.clone()
    };
    Ok(ComparisonReport {
        rows,
        teacher_accuracy,
        teacher_topology: teacher.topology.to_string(),
        student_topology_example: student_topology(&teacher.topology, &example)?.to_string(),
        config: cfg.clone(),
        reference: COMPARISON_REFERENCE,
    })
}

fn compare_row(
    teacher: &LstmClassifier,
    train_full: &WindowedDataset,
    test_full: &WindowedDataset,
    cfg: &CompareConfig,
    sensors: SensorSet,
) -> Result<ComparisonRow> {
    let dcfg = DistillConfig {
        student_sensor_set: sensors,
        ..cfg.distill.clone()
    };
    let seed = dcfg.train.seed;
    let test_s = test_full.restrict(sensors)?;
    let (big, (small, kd)) = rayon::join(
        || {
            let (m, _) = train_on_subset(
                train_full,
                test_full,
                teacher.topology.lstm_units,
                teacher.topology.hidden_units,
                &dcfg.train,
                seed,
                sensors,
            )
            .map_err(|e| e.context("big model"))?;
            evaluate(&m, &test_s)
        },
        || {
            rayon::join(
                || {
                    let student = make_student(&teacher.topology, &dcfg, seed)?;
                    let (m, _) = train(&student, &train_full.restrict(sensors)?, &test_s, &dcfg.train)
                        .map_err(|e| e.context("small model"))?;
                    evaluate(&m, &test_s)
                },
                || {
                    let (m, _) = distill(teacher, train_full, test_full, &dcfg).map_err(|e| e.context("distilled model"))?;
                    evaluate(&m, &test_s)
                },
            )
        },
    );
    Ok(ComparisonRow::new(
        sensors,
        100.0 * big?.accuracy,
        100.0 * small?.accuracy,
        100.0 * kd?.accuracy,
    ))
}
