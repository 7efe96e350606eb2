//! Run configuration: built-in defaults, overridden by a `key = value` text
//! file.
//!
//! The file format is one `key = value` pair per line. Blank lines and lines
//! starting with `#` are ignored, as is anything after ` #` on a line. Each
//! key may appear once. Lists are comma separated and integer lists accept
//! inclusive ranges such as `101-135`.
//!
//! ```
//! use edgefall::config::{KeyValueConfig, RunConfig};
//!
//! let text = "window_len = 40\nsplit.mode = random  # parity runs\npower.duty.barometer = 0.5\n";
//! let kv = KeyValueConfig::parse(text, "example.cfg").unwrap();
//! let mut cfg = RunConfig::default();
//! cfg.apply(&kv).unwrap();
//! assert_eq!(cfg.window_len, 40);
//! assert_eq!(cfg.stride, 20);
//! assert_eq!(cfg.power.sensors.barometer.duty_cycle, 0.5);
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{
    IngestSchema, SensorKind, SensorSet, SplitSpec, DEFAULT_HOLDOUT_COUNT, DEFAULT_SPLIT_SEED, DEFAULT_WINDOW_LEN,
};
use crate::distill::{DistillConfig, DEFAULT_ALPHA, DEFAULT_TEMPERATURE, DEFAULT_WIDTH_FACTOR};
use crate::error::{Error, Result};
use crate::model::{TEACHER_HIDDEN_UNITS, TEACHER_LSTM_UNITS};
use crate::power::PowerSpecs;
use crate::train::TrainConfig;

/// A parsed `key = value` file. Values keep their source line for messages.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValueConfig {
    origin: String,
    entries: BTreeMap<String, (usize, String)>,
}

impl KeyValueConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = match raw.find(" #").or_else(|| raw.find("\t#")) {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("{origin}:{line_no}: expected `key = value`, got {line:?}"))
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::config(format!("{origin}:{line_no}: empty key")));
            }
            if let Some((first, _)) = entries.insert(key.to_string(), (line_no, value.trim().to_string())) {
                return Err(Error::config(format!(
                    "{origin}:{line_no}: key `{key}` already set on line {first}"
                )));
            }
        }
        Ok(Self {
            origin: origin.to_string(),
            entries,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    fn error_at(&self, key: &str, msg: impl Display) -> Error {
        let line = self.entries.get(key).map_or(0, |(l, _)| *l);
        Error::config(format!("{}:{line}: {key}: {msg}", self.origin))
    }

    /// Parses the value of `key` when present.
    pub fn get<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.get_str(key)
            .map(|v| v.parse::<T>().map_err(|e| self.error_at(key, format!("invalid value {v:?}: {e}"))))
            .transpose()
    }

    /// Like [`get`](Self::get) but writes into `slot` only when the key is set.
    pub fn set<T>(&self, key: &str, slot: &mut T) -> Result<()>
    where
        T: FromStr,
        T::Err: Display,
    {
        if let Some(v) = self.get(key)? {
            *slot = v;
        }
        Ok(())
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>> {
        self.get_str(key)
            .map(|v| parse_bool(v).map_err(|e| self.error_at(key, e)))
            .transpose()
    }

    pub fn get_u32_list(&self, key: &str) -> Result<Option<Vec<u32>>> {
        self.get_str(key)
            .map(|v| parse_u32_list(v).map_err(|e| self.error_at(key, e)))
            .transpose()
    }

    /// Fails on the first key that is neither in `known` nor under one of
    /// `known_prefixes`.
    pub fn check_known(&self, known: &[&str], known_prefixes: &[&str]) -> Result<()> {
        for key in self.keys() {
            if !known.contains(&key) && !known_prefixes.iter().any(|p| key.starts_with(p)) {
                return Err(self.error_at(key, "unknown key"));
            }
        }
        Ok(())
    }
}

pub fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(format!("expected a boolean, got {v:?}")),
    }
}

/// Parses `1,3,101-103` into `[1, 3, 101, 102, 103]`.
pub fn parse_u32_list(v: &str) -> std::result::Result<Vec<u32>, String> {
    let mut out = Vec::new();
    for item in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let bad = |_| format!("invalid integer list entry {item:?}");
        match item.split_once('-') {
            Some((lo, hi)) => {
                let lo: u32 = lo.trim().parse().map_err(bad)?;
                let hi: u32 = hi.trim().parse().map_err(bad)?;
                if lo > hi {
                    return Err(format!("empty range {item:?}"));
                }
                out.extend(lo..=hi);
            }
            None => out.push(item.parse().map_err(bad)?),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    Random,
    SubjectHoldout,
}

impl FromStr for SplitMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "random" => Ok(SplitMode::Random),
            "subject-holdout" | "subject_holdout" => Ok(SplitMode::SubjectHoldout),
            _ => Err(format!("expected `random` or `subject-holdout`, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSettings {
    pub mode: SplitMode,
    pub seed: u64,
    /// Used in random mode.
    pub test_fraction: f64,
    /// Explicit held-out subjects; when empty, `holdout_count` subjects are
    /// drawn by `seed`.
    pub holdout_subjects: Vec<u32>,
    pub holdout_count: usize,
}

impl Default for SplitSettings {
    fn default() -> Self {
        Self {
            mode: SplitMode::SubjectHoldout,
            seed: DEFAULT_SPLIT_SEED,
            test_fraction: 0.2,
            holdout_subjects: Vec::new(),
            holdout_count: DEFAULT_HOLDOUT_COUNT,
        }
    }
}

impl SplitSettings {
    /// Concrete split for a dataset containing `present` subjects.
    pub fn resolve(&self, present: &BTreeSet<u32>) -> Result<SplitSpec> {
        match self.mode {
            SplitMode::Random => Ok(SplitSpec::Random {
                test_fraction: self.test_fraction,
                seed: self.seed,
            }),
            SplitMode::SubjectHoldout if self.holdout_subjects.is_empty() => {
                SplitSpec::holdout_from(present, self.holdout_count, self.seed)
            }
            SplitMode::SubjectHoldout => Ok(SplitSpec::SubjectHoldout {
                subjects: self.holdout_subjects.clone(),
                seed: self.seed,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSettings {
    pub n_per_class: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self {
            n_per_class: 200,
            noise_std: 0.2,
            seed: DEFAULT_SPLIT_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSettings {
    pub lstm_units: usize,
    pub hidden_units: usize,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            lstm_units: TEACHER_LSTM_UNITS,
            hidden_units: TEACHER_HIDDEN_UNITS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillSettings {
    pub temperature: f64,
    pub alpha: f64,
    pub width_factor: f64,
}

impl Default for DistillSettings {
    fn default() -> Self {
        Self {
            temperature: DEFAULT_TEMPERATURE,
            alpha: DEFAULT_ALPHA,
            width_factor: DEFAULT_WIDTH_FACTOR,
        }
    }
}

/// Every setting a pipeline command can depend on, with defaults filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Sensors present in the input data.
    pub sensors: SensorSet,
    /// Activity codes labelled as falls. Required for recorded data.
    pub fall_codes: Vec<u32>,
    pub window_len: usize,
    pub stride: usize,
    pub normalize: bool,
    pub rates: IngestSchema,
    pub split: SplitSettings,
    pub synth: SynthSettings,
    pub model: ModelSettings,
    pub train: TrainConfig,
    pub distill: DistillSettings,
    pub power: PowerSpecs,
    pub accuracy_floor: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sensors: SensorSet::FULL,
            fall_codes: Vec::new(),
            window_len: DEFAULT_WINDOW_LEN,
            stride: DEFAULT_WINDOW_LEN / 2,
            normalize: true,
            rates: IngestSchema::default(),
            split: SplitSettings::default(),
            synth: SynthSettings::default(),
            model: ModelSettings::default(),
            train: TrainConfig::default(),
            distill: DistillSettings::default(),
            power: PowerSpecs::default(),
            accuracy_floor: 0.9,
        }
    }
}

pub const KNOWN_KEYS: &[&str] = &[
    "seed",
    "sensors",
    "fall_codes",
    "window_len",
    "stride",
    "normalize",
    "rate.accelerometer",
    "rate.gyroscope",
    "rate.barometer",
    "split.mode",
    "split.seed",
    "split.test_fraction",
    "split.holdout_subjects",
    "split.holdout_count",
    "synth.n_per_class",
    "synth.noise_std",
    "synth.seed",
    "model.lstm_units",
    "model.hidden_units",
    "train.epochs",
    "train.batch_size",
    "train.learning_rate",
    "train.beta1",
    "train.beta2",
    "train.grad_clip_norm",
    "train.seed",
    "train.shuffle",
    "distill.temperature",
    "distill.alpha",
    "distill.width_factor",
    "power.voltage",
    "power.energy_per_mac",
    "power.inference_rate_hz",
    "select.floor",
];

/// Keys of the form `<prefix><sensor>` where sensor is `accelerometer`,
/// `gyroscope` or `barometer`.
pub const PER_SENSOR_PREFIXES: &[&str] = &["power.duty.", "power.current.", "power.voltage."];

fn sensor_from_key(key: &str, prefix: &str) -> Option<SensorKind> {
    match key.strip_prefix(prefix)? {
        "accelerometer" | "A" | "a" => Some(SensorKind::Accelerometer),
        "gyroscope" | "G" | "g" => Some(SensorKind::Gyroscope),
        "barometer" | "B" | "b" => Some(SensorKind::Barometer),
        _ => None,
    }
}

impl RunConfig {
    /// Sets every seed: synthetic data, splitting and training.
    pub fn set_seed(&mut self, seed: u64) {
        self.synth.seed = seed;
        self.split.seed = seed;
        self.train.seed = seed;
    }

    /// Overrides fields with the keys present in `kv`. The `seed` key is
    /// applied first so `synth.seed`, `split.seed` and `train.seed` can
    /// refine it. When `window_len` is set without `stride`, the stride
    /// follows as half the window.
    pub fn apply(&mut self, kv: &KeyValueConfig) -> Result<()> {
        kv.check_known(KNOWN_KEYS, PER_SENSOR_PREFIXES)?;
        if let Some(seed) = kv.get("seed")? {
            self.set_seed(seed);
        }
        kv.set("sensors", &mut self.sensors)?;
        if let Some(codes) = kv.get_u32_list("fall_codes")? {
            self.fall_codes = codes;
        }
        if let Some(len) = kv.get::<usize>("window_len")? {
            self.window_len = len;
            self.stride = (len / 2).max(1);
        }
        kv.set("stride", &mut self.stride)?;
        if let Some(b) = kv.get_bool("normalize")? {
            self.normalize = b;
        }
        kv.set("rate.accelerometer", &mut self.rates.accel_rate_hz)?;
        kv.set("rate.gyroscope", &mut self.rates.gyro_rate_hz)?;
        kv.set("rate.barometer", &mut self.rates.baro_rate_hz)?;

        kv.set("split.mode", &mut self.split.mode)?;
        kv.set("split.seed", &mut self.split.seed)?;
        kv.set("split.test_fraction", &mut self.split.test_fraction)?;
        if let Some(ids) = kv.get_u32_list("split.holdout_subjects")? {
            self.split.holdout_subjects = ids;
        }
        kv.set("split.holdout_count", &mut self.split.holdout_count)?;

        kv.set("synth.n_per_class", &mut self.synth.n_per_class)?;
        kv.set("synth.noise_std", &mut self.synth.noise_std)?;
        kv.set("synth.seed", &mut self.synth.seed)?;
        kv.set("model.lstm_units", &mut self.model.lstm_units)?;
        kv.set("model.hidden_units", &mut self.model.hidden_units)?;

        kv.set("train.epochs", &mut self.train.epochs)?;
        kv.set("train.batch_size", &mut self.train.batch_size)?;
        kv.set("train.learning_rate", &mut self.train.learning_rate)?;
        kv.set("train.beta1", &mut self.train.adam_betas.0)?;
        kv.set("train.beta2", &mut self.train.adam_betas.1)?;
        kv.set("train.grad_clip_norm", &mut self.train.grad_clip_norm)?;
        kv.set("train.seed", &mut self.train.seed)?;
        if let Some(b) = kv.get_bool("train.shuffle")? {
            self.train.shuffle = b;
        }

        kv.set("distill.temperature", &mut self.distill.temperature)?;
        kv.set("distill.alpha", &mut self.distill.alpha)?;
        kv.set("distill.width_factor", &mut self.distill.width_factor)?;

        if let Some(v) = kv.get("power.voltage")? {
            self.power.sensors.set_voltage(v);
        }
        kv.set("power.energy_per_mac", &mut self.power.compute.energy_per_mac_j)?;
        kv.set("power.inference_rate_hz", &mut self.power.compute.inference_rate_hz)?;
        let per_sensor: Vec<String> = kv
            .keys()
            .filter(|k| PER_SENSOR_PREFIXES.iter().any(|p| k.starts_with(p)))
            .map(str::to_string)
            .collect();
        for key in per_sensor {
            let (prefix, kind) = PER_SENSOR_PREFIXES
                .iter()
                .find_map(|p| sensor_from_key(&key, p).map(|k| (*p, k)))
                .ok_or_else(|| kv.error_at(&key, "unknown sensor name"))?;
            let spec = self.power.sensors.get_mut(kind);
            let slot = match prefix {
                "power.duty." => &mut spec.duty_cycle,
                "power.current." => &mut spec.current_a,
                _ => &mut spec.voltage_v,
            };
            kv.set(&key, slot)?;
        }
        kv.set("select.floor", &mut self.accuracy_floor)?;
        self.validate()
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply(&KeyValueConfig::load(path)?)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_len < 2 {
            return Err(Error::config(format!("window_len must be at least 2, got {}", self.window_len)));
        }
        if self.stride == 0 || self.stride > self.window_len {
            return Err(Error::config(format!(
                "stride must lie in 1..={}, got {}",
                self.window_len, self.stride
            )));
        }
        if !(self.split.test_fraction > 0.0 && self.split.test_fraction < 1.0) {
            return Err(Error::config(format!(
                "split.test_fraction must lie in (0, 1), got {}",
                self.split.test_fraction
            )));
        }
        if !(self.synth.noise_std >= 0.0 && self.synth.noise_std.is_finite()) {
            return Err(Error::config(format!(
                "synth.noise_std must be >= 0, got {}",
                self.synth.noise_std
            )));
        }
        if self.synth.n_per_class == 0 {
            return Err(Error::config("synth.n_per_class must be at least 1"));
        }
        self.rates.validate()?;
        self.train.validate()?;
        self.distill_config(SensorSet::FULL).validate()?;
        self.power.validate()
    }

    /// Fall codes as a set; empty when none were configured.
    pub fn fall_code_set(&self) -> BTreeSet<u32> {
        self.fall_codes.iter().copied().collect()
    }

    /// Distillation settings for a student restricted to `student`.
    pub fn distill_config(&self, student: SensorSet) -> DistillConfig {
        DistillConfig {
            temperature: self.distill.temperature,
            alpha: self.distill.alpha,
            student_sensor_set: student,
            width_factor: self.distill.width_factor,
            train: self.train.clone(),
        }
    }

    pub fn ingest_schema(&self) -> IngestSchema {
        IngestSchema {
            sensors: self.sensors,
            ..self.rates.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_blank_lines_and_trailing_comments() {
        let kv = KeyValueConfig::parse("# header\n\nwindow_len = 30 # note\n  stride=5\n", "t").unwrap();
        assert_eq!(kv.get_str("window_len"), Some("30"));
        assert_eq!(kv.get::<usize>("stride").unwrap(), Some(5));
        assert_eq!(kv.keys().count(), 2);
    }

    #[test]
    fn malformed_lines_report_position() {
        let err = KeyValueConfig::parse("a = 1\nnot a pair\n", "run.cfg").unwrap_err();
        assert!(err.to_string().contains("run.cfg:2"), "{err}");
        let dup = KeyValueConfig::parse("a = 1\na = 2\n", "run.cfg").unwrap_err();
        assert!(dup.to_string().contains("line 1"), "{dup}");
    }

    #[test]
    fn bad_values_name_key_and_line() {
        let kv = KeyValueConfig::parse("\nwindow_len = many\n", "c").unwrap();
        let err = RunConfig::default().apply(&kv).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("c:2") && msg.contains("window_len"), "{msg}");
        assert_eq!(err.category(), crate::error::ErrorCategory::Config);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let kv = KeyValueConfig::parse("windowlen = 3\n", "c").unwrap();
        assert!(RunConfig::default().apply(&kv).is_err());
        let kv = KeyValueConfig::parse("power.duty.thermometer = 0.5\n", "c").unwrap();
        assert!(RunConfig::default().apply(&kv).is_err());
    }

    #[test]
    fn integer_lists_and_ranges() {
        assert_eq!(parse_u32_list("1, 3,101-103").unwrap(), vec![1, 3, 101, 102, 103]);
        assert!(parse_u32_list("5-3").is_err());
        assert!(parse_u32_list("x").is_err());
    }

    #[test]
    fn defaults_are_valid() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!((cfg.window_len, cfg.stride), (20, 10));
        assert_eq!(cfg.split.mode, SplitMode::SubjectHoldout);
        assert_eq!((cfg.split.seed, cfg.split.holdout_count), (42, 3));
        assert!(cfg.normalize);
        assert!(cfg.fall_codes.is_empty());
    }

    #[test]
    fn every_documented_key_applies() {
        let text = "\
seed = 9
sensors = AB
fall_codes = 101-103, 110
window_len = 24
stride = 6
normalize = off
rate.barometer = 5
split.mode = random
split.test_fraction = 0.25
split.holdout_subjects = 2,4
train.seed = 11
train.epochs = 7
train.beta1 = 0.8
train.shuffle = false
model.lstm_units = 32
distill.alpha = 0.25
power.voltage = 1.8
power.duty.gyroscope = 0.5
power.current.A = 0.001
power.inference_rate_hz = 2
select.floor = 0.85
";
        let mut cfg = RunConfig::default();
        cfg.apply(&KeyValueConfig::parse(text, "c").unwrap()).unwrap();
        assert_eq!(cfg.sensors, "AB".parse().unwrap());
        assert_eq!(cfg.fall_codes, vec![101, 102, 103, 110]);
        assert_eq!((cfg.window_len, cfg.stride, cfg.normalize), (24, 6, false));
        assert_eq!(cfg.rates.baro_rate_hz, 5.0);
        assert_eq!(cfg.split.mode, SplitMode::Random);
        assert_eq!((cfg.split.seed, cfg.train.seed), (9, 11));
        assert_eq!(cfg.split.holdout_subjects, vec![2, 4]);
        assert_eq!((cfg.train.epochs, cfg.train.adam_betas.0, cfg.train.shuffle), (7, 0.8, false));
        assert_eq!(cfg.model.lstm_units, 32);
        assert_eq!(cfg.distill.alpha, 0.25);
        assert_eq!(cfg.power.sensors.barometer.voltage_v, 1.8);
        assert_eq!(cfg.power.sensors.gyroscope.duty_cycle, 0.5);
        assert_eq!(cfg.power.sensors.accelerometer.current_a, 0.001);
        assert_eq!(cfg.power.compute.inference_rate_hz, 2.0);
        assert_eq!(cfg.accuracy_floor, 0.85);
    }

    #[test]
    fn window_len_moves_default_stride() {
        let mut cfg = RunConfig::default();
        cfg.apply(&KeyValueConfig::parse("window_len = 40", "c").unwrap()).unwrap();
        assert_eq!(cfg.stride, 20);
    }

    #[test]
    fn invalid_combinations_fail_validation() {
        for text in ["stride = 30", "window_len = 1", "split.test_fraction = 1.0", "distill.alpha = 2", "train.learning_rate = 0"] {
            let kv = KeyValueConfig::parse(text, "c").unwrap();
            assert!(RunConfig::default().apply(&kv).is_err(), "{text}");
        }
    }

    #[test]
    fn split_settings_resolve() {
        let present: BTreeSet<u32> = (1..=15).collect();
        let spec = SplitSettings::default().resolve(&present).unwrap();
        match spec {
            SplitSpec::SubjectHoldout { subjects, seed } => {
                assert_eq!(subjects.len(), 3);
                assert_eq!(seed, 42);
            }
            other => panic!("{other:?}"),
        }
        let random = SplitSettings {
            mode: SplitMode::Random,
            ..SplitSettings::default()
        };
        assert!(matches!(random.resolve(&present).unwrap(), SplitSpec::Random { .. }));
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
    }
}
