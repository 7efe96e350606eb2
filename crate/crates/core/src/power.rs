//! Power estimation for sensor/model configurations and selection of the
//! cheapest configuration that meets an accuracy floor.

use std::cmp::Ordering;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{SensorKind, SensorSet, WindowedDataset};
use crate::distill::{distill, DistillConfig};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::model::{count_macs, LstmClassifier, ModelTopology};

pub const DEFAULT_VOLTAGE: f64 = 3.3;
pub const DEFAULT_DUTY_CYCLE: f64 = 1.0;
/// Operating currents in amps of the wrist device's sensors.
pub const ACCELEROMETER_CURRENT_A: f64 = 450e-6;
pub const GYROSCOPE_CURRENT_A: f64 = 0.6e-3;
pub const BAROMETER_CURRENT_A: f64 = 3.2e-3;
/// Placeholder controller energy per multiply-accumulate; calibrate for the
/// target hardware before relying on absolute numbers.
pub const DEFAULT_ENERGY_PER_MAC_J: f64 = 1e-10;
pub const DEFAULT_INFERENCE_RATE_HZ: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorPower {
    pub current_a: f64,
    pub voltage_v: f64,
    pub duty_cycle: f64,
}

impl SensorPower {
    pub fn with_current(current_a: f64) -> Self {
        Self {
            current_a,
            voltage_v: DEFAULT_VOLTAGE,
            duty_cycle: DEFAULT_DUTY_CYCLE,
        }
    }

    /// Average draw in milliwatts.
    pub fn milliwatts(&self) -> f64 {
        self.voltage_v * self.current_a * self.duty_cycle * 1000.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorPowerSpec {
    pub accelerometer: SensorPower,
    pub gyroscope: SensorPower,
    pub barometer: SensorPower,
}

impl Default for SensorPowerSpec {
    fn default() -> Self {
        Self {
            accelerometer: SensorPower::with_current(ACCELEROMETER_CURRENT_A),
            gyroscope: SensorPower::with_current(GYROSCOPE_CURRENT_A),
            barometer: SensorPower::with_current(BAROMETER_CURRENT_A),
        }
    }
}

impl SensorPowerSpec {
    pub fn get(&self, kind: SensorKind) -> &SensorPower {
        match kind {
            SensorKind::Accelerometer => &self.accelerometer,
            SensorKind::Gyroscope => &self.gyroscope,
            SensorKind::Barometer => &self.barometer,
        }
    }

    pub fn get_mut(&mut self, kind: SensorKind) -> &mut SensorPower {
        match kind {
            SensorKind::Accelerometer => &mut self.accelerometer,
            SensorKind::Gyroscope => &mut self.gyroscope,
            SensorKind::Barometer => &mut self.barometer,
        }
    }

    /// Sets the same voltage for every sensor.
    pub fn set_voltage(&mut self, voltage_v: f64) {
        for kind in SensorKind::ALL {
            self.get_mut(kind).voltage_v = voltage_v;
        }
    }

    pub fn validate(&self) -> Result<()> {
        for kind in SensorKind::ALL {
            let s = self.get(kind);
            if !(s.current_a > 0.0 && s.current_a.is_finite()) {
                return Err(Error::config(format!("{kind:?} current must be > 0, got {}", s.current_a)));
            }
            if !(s.voltage_v > 0.0 && s.voltage_v.is_finite()) {
                return Err(Error::config(format!("{kind:?} voltage must be > 0, got {}", s.voltage_v)));
            }
            if !(s.duty_cycle > 0.0 && s.duty_cycle <= 1.0) {
                return Err(Error::config(format!(
                    "{kind:?} duty cycle must lie in (0, 1], got {}",
                    s.duty_cycle
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComputePowerSpec {
    pub energy_per_mac_j: f64,
    pub inference_rate_hz: f64,
}

impl Default for ComputePowerSpec {
    fn default() -> Self {
        Self {
            energy_per_mac_j: DEFAULT_ENERGY_PER_MAC_J,
            inference_rate_hz: DEFAULT_INFERENCE_RATE_HZ,
        }
    }
}

impl ComputePowerSpec {
    /// A spec whose compute term is exactly zero.
    pub fn zero() -> Self {
        Self {
            energy_per_mac_j: 0.0,
            inference_rate_hz: 0.0,
        }
    }

    /// Zero is accepted for either field and switches the compute term off.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("energy per MAC", self.energy_per_mac_j),
            ("inference rate", self.inference_rate_hz),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PowerSpecs {
    pub sensors: SensorPowerSpec,
    pub compute: ComputePowerSpec,
}

impl PowerSpecs {
    pub fn validate(&self) -> Result<()> {
        self.sensors.validate()?;
        self.compute.validate()
    }
}

/// Sensor draw plus controller compute power, in milliwatts.
pub fn estimate_power(
    sensor_set: SensorSet,
    topology: &ModelTopology,
    window_len: usize,
    sensors: &SensorPowerSpec,
    compute: &ComputePowerSpec,
) -> f64 {
    let sensor_mw: f64 = sensor_set.kinds().map(|k| sensors.get(k).milliwatts()).sum();
    let macs = count_macs(topology, window_len) as f64;
    sensor_mw + compute.energy_per_mac_j * macs * compute.inference_rate_hz * 1000.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateConfig {
    pub sensor_set: SensorSet,
    pub topology: ModelTopology,
    pub window_len: usize,
    /// Fraction in [0, 1].
    pub accuracy: f64,
    pub power_mw: f64,
}

impl CandidateConfig {
    pub fn new(sensor_set: SensorSet, topology: ModelTopology, window_len: usize, accuracy: f64, specs: &PowerSpecs) -> Self {
        let power_mw = estimate_power(sensor_set, &topology, window_len, &specs.sensors, &specs.compute);
        Self {
            sensor_set,
            topology,
            window_len,
            accuracy,
            power_mw,
        }
    }

    pub fn recompute_power(&self, specs: &PowerSpecs) -> f64 {
        estimate_power(self.sensor_set, &self.topology, self.window_len, &specs.sensors, &specs.compute)
    }
}

/// Preference order among candidates that all meet the floor: lower power,
/// then higher accuracy, then fewer sensors, then sensor label.
pub fn preference(a: &CandidateConfig, b: &CandidateConfig) -> Ordering {
    a.power_mw
        .total_cmp(&b.power_mw)
        .then_with(|| b.accuracy.total_cmp(&a.accuracy))
        .then_with(|| a.sensor_set.len().cmp(&b.sensor_set.len()))
        .then_with(|| a.sensor_set.label().cmp(&b.sensor_set.label()))
}

/// Candidate indices that no other candidate dominates. `b` dominates `a`
/// when it is at least as accurate and strictly cheaper.
pub fn pareto_front(candidates: &[CandidateConfig]) -> Vec<usize> {
    let mut front: Vec<usize> = (0..candidates.len())
        .filter(|&i| {
            let a = &candidates[i];
            !candidates
                .iter()
                .any(|b| b.accuracy >= a.accuracy && b.power_mw < a.power_mw)
        })
        .collect();
    front.sort_by(|&i, &j| preference(&candidates[i], &candidates[j]).then(i.cmp(&j)));
    front
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedSubset {
    pub sensor_set: SensorSet,
    pub error: String,
}

/// How the candidates of a selection loop were produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionProvenance {
    pub distill: DistillConfig,
    pub specs: PowerSpecs,
    pub teacher_fingerprint: String,
    pub teacher_topology: String,
    pub subsets: Vec<SensorSet>,
    pub skipped: Vec<SkippedSubset>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub candidates: Vec<CandidateConfig>,
    pub accuracy_floor: f64,
    /// Index into `candidates`.
    pub chosen_index: Option<usize>,
    pub chosen: Option<CandidateConfig>,
    /// Indices into `candidates`, cheapest first.
    pub pareto_indices: Vec<usize>,
    pub pareto_front: Vec<CandidateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<SelectionProvenance>,
}

impl SelectionReport {
    pub fn to_text_table(&self) -> String {
        let mut order: Vec<usize> = (0..self.candidates.len()).collect();
        order.sort_by(|&i, &j| preference(&self.candidates[i], &self.candidates[j]).then(i.cmp(&j)));
        let mut s = format!(
            "{:<8} {:<14} {:>9} {:>11}  {}\n",
            "sensors", "topology", "accuracy", "power_mw", "note"
        );
        for i in order {
            let c = &self.candidates[i];
            let mut note = Vec::new();
            if self.chosen_index == Some(i) {
                note.push("chosen");
            }
            if self.pareto_indices.contains(&i) {
                note.push("pareto");
            }
            if c.accuracy < self.accuracy_floor {
                note.push("below floor");
            }
            let _ = writeln!(
                s,
                "{:<8} {:<14} {:>9.4} {:>11.6}  {}",
                c.sensor_set.label(),
                c.topology.to_string(),
                c.accuracy,
                c.power_mw,
                note.join(", ")
            );
        }
        let _ = writeln!(
            s,
            "floor {}: {}",
            self.accuracy_floor,
            self.chosen
                .as_ref()
                .map_or_else(|| "no candidate qualifies".to_string(), |c| format!("chose {}", c.sensor_set))
        );
        s
    }
}

/// Picks the lowest-power candidate whose accuracy reaches the floor.
pub fn select(candidates: Vec<CandidateConfig>, accuracy_floor: f64) -> SelectionReport {
    let chosen_index = (0..candidates.len())
        .filter(|&i| candidates[i].accuracy >= accuracy_floor)
        .min_by(|&i, &j| preference(&candidates[i], &candidates[j]).then(i.cmp(&j)));
    let pareto_indices = pareto_front(&candidates);
    SelectionReport {
        chosen: chosen_index.map(|i| candidates[i].clone()),
        pareto_front: pareto_indices.iter().map(|&i| candidates[i].clone()).collect(),
        chosen_index,
        pareto_indices,
        accuracy_floor,
        candidates,
        provenance: None,
    }
}

/// Distils one student per subset from `teacher`, scores it, prices it and
/// selects among the results. A subset whose training fails is recorded in
/// the provenance and left out of the selection.
#[allow(clippy::too_many_arguments)]
pub fn run_selection_loop(
    teacher: &LstmClassifier,
    train_full: &WindowedDataset,
    test_full: &WindowedDataset,
    subsets: &[SensorSet],
    distill_cfg: &DistillConfig,
    specs: &PowerSpecs,
    accuracy_floor: f64,
) -> Result<SelectionReport> {
    specs.validate()?;
    distill_cfg.validate()?;
    if subsets.is_empty() {
        return Err(Error::config("no sensor subsets requested"));
    }
    let outcomes: Vec<(SensorSet, Result<CandidateConfig>)> = subsets
        .par_iter()
        .map(|&sensors| {
            let cfg = DistillConfig {
                student_sensor_set: sensors,
                ..distill_cfg.clone()
            };
            let outcome = distill(teacher, train_full, test_full, &cfg).and_then(|(student, _)| {
                let report = evaluate(&student, &test_full.restrict(sensors)?)?;
                Ok(CandidateConfig::new(
                    sensors,
                    student.topology,
                    train_full.window_len,
                    report.accuracy,
                    specs,
                ))
            });
            (sensors, outcome)
        })
        .collect();
    let mut candidates = Vec::new();
    let mut skipped = Vec::new();
    for (sensors, outcome) in outcomes {
        match outcome {
            Ok(c) => candidates.push(c),
            Err(e) => {
                log::warn!("skipping sensors {sensors}: {e}");
                skipped.push(SkippedSubset {
                    sensor_set: sensors,
                    error: e.to_string(),
                });
            }
        }
    }
    let mut report = select(candidates, accuracy_floor);
    report.provenance = Some(SelectionProvenance {
        distill: distill_cfg.clone(),
        specs: specs.clone(),
        teacher_fingerprint: teacher.fingerprint(),
        teacher_topology: teacher.topology.to_string(),
        subsets: subsets.to_vec(),
        skipped,
    });
    Ok(report)
}
