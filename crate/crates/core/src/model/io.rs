use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LstmClassifier, LstmParams, ModelTopology};
use crate::data::{NormStats, SensorSet};
use crate::error::{Error, Result};
use crate::tensor::{Matrix2D, Vector};
use crate::util::write_atomic;

pub const FORMAT_VERSION: u32 = 1;

/// On-disk JSON layout of a classifier.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub topology: ModelTopology,
    pub sensor_set: SensorSet,
    pub seed: u64,
    /// Always `["i", "f", "g", "o"]`: row-block order of the gate tensors.
    pub gate_order: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<NormStats>,
    pub weights: WeightArrays,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightArrays {
    pub w_gates: Vec<Vec<f64>>,
    pub u_gates: Vec<Vec<f64>>,
    pub b_gates: Vec<f64>,
    pub w_dense: Vec<Vec<f64>>,
    pub b_dense: Vec<f64>,
    pub w_out: Vec<Vec<f64>>,
    pub b_out: Vec<f64>,
}

const GATE_ORDER: [&str; 4] = ["i", "f", "g", "o"];

impl From<&LstmClassifier> for ModelFile {
    fn from(m: &LstmClassifier) -> Self {
        let p = &m.params;
        ModelFile {
            format_version: FORMAT_VERSION,
            topology: m.topology,
            sensor_set: m.sensor_set,
            seed: m.seed,
            gate_order: GATE_ORDER.iter().map(|s| s.to_string()).collect(),
            normalization: m.normalization.clone(),
            weights: WeightArrays {
                w_gates: p.w_gates.to_rows(),
                u_gates: p.u_gates.to_rows(),
                b_gates: p.b_gates.data().to_vec(),
                w_dense: p.w_dense.to_rows(),
                b_dense: p.b_dense.data().to_vec(),
                w_out: p.w_out.to_rows(),
                b_out: p.b_out.data().to_vec(),
            },
        }
    }
}

impl TryFrom<ModelFile> for LstmClassifier {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        if f.format_version != FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: f.format_version,
                expected: FORMAT_VERSION,
            });
        }
        if f.gate_order != GATE_ORDER {
            return Err(Error::ShapeInconsistency(format!(
                "unsupported gate order {:?}",
                f.gate_order
            )));
        }
        let matrix = |name: &str, rows: &[Vec<f64>]| {
            Matrix2D::from_rows(rows).map_err(|e| Error::ShapeInconsistency(format!("{name}: {e}")))
        };
        let w = &f.weights;
        let params = LstmParams {
            w_gates: matrix("w_gates", &w.w_gates)?,
            u_gates: matrix("u_gates", &w.u_gates)?,
            b_gates: Vector::from_vec(w.b_gates.clone()),
            w_dense: matrix("w_dense", &w.w_dense)?,
            b_dense: Vector::from_vec(w.b_dense.clone()),
            w_out: matrix("w_out", &w.w_out)?,
            b_out: Vector::from_vec(w.b_out.clone()),
        };
        let model = LstmClassifier {
            topology: f.topology,
            sensor_set: f.sensor_set,
            seed: f.seed,
            params,
            normalization: f.normalization,
        };
        model.validate()?;
        Ok(model)
    }
}

impl LstmClassifier {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string(&ModelFile::from(self))?;
        s.push('\n');
        Ok(s)
    }

    /// Parses a model file, distinguishing version mismatches, truncated or
    /// malformed JSON, and shape inconsistencies.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Truncated(e.to_string()))?;
        if let Some(v) = value.get("format_version").and_then(serde_json::Value::as_u64) {
            if v != u64::from(FORMAT_VERSION) {
                return Err(Error::FormatVersion {
                    found: v.try_into().unwrap_or(u32::MAX),
                    expected: FORMAT_VERSION,
                });
            }
        }
        let file: ModelFile =
            serde_json::from_value(value).map_err(|e| Error::Truncated(e.to_string()))?;
        LstmClassifier::try_from(file)
    }
}

pub fn save_model(model: &LstmClassifier, path: &Path) -> Result<()> {
    write_atomic(path, model.to_json()?.as_bytes())
}

pub fn load_model(path: &Path) -> Result<LstmClassifier> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    LstmClassifier::from_json(&text).map_err(|e| e.context(format!("loading {}", path.display())))
}
