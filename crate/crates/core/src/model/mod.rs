//! The classifier: one LSTM layer read out at the last timestep, a ReLU
//! dense layer and a single sigmoid output unit.
//!
//! The cell is the standard LSTM with a forget gate and no peepholes:
//!
//! ```text
//! i = σ(Wᵢx + Uᵢh + bᵢ)    f = σ(W_f x + U_f h + b_f)
//! g = tanh(W_g x + U_g h + b_g)    o = σ(W_o x + U_o h + b_o)
//! c' = f ⊙ c + i ⊙ g       h' = o ⊙ tanh(c')
//! ```
//!
//! The four gates are stacked in `[i, f, g, o]` order in every gate matrix
//! and bias, which is also the order written to model files.

mod io;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{Label, NormStats, SensorSet};
use crate::error::{Error, Result};
use crate::tensor::{self, affine_into, dot, relu_scalar, sigmoid_scalar, Matrix2D, Vector};

pub use io::{load_model, save_model, ModelFile, FORMAT_VERSION};

pub const TEACHER_LSTM_UNITS: usize = 512;
pub const TEACHER_HIDDEN_UNITS: usize = 128;
pub const FORGET_BIAS_INIT: f64 = 1.0;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Layer sizes of a classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelTopology {
    pub input_channels: usize,
    pub lstm_units: usize,
    pub hidden_units: usize,
    pub output_units: usize,
}

impl ModelTopology {
    pub fn new(input_channels: usize, lstm_units: usize, hidden_units: usize) -> Result<Self> {
        let t = Self {
            input_channels,
            lstm_units,
            hidden_units,
            output_units: 1,
        };
        t.validate()?;
        Ok(t)
    }

    /// The full-size network: 512 LSTM units, 128 hidden units, one output.
    pub fn teacher(sensors: SensorSet) -> Self {
        Self {
            input_channels: sensors.channel_count(),
            lstm_units: TEACHER_LSTM_UNITS,
            hidden_units: TEACHER_HIDDEN_UNITS,
            output_units: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.output_units != 1 {
            return Err(Error::config(format!(
                "the classifier has exactly one output unit, got {}",
                self.output_units
            )));
        }
        if self.input_channels == 0 || self.lstm_units == 0 || self.hidden_units == 0 {
            return Err(Error::config(format!("layer sizes must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        let h = self.lstm_units;
        4 * h * (self.input_channels + h + 1) + self.hidden_units * (h + 1) + self.hidden_units + 1
    }
}

impl std::fmt::Display for ModelTopology {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}->{}->{}->{}",
            self.input_channels, self.lstm_units, self.hidden_units, self.output_units
        )
    }
}

/// Multiply-accumulate operations in one forward pass over `window_len` steps.
pub fn count_macs(t: &ModelTopology, window_len: usize) -> u64 {
    let (d, h, k) = (
        t.input_channels as u64,
        t.lstm_units as u64,
        t.hidden_units as u64,
    );
    window_len as u64 * 4 * h * (d + h + 1) + k * (h + 1) + (k + 1)
}

pub const PARAM_NAMES: [&str; 7] = [
    "w_gates", "u_gates", "b_gates", "w_dense", "b_dense", "w_out", "b_out",
];

/// Every trainable tensor of the network. Also used, with identical shapes,
/// for gradients and optimiser state.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// `4h × d`, input-to-gate weights.
    pub w_gates: Matrix2D,
    /// `4h × h`, recurrent weights.
    pub u_gates: Matrix2D,
    /// `4h`
    pub b_gates: Vector,
    /// `hidden × h`
    pub w_dense: Matrix2D,
    pub b_dense: Vector,
    /// `1 × hidden`
    pub w_out: Matrix2D,
    pub b_out: Vector,
}

/// Gradients share the parameter layout.
pub type Gradients = LstmParams;

impl LstmParams {
    pub fn zeros(t: &ModelTopology) -> Result<Self> {
        let (d, h, k) = (t.input_channels, t.lstm_units, t.hidden_units);
        Ok(Self {
            w_gates: Matrix2D::zeros(4 * h, d)?,
            u_gates: Matrix2D::zeros(4 * h, h)?,
            b_gates: Vector::zeros(4 * h),
            w_dense: Matrix2D::zeros(k, h)?,
            b_dense: Vector::zeros(k),
            w_out: Matrix2D::zeros(1, k)?,
            b_out: Vector::zeros(1),
        })
    }

    /// Flat views in [`PARAM_NAMES`] order.
    pub fn tensors(&self) -> [&[f64]; 7] {
        [
            self.w_gates.data(),
            self.u_gates.data(),
            self.b_gates.data(),
            self.w_dense.data(),
            self.b_dense.data(),
            self.w_out.data(),
            self.b_out.data(),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 7] {
        [
            self.w_gates.data_mut(),
            self.u_gates.data_mut(),
            self.b_gates.data_mut(),
            self.w_dense.data_mut(),
            self.b_dense.data_mut(),
            self.w_out.data_mut(),
            self.b_out.data_mut(),
        ]
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// `self += other`, element by element.
    pub fn add_assign(&mut self, other: &LstmParams) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
        }
    }

    fn shape_matches(&self, t: &ModelTopology) -> bool {
        let (d, h, k) = (t.input_channels, t.lstm_units, t.hidden_units);
        self.w_gates.shape() == tensor::Shape(4 * h, d)
            && self.u_gates.shape() == tensor::Shape(4 * h, h)
            && self.b_gates.len() == 4 * h
            && self.w_dense.shape() == tensor::Shape(k, h)
            && self.b_dense.len() == k
            && self.w_out.shape() == tensor::Shape(1, k)
            && self.b_out.len() == 1
    }
}

/// A trained or freshly initialised fall classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmClassifier {
    pub topology: ModelTopology,
    pub sensor_set: SensorSet,
    /// Seed the parameters were initialised from.
    pub seed: u64,
    pub params: LstmParams,
    /// Input standardisation the model was trained with, if any.
    pub normalization: Option<NormStats>,
}

/// Gate activations of one cell step, `[i, f, g, o]` stacked.
#[derive(Debug, Clone, PartialEq)]
pub struct GateCache {
    pub gates: Vector,
}

impl GateCache {
    fn block(&self, k: usize) -> &[f64] {
        let h = self.gates.len() / 4;
        &self.gates.data()[k * h..(k + 1) * h]
    }

    pub fn input(&self) -> &[f64] {
        self.block(0)
    }

    pub fn forget(&self) -> &[f64] {
        self.block(1)
    }

    pub fn candidate(&self) -> &[f64] {
        self.block(2)
    }

    pub fn output(&self) -> &[f64] {
        self.block(3)
    }
}

/// Activations cached by [`LstmClassifier::forward`] for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// The window the trace was computed on.
    pub inputs: Matrix2D,
    /// `T × 4h`: post-activation gates per step.
    pub gates: Vec<f64>,
    /// `T × h`: cell state after each step.
    pub cells: Vec<f64>,
    /// `T × h`: hidden state after each step.
    pub hidden: Vec<f64>,
    /// Dense layer pre-activation.
    pub dense_pre: Vec<f64>,
    /// Dense layer output after ReLU.
    pub dense_act: Vec<f64>,
    pub logit: f64,
    pub probability: f64,
}

impl ForwardTrace {
    pub fn len(&self) -> usize {
        self.inputs.cols()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

fn glorot(rng: &mut ChaCha8Rng, m: &mut Matrix2D, fan_in: usize, fan_out: usize) {
    let limit = glorot_limit(fan_in, fan_out);
    m.data_mut()
        .iter_mut()
        .for_each(|w| *w = rng.random_range(-limit..=limit));
}

/// Half-width of the Glorot-uniform interval.
pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Glorot-uniform weights, zero biases except a forget-gate bias of one.
pub fn init_params(topology: ModelTopology, sensor_set: SensorSet, seed: u64) -> Result<LstmClassifier> {
    topology.validate()?;
    if topology.input_channels != sensor_set.channel_count() {
        return Err(Error::config(format!(
            "topology expects {} input channels but sensor set {sensor_set} has {}",
            topology.input_channels,
            sensor_set.channel_count()
        )));
    }
    let (d, h, k) = (topology.input_channels, topology.lstm_units, topology.hidden_units);
    let mut p = LstmParams::zeros(&topology)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    glorot(&mut rng, &mut p.w_gates, d, 4 * h);
    glorot(&mut rng, &mut p.u_gates, h, 4 * h);
    glorot(&mut rng, &mut p.w_dense, h, k);
    glorot(&mut rng, &mut p.w_out, k, 1);
    p.b_gates.data_mut()[h..2 * h].fill(FORGET_BIAS_INIT);
    Ok(LstmClassifier {
        topology,
        sensor_set,
        seed,
        params: p,
        normalization: None,
    })
}

impl LstmClassifier {
    /// Builds a classifier from explicit parameters, checking every shape.
    pub fn from_params(
        topology: ModelTopology,
        sensor_set: SensorSet,
        seed: u64,
        params: LstmParams,
    ) -> Result<Self> {
        let m = Self {
            topology,
            sensor_set,
            seed,
            params,
            normalization: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        self.topology
            .validate()
            .map_err(|e| Error::ShapeInconsistency(e.to_string()))?;
        if self.topology.input_channels != self.sensor_set.channel_count() {
            return Err(Error::ShapeInconsistency(format!(
                "{} input channels declared for sensor set {}",
                self.topology.input_channels, self.sensor_set
            )));
        }
        if !self.params.shape_matches(&self.topology) {
            return Err(Error::ShapeInconsistency(format!(
                "parameter shapes do not match topology {}",
                self.topology
            )));
        }
        if let Some(n) = &self.normalization {
            if n.mean.len() != self.topology.input_channels || n.std.len() != n.mean.len() {
                return Err(Error::ShapeInconsistency(
                    "normalization statistics do not match the input channels".into(),
                ));
            }
        }
        Ok(())
    }

    /// SHA-256 over the topology, sensor set and the bit patterns of every
    /// parameter.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.topology.to_string().as_bytes());
        h.update(self.sensor_set.label().as_bytes());
        for t in self.params.tensors() {
            for v in t {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.topology.input_channels {
            return Err(Error::shape(
                "lstm input",
                format!("{len} channels"),
                format!("{} expected", self.topology.input_channels),
            ));
        }
        Ok(())
    }

    /// One cell update written into caller buffers. `gates` has length `4h`.
    fn cell_step_into(
        &self,
        x: &[f64],
        h_prev: &[f64],
        c_prev: &[f64],
        gates: &mut [f64],
        c_out: &mut [f64],
        h_out: &mut [f64],
    ) {
        let h = self.topology.lstm_units;
        let p = &self.params;
        affine_into(&p.w_gates, x, p.b_gates.data(), gates);
        for (g, row) in gates.iter_mut().zip(p.u_gates.data().chunks_exact(h)) {
            *g += dot(row, h_prev);
        }
        let (ifg, o) = gates.split_at_mut(3 * h);
        let (i_f, g) = ifg.split_at_mut(2 * h);
        let (i, f) = i_f.split_at_mut(h);
        i.iter_mut().for_each(|v| *v = sigmoid_scalar(*v));
        f.iter_mut().for_each(|v| *v = sigmoid_scalar(*v));
        g.iter_mut().for_each(|v| *v = v.tanh());
        o.iter_mut().for_each(|v| *v = sigmoid_scalar(*v));
        for u in 0..h {
            c_out[u] = f[u] * c_prev[u] + i[u] * g[u];
            h_out[u] = o[u] * c_out[u].tanh();
        }
    }

    /// A single LSTM cell update. Returns `(h_t, c_t, gates)`.
    pub fn lstm_cell_step(
        &self,
        x: &Vector,
        h_prev: &Vector,
        c_prev: &Vector,
    ) -> Result<(Vector, Vector, GateCache)> {
        self.check_input(x.len())?;
        let h = self.topology.lstm_units;
        if h_prev.len() != h || c_prev.len() != h {
            return Err(Error::shape(
                "lstm state",
                format!("h {} / c {}", h_prev.len(), c_prev.len()),
                format!("{h} units"),
            ));
        }
        let mut gates = Vector::zeros(4 * h);
        let mut c = Vector::zeros(h);
        let mut hn = Vector::zeros(h);
        self.cell_step_into(
            x.data(),
            h_prev.data(),
            c_prev.data(),
            gates.data_mut(),
            c.data_mut(),
            hn.data_mut(),
        );
        Ok((hn, c, GateCache { gates }))
    }

    /// Runs the window (`channels × T`, T ≥ 1) through the network from zero
    /// state and returns the fall probability with the cached activations.
    pub fn forward(&self, window: &Matrix2D) -> Result<(f64, ForwardTrace)> {
        self.check_input(window.rows())?;
        let steps = window.cols();
        let (d, h, k) = (
            self.topology.input_channels,
            self.topology.lstm_units,
            self.topology.hidden_units,
        );
        let mut gates = vec![0.0; steps * 4 * h];
        let mut cells = vec![0.0; steps * h];
        let mut hidden = vec![0.0; steps * h];
        let zeros = vec![0.0; h];
        let mut x = vec![0.0; d];
        for t in 0..steps {
            for (c, xv) in x.iter_mut().enumerate() {
                *xv = window.get(c, t);
            }
            let (c_done, c_rest) = cells.split_at_mut(t * h);
            let (h_done, h_rest) = hidden.split_at_mut(t * h);
            let (h_prev, c_prev) = if t == 0 {
                (&zeros[..], &zeros[..])
            } else {
                (&h_done[(t - 1) * h..], &c_done[(t - 1) * h..])
            };
            self.cell_step_into(
                &x,
                h_prev,
                c_prev,
                &mut gates[t * 4 * h..(t + 1) * 4 * h],
                &mut c_rest[..h],
                &mut h_rest[..h],
            );
        }
        let h_last = &hidden[(steps - 1) * h..];
        let mut dense_pre = vec![0.0; k];
        affine_into(&self.params.w_dense, h_last, self.params.b_dense.data(), &mut dense_pre);
        let dense_act: Vec<f64> = dense_pre.iter().map(|&v| relu_scalar(v)).collect();
        let logit = self.params.b_out[0] + dot(self.params.w_out.row(0), &dense_act);
        let probability = sigmoid_scalar(logit);
        Ok((
            probability,
            ForwardTrace {
                inputs: window.clone(),
                gates,
                cells,
                hidden,
                dense_pre,
                dense_act,
                logit,
                probability,
            },
        ))
    }

    pub fn probability(&self, window: &Matrix2D) -> Result<f64> {
        Ok(self.forward(window)?.0)
    }

    pub fn logit(&self, window: &Matrix2D) -> Result<f64> {
        Ok(self.forward(window)?.1.logit)
    }

    /// `1` ("Fall") iff the probability reaches `threshold`; ties count as falls.
    pub fn predict_label(&self, window: &Matrix2D, threshold: f64) -> Result<Label> {
        Ok(Label::from(self.probability(window)? >= threshold))
    }
}
