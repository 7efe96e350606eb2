use crate::data::Label;
use crate::error::{Error, Result};
use crate::model::{ForwardTrace, Gradients, LstmClassifier};
use crate::tensor::{add_outer, matvec_t_into, sigmoid_scalar, Matrix2D};

/// Probabilities are clamped to `[BCE_EPS, 1 - BCE_EPS]` before taking logs.
pub const BCE_EPS: f64 = 1e-12;

/// Binary cross-entropy `−[y ln p + (1−y) ln(1−p)]`.
///
/// `y` is normally a hard label (0 or 1) but any target in `[0, 1]` is
/// accepted, which is how soft teacher targets are scored.
pub fn bce_loss(p: f64, y: f64) -> f64 {
    let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Per-example loss used by the training loop.
///
/// Returns the loss and its derivative with respect to the output logit for
/// the example at `index` of the training set.
pub trait Objective: Sync {
    fn loss_and_grad(&self, index: usize, logit: f64, label: Label) -> (f64, f64);
}

/// Plain binary cross-entropy on the hard label.
#[derive(Debug, Clone, Copy, Default)]
pub struct BinaryCrossEntropy;

impl Objective for BinaryCrossEntropy {
    fn loss_and_grad(&self, _index: usize, logit: f64, label: Label) -> (f64, f64) {
        let p = sigmoid_scalar(logit);
        let y = f64::from(label);
        (bce_loss(p, y), p - y)
    }
}

/// Backpropagates `d_logit` (the loss derivative with respect to the output
/// logit) through the dense head and every timestep of the LSTM.
pub fn backward_from_logit(model: &LstmClassifier, trace: &ForwardTrace, d_logit: f64) -> Result<Gradients> {
    let (d, h, k) = (
        model.topology.input_channels,
        model.topology.lstm_units,
        model.topology.hidden_units,
    );
    let steps = trace.len();
    if trace.inputs.rows() != d
        || trace.hidden.len() != steps * h
        || trace.gates.len() != steps * 4 * h
        || trace.dense_act.len() != k
    {
        return Err(Error::TraceMismatch(format!(
            "trace shapes do not fit topology {}",
            model.topology
        )));
    }
    let p = &model.params;
    let mut g = Gradients::zeros(&model.topology)?;

    // Output unit.
    g.b_out[0] = d_logit;
    add_outer(&mut g.w_out, &[d_logit], &trace.dense_act);

    // Dense ReLU layer.
    let d_dense: Vec<f64> = p
        .w_out
        .row(0)
        .iter()
        .zip(&trace.dense_pre)
        .map(|(&w, &a)| if a > 0.0 { w * d_logit } else { 0.0 })
        .collect();
    let h_last = &trace.hidden[(steps - 1) * h..];
    add_outer(&mut g.w_dense, &d_dense, h_last);
    g.b_dense.data_mut().copy_from_slice(&d_dense);

    // Through time.
    let mut dh = vec![0.0; h];
    matvec_t_into(&p.w_dense, &d_dense, &mut dh);
    let mut dc = vec![0.0; h];
    let mut d_gates = vec![0.0; 4 * h];
    let mut x = vec![0.0; d];
    let zeros = vec![0.0; h];
    for t in (0..steps).rev() {
        let gates = &trace.gates[t * 4 * h..(t + 1) * 4 * h];
        let (i, f, gg, o) = (&gates[..h], &gates[h..2 * h], &gates[2 * h..3 * h], &gates[3 * h..]);
        let c = &trace.cells[t * h..(t + 1) * h];
        let (c_prev, h_prev) = if t == 0 {
            (&zeros[..], &zeros[..])
        } else {
            (&trace.cells[(t - 1) * h..t * h], &trace.hidden[(t - 1) * h..t * h])
        };
        for u in 0..h {
            let tc = c[u].tanh();
            let d_o = dh[u] * tc;
            dc[u] += dh[u] * o[u] * (1.0 - tc * tc);
            let d_i = dc[u] * gg[u];
            let d_g = dc[u] * i[u];
            let d_f = dc[u] * c_prev[u];
            d_gates[u] = d_i * i[u] * (1.0 - i[u]);
            d_gates[h + u] = d_f * f[u] * (1.0 - f[u]);
            d_gates[2 * h + u] = d_g * (1.0 - gg[u] * gg[u]);
            d_gates[3 * h + u] = d_o * o[u] * (1.0 - o[u]);
            dc[u] *= f[u];
        }
        for (c_ix, xv) in x.iter_mut().enumerate() {
            *xv = trace.inputs.get(c_ix, t);
        }
        add_outer(&mut g.w_gates, &d_gates, &x);
        add_outer(&mut g.u_gates, &d_gates, h_prev);
        g.b_gates
            .data_mut()
            .iter_mut()
            .zip(&d_gates)
            .for_each(|(b, dg)| *b += dg);
        matvec_t_into(&p.u_gates, &d_gates, &mut dh);
    }
    Ok(g)
}

/// Exact gradient of `bce_loss(forward(window), y)` with respect to every
/// parameter. `trace` must come from `model.forward(window)`.
pub fn backward(model: &LstmClassifier, window: &Matrix2D, y: f64, trace: &ForwardTrace) -> Result<(f64, Gradients)> {
    if &trace.inputs != window {
        return Err(Error::TraceMismatch(format!(
            "trace was recorded on a {} window, got {}",
            trace.inputs.shape(),
            window.shape()
        )));
    }
    let p = trace.probability;
    let grads = backward_from_logit(model, trace, p - y)?;
    Ok((bce_loss(p, y), grads))
}
