use super::*;
use crate::data::{synth_generate, SensorKind, SensorSet};
use crate::model::{init_params, ModelTopology};
use crate::tensor::sigmoid_scalar;
use crate::testutil::{random_model, random_window, zero_model};

#[test]
fn bce_reference_values() {
    assert!((bce_loss(0.5, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
    assert!(bce_loss(1.0 - BCE_EPS, 1.0) < 2e-12);
    assert!(bce_loss(1.0, 1.0) > 0.0);
    // p = σ(1) gives 1 + ln(1 + e^-1) for a negative example.
    let expected = 1.3132616875182228;
    assert!((bce_loss(sigmoid_scalar(1.0), 0.0) - expected).abs() < 1e-15);
    assert!((bce_loss(0.731058, 0.0) - 1.3132595360111048).abs() < 1e-12);
    assert!(bce_loss(0.0, 1.0).is_finite());
}

fn tiny_instance(seed: u64) -> (LstmClassifier, Matrix2D, f64) {
    let d = [1, 3, 4][(seed % 3) as usize];
    let h = 1 + (seed / 3 % 4) as usize;
    let k = 1 + (seed / 12 % 3) as usize;
    let t = 1 + (seed % 5) as usize;
    let model = random_model(d, h, k, 1000 + seed);
    let window = random_window(d, t, 2000 + seed);
    (model, window, (seed % 2) as f64)
}

#[test]
fn backprop_matches_finite_differences() {
    for seed in 0..24 {
        let (model, window, y) = tiny_instance(seed);
        let report = grad_check(&model, &window, y, DEFAULT_DELTA, DEFAULT_TOLERANCE).unwrap();
        assert!(
            report.passed,
            "seed {seed} topology {}: {:?}",
            model.topology,
            report.params
        );
        assert_eq!(report.params.len(), 7);
    }
}

#[test]
fn corrupted_output_gradient_is_named() {
    let (model, window, y) = tiny_instance(5);
    let (_, trace) = model.forward(&window).unwrap();
    let (_, mut grads) = backward(&model, &window, y, &trace).unwrap();
    grads.w_out.data_mut()[0] += 0.5;
    let report = compare_gradients(&model, &window, y, DEFAULT_DELTA, DEFAULT_TOLERANCE, &grads).unwrap();
    assert!(!report.passed);
    assert_eq!(report.failing().collect::<Vec<_>>(), vec!["w_out"]);
}

#[test]
fn zero_model_gradients_are_finite() {
    let model = zero_model("A");
    let window = random_window(3, 4, 1);
    let report = grad_check(&model, &window, 1.0, DEFAULT_DELTA, DEFAULT_TOLERANCE).unwrap();
    assert!(report.params.iter().all(|p| p.max_rel_error.is_finite()));
    assert!(report.passed);
}

#[test]
fn output_bias_gradient_vanishes_at_target() {
    let (model, window, _) = tiny_instance(7);
    let (p, trace) = model.forward(&window).unwrap();
    let (_, grads) = backward(&model, &window, p, &trace).unwrap();
    assert_eq!(grads.b_out[0], 0.0);
    assert!(grads.global_norm() == 0.0);
}

#[test]
fn backward_rejects_foreign_trace() {
    let (model, window, y) = tiny_instance(3);
    let (_, trace) = model.forward(&window).unwrap();
    let other = random_window(window.rows(), window.cols(), 99);
    assert!(matches!(
        backward(&model, &other, y, &trace),
        Err(Error::TraceMismatch(_))
    ));
}

#[test]
fn duplicated_window_gives_single_window_gradient() {
    let (model, window, _) = tiny_instance(10);
    let windows = vec![window];
    let labels = vec![1];
    let (l1, g1) = batch_gradients(&model, &windows, &labels, &[0], &BinaryCrossEntropy).unwrap();
    let (l2, g2) = batch_gradients(&model, &windows, &labels, &[0, 0], &BinaryCrossEntropy).unwrap();
    assert_eq!(l1, l2);
    assert_eq!(g1, g2);
    let (_, g6) = batch_gradients(&model, &windows, &labels, &[0; 6], &BinaryCrossEntropy).unwrap();
    for (a, b) in g1.tensors().iter().zip(g6.tensors()) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= 1e-15 * x.abs().max(1.0));
        }
    }
}

#[test]
fn clipping_bounds_global_norm() {
    let (model, window, y) = tiny_instance(11);
    let (_, trace) = model.forward(&window).unwrap();
    let (_, mut g) = backward(&model, &window, y, &trace).unwrap();
    g.scale(1e6 / g.global_norm());
    let before = clip_global_norm(&mut g, 5.0);
    assert!((before - 1e6).abs() < 1e-3);
    assert!(g.global_norm() <= 5.0 + 1e-9);
    let mut small = g.clone();
    small.scale(1e-3);
    let kept = small.clone();
    clip_global_norm(&mut small, 5.0);
    assert_eq!(small, kept);
}

fn noise_free(n_per_class: usize, seed: u64) -> (WindowedDataset, WindowedDataset) {
    let train_ds = synth_generate(n_per_class, 20, SensorSet::FULL, seed, 0.0).unwrap();
    let test_ds = synth_generate(n_per_class / 2, 20, SensorSet::FULL, seed + 1, 0.0).unwrap();
    (train_ds, test_ds)
}

fn tiny_teacher(seed: u64) -> LstmClassifier {
    init_params(ModelTopology::new(7, 8, 4).unwrap(), SensorSet::FULL, seed).unwrap()
}

fn quick_cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 16,
        learning_rate: 1e-2,
        seed: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn vanishing_learning_rate_keeps_parameters() {
    let (train_ds, test_ds) = noise_free(10, 1);
    let model = tiny_teacher(1);
    let cfg = TrainConfig {
        learning_rate: 1e-300,
        ..quick_cfg(2)
    };
    let (trained, log) = train(&model, &train_ds, &test_ds, &cfg).unwrap();
    assert_eq!(log.epochs.len(), 2);
    for (a, b) in model.params.tensors().iter().zip(trained.params.tensors()) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-290, "{x} vs {y}");
        }
    }
}

#[test]
fn noise_free_data_is_learned_perfectly() {
    let (train_ds, test_ds) = noise_free(50, 4);
    let (trained, log) = train(&tiny_teacher(2), &train_ds, &test_ds, &quick_cfg(30)).unwrap();
    let best = log.best().unwrap();
    assert!(log.epochs.iter().any(|e| e.train_acc == 1.0), "{}", log.to_csv());
    assert_eq!(evaluate(&trained, &test_ds).unwrap().accuracy, best.test_acc);
}

#[test]
fn early_epoch_losses_do_not_rise() {
    let (train_ds, test_ds) = noise_free(50, 4);
    let (_, log) = train(&tiny_teacher(2), &train_ds, &test_ds, &quick_cfg(5)).unwrap();
    let losses: Vec<f64> = log.epochs.iter().map(|e| e.loss).collect();
    let rises: Vec<f64> = losses.windows(2).map(|w| w[1] - w[0]).filter(|&d| d > 0.0).collect();
    assert!(
        rises.len() <= 1 && rises.iter().all(|&d| d <= 1e-3),
        "losses {losses:?}"
    );
}

#[test]
fn training_is_deterministic_across_thread_counts() {
    let (train_ds, test_ds) = noise_free(12, 8);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| train(&tiny_teacher(5), &train_ds, &test_ds, &quick_cfg(3)).unwrap())
    };
    let (m1, l1) = run(1);
    let (m4, l4) = run(4);
    let (m4b, l4b) = run(4);
    assert!(l1.same_trajectory(&l4) && l4.same_trajectory(&l4b));
    assert_eq!(m1, m4);
    assert_eq!(m4.fingerprint(), m4b.fingerprint());
}

#[test]
fn log_csv_has_one_row_per_epoch() {
    let (train_ds, test_ds) = noise_free(6, 2);
    let (_, log) = train(&tiny_teacher(1), &train_ds, &test_ds, &quick_cfg(3)).unwrap();
    let csv = log.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "epoch,loss,train_acc,test_acc,seconds");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("3,"));
}

struct Poisoned;

impl Objective for Poisoned {
    fn loss_and_grad(&self, _: usize, _: f64, _: Label) -> (f64, f64) {
        (f64::NAN, 0.0)
    }
}

#[test]
fn nan_loss_aborts_with_position() {
    let (train_ds, test_ds) = noise_free(6, 2);
    let err = fit(&tiny_teacher(1), &train_ds, &test_ds, &quick_cfg(3), &Poisoned).unwrap_err();
    assert!(matches!(err, Error::NonFiniteLoss { epoch: 1, batch: 1, .. }), "{err}");
    assert_eq!(err.category(), crate::error::ErrorCategory::Numerical);
}

#[test]
fn invalid_inputs_are_config_errors() {
    let (train_ds, test_ds) = noise_free(4, 2);
    let model = tiny_teacher(1);
    let empty = train_ds.subset(&[]);
    assert!(matches!(train(&model, &empty, &test_ds, &quick_cfg(1)), Err(Error::Config(_))));
    let accel = train_ds.restrict(SensorSet::single(SensorKind::Accelerometer)).unwrap();
    assert!(matches!(train(&model, &accel, &test_ds, &quick_cfg(1)), Err(Error::Config(_))));
    for bad in [
        TrainConfig { learning_rate: 0.0, ..quick_cfg(1) },
        TrainConfig { adam_betas: (1.0, 0.999), ..quick_cfg(1) },
        TrainConfig { grad_clip_norm: 0.0, ..quick_cfg(1) },
        TrainConfig { batch_size: 0, ..quick_cfg(1) },
    ] {
        assert!(matches!(train(&model, &train_ds, &test_ds, &bad), Err(Error::Config(_))));
    }
}
