use edgefall::data::{normalize, split, SplitSpec, SynthConfig};
use edgefall::distill::{compare_three, CompareConfig, DistillConfig};
use edgefall::eval::{evaluate, run_ablation_subsets, AblationConfig};
use edgefall::model::{init_params, load_model, save_model};
use edgefall::power::{run_selection_loop, PowerSpecs};
use edgefall::train::{train, TrainConfig};
use edgefall::{ModelTopology, SensorSet, WindowedDataset};

fn sensors(label: &str) -> SensorSet {
    label.parse().unwrap()
}

fn train_cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 16,
        learning_rate: 1e-2,
        ..TrainConfig::default()
    }
}

/// Synthetic data where only `signal` depends on the class, split by
/// held-out subjects and standardised.
fn prepared(signal: &str, noise: f64, seed: u64) -> (WindowedDataset, WindowedDataset) {
    let ds = SynthConfig::new(80, 20, SensorSet::FULL, seed, noise)
        .with_signal_sensors(sensors(signal))
        .generate()
        .unwrap();
    let spec = SplitSpec::holdout_from(&ds.distinct_subjects(), 3, seed).unwrap();
    let (train_ds, test_ds) = split(&ds, &spec).unwrap();
    let (train_ds, stats) = normalize(&train_ds, None).unwrap();
    let (test_ds, _) = normalize(&test_ds, Some(&stats)).unwrap();
    (train_ds, test_ds)
}

#[test]
fn distilled_student_keeps_up_with_the_plain_student() {
    let (train_ds, test_ds) = prepared("ABG", 0.0, 42);
    let cfg = CompareConfig {
        teacher_lstm_units: 16,
        teacher_hidden_units: 8,
        distill: DistillConfig {
            train: train_cfg(15),
            ..DistillConfig::default()
        },
    };
    let report = compare_three(&[sensors("A"), sensors("AB")], &train_ds, &test_ds, &cfg, None).unwrap();
    assert!(report.is_consistent());
    for row in &report.rows {
        assert!(row.kd_acc >= row.small_acc - 2.0, "{row:?}");
    }
    assert_eq!(report.teacher_topology, "7->16->8->1");
}

#[test]
fn ablation_finds_the_informative_sensor() {
    let (train_ds, test_ds) = prepared("A", 0.2, 5);
    let cfg = AblationConfig {
        lstm_units: 8,
        hidden_units: 4,
        train: train_cfg(15),
    };
    let table = run_ablation_subsets(&train_ds, &test_ds, &cfg, 5, &[sensors("A"), sensors("B")]).unwrap();
    let a = table.row(sensors("A")).unwrap().report.accuracy;
    let b = table.row(sensors("B")).unwrap().report.accuracy;
    assert!(a >= 0.9, "accelerometer alone {a}");
    assert!(a > b + 0.2, "A {a} vs B {b}");
    assert!(table.to_csv().starts_with("sensors,accuracy\nA,"));
}

#[test]
fn selection_pays_for_the_sensor_that_carries_the_signal() {
    let (train_ds, test_ds) = prepared("B", 0.2, 9);
    let topology = ModelTopology::new(7, 16, 8).unwrap();
    let teacher = init_params(topology, SensorSet::FULL, 9).unwrap();
    let (teacher, _) = train(&teacher, &train_ds, &test_ds, &train_cfg(15)).unwrap();
    let distill = DistillConfig {
        train: train_cfg(15),
        ..DistillConfig::default()
    };
    let subsets = [sensors("A"), sensors("B"), sensors("AB")];
    let report = run_selection_loop(&teacher, &train_ds, &test_ds, &subsets, &distill, &PowerSpecs::default(), 0.85).unwrap();
    assert_eq!(report.candidates.len(), 3);
    let chosen = report.chosen.expect("a barometer configuration reaches the floor");
    assert!(chosen.sensor_set.contains(edgefall::SensorKind::Barometer), "{chosen:?}");
    let accel_only = report.candidates.iter().find(|c| c.sensor_set == sensors("A")).unwrap();
    assert!(accel_only.accuracy < 0.85, "{accel_only:?}");
    assert!(report.pareto_indices.contains(&report.chosen_index.unwrap()));
}

#[test]
fn trained_model_survives_a_file_round_trip() {
    let (train_ds, test_ds) = prepared("ABG", 0.2, 3);
    let model = init_params(ModelTopology::new(7, 6, 3).unwrap(), SensorSet::FULL, 3).unwrap();
    let (model, _) = train(&model, &train_ds, &test_ds, &train_cfg(3)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_model(&model, &path).unwrap();
    let loaded = load_model(&path).unwrap();
    assert_eq!(loaded, model);
    assert_eq!(evaluate(&loaded, &test_ds).unwrap(), evaluate(&model, &test_ds).unwrap());
}
