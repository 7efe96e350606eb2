#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use edgefall::model::LstmParams;
use edgefall::{LstmClassifier, ModelTopology, SensorSet};

pub fn edgefall(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edgefall"))
        .current_dir(dir)
        .env("EDGEFALL_THREADS", "2")
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn assert_ok(out: &Output) {
    assert_eq!(code(out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

pub fn zero_model(dir: &Path, sensors: &str) -> PathBuf {
    let sensors: SensorSet = sensors.parse().unwrap();
    let topology = ModelTopology::new(sensors.channel_count(), 3, 2).unwrap();
    let params = LstmParams::zeros(&topology).unwrap();
    let model = LstmClassifier::from_params(topology, sensors, 0, params).unwrap();
    let path = dir.join(format!("zero_{}.json", sensors.label()));
    fs::write(&path, model.to_json().unwrap()).unwrap();
    path
}

/// Five subjects with one fall (activity 106) and one non-fall (activity 13)
/// each, accelerometer only, plus a neck recording per subject that ingestion
/// must skip. Also writes `accel.cfg` declaring the accelerometer-only layout.
pub fn write_recordings(dir: &Path) -> PathBuf {
    let root = dir.join("recordings");
    fs::create_dir_all(&root).unwrap();
    for subject in 1..=5u32 {
        for (activity, peak) in [(13u32, 1.0), (106, 3.0)] {
            let mut body = String::from("t,ax,ay,az\n");
            for i in 0..40 {
                let a = if i == 20 { peak } else { 0.1 * f64::from(subject) };
                body.push_str(&format!("{i},{a},0,1\n"));
            }
            fs::write(root.join(format!("S{subject:02}_A{activity}_T01_Wrist.csv")), body).unwrap();
        }
        fs::write(root.join(format!("S{subject:02}_A13_T01_Neck.csv")), "t,ax,ay,az\n0,0,0,0\n").unwrap();
    }
    fs::write(dir.join("accel.cfg"), "sensors = A\n").unwrap();
    root
}
