//! Model and data builders shared by unit tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::SensorSet;
use crate::model::{init_params, LstmClassifier, LstmParams, ModelTopology};
use crate::tensor::Matrix2D;

pub(crate) fn random_model(d: usize, h: usize, k: usize, seed: u64) -> LstmClassifier {
    let sensors = match d {
        1 => "B",
        3 => "A",
        4 => "AB",
        6 => "AG",
        7 => "ABG",
        _ => panic!("no sensor set has {d} channels"),
    };
    let sensors: SensorSet = sensors.parse().unwrap();
    let mut m = init_params(ModelTopology::new(sensors.channel_count(), h, k).unwrap(), sensors, seed).unwrap();
    // Randomise biases too so every term of the oracle is exercised.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
    for t in m.params.tensors_mut() {
        t.iter_mut().for_each(|v| *v += rng.random_range(-0.5..0.5));
    }
    m
}

pub(crate) fn random_window(d: usize, t: usize, seed: u64) -> Matrix2D {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix2D::from_vec(d, t, (0..d * t).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
}

pub(crate) fn zero_model(sensors: &str) -> LstmClassifier {
    let s: SensorSet = sensors.parse().unwrap();
    let t = ModelTopology::new(s.channel_count(), 3, 2).unwrap();
    LstmClassifier::from_params(t, s, 0, LstmParams::zeros(&t).unwrap()).unwrap()
}
