use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ingest::{align_streams, Recording};
use super::sensor::SensorSet;
use crate::error::{Error, Result};
use crate::tensor::Matrix2D;

pub const DEFAULT_WINDOW_LEN: usize = 20;
pub const STD_FLOOR: f64 = 1e-8;

/// Label of a window: `0` is "Not Fall", `1` is "Fall".
pub type Label = u8;

/// Per-channel z-score statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    fn select(&self, positions: &[usize]) -> NormStats {
        NormStats {
            mean: positions.iter().map(|&p| self.mean[p]).collect(),
            std: positions.iter().map(|&p| self.std[p]).collect(),
        }
    }

    /// Applies the z-score to a `channels × T` block in place.
    pub fn apply(&self, window: &mut Matrix2D) {
        let t = window.cols();
        for (c, row) in window.data_mut().chunks_exact_mut(t).enumerate() {
            let (m, s) = (self.mean[c], self.std[c]);
            row.iter_mut().for_each(|v| *v = (*v - m) / s);
        }
    }

    fn invert(&self, window: &mut Matrix2D) {
        let t = window.cols();
        for (c, row) in window.data_mut().chunks_exact_mut(t).enumerate() {
            let (m, s) = (self.mean[c], self.std[c]);
            row.iter_mut().for_each(|v| *v = *v * s + m);
        }
    }
}

/// Fixed-length labelled windows.
///
/// Every window is a `channels × window_len` matrix whose rows follow the
/// `Ax Ay Az Gx Gy Gz B` layout restricted to `sensor_set`. When
/// `normalization` is present the windows hold z-scored values produced with
/// those statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedDataset {
    pub sensor_set: SensorSet,
    pub window_len: usize,
    pub windows: Vec<Matrix2D>,
    pub labels: Vec<Label>,
    /// Subject each window was recorded from.
    pub subjects: Vec<u32>,
    pub normalization: Option<NormStats>,
}

impl WindowedDataset {
    pub fn new(
        sensor_set: SensorSet,
        window_len: usize,
        windows: Vec<Matrix2D>,
        labels: Vec<Label>,
        subjects: Vec<u32>,
    ) -> Result<Self> {
        let ds = Self {
            sensor_set,
            window_len,
            windows,
            labels,
            subjects,
            normalization: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Checks the shape and label invariants; used after deserialising.
    pub fn validate(&self) -> Result<()> {
        let n = self.windows.len();
        if self.labels.len() != n || self.subjects.len() != n {
            return Err(Error::ShapeInconsistency(format!(
                "{n} windows but {} labels and {} subject ids",
                self.labels.len(),
                self.subjects.len()
            )));
        }
        let want = (self.sensor_set.channel_count(), self.window_len);
        if let Some((i, w)) = self
            .windows
            .iter()
            .enumerate()
            .find(|(_, w)| (w.rows(), w.cols()) != want)
        {
            return Err(Error::ShapeInconsistency(format!(
                "window {i} is {} but the dataset declares {}x{}",
                w.shape(),
                want.0,
                want.1
            )));
        }
        if let Some(bad) = self.labels.iter().find(|&&l| l > 1) {
            return Err(Error::ShapeInconsistency(format!("label {bad} is not 0 or 1")));
        }
        if let Some(stats) = &self.normalization {
            if stats.channels() != want.0 || stats.std.len() != want.0 {
                return Err(Error::ShapeInconsistency(
                    "normalization statistics do not match the channel count".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.sensor_set.channel_count()
    }

    pub fn n_falls(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn subset(&self, indices: &[usize]) -> WindowedDataset {
        WindowedDataset {
            sensor_set: self.sensor_set,
            window_len: self.window_len,
            windows: indices.iter().map(|&i| self.windows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            subjects: indices.iter().map(|&i| self.subjects[i]).collect(),
            normalization: self.normalization.clone(),
        }
    }

    /// Keeps only the channels of `sensors`, which must be a subset of this
    /// dataset's sensor set. Window order is preserved.
    pub fn restrict(&self, sensors: SensorSet) -> Result<WindowedDataset> {
        let positions = self.sensor_set.channel_positions_of(sensors)?;
        let windows = self
            .windows
            .iter()
            .map(|w| slice_channels(w, &positions))
            .collect::<Result<Vec<_>>>()?;
        Ok(WindowedDataset {
            sensor_set: sensors,
            window_len: self.window_len,
            windows,
            labels: self.labels.clone(),
            subjects: self.subjects.clone(),
            normalization: self.normalization.as_ref().map(|s| s.select(&positions)),
        })
    }

    pub fn distinct_subjects(&self) -> BTreeSet<u32> {
        self.subjects.iter().copied().collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ds: WindowedDataset = serde_json::from_str(text)?;
        ds.validate()?;
        Ok(ds)
    }
}

pub(crate) fn slice_channels(window: &Matrix2D, positions: &[usize]) -> Result<Matrix2D> {
    let t = window.cols();
    let mut data = Vec::with_capacity(positions.len() * t);
    for &p in positions {
        data.extend_from_slice(window.row(p));
    }
    Matrix2D::from_vec(positions.len(), t, data)
}

#[derive(Debug)]
pub struct WindowingOutcome {
    pub dataset: WindowedDataset,
    /// Recordings shorter than one window.
    pub skipped_short: usize,
}

/// Number of windows of length `len` with step `stride` that fit in `n` samples.
pub fn window_count(n: usize, len: usize, stride: usize) -> usize {
    if n < len {
        0
    } else {
        (n - len) / stride + 1
    }
}

/// Cuts aligned recordings into sliding windows and labels each window by
/// whether its recording's activity code is one of `fall_codes`.
pub fn window_and_label(
    recordings: &[Recording],
    sensor_set: SensorSet,
    window_len: usize,
    stride: usize,
    fall_codes: &BTreeSet<u32>,
) -> Result<WindowingOutcome> {
    if window_len < 2 {
        return Err(Error::config(format!("window length must be at least 2, got {window_len}")));
    }
    if stride == 0 || stride > window_len {
        return Err(Error::config(format!(
            "stride must be in 1..={window_len}, got {stride}"
        )));
    }
    if fall_codes.is_empty() {
        return Err(Error::config("no activity codes are mapped to the fall label"));
    }

    let mut windows = Vec::new();
    let mut labels = Vec::new();
    let mut subjects = Vec::new();
    let mut skipped_short = 0;
    for rec in recordings {
        let present = rec.sensor_set()?;
        if !sensor_set.is_subset_of(present) {
            return Err(Error::Schema {
                path: rec.source.clone(),
                msg: format!("recording has sensors {present} but {sensor_set} were requested"),
            });
        }
        let target = rec.streams.values().map(|s| s.rate_hz).fold(f64::MIN, f64::max);
        let block = align_streams(rec, target)?;
        let block = slice_channels(&block, &present.channel_positions_of(sensor_set)?)?;
        let n = block.cols();
        if n < window_len {
            skipped_short += 1;
            continue;
        }
        let label = Label::from(fall_codes.contains(&rec.activity_code));
        for w in 0..window_count(n, window_len, stride) {
            let start = w * stride;
            let mut data = Vec::with_capacity(block.rows() * window_len);
            for c in 0..block.rows() {
                data.extend_from_slice(&block.row(c)[start..start + window_len]);
            }
            windows.push(Matrix2D::from_vec(block.rows(), window_len, data)?);
            labels.push(label);
            subjects.push(rec.subject_id);
        }
    }
    if skipped_short > 0 {
        log::warn!("skipped {skipped_short} recordings shorter than {window_len} samples");
    }
    Ok(WindowingOutcome {
        dataset: WindowedDataset::new(sensor_set, window_len, windows, labels, subjects)?,
        skipped_short,
    })
}

/// Per-channel mean and population standard deviation over every sample of
/// every window. The standard deviation is floored at [`STD_FLOOR`].
pub fn channel_stats(windows: &[Matrix2D], channels: usize) -> NormStats {
    let mut mean = vec![0.0; channels];
    let mut std = vec![0.0; channels];
    let count = windows.iter().map(Matrix2D::cols).sum::<usize>() as f64;
    if count == 0.0 {
        return NormStats {
            mean,
            std: vec![1.0; channels],
        };
    }
    for w in windows {
        for (c, m) in mean.iter_mut().enumerate() {
            *m += w.row(c).iter().sum::<f64>();
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    for w in windows {
        for (c, s) in std.iter_mut().enumerate() {
            *s += w.row(c).iter().map(|v| (v - mean[c]).powi(2)).sum::<f64>();
        }
    }
    std.iter_mut()
        .for_each(|s| *s = (*s / count).sqrt().max(STD_FLOOR));
    NormStats { mean, std }
}

/// Z-scores every channel.
///
/// With `stats = None` the statistics are computed from `ds` itself (the
/// training set); otherwise they are applied as given (the test set). A
/// dataset that is already normalized is first mapped back to raw values, so
/// normalizing twice with the same statistics changes nothing.
pub fn normalize(
    ds: &WindowedDataset,
    stats: Option<&NormStats>,
) -> Result<(WindowedDataset, NormStats)> {
    let channels = ds.channels();
    if let Some(s) = stats {
        if s.channels() != channels || s.std.len() != channels {
            return Err(Error::config(format!(
                "normalization statistics have {} channels, dataset has {channels}",
                s.channels()
            )));
        }
        if ds.normalization.as_ref() == Some(s) {
            return Ok((ds.clone(), s.clone()));
        }
    }
    let mut windows = ds.windows.clone();
    if let Some(prev) = &ds.normalization {
        windows.iter_mut().for_each(|w| prev.invert(w));
    }
    let stats = match stats {
        Some(s) => s.clone(),
        None => channel_stats(&windows, channels),
    };
    windows.iter_mut().for_each(|w| stats.apply(w));
    let out = WindowedDataset {
        windows,
        normalization: Some(stats.clone()),
        ..ds.clone()
    };
    Ok((out, stats))
}

/// How windows are divided into training and test sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum SplitSpec {
    Random { test_fraction: f64, seed: u64 },
    SubjectHoldout { subjects: Vec<u32>, seed: u64 },
}

pub const DEFAULT_SPLIT_SEED: u64 = 42;
pub const DEFAULT_HOLDOUT_COUNT: usize = 3;

impl SplitSpec {
    /// Holds out `count` subjects drawn by `seed` from those present.
    pub fn holdout_from(present: &BTreeSet<u32>, count: usize, seed: u64) -> Result<SplitSpec> {
        if present.len() <= count {
            return Err(Error::config(format!(
                "cannot hold out {count} of {} subjects",
                present.len()
            )));
        }
        let mut ids: Vec<u32> = present.iter().copied().collect();
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut chosen = ids[..count].to_vec();
        chosen.sort_unstable();
        Ok(SplitSpec::SubjectHoldout {
            subjects: chosen,
            seed,
        })
    }
}

/// Splits `ds` into `(train, test)`. Deterministic for a given spec.
pub fn split(ds: &WindowedDataset, spec: &SplitSpec) -> Result<(WindowedDataset, WindowedDataset)> {
    let (train, test): (Vec<usize>, Vec<usize>) = match spec {
        SplitSpec::Random {
            test_fraction,
            seed,
        } => {
            if !(0.0..1.0).contains(test_fraction) {
                return Err(Error::config(format!(
                    "test fraction must be in [0, 1), got {test_fraction}"
                )));
            }
            let mut idx: Vec<usize> = (0..ds.len()).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(*seed));
            let n_test = (test_fraction * ds.len() as f64).round() as usize;
            let mut test = idx[..n_test].to_vec();
            let mut train = idx[n_test..].to_vec();
            test.sort_unstable();
            train.sort_unstable();
            (train, test)
        }
        SplitSpec::SubjectHoldout { subjects, .. } => {
            let present = ds.distinct_subjects();
            if let Some(missing) = subjects.iter().find(|s| !present.contains(s)) {
                return Err(Error::config(format!(
                    "held-out subject {missing} does not occur in the data"
                )));
            }
            (0..ds.len()).partition(|&i| !subjects.contains(&ds.subjects[i]))
        }
    };
    Ok((ds.subset(&train), ds.subset(&test)))
}
