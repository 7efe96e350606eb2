//! Reading per-trial wrist recordings from CSV and bringing every sensor onto
//! a common time base.
//!
//! One file holds one trial. Files are named
//! `S<subject>_A<activity>_T<trial>_<placement>.csv` and start with the header
//! `t,ax,ay,az,gx,gy,gz,p`. Columns of sensors the schema does not declare may
//! be left out. A sensor sampled slower than the others leaves its cells empty
//! on rows where it has no sample.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sensor::{SensorKind, SensorSet};
use crate::error::{Error, Result};
use crate::tensor::Matrix2D;

pub const WRIST: &str = "wrist";

/// Which sensors the files carry and at what rate each was sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSchema {
    pub sensors: SensorSet,
    pub accel_rate_hz: f64,
    pub gyro_rate_hz: f64,
    pub baro_rate_hz: f64,
}

impl Default for IngestSchema {
    /// Sampling rates of the FallAllD wrist device.
    fn default() -> Self {
        Self {
            sensors: SensorSet::FULL,
            accel_rate_hz: 238.0,
            gyro_rate_hz: 238.0,
            baro_rate_hz: 10.0,
        }
    }
}

impl IngestSchema {
    pub fn rate_hz(&self, kind: SensorKind) -> f64 {
        match kind {
            SensorKind::Accelerometer => self.accel_rate_hz,
            SensorKind::Gyroscope => self.gyro_rate_hz,
            SensorKind::Barometer => self.baro_rate_hz,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for k in self.sensors.kinds() {
            let r = self.rate_hz(k);
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::config(format!("sampling rate of {k} must be > 0, got {r}")));
            }
        }
        Ok(())
    }
}

/// One sensor's samples: `channels[c][n]` is channel `c` at sample `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorStream {
    pub rate_hz: f64,
    pub channels: Vec<Vec<f64>>,
}

impl SensorStream {
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A single wrist trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub subject_id: u32,
    pub activity_code: u32,
    pub trial: u32,
    pub source: PathBuf,
    pub streams: BTreeMap<SensorKind, SensorStream>,
}

impl Recording {
    pub fn sensor_set(&self) -> Result<SensorSet> {
        SensorSet::new(self.streams.keys().copied())
    }
}

#[derive(Debug, Default)]
pub struct Ingested {
    pub recordings: Vec<Recording>,
    /// Files recorded at another placement (neck, waist).
    pub skipped_placement: usize,
    /// Files whose names do not follow the trial naming pattern.
    pub skipped_unnamed: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct TrialName {
    pub subject: u32,
    pub activity: u32,
    pub trial: u32,
    pub placement: String,
}

pub(crate) fn parse_trial_name(file_name: &str) -> Option<TrialName> {
    let stem = file_name.strip_suffix(".csv")?;
    let mut parts = stem.splitn(4, '_');
    let mut field = |prefix: char| -> Option<u32> {
        parts.next()?.strip_prefix(prefix)?.parse().ok()
    };
    let subject = field('S')?;
    let activity = field('A')?;
    let trial = field('T')?;
    let placement = parts.next()?.to_ascii_lowercase();
    Some(TrialName {
        subject,
        activity,
        trial,
        placement,
    })
}

/// Reads every wrist trial below `root` (non-recursive).
///
/// Files for other placements and files that do not follow the naming
/// pattern are skipped and counted. Files are parsed in parallel but the
/// result is ordered by file name.
pub fn ingest_csv(root: &Path, schema: &IngestSchema) -> Result<Ingested> {
    schema.validate()?;
    let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) == Some("csv") {
            files.push(path);
        }
    }
    files.sort();

    let mut out = Ingested::default();
    let mut wrist = Vec::new();
    for path in files {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        match parse_trial_name(name) {
            Some(t) if t.placement == WRIST => wrist.push((path, t)),
            Some(_) => out.skipped_placement += 1,
            None => out.skipped_unnamed += 1,
        }
    }

    out.recordings = wrist
        .into_par_iter()
        .map(|(path, name)| read_trial(&path, &name, schema))
        .collect::<Result<Vec<_>>>()?;

    if out.recordings.is_empty() {
        log::warn!("no wrist recordings found in {}", root.display());
    }
    if out.skipped_placement > 0 {
        log::warn!("skipped {} non-wrist recordings", out.skipped_placement);
    }
    if out.skipped_unnamed > 0 {
        log::warn!("skipped {} csv files with unrecognised names", out.skipped_unnamed);
    }
    Ok(out)
}

fn read_trial(path: &Path, name: &TrialName, schema: &IngestSchema) -> Result<Recording> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let header: Vec<&str> = match lines.next() {
        Some((_, h)) => h.split(',').map(str::trim).collect(),
        None => {
            return Err(Error::Schema {
                path: path.to_owned(),
                msg: "missing header row".into(),
            })
        }
    };

    // Column index of every channel of every declared sensor.
    let mut columns: Vec<(SensorKind, Vec<usize>)> = Vec::new();
    for kind in schema.sensors.kinds() {
        let idx = kind
            .columns()
            .iter()
            .map(|c| {
                header.iter().position(|h| h == c).ok_or_else(|| Error::Schema {
                    path: path.to_owned(),
                    msg: format!("missing column `{c}` required for the {kind}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        columns.push((kind, idx));
    }

    let mut samples: Vec<Vec<Vec<f64>>> = columns
        .iter()
        .map(|(k, _)| vec![Vec::new(); k.channel_count()])
        .collect();

    for (line_ix, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = line_ix + 1;
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let parse_err = |msg: String| Error::Parse {
            path: path.to_owned(),
            line: lineno,
            msg,
        };
        for ((kind, idx), buf) in columns.iter().zip(samples.iter_mut()) {
            let raw: Vec<&str> = idx.iter().map(|&i| cells.get(i).copied().unwrap_or("")).collect();
            let present = raw.iter().filter(|c| !c.is_empty()).count();
            if present == 0 {
                continue;
            }
            if present != raw.len() {
                return Err(parse_err(format!("partial {kind} sample")));
            }
            for ((cell, col), ch) in raw.iter().zip(kind.columns()).zip(buf.iter_mut()) {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| parse_err(format!("non-numeric value {cell:?} in column `{col}`")))?;
                if !v.is_finite() {
                    return Err(parse_err(format!("non-finite value in column `{col}`")));
                }
                ch.push(v);
            }
        }
    }

    let streams = columns
        .into_iter()
        .zip(samples)
        .map(|((kind, _), channels)| {
            (
                kind,
                SensorStream {
                    rate_hz: schema.rate_hz(kind),
                    channels,
                },
            )
        })
        .collect();

    Ok(Recording {
        subject_id: name.subject,
        activity_code: name.activity,
        trial: name.trial,
        source: path.to_owned(),
        streams,
    })
}

/// Brings every stream of `rec` onto `target_rate_hz`, which must be the
/// fastest rate present. Slower streams are upsampled by holding their last
/// value. Returns a `channels × N` block in `Ax Ay Az Gx Gy Gz B` order
/// (absent sensors omitted), where `N` is the length of the fastest stream.
pub fn align_streams(rec: &Recording, target_rate_hz: f64) -> Result<Matrix2D> {
    if rec.streams.is_empty() {
        return Err(Error::Alignment(format!("{} has no sensor streams", rec.source.display())));
    }
    let fastest = rec.streams.values().map(|s| s.rate_hz).fold(f64::MIN, f64::max);
    if target_rate_hz != fastest {
        return Err(Error::Alignment(format!(
            "target rate {target_rate_hz} Hz differs from the fastest stream ({fastest} Hz)"
        )));
    }
    for (kind, s) in &rec.streams {
        if s.is_empty() {
            return Err(Error::Alignment(format!(
                "{} stream of {} is empty",
                kind,
                rec.source.display()
            )));
        }
        if s.channels.iter().any(|c| c.len() != s.len()) {
            return Err(Error::Alignment(format!("{kind} channels have unequal lengths")));
        }
    }
    let n = rec
        .streams
        .values()
        .filter(|s| s.rate_hz == target_rate_hz)
        .map(SensorStream::len)
        .max()
        .expect("fastest stream exists");

    let mut rows = Vec::new();
    for s in rec.streams.values() {
        let ratio = s.rate_hz / target_rate_hz;
        for ch in &s.channels {
            let row = (0..n)
                .map(|i| {
                    // Small epsilon so exact rational ratios do not round down a step.
                    let k = ((i as f64) * ratio + 1e-9).floor() as usize;
                    ch[k.min(ch.len() - 1)]
                })
                .collect();
            rows.push(row);
        }
    }
    Matrix2D::from_rows(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) {
        let mut f = fs::File::create(dir.join(name)).unwrap();
        f.write_all(body.as_bytes()).unwrap();
    }

    const TRIAL: &str = "t,ax,ay,az,gx,gy,gz,p\n\
        0.0,0.1,0.2,1.0,0,0,0,1013.2\n\
        0.1,0.1,0.2,1.0,0,0,0,\n\
        0.2,0.1,0.2,1.0,0,0,0,\n\
        0.3,0.1,0.2,1.0,0,0,0,\n";

    #[test]
    fn file_names() {
        let t = parse_trial_name("S03_A101_T02_Wrist.csv").unwrap();
        assert_eq!((t.subject, t.activity, t.trial, t.placement.as_str()), (3, 101, 2, "wrist"));
        assert!(parse_trial_name("readme.csv").is_none());
        assert!(parse_trial_name("S1_A2_T3.csv").is_none());
    }

    #[test]
    fn placement_filter() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "S01_A101_T01_wrist.csv", TRIAL);
        write(dir.path(), "S01_A1_T01_wrist.csv", TRIAL);
        write(dir.path(), "S01_A1_T01_waist.csv", TRIAL);
        let got = ingest_csv(dir.path(), &IngestSchema::default()).unwrap();
        assert_eq!(got.recordings.len(), 2);
        assert_eq!(got.skipped_placement, 1);
        let r = &got.recordings[0];
        assert_eq!(r.streams[&SensorKind::Accelerometer].len(), 4);
        assert_eq!(r.streams[&SensorKind::Barometer].len(), 1);
    }

    #[test]
    fn empty_directory() {
        let dir = tempfile::tempdir().unwrap();
        let got = ingest_csv(dir.path(), &IngestSchema::default()).unwrap();
        assert!(got.recordings.is_empty());
    }

    #[test]
    fn bad_number_names_line() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "S01_A1_T01_wrist.csv",
            "t,ax,ay,az,gx,gy,gz,p\n0,1,1,1,0,0,0,1\n0,1,oops,1,0,0,0,\n",
        );
        let err = ingest_csv(dir.path(), &IngestSchema::default()).unwrap_err();
        match &err {
            Error::Parse { line, msg, .. } => {
                assert_eq!(*line, 3);
                assert!(msg.contains("ay"), "{msg}");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains(":3:"));
    }

    #[test]
    fn missing_column_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "S01_A1_T01_wrist.csv", "t,ax,ay,az,p\n0,1,1,1,1\n");
        let err = ingest_csv(dir.path(), &IngestSchema::default()).unwrap_err();
        assert!(matches!(err, Error::Schema { .. }), "{err:?}");

        // Declaring the gyroscope absent makes the same file valid.
        let schema = IngestSchema {
            sensors: "AB".parse().unwrap(),
            ..IngestSchema::default()
        };
        let got = ingest_csv(dir.path(), &schema).unwrap();
        assert_eq!(got.recordings[0].sensor_set().unwrap(), "AB".parse().unwrap());
    }

    fn recording(imu: usize, baro: Vec<f64>, baro_rate: f64) -> Recording {
        let mut streams = BTreeMap::new();
        streams.insert(
            SensorKind::Accelerometer,
            SensorStream {
                rate_hz: 40.0,
                channels: vec![(0..imu).map(|i| i as f64).collect(); 3],
            },
        );
        streams.insert(
            SensorKind::Barometer,
            SensorStream {
                rate_hz: baro_rate,
                channels: vec![baro],
            },
        );
        Recording {
            subject_id: 1,
            activity_code: 1,
            trial: 1,
            source: PathBuf::from("mem"),
            streams,
        }
    }

    #[test]
    fn hold_last_value() {
        let block = align_streams(&recording(4, vec![7.0], 10.0), 40.0).unwrap();
        assert_eq!(block.rows(), 4);
        assert_eq!(block.row(3), &[7.0; 4]);

        let block = align_streams(&recording(4, vec![1.0, 2.0], 20.0), 40.0).unwrap();
        assert_eq!(block.row(3), &[1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn equal_rates_are_identity() {
        let block = align_streams(&recording(3, vec![5.0, 6.0, 7.0], 40.0), 40.0).unwrap();
        assert_eq!(block.row(0), &[0.0, 1.0, 2.0]);
        assert_eq!(block.row(3), &[5.0, 6.0, 7.0]);
    }

    #[test]
    fn alignment_errors() {
        assert!(matches!(
            align_streams(&recording(4, vec![], 10.0), 40.0),
            Err(Error::Alignment(_))
        ));
        assert!(matches!(
            align_streams(&recording(4, vec![1.0], 10.0), 10.0),
            Err(Error::Alignment(_))
        ));
    }
}
