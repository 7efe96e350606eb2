//! Reading a single window from CSV for `infer`.

use std::path::Path;

use edgefall::tensor::Matrix2D;
use edgefall::{Error, Result, SensorSet};

/// Parses a CSV with one named column per channel and one row per time step.
/// The header must list exactly the channels of `sensors`, in order. The
/// result is laid out channels by time steps, as the model expects.
pub fn parse_window(text: &str, path: &Path, sensors: SensorSet) -> Result<Matrix2D> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::Schema {
        path: path.into(),
        msg: "empty window file".into(),
    })?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    let expected = sensors.channel_names();
    if names != expected {
        return Err(Error::Schema {
            path: path.into(),
            msg: format!(
                "model expects columns {} ({} channels), file has {} ({} channels)",
                expected.join(","),
                expected.len(),
                names.join(","),
                names.len()
            ),
        });
    }
    let channels = expected.len();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); channels];
    for (i, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != channels {
            return Err(Error::Parse {
                path: path.into(),
                line: i + 1,
                msg: format!("expected {channels} fields, found {}", fields.len()),
            });
        }
        for (c, f) in fields.iter().enumerate() {
            let v: f64 = f.parse().map_err(|_| Error::Parse {
                path: path.into(),
                line: i + 1,
                msg: format!("not a number: {f:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: path.into(),
                    line: i + 1,
                    msg: format!("non-finite value {f:?}"),
                });
            }
            columns[c].push(v);
        }
    }
    let steps = columns[0].len();
    if steps == 0 {
        return Err(Error::Schema {
            path: path.into(),
            msg: "window has no samples".into(),
        });
    }
    Matrix2D::from_vec(channels, steps, columns.concat())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn accel() -> SensorSet {
        "A".parse().unwrap()
    }

    #[test]
    fn transposes_rows_into_channels() {
        let w = parse_window("ax,ay,az\n1,2,3\n4,5,6\n", Path::new("w.csv"), accel()).unwrap();
        assert_eq!((w.rows(), w.cols()), (3, 2));
        assert_eq!(w.row(0), &[1.0, 4.0]);
        assert_eq!(w.row(2), &[3.0, 6.0]);
    }

    #[test]
    fn wrong_columns_are_a_schema_error() {
        let err = parse_window("ax,ay\n1,2\n", Path::new("w.csv"), accel()).unwrap_err();
        assert!(matches!(err, Error::Schema { .. }), "{err}");
    }

    #[test]
    fn bad_number_reports_its_line() {
        let err = parse_window("ax,ay,az\n1,2,3\n1,x,3\n", Path::new("w.csv"), accel()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn header_only_is_rejected() {
        assert!(parse_window("ax,ay,az\n", Path::new("w.csv"), accel()).is_err());
    }
}
