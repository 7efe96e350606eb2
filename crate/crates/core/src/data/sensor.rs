use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A physical sensor on the wrist device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SensorKind {
    Accelerometer,
    Gyroscope,
    Barometer,
}

impl SensorKind {
    /// Channel order of every window: `Ax Ay Az Gx Gy Gz B`.
    pub const ALL: [SensorKind; 3] = [
        SensorKind::Accelerometer,
        SensorKind::Gyroscope,
        SensorKind::Barometer,
    ];

    pub const fn channel_count(self) -> usize {
        match self {
            SensorKind::Accelerometer | SensorKind::Gyroscope => 3,
            SensorKind::Barometer => 1,
        }
    }

    pub const fn letter(self) -> char {
        match self {
            SensorKind::Accelerometer => 'A',
            SensorKind::Gyroscope => 'G',
            SensorKind::Barometer => 'B',
        }
    }

    /// CSV column names, in channel order.
    pub const fn columns(self) -> &'static [&'static str] {
        match self {
            SensorKind::Accelerometer => &["ax", "ay", "az"],
            SensorKind::Gyroscope => &["gx", "gy", "gz"],
            SensorKind::Barometer => &["p"],
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'A' => Some(SensorKind::Accelerometer),
            'G' => Some(SensorKind::Gyroscope),
            'B' => Some(SensorKind::Barometer),
            _ => None,
        }
    }

    const fn bit(self) -> u8 {
        match self {
            SensorKind::Accelerometer => 0b001,
            SensorKind::Gyroscope => 0b010,
            SensorKind::Barometer => 0b100,
        }
    }

    /// Offset of this sensor's first channel inside the full 7-channel layout.
    const fn full_offset(self) -> usize {
        match self {
            SensorKind::Accelerometer => 0,
            SensorKind::Gyroscope => 3,
            SensorKind::Barometer => 6,
        }
    }
}

impl fmt::Display for SensorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            SensorKind::Accelerometer => "accelerometer",
            SensorKind::Gyroscope => "gyroscope",
            SensorKind::Barometer => "barometer",
        };
        f.write_str(name)
    }
}

/// A nonempty subset of the three sensors.
///
/// Displayed and parsed as a compact label such as `"AB"` or `"ABG"`, with
/// letters always written in `A`, `B`, `G` order. The channel layout of data
/// restricted to a set still follows [`SensorKind::ALL`].
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct SensorSet(u8);

impl SensorSet {
    pub const FULL: SensorSet = SensorSet(0b111);

    pub fn new(kinds: impl IntoIterator<Item = SensorKind>) -> Result<Self> {
        let bits = kinds.into_iter().fold(0u8, |acc, k| acc | k.bit());
        if bits == 0 {
            return Err(Error::config("a sensor set needs at least one sensor"));
        }
        Ok(SensorSet(bits))
    }

    pub fn single(kind: SensorKind) -> Self {
        SensorSet(kind.bit())
    }

    /// All seven nonempty subsets, in the row order used for ablation tables.
    pub fn all_nonempty() -> [SensorSet; 7] {
        ["ABG", "AG", "BG", "AB", "A", "G", "B"].map(|l| l.parse().expect("static label"))
    }

    pub fn contains(self, kind: SensorKind) -> bool {
        self.0 & kind.bit() != 0
    }

    pub fn is_subset_of(self, other: SensorSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn union(self, other: SensorSet) -> SensorSet {
        SensorSet(self.0 | other.0)
    }

    pub fn intersects(self, other: SensorSet) -> bool {
        self.0 & other.0 != 0
    }

    pub fn kinds(self) -> impl Iterator<Item = SensorKind> {
        SensorKind::ALL.into_iter().filter(move |k| self.contains(*k))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        false
    }

    pub fn channel_count(self) -> usize {
        self.kinds().map(SensorKind::channel_count).sum()
    }

    /// Indices of this set's channels inside the full 7-channel layout.
    pub fn full_channel_indices(self) -> Vec<usize> {
        self.kinds()
            .flat_map(|k| (0..k.channel_count()).map(move |c| k.full_offset() + c))
            .collect()
    }

    /// Positions of `subset`'s channels inside data laid out for `self`.
    pub fn channel_positions_of(self, subset: SensorSet) -> Result<Vec<usize>> {
        if !subset.is_subset_of(self) {
            return Err(Error::config(format!(
                "sensor set {subset} is not a subset of {self}"
            )));
        }
        let own = self.full_channel_indices();
        Ok(subset
            .full_channel_indices()
            .into_iter()
            .map(|ix| own.iter().position(|&o| o == ix).expect("subset channel"))
            .collect())
    }

    /// Column names of this set's channels, in channel order.
    pub fn channel_names(self) -> Vec<&'static str> {
        self.kinds().flat_map(|k| k.columns().iter().copied()).collect()
    }

    pub fn label(self) -> String {
        ['A', 'B', 'G']
            .into_iter()
            .filter(|&c| self.contains(SensorKind::from_letter(c).expect("letter")))
            .collect()
    }
}

impl fmt::Display for SensorSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl fmt::Debug for SensorSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SensorSet({})", self.label())
    }
}

impl Ord for SensorSet {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.label().cmp(&other.label())
    }
}

impl PartialOrd for SensorSet {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl FromStr for SensorSet {
    type Err = Error;

    /// Accepts labels like `AB`, `a,b,g` or `A B`.
    fn from_str(s: &str) -> Result<Self> {
        let kinds = s
            .chars()
            .filter(|c| !matches!(c, ',' | ' ' | '+' | '{' | '}'))
            .map(|c| {
                SensorKind::from_letter(c)
                    .ok_or_else(|| Error::config(format!("unknown sensor letter {c:?} in {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        SensorSet::new(kinds)
    }
}

impl Serialize for SensorSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.label())
    }
}

impl<'de> Deserialize<'de> for SensorSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parses a comma-separated list of sensor set labels, e.g. `A,AB,ABG`.
pub fn parse_sensor_sets(list: &str) -> Result<Vec<SensorSet>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}
