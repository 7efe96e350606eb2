//! Getting sensor data into labelled, fixed-length windows.

mod ingest;
mod sensor;
mod synth;
mod window;

pub use ingest::{align_streams, ingest_csv, IngestSchema, Ingested, Recording, SensorStream, WRIST};
pub use sensor::{parse_sensor_sets, SensorKind, SensorSet};
pub use synth::{
    peak_accel_magnitude, synth_generate, SynthConfig, ADL_MAX_PEAK_G, FALL_MIN_PEAK_G, HARD_NOISE_STD,
    SYNTH_SUBJECTS,
};
pub use window::{
    channel_stats, normalize, split, window_and_label, window_count, Label, NormStats, SplitSpec,
    WindowedDataset, WindowingOutcome, DEFAULT_HOLDOUT_COUNT, DEFAULT_SPLIT_SEED, DEFAULT_WINDOW_LEN,
    STD_FLOOR,
};
