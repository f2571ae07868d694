//! Series containers, on-disk dataset layout and the synthetic generator.

mod series;
pub mod synth;

pub use series::{
    format_matrix, load_dataset, parse_labels, parse_matrix, parse_series, write_dataset, DatasetBundle, SeriesMatrix,
    LABEL_FILE, TEST_FILE, TRAIN_FILE,
};
pub use synth::{synth_generate, AnomalyKind, AnomalySegment, SynthSpec, Synthesized};
