//! Labelled datasets: synthetic generators, IDX ingestion, CSV exchange and the
//! nearest-opposite-class distance histogram.

pub mod defaults;
mod histogram;
mod idx;
mod labeled;
pub mod synth;

pub use histogram::{nearest_opposite_distances, opposite_class_histogram, Histogram};
pub use idx::{load_idx, parse_idx_images, parse_idx_labels, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use labeled::LabeledSet;
pub use synth::{generate, SynthKind, SynthSpec};
