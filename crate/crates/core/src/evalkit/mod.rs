//! Evaluation protocol and dataset hygiene.

pub mod fixtures;
pub mod manifest;
pub mod protocol;

pub use manifest::{digest_bytes, Entry, Manifest, DATASETS};
pub use protocol::{
    dedupe_scan, environment, filter_benchmark, normalize_label, timing_probe, unified_eval, unified_size,
    weighted_accuracy, word_accuracy, DedupeReport, EvalRecord, FilterReport, TimingReport, ACC_COLUMNS, IRREGULAR,
    REGULAR, UNIFIED,
};
