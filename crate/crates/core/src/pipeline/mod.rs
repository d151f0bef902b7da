//! Configuration, stage orchestration, manifest persistence and validation.
//!
//! A run walks every title under `input_root` through parsing, merging,
//! denoising, slicing, transcription, filtering, pairing, speaker labelling
//! and unit extraction. Each stage's output is cached under
//! `output_root/cache/<stage>/` by a hash of its inputs and settings, so an
//! unchanged rerun only re-reads cached results.

mod cache;
mod config;
mod manifest;
mod run;

pub use cache::{file_matches, StageCache};
pub use config::PipelineConfig;
pub use manifest::{
    export_csv, read_manifest, sort_rows, validate_manifest, write_jsonl, ManifestRow, RejectRow, StageFlag,
    Violation, ViolationKind, VALIDATION_HOP_MS,
};
pub use run::{
    discover_titles, pair_id, render_segment, run_pipeline, utterance_id, PipelineOutput, StageReport,
    CENTROIDS_FILE, MANIFEST_FILE, MOCK_FIXTURES_FILE, REJECTS_FILE, REPORT_FILE, STAGES,
};
