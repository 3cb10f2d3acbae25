//! Building blocks for a regionally balanced corpus of posts about people
//! living in poverty, and for benchmarking aporophobia classifiers on it.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`ingest`]: load raw post records, filter them, find and mask query terms.
//! * [`geo`]: resolve each post to one of six regions with a gazetteer.
//! * [`topics`]: embed, cluster, and describe topics with c-TF-IDF words.
//! * [`sample`]: draw a region × month balanced sample per selected topic.
//! * [`taxonomy`]: the speech-type / degree-of-action / category model.
//! * [`annotate`]: assignment, label log, agreement, adjudication, export.
//! * [`bench`]: chronological split, fine-tune and prompting harnesses.
//! * [`eval`]: weighted metrics, slices, seed averaging, ablation, tables.
//! * [`manifest`]: digests and run manifests shared by the CLI.

pub mod annotate;
pub mod bench;
pub mod eval;
pub mod geo;
pub mod hashing;
pub mod ingest;
pub mod label;
pub mod manifest;
pub mod sample;
pub mod taxonomy;
pub mod topics;

pub use label::{BinaryLabel, ClassSet, Label};
