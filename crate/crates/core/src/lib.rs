//! Toolkit for measuring how student-like code submission trajectories are.
//!
//! The library ingests corpora of timestamped Python submissions, segments
//! them into temporal views (first/middle/last stages and next-step windows),
//! measures each submission along semantic, functional, and stylistic axes,
//! and assembles population-level comparison reports between a reference
//! (student) corpus and one or more candidate (generated) corpora.
//!
//! Modules:
//! - [`corpus`]: submission data model, JSONL ingestion, split manifests.
//! - [`streams`]: stage extraction, next-step windows, context alignment.
//! - [`analysis`]: verbosity, AST shape metrics, style violations.
//! - [`functional`]: error taxonomy, sandboxed doctest execution, pass rates.
//! - [`embedding`]: embedding providers, cosine/KNN metrics, 2-D projection.
//! - [`stats`]: style-score PCA, edit distance, progress curves, pairwise MAE.
//! - [`genharness`]: prompt assembly, endpoint client, candidate archiving.
//! - [`report`]: end-to-end evaluation runs and report rendering.

pub mod analysis;
pub mod corpus;
pub mod embedding;
pub mod functional;
pub mod genharness;
pub mod report;
pub mod stats;
pub mod streams;

mod net;
