//! Contextual stratagem browsing over bibliographic metadata.
//!
//! A stratagem is a browsing move over a metadata value of the document a
//! user is looking at (one of its keywords, authors, classifications or its
//! journal). The resulting list of documents sharing that value can be
//! ordered three ways:
//!
//! - **A, baseline**: a boosted Boolean filter with thesaurus expansion.
//! - **B, similarity**: the filter score plus a more-like-this similarity to
//!   the seed document.
//! - **C, session context**: the filter score plus boosts derived from the
//!   queries, keywords and classifications seen earlier in the session.
//!
//! Around the rankers sit an experiment harness (sticky per-session arm
//! assignment and an append-only transaction log), an evaluation suite over
//! those logs (mean first relevant, usefulness, Mann-Whitney U), a seeded
//! user simulator, and an HTTP service.

pub mod cli;
pub mod config;
pub mod corpus;
pub mod engine;
pub mod metrics;
pub mod ranking;
pub mod service;
pub mod session;
pub mod simlab;

pub use corpus::{CorpusIndex, DocumentRecord, FieldKind};
pub use engine::Engine;
pub use metrics::MetricReport;
pub use ranking::{RankedList, RankingConfig, StratagemKind, StratagemQuery, Thesaurus};
pub use session::{ExperimentArm, SessionContext, SessionEvent, SignalKind};
