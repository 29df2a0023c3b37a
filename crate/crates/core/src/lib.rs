//! Reading-process signals for preference annotation.
//!
//! Annotators reveal blurred text with the mouse cursor; every character
//! entry and exit is logged. This crate turns those logs into word-level
//! dwell estimates and section-level reading behavior, relates them to
//! inter-annotator agreement, and keeps the bookkeeping for the study
//! service that collects them.
//!
//! The pipeline for one trial is
//! [`consolidate`] → [`clean_fixations`] → [`total_dwell`] → [`zscore_bins`],
//! followed by [`metrics::trial_metrics`]. Corpus-level analysis lives in
//! [`analysis`].

pub mod agreement;
pub mod analysis;
pub mod gaze;
pub mod heatmap;
pub mod io;
pub mod metrics;
pub mod model;
pub mod prepare;
pub mod sim;
pub mod stats;
pub mod study;

pub use gaze::{
    aggregate_bins, bin_for_z, clean_fixations, consolidate, total_dwell, zscore_bins,
    AggregateVector, BinnedVector, DurationVector, Fixation, FixationWindow, HoverEvent,
};
pub use metrics::{ReadingPath, SectionVisit, TrialMetrics};
pub use model::{
    tokenize_stimulus, Choice, Layout, Position, Rationale, Role, Section, StimulusRecord,
    StimulusSet, TokenizedStimulus, TrialRecord, Word,
};
pub use stats::TestResult;
