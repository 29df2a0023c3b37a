//! Study bookkeeping: batch assignment under the word budget, the corpus
//! reservation ledger, and trial exclusion.

mod log;
mod service;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::TrialMetrics;
use crate::model::{Layout, StimulusSet, TrialRecord};

pub use log::{LogEntry, LogWriter, ANNOTATIONS_FILE, EVENTS_FILE};
pub use service::{Ack, AnnotationAck, Session, Study};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("unknown session {0:?}")]
    UnknownSession(String),
    #[error("session {session} has no trial {trial}")]
    UnknownTrial { session: String, trial: usize },
    #[error("trial {trial} is not open yet (current trial is {cursor})")]
    TrialNotOpen { trial: usize, cursor: usize },
    #[error("trial {trial} already has an annotation")]
    AlreadyAnnotated { trial: usize },
    #[error("session {0:?} expired and released its reservations")]
    SessionExpired(String),
    #[error("event {index} is malformed: {reason}")]
    MalformedEvent { index: usize, reason: String },
    #[error("cannot assign a batch: {0}")]
    Capacity(String),
    #[error("study log: {0}")]
    Log(String),
}

/// How a failure should be reported to a client.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    NotFound,
    BadRequest,
    Conflict,
    Gone,
    Unavailable,
    Internal,
}

impl StudyError {
    pub fn class(&self) -> ErrorClass {
        match self {
            StudyError::UnknownSession(_) | StudyError::UnknownTrial { .. } => ErrorClass::NotFound,
            StudyError::MalformedEvent { .. } => ErrorClass::BadRequest,
            StudyError::TrialNotOpen { .. } | StudyError::AlreadyAnnotated { .. } => {
                ErrorClass::Conflict
            }
            StudyError::SessionExpired(_) => ErrorClass::Gone,
            StudyError::Capacity(_) => ErrorClass::Unavailable,
            StudyError::Log(_) => ErrorClass::Internal,
        }
    }
}

/// What the word-count window is applied to.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanMode {
    /// Each batch's own mean must fall in the window.
    #[default]
    PerBatch,
    /// The mean over every trial assigned so far, this batch included.
    GlobalRunning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub batch_size: usize,
    pub min_mean_words: f64,
    pub max_mean_words: f64,
    pub annotations_per_stimulus: usize,
    pub reservation_ttl_ms: u64,
    pub max_candidate_batches: usize,
    pub mean_mode: MeanMode,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            batch_size: 10,
            min_mean_words: 300.0,
            max_mean_words: 350.0,
            annotations_per_stimulus: 3,
            reservation_ttl_ms: 45 * 60 * 1000,
            max_candidate_batches: 10_000,
            mean_mode: MeanMode::PerBatch,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StimulusLoad {
    pub word_count: usize,
    pub completed: usize,
    pub reserved: usize,
}

impl StimulusLoad {
    pub fn load(&self) -> usize {
        self.completed + self.reserved
    }
}

/// Annotation and reservation counts per stimulus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusState {
    target: usize,
    loads: BTreeMap<String, StimulusLoad>,
    assigned_words: u64,
    assigned_trials: u64,
}

impl CorpusState {
    pub fn new(stimuli: &StimulusSet, target: usize) -> Self {
        let loads = stimuli
            .iter()
            .map(|(r, t)| {
                (
                    r.id.clone(),
                    StimulusLoad {
                        word_count: t.word_count_total(),
                        completed: 0,
                        reserved: 0,
                    },
                )
            })
            .collect();
        CorpusState {
            target,
            loads,
            assigned_words: 0,
            assigned_trials: 0,
        }
    }

    pub fn from_word_counts(counts: impl IntoIterator<Item = (String, usize)>, target: usize) -> Self {
        let loads = counts
            .into_iter()
            .map(|(id, word_count)| {
                (
                    id,
                    StimulusLoad {
                        word_count,
                        completed: 0,
                        reserved: 0,
                    },
                )
            })
            .collect();
        CorpusState {
            target,
            loads,
            assigned_words: 0,
            assigned_trials: 0,
        }
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn get(&self, id: &str) -> Option<&StimulusLoad> {
        self.loads.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &StimulusLoad)> {
        self.loads.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn remaining_capacity(&self, id: &str) -> usize {
        self.loads
            .get(id)
            .map_or(0, |l| self.target.saturating_sub(l.load()))
    }

    pub(crate) fn reserve(&mut self, id: &str) {
        if let Some(l) = self.loads.get_mut(id) {
            l.reserved += 1;
        }
    }

    pub(crate) fn release(&mut self, id: &str) {
        if let Some(l) = self.loads.get_mut(id) {
            l.reserved = l.reserved.saturating_sub(1);
        }
    }

    /// Converts a held reservation into a completed annotation.
    pub(crate) fn complete(&mut self, id: &str) {
        if let Some(l) = self.loads.get_mut(id) {
            l.reserved = l.reserved.saturating_sub(1);
            l.completed += 1;
        }
    }

    pub(crate) fn record_assignment(&mut self, words: u64, trials: u64) {
        self.assigned_words += words;
        self.assigned_trials += trials;
    }
}

/// One slot of a session: which stimulus, shown how.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignedTrial {
    pub stimulus_id: String,
    pub layout: Layout,
}

/// Draws a batch of distinct stimuli whose mean word count fits the
/// configured window and reserves one annotation slot on each.
///
/// Stimuli with the fewest completed plus reserved annotations are tried
/// first: the candidate pool starts with the least-loaded stimuli and
/// widens as samples from it keep missing the window. At most
/// `max_candidate_batches` samples are drawn before giving up. The result
/// depends only on `seed`, `state`, and `exclude`.
pub fn assign_batch(
    state: &mut CorpusState,
    seed: u64,
    config: &StudyConfig,
    exclude: &BTreeSet<String>,
) -> Result<Vec<AssignedTrial>, StudyError> {
    let size = config.batch_size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut candidates: Vec<(usize, u64, &str, usize)> = state
        .loads
        .iter()
        .filter(|(id, l)| l.load() < state.target && !exclude.contains(id.as_str()))
        .map(|(id, l)| (l.load(), rng.random::<u64>(), id.as_str(), l.word_count))
        .collect();
    if candidates.len() < size {
        return Err(StudyError::Capacity(format!(
            "{} stimuli have capacity left, a batch needs {size}",
            candidates.len()
        )));
    }
    candidates.sort_unstable();

    let accepts = |words: usize| -> bool {
        let mean = match config.mean_mode {
            MeanMode::PerBatch => words as f64 / size as f64,
            MeanMode::GlobalRunning => {
                (state.assigned_words + words as u64) as f64 / (state.assigned_trials + size as u64) as f64
            }
        };
        (config.min_mean_words..=config.max_mean_words).contains(&mean)
    };

    // Search the `size` least-loaded stimuli first, then keep doubling the
    // pool; each widening gets an equal share of the attempt budget.
    let attempts = config.max_candidate_batches.max(1);
    let mut pools = vec![size];
    while *pools.last().expect("non-empty") < candidates.len() {
        let next = (pools.last().expect("non-empty") * 2).min(candidates.len());
        pools.push(next);
    }
    let per_stage = attempts.div_ceil(pools.len());
    let mut chosen = None;
    let mut spent = 0;
    'search: for &pool in &pools {
        // a pool of exactly one batch has a single candidate
        let tries = if pool == size { 1 } else { per_stage };
        for _ in 0..tries {
            if spent == attempts {
                break 'search;
            }
            spent += 1;
            let picks = index::sample(&mut rng, pool, size).into_vec();
            let words: usize = picks.iter().map(|&i| candidates[i].3).sum();
            if accepts(words) {
                chosen = Some(picks);
                break 'search;
            }
        }
    }
    let Some(mut picks) = chosen else {
        return Err(StudyError::Capacity(format!(
            "no batch of {size} with mean word count in [{}, {}] after {spent} candidates",
            config.min_mean_words, config.max_mean_words
        )));
    };
    picks.shuffle(&mut rng);
    let trials: Vec<AssignedTrial> = picks
        .iter()
        .map(|&i| AssignedTrial {
            stimulus_id: candidates[i].2.to_owned(),
            layout: if rng.random::<bool>() {
                Layout::ALeft
            } else {
                Layout::ARight
            },
        })
        .collect();
    let words: usize = picks.iter().map(|&i| candidates[i].3).sum();
    for t in &trials {
        state.reserve(&t.stimulus_id);
    }
    state.record_assignment(words as u64, size as u64);
    Ok(trials)
}

/// Minimum word coverage for a trial to enter the analysis.
pub const MIN_COVERAGE: f64 = 0.10;

/// Marks trials whose coverage is strictly below `min_coverage`, and
/// trials that never received an annotation or metrics. Exclusions only
/// ever get added, never cleared.
pub fn apply_exclusions(
    trials: &mut [TrialRecord],
    metrics: &BTreeMap<String, TrialMetrics>,
    min_coverage: f64,
) {
    for t in trials.iter_mut() {
        if t.excluded {
            continue;
        }
        if !t.is_annotated() {
            t.exclude("no annotation");
            continue;
        }
        match metrics.get(&t.trial_id) {
            None => t.exclude("metrics unavailable"),
            Some(m) if m.word_coverage < min_coverage => t.exclude(format!(
                "word coverage {:.4} below {min_coverage}",
                m.word_coverage
            )),
            Some(_) => {}
        }
    }
}
