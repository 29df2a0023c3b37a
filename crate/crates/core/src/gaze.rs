//! Word-level dwell reconstruction from character hover events.
//!
//! Raw events are consolidated into word fixations, fixations outside the
//! plausible reading window are discarded, surviving durations are summed
//! per word, and the per-word totals are discretized into six z-score bins.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Section, TokenizedStimulus};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GazeError {
    #[error("fixation on word {index} but stimulus has {len} words")]
    WordOutOfRange { index: usize, len: usize },
    #[error("participant {participant:?} has {got} bins, expected {expected}")]
    LengthMismatch {
        participant: String,
        got: usize,
        expected: usize,
    },
    #[error("no participants to aggregate")]
    NoParticipants,
}

/// One character-span mouse entry and exit, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HoverEvent {
    pub section: Section,
    pub char_index: usize,
    pub enter_ms: u64,
    pub exit_ms: u64,
}

impl HoverEvent {
    pub fn duration_ms(&self) -> u64 {
        self.exit_ms.saturating_sub(self.enter_ms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fixation {
    pub word_index: usize,
    pub duration_ms: u64,
    /// Position in the consolidated sequence.
    pub order: usize,
}

/// Result of [`consolidate`], with the number of events that pointed
/// outside their section.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Consolidated {
    pub fixations: Vec<Fixation>,
    pub malformed_events: usize,
}

impl Consolidated {
    pub fn is_malformed(&self) -> bool {
        self.malformed_events > 0
    }
}

/// Collapses character events into word fixations.
///
/// Whitespace and out-of-range events are dropped first; maximal runs of
/// the remaining events on one word become a single fixation. Runs that
/// sum to zero milliseconds produce nothing.
pub fn consolidate(events: &[HoverEvent], stimulus: &TokenizedStimulus) -> Consolidated {
    let mut out = Consolidated::default();
    let mut run: Option<(usize, u64)> = None;
    let flush = |run: (usize, u64), fixations: &mut Vec<Fixation>| {
        if run.1 > 0 {
            fixations.push(Fixation {
                word_index: run.0,
                duration_ms: run.1,
                order: fixations.len(),
            });
        }
    };
    for event in events {
        let word = match stimulus.locate_char(event.section, event.char_index) {
            Ok(Some(word)) => word,
            Ok(None) => continue,
            Err(_) => {
                out.malformed_events += 1;
                continue;
            }
        };
        match run.as_mut() {
            Some((current, total)) if *current == word => *total += event.duration_ms(),
            _ => {
                if let Some(done) = run.replace((word, event.duration_ms())) {
                    flush(done, &mut out.fixations);
                }
            }
        }
    }
    if let Some(done) = run {
        flush(done, &mut out.fixations);
    }
    out
}

/// Inclusive bounds on a plausible reading fixation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixationWindow {
    pub min_ms: u64,
    pub max_ms: u64,
}

impl Default for FixationWindow {
    fn default() -> Self {
        FixationWindow {
            min_ms: 160,
            max_ms: 4000,
        }
    }
}

impl FixationWindow {
    pub fn contains(&self, duration_ms: u64) -> bool {
        (self.min_ms..=self.max_ms).contains(&duration_ms)
    }

    pub fn clean(&self, fixations: &[Fixation]) -> Vec<Fixation> {
        fixations
            .iter()
            .filter(|f| self.contains(f.duration_ms))
            .copied()
            .collect()
    }
}

/// Keeps fixations lasting between 160 and 4000 ms, bounds included.
pub fn clean_fixations(fixations: &[Fixation]) -> Vec<Fixation> {
    FixationWindow::default().clean(fixations)
}

/// Total cleaned dwell per word, indexed by global word index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DurationVector {
    pub totals: Vec<u64>,
}

impl DurationVector {
    pub fn len(&self) -> usize {
        self.totals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.totals.is_empty()
    }

    pub fn sum(&self) -> u64 {
        self.totals.iter().sum()
    }
}

pub fn total_dwell(cleaned: &[Fixation], n: usize) -> Result<DurationVector, GazeError> {
    let mut totals = vec![0u64; n];
    for f in cleaned {
        let slot = totals.get_mut(f.word_index).ok_or(GazeError::WordOutOfRange {
            index: f.word_index,
            len: n,
        })?;
        *slot += f.duration_ms;
    }
    Ok(DurationVector { totals })
}

/// Six-level dwell discretization; 0 marks an unread word.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BinnedVector {
    pub bins: Vec<u8>,
}

impl BinnedVector {
    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }
}

/// Bin for a standardized duration. NaN means the word was never read.
pub fn bin_for_z(z: f64) -> u8 {
    if z.is_nan() {
        0
    } else if z < -1.0 {
        1
    } else if z < -0.5 {
        2
    } else if z < 0.5 {
        3
    } else if z < 1.0 {
        4
    } else {
        5
    }
}

/// Standardizes the nonzero totals (population sd) and bins them.
///
/// With one read word, or no spread among read words, every read word is
/// typical (bin 3). Comparisons against the bin edges are done in integer
/// arithmetic, so a total sitting exactly on an edge always lands in the
/// upper bin and scaling all totals never moves a word across an edge.
pub fn zscore_bins(d: &DurationVector) -> BinnedVector {
    match exact_moments(&d.totals) {
        Some((n, sum, sum_sq)) => {
            let spread = n * sum_sq - sum * sum;
            let degenerate = n <= 1 || spread == 0;
            let bins = d
                .totals
                .iter()
                .map(|&t| match t {
                    0 => 0,
                    _ if degenerate => 3,
                    _ => exact_bin(n as i128 * t as i128 - sum as i128, spread),
                })
                .collect();
            BinnedVector { bins }
        }
        None => float_bins(d),
    }
}

/// Count, sum and sum of squares of the nonzero totals, if they fit.
fn exact_moments(totals: &[u64]) -> Option<(u128, u128, u128)> {
    let mut n = 0u128;
    let mut sum = 0u128;
    let mut sum_sq = 0u128;
    for &t in totals.iter().filter(|&&t| t > 0) {
        let t = u128::from(t);
        n += 1;
        sum = sum.checked_add(t)?;
        sum_sq = sum_sq.checked_add(t.checked_mul(t)?)?;
    }
    let spread = n.checked_mul(sum_sq)?.checked_sub(sum.checked_mul(sum)?)?;
    // deviations are at most n * max(t); their squares must fit as well
    let dev = n.checked_mul(sum)?;
    dev.checked_mul(dev)?.checked_mul(4)?;
    spread.checked_mul(4)?;
    Some((n, sum, sum_sq))
}

/// Bin of z = deviation / sqrt(spread), with spread > 0.
fn exact_bin(deviation: i128, spread: u128) -> u8 {
    // z < k/2 for k in -2, -1, 1, 2
    let below = |k: i128| -> bool {
        let lhs = 2 * deviation;
        let lhs_sq = lhs.unsigned_abs() * lhs.unsigned_abs();
        let rhs_sq = (k * k) as u128 * spread;
        match (lhs < 0, k < 0) {
            (true, false) => true,
            (false, true) => false,
            (false, false) => lhs_sq < rhs_sq,
            (true, true) => lhs_sq > rhs_sq,
        }
    };
    if below(-2) {
        1
    } else if below(-1) {
        2
    } else if below(1) {
        3
    } else if below(2) {
        4
    } else {
        5
    }
}

fn float_bins(d: &DurationVector) -> BinnedVector {
    let read: Vec<f64> = d
        .totals
        .iter()
        .filter(|&&t| t > 0)
        .map(|&t| t as f64)
        .collect();
    let n = read.len() as f64;
    let mean = read.iter().sum::<f64>() / n;
    let sd = (read.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let degenerate = read.len() <= 1 || sd == 0.0;
    let bins = d
        .totals
        .iter()
        .map(|&t| match t {
            0 => 0,
            _ if degenerate => 3,
            _ => bin_for_z((t as f64 - mean) / sd),
        })
        .collect();
    BinnedVector { bins }
}

/// Per-word mean bin across participants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateVector {
    pub means: Vec<f64>,
    pub participant_count: usize,
}

/// Column means of the participants' bins. Each input is labelled with
/// its participant so a length mismatch can be traced.
pub fn aggregate_bins<'a, I>(binned: I) -> Result<AggregateVector, GazeError>
where
    I: IntoIterator<Item = (&'a str, &'a BinnedVector)>,
{
    let mut sums: Option<Vec<u64>> = None;
    let mut p = 0usize;
    for (participant, vector) in binned {
        let sums = sums.get_or_insert_with(|| vec![0; vector.len()]);
        if sums.len() != vector.len() {
            return Err(GazeError::LengthMismatch {
                participant: participant.to_owned(),
                got: vector.len(),
                expected: sums.len(),
            });
        }
        for (s, &b) in sums.iter_mut().zip(&vector.bins) {
            *s += u64::from(b);
        }
        p += 1;
    }
    let sums = sums.ok_or(GazeError::NoParticipants)?;
    Ok(AggregateVector {
        means: sums.into_iter().map(|s| s as f64 / p as f64).collect(),
        participant_count: p,
    })
}
