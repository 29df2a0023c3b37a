//! Per-trial reading behavior: section paths, re-reading, loops,
//! coverage, reading rate, skipping, and focused-word overlap.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaze::{BinnedVector, DurationVector, Fixation, HoverEvent};
use crate::model::{Choice, Role, Section, TokenizedStimulus};

/// Shortest wall-clock span of a section run that counts as reading it.
pub const MIN_VISIT_MS: u64 = 1000;

/// Smallest bin counted as a focused word ("short" or longer).
pub const FOCUS_MIN_BIN: u8 = 2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("trial has no recorded choice")]
    MissingChoice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionVisit {
    pub section: Section,
    pub enter_ms: u64,
    pub exit_ms: u64,
    pub dwell_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadingPath {
    pub visits: Vec<SectionVisit>,
}

impl ReadingPath {
    /// Number of edges between visits.
    pub fn len(&self) -> usize {
        self.visits.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.visits.is_empty()
    }

    pub fn sections(&self) -> impl Iterator<Item = Section> + '_ {
        self.visits.iter().map(|v| v.section)
    }
}

/// Builds the section-level reading path of a trial.
///
/// Events are grouped into maximal same-section runs; a run spanning less
/// than `min_visit_ms` from first entry to last exit is a stray pass and is
/// dropped, after which adjacent visits to one section are joined.
pub fn extract_path(events: &[HoverEvent], min_visit_ms: u64) -> ReadingPath {
    let mut visits: Vec<SectionVisit> = Vec::new();
    let mut push = |run: SectionVisit| {
        if run.exit_ms - run.enter_ms < min_visit_ms {
            return;
        }
        match visits.last_mut() {
            Some(last) if last.section == run.section => {
                last.exit_ms = last.exit_ms.max(run.exit_ms);
                last.dwell_ms = last.exit_ms - last.enter_ms;
            }
            _ => visits.push(SectionVisit {
                dwell_ms: run.exit_ms - run.enter_ms,
                ..run
            }),
        }
    };
    let mut run: Option<SectionVisit> = None;
    for e in events {
        match run.as_mut() {
            Some(r) if r.section == e.section => r.exit_ms = r.exit_ms.max(e.exit_ms),
            _ => {
                let next = SectionVisit {
                    section: e.section,
                    enter_ms: e.enter_ms,
                    exit_ms: e.exit_ms.max(e.enter_ms),
                    dwell_ms: 0,
                };
                if let Some(done) = run.replace(next) {
                    push(done);
                }
            }
        }
    }
    if let Some(done) = run {
        push(done);
    }
    ReadingPath { visits }
}

/// Role-level summary of a reading path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionFlags {
    pub reread_prompt: bool,
    pub reread_chosen: bool,
    pub reread_rejected: bool,
    pub last_section: Option<Role>,
    /// Returned to a response after visiting the other one.
    #[serde(rename = "loop")]
    pub looped: bool,
    /// Switches between the two responses, ignoring prompt visits.
    pub bounce_count: usize,
    pub path_length: usize,
}

impl SectionFlags {
    pub fn reread_any(&self) -> bool {
        self.reread_prompt || self.reread_chosen || self.reread_rejected
    }

    pub fn reread_response(&self) -> bool {
        self.reread_chosen || self.reread_rejected
    }

    /// Stricter loop reading: at least `min_bounces` switches.
    pub fn loops_at_least(&self, min_bounces: usize) -> bool {
        self.bounce_count >= min_bounces
    }
}

pub fn section_flags(path: &ReadingPath, choice: Option<Choice>) -> Result<SectionFlags, MetricsError> {
    let choice = choice.ok_or(MetricsError::MissingChoice)?;
    let count = |section: Section| path.sections().filter(|&s| s == section).count();
    let mut responses: Vec<Section> = path.sections().filter(|&s| s != Section::Prompt).collect();
    responses.dedup();
    let bounce_count = responses.len().saturating_sub(1);
    Ok(SectionFlags {
        reread_prompt: count(Section::Prompt) >= 2,
        reread_chosen: count(Role::Chosen.section(choice)) >= 2,
        reread_rejected: count(Role::Rejected.section(choice)) >= 2,
        last_section: path.visits.last().map(|v| v.section.role(choice)),
        looped: bounce_count >= 2,
        bounce_count,
        path_length: path.len(),
    })
}

/// Covered (fixated) word counts per section.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coverage {
    pub covered: [usize; 3],
    pub words: [usize; 3],
}

impl Coverage {
    pub fn overall(&self) -> f64 {
        ratio(self.covered.iter().sum(), self.words.iter().sum())
    }

    pub fn section(&self, section: Section) -> f64 {
        ratio(self.covered[section.index()], self.words[section.index()])
    }

    /// Both responses pooled.
    pub fn responses(&self) -> f64 {
        ratio(self.covered[1] + self.covered[2], self.words[1] + self.words[2])
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// A word is covered once it has at least one cleaned fixation.
pub fn coverage(cleaned: &[Fixation], stimulus: &TokenizedStimulus) -> Coverage {
    let covered_words: BTreeSet<usize> = cleaned.iter().map(|f| f.word_index).collect();
    let mut covered = [0usize; 3];
    for &w in &covered_words {
        if let Some(section) = stimulus.section_of_word(w) {
            covered[section.index()] += 1;
        }
    }
    Coverage {
        covered,
        words: stimulus.word_count_per_section(),
    }
}

/// Milliseconds of cleaned dwell per response word, prompt excluded.
pub fn response_reading_rate(d: &DurationVector, stimulus: &TokenizedStimulus) -> f64 {
    let ranges = [
        stimulus.word_range(Section::ResponseA),
        stimulus.word_range(Section::ResponseB),
    ];
    let words: usize = ranges.iter().map(|r| r.len()).sum();
    let total: u64 = ranges
        .into_iter()
        .flat_map(|r| d.totals[r].iter().copied())
        .sum();
    if words == 0 {
        0.0
    } else {
        total as f64 / words as f64
    }
}

/// One response word and whether it went unread.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkipPosition {
    pub role: Role,
    /// Index within the response over (response length - 1).
    pub position: f64,
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipProfile {
    pub skipped_chosen: usize,
    pub skipped_rejected: usize,
    pub positions: Vec<SkipPosition>,
}

pub fn skip_profile(
    d: &DurationVector,
    stimulus: &TokenizedStimulus,
    choice: Option<Choice>,
) -> Result<SkipProfile, MetricsError> {
    let choice = choice.ok_or(MetricsError::MissingChoice)?;
    let mut profile = SkipProfile {
        skipped_chosen: 0,
        skipped_rejected: 0,
        positions: Vec::new(),
    };
    for role in [Role::Chosen, Role::Rejected] {
        let range = stimulus.word_range(role.section(choice));
        let last = range.len().saturating_sub(1);
        let mut skipped_here = 0;
        for (k, i) in range.enumerate() {
            let skipped = d.totals[i] == 0;
            skipped_here += usize::from(skipped);
            let position = if last == 0 { 0.0 } else { k as f64 / last as f64 };
            profile.positions.push(SkipPosition {
                role,
                position,
                skipped,
            });
        }
        match role {
            Role::Chosen => profile.skipped_chosen = skipped_here,
            _ => profile.skipped_rejected = skipped_here,
        }
    }
    Ok(profile)
}

/// Words binned at `min_bin` or above.
pub fn focus_set(bins: &BinnedVector, min_bin: u8) -> BTreeSet<usize> {
    bins.bins
        .iter()
        .enumerate()
        .filter(|(_, &b)| b >= min_bin)
        .map(|(i, _)| i)
        .collect()
}

/// Jaccard index of two focus sets; two empty sets overlap fully.
pub fn focus_overlap(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Coverage fractions keyed by role.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RoleCoverage {
    pub prompt: f64,
    pub chosen: f64,
    pub rejected: f64,
    pub responses: f64,
}

/// Everything measured about one annotated trial.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub reread_prompt: bool,
    pub reread_chosen: bool,
    pub reread_rejected: bool,
    pub last_section: Option<Role>,
    #[serde(rename = "loop")]
    pub looped: bool,
    pub bounce_count: usize,
    pub path_length: usize,
    pub ms_per_word_responses: f64,
    pub word_coverage: f64,
    pub section_coverage: RoleCoverage,
    pub skipped_chosen: usize,
    pub skipped_rejected: usize,
    pub skip_positions: Vec<SkipPosition>,
    pub focus_set: BTreeSet<usize>,
}

impl TrialMetrics {
    pub fn reread_any(&self) -> bool {
        self.reread_prompt || self.reread_chosen || self.reread_rejected
    }

    pub fn reread_response(&self) -> bool {
        self.reread_chosen || self.reread_rejected
    }
}

/// Inputs a trial's metrics are computed from.
#[derive(Debug, Clone, Copy)]
pub struct TrialSignals<'a> {
    pub events: &'a [HoverEvent],
    pub cleaned: &'a [Fixation],
    pub durations: &'a DurationVector,
    pub bins: &'a BinnedVector,
    pub stimulus: &'a TokenizedStimulus,
    pub choice: Option<Choice>,
}

pub fn trial_metrics(
    signals: TrialSignals<'_>,
    min_visit_ms: u64,
    focus_min_bin: u8,
) -> Result<TrialMetrics, MetricsError> {
    let choice = signals.choice.ok_or(MetricsError::MissingChoice)?;
    let path = extract_path(signals.events, min_visit_ms);
    let flags = section_flags(&path, Some(choice))?;
    let cov = coverage(signals.cleaned, signals.stimulus);
    let skips = skip_profile(signals.durations, signals.stimulus, Some(choice))?;
    Ok(TrialMetrics {
        reread_prompt: flags.reread_prompt,
        reread_chosen: flags.reread_chosen,
        reread_rejected: flags.reread_rejected,
        last_section: flags.last_section,
        looped: flags.looped,
        bounce_count: flags.bounce_count,
        path_length: flags.path_length,
        ms_per_word_responses: response_reading_rate(signals.durations, signals.stimulus),
        word_coverage: cov.overall(),
        section_coverage: RoleCoverage {
            prompt: cov.section(Section::Prompt),
            chosen: cov.section(Role::Chosen.section(choice)),
            rejected: cov.section(Role::Rejected.section(choice)),
            responses: cov.responses(),
        },
        skipped_chosen: skips.skipped_chosen,
        skipped_rejected: skips.skipped_rejected,
        skip_positions: skips.positions,
        focus_set: focus_set(signals.bins, focus_min_bin),
    })
}
