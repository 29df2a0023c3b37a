//! Inter-annotator agreement: Krippendorff's alpha and the annotator pairs
//! the agreement tests are run over.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{focus_overlap, TrialMetrics};
use crate::model::{Choice, Position, Rationale, TrialRecord};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AgreementError {
    #[error("alpha is undefined: {0}")]
    Undefined(&'static str),
}

/// Items × annotators grid of nominal labels, with gaps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMatrix<L> {
    items: Vec<Vec<Option<L>>>,
}

impl<L: Ord + Clone> LabelMatrix<L> {
    pub fn new(items: Vec<Vec<Option<L>>>) -> Self {
        LabelMatrix { items }
    }

    pub fn items(&self) -> &[Vec<Option<L>>] {
        &self.items
    }

    /// Items carrying at least two labels.
    pub fn pairable_items(&self) -> usize {
        self.items
            .iter()
            .filter(|row| row.iter().flatten().count() >= 2)
            .count()
    }
}

/// Nominal Krippendorff's alpha from the coincidence matrix.
///
/// Only labels that share an item are paired; items with a single label
/// contribute nothing. Returns 1.0 when every pairable value is the same
/// category.
pub fn krippendorff_alpha<L: Ord + Clone>(matrix: &LabelMatrix<L>) -> Result<f64, AgreementError> {
    if matrix.pairable_items() < 2 {
        return Err(AgreementError::Undefined("fewer than two items carry two or more labels"));
    }
    let categories: BTreeMap<&L, usize> = matrix
        .items
        .iter()
        .flatten()
        .flatten()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, l)| (l, i))
        .collect();
    let k = categories.len();
    let mut coincidence = vec![vec![0.0f64; k]; k];
    for row in &matrix.items {
        let present: Vec<usize> = row.iter().flatten().map(|l| categories[l]).collect();
        let m = present.len();
        if m < 2 {
            continue;
        }
        let weight = 1.0 / (m - 1) as f64;
        let mut counts = vec![0usize; k];
        for &c in &present {
            counts[c] += 1;
        }
        for c in 0..k {
            for d in 0..k {
                let pairs = if c == d {
                    counts[c] * counts[c].saturating_sub(1)
                } else {
                    counts[c] * counts[d]
                };
                coincidence[c][d] += pairs as f64 * weight;
            }
        }
    }
    let marginals: Vec<f64> = coincidence.iter().map(|row| row.iter().sum()).collect();
    let n: f64 = marginals.iter().sum();
    let mut observed = 0.0;
    let mut expected = 0.0;
    for c in 0..k {
        for d in 0..k {
            if c != d {
                observed += coincidence[c][d];
                expected += marginals[c] * marginals[d];
            }
        }
    }
    if expected == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - (n - 1.0) * observed / expected)
}

/// One annotator's side of a pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMember {
    pub trial_id: String,
    pub participant_id: String,
    pub choice: Choice,
    pub rationale: Rationale,
    pub position: Position,
    pub reread_any: bool,
    pub reread_response: bool,
    #[serde(rename = "loop")]
    pub looped: bool,
    pub bounce_count: usize,
    pub path_length: usize,
    pub ms_per_word_responses: f64,
    pub word_coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairObservation {
    pub item_id: String,
    pub members: [PairMember; 2],
    pub agree: bool,
    pub shared_rationale: bool,
    /// Jaccard overlap of the two focus sets.
    pub focus_overlap: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedItem {
    pub stimulus_id: String,
    pub annotations: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PairSet {
    pub pairs: Vec<PairObservation>,
    pub skipped: Vec<SkippedItem>,
}

impl PairSet {
    pub fn agreeing(&self) -> usize {
        self.pairs.iter().filter(|p| p.agree).count()
    }
}

/// Every unordered annotator pair per stimulus.
///
/// Trials without a choice, excluded trials, and trials missing from
/// `metrics` are ignored; stimuli left with fewer than two annotations are
/// reported in [`PairSet::skipped`].
pub fn build_pairs(trials: &[TrialRecord], metrics: &BTreeMap<String, TrialMetrics>) -> PairSet {
    let mut by_item: BTreeMap<&str, Vec<(&TrialRecord, &TrialMetrics)>> = BTreeMap::new();
    for t in trials {
        if t.excluded || !t.is_annotated() {
            continue;
        }
        if let Some(m) = metrics.get(&t.trial_id) {
            by_item.entry(&t.stimulus_id).or_default().push((t, m));
        }
    }
    let mut out = PairSet::default();
    for (item, mut members) in by_item {
        if members.len() < 2 {
            out.skipped.push(SkippedItem {
                stimulus_id: item.to_owned(),
                annotations: members.len(),
            });
            continue;
        }
        members.sort_by(|a, b| {
            (&a.0.participant_id, &a.0.trial_id).cmp(&(&b.0.participant_id, &b.0.trial_id))
        });
        for i in 0..members.len() {
            for j in i + 1..members.len() {
                let (a, b) = (member(members[i]), member(members[j]));
                out.pairs.push(PairObservation {
                    item_id: item.to_owned(),
                    agree: a.choice == b.choice,
                    shared_rationale: a.rationale == b.rationale,
                    focus_overlap: focus_overlap(&members[i].1.focus_set, &members[j].1.focus_set),
                    members: [a, b],
                });
            }
        }
    }
    out
}

fn member((trial, m): (&TrialRecord, &TrialMetrics)) -> PairMember {
    PairMember {
        trial_id: trial.trial_id.clone(),
        participant_id: trial.participant_id.clone(),
        choice: trial.choice.expect("annotated trial"),
        rationale: trial.rationale.expect("annotated trial"),
        position: trial.chosen_position().expect("annotated trial"),
        reread_any: m.reread_any(),
        reread_response: m.reread_response(),
        looped: m.looped,
        bounce_count: m.bounce_count,
        path_length: m.path_length,
        ms_per_word_responses: m.ms_per_word_responses,
        word_coverage: m.word_coverage,
    }
}
