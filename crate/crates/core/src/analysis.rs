//! Corpus-level processing and the agreement analysis.
//!
//! [`process`] runs the per-trial pipeline over an export and applies the
//! exclusion rule; [`analyze`] turns the result into an [`AgreementReport`]
//! and a [`BehaviorSummary`]. Output never depends on the order of the
//! input trials.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agreement::{build_pairs, krippendorff_alpha, LabelMatrix, PairObservation};
use crate::gaze::{consolidate, total_dwell, zscore_bins, BinnedVector, DurationVector, FixationWindow};
use crate::metrics::{trial_metrics, TrialMetrics, TrialSignals, FOCUS_MIN_BIN, MIN_VISIT_MS};
use crate::model::{Choice, Position, Rationale, Role, StimulusSet, TrialRecord};
use crate::stats::{
    bonferroni, chi_square_goodness, chi_square_independence, t_test_paired, t_test_two_sample,
    Contingency, GroupSummary, StatsError, TestResult, Variance,
};
use crate::study::{apply_exclusions, MIN_COVERAGE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("trial {trial} refers to unknown stimulus {stimulus}")]
    UnknownStimulus { trial: String, stimulus: String },
    #[error("trial id {0} appears more than once")]
    DuplicateTrial(String),
    #[error("export contains no trials")]
    Empty,
    #[error("need at least two stimuli with two or more retained annotations, found {0}")]
    InsufficientData(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub min_fixation_ms: u64,
    pub max_fixation_ms: u64,
    pub min_visit_ms: u64,
    pub min_coverage: f64,
    pub focus_min_bin: u8,
    /// Response switches needed to count a trial as looping.
    pub loop_min_bounces: usize,
    pub variance: Variance,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        let window = FixationWindow::default();
        AnalysisConfig {
            min_fixation_ms: window.min_ms,
            max_fixation_ms: window.max_ms,
            min_visit_ms: MIN_VISIT_MS,
            min_coverage: MIN_COVERAGE,
            focus_min_bin: FOCUS_MIN_BIN,
            loop_min_bounces: 2,
            variance: Variance::Pooled,
        }
    }
}

impl AnalysisConfig {
    fn window(&self) -> FixationWindow {
        FixationWindow {
            min_ms: self.min_fixation_ms,
            max_ms: self.max_fixation_ms,
        }
    }
}

/// Pipeline output for one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessedTrial {
    pub trial_id: String,
    pub participant_id: String,
    pub stimulus_id: String,
    pub choice: Option<Choice>,
    pub excluded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exclusion_reason: Option<String>,
    pub events: usize,
    pub malformed_events: usize,
    pub fixations: usize,
    pub cleaned_fixations: usize,
    pub durations: DurationVector,
    pub bins: BinnedVector,
    pub metrics: Option<TrialMetrics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedCorpus {
    /// Input trials sorted by id, with exclusions applied.
    pub trials: Vec<TrialRecord>,
    /// Same order as `trials`.
    pub processed: Vec<ProcessedTrial>,
}

impl ProcessedCorpus {
    pub fn metrics(&self) -> BTreeMap<String, TrialMetrics> {
        self.processed
            .iter()
            .filter_map(|p| Some((p.trial_id.clone(), p.metrics.clone()?)))
            .collect()
    }

    pub fn retained(&self) -> impl Iterator<Item = (&TrialRecord, &ProcessedTrial)> {
        self.trials.iter().zip(&self.processed).filter(|(t, _)| !t.excluded)
    }
}

pub fn process_trial(
    trial: &TrialRecord,
    stimuli: &StimulusSet,
    config: &AnalysisConfig,
) -> Result<ProcessedTrial, AnalysisError> {
    let stimulus = stimuli
        .get(&trial.stimulus_id)
        .ok_or_else(|| AnalysisError::UnknownStimulus {
            trial: trial.trial_id.clone(),
            stimulus: trial.stimulus_id.clone(),
        })?;
    let consolidated = consolidate(&trial.events, stimulus);
    let cleaned = config.window().clean(&consolidated.fixations);
    let durations = total_dwell(&cleaned, stimulus.word_count_total())
        .expect("consolidated fixations index words of their own stimulus");
    let bins = zscore_bins(&durations);
    let metrics = trial_metrics(
        TrialSignals {
            events: &trial.events,
            cleaned: &cleaned,
            durations: &durations,
            bins: &bins,
            stimulus,
            choice: trial.choice,
        },
        config.min_visit_ms,
        config.focus_min_bin,
    )
    .ok();
    Ok(ProcessedTrial {
        trial_id: trial.trial_id.clone(),
        participant_id: trial.participant_id.clone(),
        stimulus_id: trial.stimulus_id.clone(),
        choice: trial.choice,
        excluded: false,
        exclusion_reason: None,
        events: trial.events.len(),
        malformed_events: consolidated.malformed_events,
        fixations: consolidated.fixations.len(),
        cleaned_fixations: cleaned.len(),
        durations,
        bins,
        metrics,
    })
}

/// Runs the pipeline on every trial and marks exclusions.
pub fn process(
    mut trials: Vec<TrialRecord>,
    stimuli: &StimulusSet,
    config: &AnalysisConfig,
) -> Result<ProcessedCorpus, AnalysisError> {
    if trials.is_empty() {
        return Err(AnalysisError::Empty);
    }
    trials.sort_by(|a, b| a.trial_id.cmp(&b.trial_id));
    if let Some(w) = trials.windows(2).find(|w| w[0].trial_id == w[1].trial_id) {
        return Err(AnalysisError::DuplicateTrial(w[0].trial_id.clone()));
    }
    let mut processed = trials
        .par_iter()
        .map(|t| process_trial(t, stimuli, config))
        .collect::<Result<Vec<_>, _>>()?;
    let metrics: BTreeMap<String, TrialMetrics> = processed
        .iter()
        .filter_map(|p| Some((p.trial_id.clone(), p.metrics.clone()?)))
        .collect();
    apply_exclusions(&mut trials, &metrics, config.min_coverage);
    for (t, p) in trials.iter().zip(processed.iter_mut()) {
        p.excluded = t.excluded;
        p.exclusion_reason = t.exclusion_reason.clone();
    }
    Ok(ProcessedCorpus { trials, processed })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    pub items: usize,
    pub skipped_items: usize,
    pub pairs: usize,
    pub agreeing: usize,
    pub disagreeing: usize,
}

/// Statistics relating reading behavior to inter-annotator agreement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    /// Nominal alpha over the response each annotator picked.
    pub alpha: Option<f64>,
    pub alpha_items: usize,
    pub tests: Vec<TestResult>,
    /// Tests that could not be computed, with the reason.
    pub errors: BTreeMap<String, String>,
    /// Bonferroni families: family name to member tests.
    pub families: BTreeMap<String, Vec<String>>,
    pub pair_counts: PairCounts,
    pub unit_of_analysis: String,
    /// Share of retained annotations that match the source corpus label.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_label_match: Option<f64>,
    pub config: AnalysisConfig,
}

impl AgreementReport {
    pub fn test(&self, name: &str) -> Option<&TestResult> {
        self.tests.iter().find(|t| t.test_name == name)
    }
}

const UNIT_OF_ANALYSIS: &str = "annotator-pair membership: every unordered pair of annotators on a stimulus is \
     labelled agree or disagree, and each member contributes its own trial values to that pair's group, so an \
     annotator counts once per pair it belongs to; pair-level quantities (shared rationale, focus overlap) count \
     once per pair";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub count: usize,
    pub n: usize,
    pub rate: Option<f64>,
}

impl Rate {
    fn of(count: usize, n: usize) -> Rate {
        Rate {
            count,
            n,
            rate: (n > 0).then(|| count as f64 / n as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RereadRates {
    pub any: Rate,
    pub response: Rate,
    pub prompt: Rate,
    pub chosen: Rate,
    pub rejected: Rate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageMeans {
    pub overall: f64,
    pub prompt: f64,
    pub chosen: f64,
    pub rejected: f64,
    pub responses: f64,
}

/// Skip rate per tenth of the response, front to back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipDeciles {
    pub chosen: Vec<Option<f64>>,
    pub rejected: Vec<Option<f64>>,
    pub all: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityBin {
    pub quartile: usize,
    pub min_similarity: f64,
    pub max_similarity: f64,
    pub stimuli: usize,
    pub reread_response: Rate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorSummary {
    pub trials: usize,
    pub retained: usize,
    pub excluded: BTreeMap<String, usize>,
    pub exclusion_rate: f64,
    pub reread: RereadRates,
    pub last_section_chosen: Rate,
    pub last_section_chosen_among_rereaders: Rate,
    pub looped: Rate,
    pub path_length: GroupSummary,
    pub ms_per_word_responses: GroupSummary,
    pub coverage: CoverageMeans,
    pub skipped_chosen: GroupSummary,
    pub skipped_rejected: GroupSummary,
    pub skip_deciles: SkipDeciles,
    pub chosen_position: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<Vec<SimilarityBin>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub report: AgreementReport,
    pub summary: BehaviorSummary,
}

/// Collects named results and errors for one Bonferroni family.
#[derive(Default)]
struct Family {
    results: Vec<TestResult>,
    names: Vec<String>,
}

impl Family {
    fn push(&mut self, name: &str, result: Result<TestResult, StatsError>, errors: &mut BTreeMap<String, String>) {
        self.names.push(name.to_owned());
        match result {
            Ok(r) => self.results.push(r.named(name)),
            Err(e) => {
                errors.insert(name.to_owned(), e.to_string());
            }
        }
    }

    /// Adjusted results; every attempted test counts toward m.
    fn finish(self) -> (Vec<TestResult>, Vec<String>) {
        let m = self.names.len();
        (bonferroni(&self.results, m), self.names)
    }
}

fn relabel(mut r: TestResult, from: &str, to: &str) -> TestResult {
    if let Some(g) = r.groups.remove(from) {
        r.groups.insert(to.to_owned(), g);
    }
    r
}

fn membership_table(
    pairs: &[PairObservation],
    label: &str,
    flag: impl Fn(&crate::agreement::PairMember) -> bool,
) -> Result<TestResult, StatsError> {
    let mut counts = vec![vec![0u64; 2]; 2];
    for p in pairs {
        let row = usize::from(!p.agree);
        for m in &p.members {
            counts[row][usize::from(!flag(m))] += 1;
        }
    }
    let mut r = chi_square_independence(&counts)?;
    r.table = Some(Contingency {
        rows: vec!["agree".into(), "disagree".into()],
        cols: vec![label.into(), format!("no_{label}")],
        counts,
    });
    Ok(r)
}

fn rationale_table(pairs: &[PairObservation]) -> Result<TestResult, StatsError> {
    let mut counts = vec![vec![0u64; Rationale::ALL.len()]; 2];
    for p in pairs {
        let row = usize::from(!p.agree);
        for m in &p.members {
            let col = Rationale::ALL.iter().position(|&r| r == m.rationale).expect("known rationale");
            counts[row][col] += 1;
        }
    }
    // categories nobody used carry no information
    let keep: Vec<usize> = (0..Rationale::ALL.len())
        .filter(|&j| counts[0][j] + counts[1][j] > 0)
        .collect();
    let counts: Vec<Vec<u64>> = counts
        .iter()
        .map(|row| keep.iter().map(|&j| row[j]).collect())
        .collect();
    let mut r = chi_square_independence(&counts)?;
    r.table = Some(Contingency {
        rows: vec!["agree".into(), "disagree".into()],
        cols: keep.iter().map(|&j| Rationale::ALL[j].as_str().to_owned()).collect(),
        counts,
    });
    Ok(r)
}

fn shared_rationale_table(pairs: &[PairObservation]) -> Result<TestResult, StatsError> {
    let mut counts = vec![vec![0u64; 2]; 2];
    for p in pairs {
        counts[usize::from(!p.agree)][usize::from(!p.shared_rationale)] += 1;
    }
    let mut r = chi_square_independence(&counts)?;
    r.table = Some(Contingency {
        rows: vec!["agree".into(), "disagree".into()],
        cols: vec!["shared_rationale".into(), "different_rationale".into()],
        counts,
    });
    Ok(r)
}

fn by_agreement(
    pairs: &[PairObservation],
    variance: Variance,
    value: impl Fn(&crate::agreement::PairMember) -> f64,
) -> Result<TestResult, StatsError> {
    let (mut agree, mut disagree) = (Vec::new(), Vec::new());
    for p in pairs {
        let group = if p.agree { &mut agree } else { &mut disagree };
        group.extend(p.members.iter().map(&value));
    }
    let r = t_test_two_sample(&agree, &disagree, variance)?;
    Ok(relabel(relabel(r, "a", "agree"), "b", "disagree"))
}

fn focus_by_agreement(pairs: &[PairObservation], variance: Variance) -> Result<TestResult, StatsError> {
    let agree: Vec<f64> = pairs.iter().filter(|p| p.agree).map(|p| p.focus_overlap).collect();
    let disagree: Vec<f64> = pairs.iter().filter(|p| !p.agree).map(|p| p.focus_overlap).collect();
    let r = t_test_two_sample(&agree, &disagree, variance)?;
    Ok(relabel(relabel(r, "a", "agree"), "b", "disagree"))
}

fn mean_of(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

fn exclusion_kind(reason: &str) -> String {
    if reason.starts_with("word coverage") {
        "low_coverage".into()
    } else {
        reason.replace(' ', "_")
    }
}

fn deciles(positions: impl Iterator<Item = (f64, bool)>) -> Vec<Option<f64>> {
    let mut skipped = [0usize; 10];
    let mut total = [0usize; 10];
    for (pos, skip) in positions {
        let d = ((pos * 10.0).floor() as usize).min(9);
        total[d] += 1;
        skipped[d] += usize::from(skip);
    }
    (0..10)
        .map(|d| (total[d] > 0).then(|| skipped[d] as f64 / total[d] as f64))
        .collect()
}

fn similarity_bins(
    retained: &[(&TrialRecord, &TrialMetrics)],
    similarity: &BTreeMap<String, f64>,
) -> Vec<SimilarityBin> {
    let mut stimuli: Vec<(&str, f64)> = retained
        .iter()
        .map(|(t, _)| t.stimulus_id.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .filter_map(|id| Some((id, *similarity.get(id)?)))
        .filter(|(_, s)| s.is_finite())
        .collect();
    stimuli.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(b.0)));
    let n = stimuli.len();
    (0..4)
        .filter_map(|q| {
            let slice = &stimuli[q * n / 4..(q + 1) * n / 4];
            let ids: BTreeSet<&str> = slice.iter().map(|s| s.0).collect();
            let (first, last) = (slice.first()?, slice.last()?);
            let trials: Vec<_> = retained.iter().filter(|(t, _)| ids.contains(t.stimulus_id.as_str())).collect();
            Some(SimilarityBin {
                quartile: q + 1,
                min_similarity: first.1,
                max_similarity: last.1,
                stimuli: slice.len(),
                reread_response: Rate::of(trials.iter().filter(|(_, m)| m.reread_response()).count(), trials.len()),
            })
        })
        .collect()
}

pub fn summarize(
    corpus: &ProcessedCorpus,
    config: &AnalysisConfig,
    similarity: Option<&BTreeMap<String, f64>>,
) -> BehaviorSummary {
    let retained: Vec<(&TrialRecord, &TrialMetrics)> = corpus
        .retained()
        .filter_map(|(t, p)| Some((t, p.metrics.as_ref()?)))
        .collect();
    let n = retained.len();
    let count = |f: &dyn Fn(&TrialMetrics) -> bool| Rate::of(retained.iter().filter(|(_, m)| f(m)).count(), n);
    let mut excluded = BTreeMap::new();
    for t in corpus.trials.iter().filter(|t| t.excluded) {
        *excluded
            .entry(exclusion_kind(t.exclusion_reason.as_deref().unwrap_or("unspecified")))
            .or_insert(0) += 1;
    }
    let rereaders: Vec<_> = retained.iter().filter(|(_, m)| m.reread_any()).collect();
    let column = |f: &dyn Fn(&TrialMetrics) -> f64| -> Vec<f64> { retained.iter().map(|(_, m)| f(m)).collect() };
    let positions = |role: Option<Role>| {
        deciles(
            retained
                .iter()
                .flat_map(|(_, m)| m.skip_positions.iter())
                .filter(move |s| role.is_none_or(|r| s.role == r))
                .map(|s| (s.position, s.skipped)),
        )
    };
    let mut chosen_position = BTreeMap::from([("first".to_owned(), 0), ("second".to_owned(), 0)]);
    for (t, _) in &retained {
        let key = match t.chosen_position() {
            Some(Position::First) => "first",
            Some(Position::Second) => "second",
            None => continue,
        };
        *chosen_position.get_mut(key).expect("both keys present") += 1;
    }
    BehaviorSummary {
        trials: corpus.trials.len(),
        retained: n,
        exclusion_rate: excluded.values().sum::<usize>() as f64 / corpus.trials.len().max(1) as f64,
        excluded,
        reread: RereadRates {
            any: count(&|m| m.reread_any()),
            response: count(&|m| m.reread_response()),
            prompt: count(&|m| m.reread_prompt),
            chosen: count(&|m| m.reread_chosen),
            rejected: count(&|m| m.reread_rejected),
        },
        last_section_chosen: count(&|m| m.last_section == Some(Role::Chosen)),
        last_section_chosen_among_rereaders: Rate::of(
            rereaders.iter().filter(|(_, m)| m.last_section == Some(Role::Chosen)).count(),
            rereaders.len(),
        ),
        looped: count(&|m| m.bounce_count >= config.loop_min_bounces),
        path_length: GroupSummary::of(&column(&|m| m.path_length as f64)),
        ms_per_word_responses: GroupSummary::of(&column(&|m| m.ms_per_word_responses)),
        coverage: CoverageMeans {
            overall: mean_of(retained.iter().map(|(_, m)| m.word_coverage)),
            prompt: mean_of(retained.iter().map(|(_, m)| m.section_coverage.prompt)),
            chosen: mean_of(retained.iter().map(|(_, m)| m.section_coverage.chosen)),
            rejected: mean_of(retained.iter().map(|(_, m)| m.section_coverage.rejected)),
            responses: mean_of(retained.iter().map(|(_, m)| m.section_coverage.responses)),
        },
        skipped_chosen: GroupSummary::of(&column(&|m| m.skipped_chosen as f64)),
        skipped_rejected: GroupSummary::of(&column(&|m| m.skipped_rejected as f64)),
        skip_deciles: SkipDeciles {
            chosen: positions(Some(Role::Chosen)),
            rejected: positions(Some(Role::Rejected)),
            all: positions(None),
        },
        chosen_position,
        similarity: similarity.map(|s| similarity_bins(&retained, s)),
    }
}

pub fn agreement_report(corpus: &ProcessedCorpus, stimuli: &StimulusSet, config: &AnalysisConfig) -> AgreementReport {
    let metrics = corpus.metrics();
    let pair_set = build_pairs(&corpus.trials, &metrics);
    let pairs = &pair_set.pairs;
    let mut errors = BTreeMap::new();

    let mut by_item: BTreeMap<&str, Vec<Choice>> = BTreeMap::new();
    for (t, _) in corpus.retained() {
        if let Some(c) = t.choice {
            by_item.entry(&t.stimulus_id).or_default().push(c);
        }
    }
    let matrix = LabelMatrix::new(
        by_item
            .values()
            .map(|labels| labels.iter().copied().map(Some).collect())
            .collect(),
    );
    let alpha = match krippendorff_alpha(&matrix) {
        Ok(a) => Some(a),
        Err(e) => {
            errors.insert("krippendorff_alpha".into(), e.to_string());
            None
        }
    };

    let loop_min = config.loop_min_bounces;
    let mut categorical = Family::default();
    categorical.push("reread_any_by_agreement", membership_table(pairs, "reread", |m| m.reread_any), &mut errors);
    categorical.push(
        "reread_response_by_agreement",
        membership_table(pairs, "reread_response", |m| m.reread_response),
        &mut errors,
    );
    categorical.push(
        "loop_by_agreement",
        membership_table(pairs, "loop", |m| m.bounce_count >= loop_min),
        &mut errors,
    );
    categorical.push("rationale_by_agreement", rationale_table(pairs), &mut errors);
    categorical.push("shared_rationale_by_agreement", shared_rationale_table(pairs), &mut errors);

    let v = config.variance;
    let mut continuous = Family::default();
    continuous.push("path_length_by_agreement", by_agreement(pairs, v, |m| m.path_length as f64), &mut errors);
    continuous.push(
        "ms_per_word_by_agreement",
        by_agreement(pairs, v, |m| m.ms_per_word_responses),
        &mut errors,
    );
    continuous.push("word_coverage_by_agreement", by_agreement(pairs, v, |m| m.word_coverage), &mut errors);
    continuous.push("focus_overlap_by_agreement", focus_by_agreement(pairs, v), &mut errors);

    let retained: Vec<&TrialMetrics> = corpus.retained().filter_map(|(_, p)| p.metrics.as_ref()).collect();
    let mut behavior = Family::default();
    let chosen: Vec<f64> = retained.iter().map(|m| m.skipped_chosen as f64).collect();
    let rejected: Vec<f64> = retained.iter().map(|m| m.skipped_rejected as f64).collect();
    behavior.push(
        "skipped_chosen_vs_rejected",
        t_test_paired(&chosen, &rejected).map(|r| relabel(relabel(r, "x", "chosen"), "y", "rejected")),
        &mut errors,
    );
    let mut positions = [0u64; 2];
    for (t, _) in corpus.retained() {
        match t.chosen_position() {
            Some(Position::First) => positions[0] += 1,
            Some(Position::Second) => positions[1] += 1,
            None => {}
        }
    }
    behavior.push("position_bias", chi_square_goodness(&positions, &[0.5, 0.5]), &mut errors);

    let mut tests = Vec::new();
    let mut families = BTreeMap::new();
    for (name, family) in [("categorical", categorical), ("continuous", continuous), ("behavior", behavior)] {
        let (results, names) = family.finish();
        tests.extend(results);
        families.insert(name.to_owned(), names);
    }

    let labelled: Vec<bool> = corpus
        .retained()
        .filter_map(|(t, _)| {
            let label = stimuli.record(&t.stimulus_id)?.source_label?;
            Some(t.choice? == label)
        })
        .collect();
    AgreementReport {
        alpha,
        alpha_items: matrix.pairable_items(),
        tests,
        errors,
        families,
        pair_counts: PairCounts {
            items: pairs.iter().map(|p| p.item_id.as_str()).collect::<BTreeSet<_>>().len(),
            skipped_items: pair_set.skipped.len(),
            pairs: pairs.len(),
            agreeing: pair_set.agreeing(),
            disagreeing: pairs.len() - pair_set.agreeing(),
        },
        unit_of_analysis: UNIT_OF_ANALYSIS.into(),
        source_label_match: (!labelled.is_empty())
            .then(|| labelled.iter().filter(|&&b| b).count() as f64 / labelled.len() as f64),
        config: config.clone(),
    }
}

/// Full analysis of a processed corpus.
pub fn analyze(
    corpus: &ProcessedCorpus,
    stimuli: &StimulusSet,
    config: &AnalysisConfig,
    similarity: Option<&BTreeMap<String, f64>>,
) -> Result<Analysis, AnalysisError> {
    let mut per_item: BTreeMap<&str, usize> = BTreeMap::new();
    for (t, p) in corpus.retained() {
        if p.metrics.is_some() {
            *per_item.entry(&t.stimulus_id).or_insert(0) += 1;
        }
    }
    let usable = per_item.values().filter(|&&n| n >= 2).count();
    if usable < 2 {
        return Err(AnalysisError::InsufficientData(usable));
    }
    Ok(Analysis {
        report: agreement_report(corpus, stimuli, config),
        summary: summarize(corpus, config, similarity),
    })
}
