//! Stimulus preparation from a preference corpus.
//!
//! Items above the 90th percentile of total word count are dropped, as are
//! pairs whose responses both have fewer than three words; the requested
//! number of stimuli is then sampled uniformly from what remains.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{tokenize_stimulus, Choice, StimulusRecord};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PrepareError {
    #[error("requested {requested} stimuli but only {available} survive filtering")]
    NotEnough { requested: usize, available: usize },
    #[error("source corpus is empty")]
    Empty,
}

/// One source preference pair. Without a `prompt`, the dialogue prefix up
/// to the final `Assistant:` turn is split off both texts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceItem {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub prompt: Option<String>,
    pub chosen: String,
    pub rejected: String,
}

const ASSISTANT_TURN: &str = "\n\nAssistant:";

fn split_dialogue(text: &str) -> Option<(&str, &str)> {
    let at = text.rfind(ASSISTANT_TURN)?;
    Some((text[..at].trim(), text[at..].trim()))
}

impl SourceItem {
    /// (prompt, chosen, rejected) with the dialogue prefix split off if needed.
    pub fn sections(&self) -> Option<(String, String, String)> {
        match &self.prompt {
            Some(p) => Some((p.clone(), self.chosen.clone(), self.rejected.clone())),
            None => {
                let (prompt, chosen) = split_dialogue(&self.chosen)?;
                let (_, rejected) = split_dialogue(&self.rejected)?;
                Some((prompt.to_owned(), chosen.to_owned(), rejected.to_owned()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareOptions {
    pub seed: u64,
    pub sample_size: usize,
    pub percentile: f64,
    pub min_response_words: usize,
}

impl PrepareOptions {
    pub fn new(seed: u64, sample_size: usize) -> Self {
        PrepareOptions {
            seed,
            sample_size,
            percentile: 90.0,
            min_response_words: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub mean: f64,
    pub sd: f64,
    pub min: usize,
    pub max: usize,
}

impl LengthStats {
    fn of(values: &[usize]) -> Option<LengthStats> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<usize>() as f64 / n as f64;
        let ss: f64 = values.iter().map(|&v| (v as f64 - mean).powi(2)).sum();
        let sd = if n > 1 { (ss / (n - 1) as f64).sqrt() } else { 0.0 };
        Some(LengthStats {
            mean,
            sd,
            min: *values.iter().min()?,
            max: *values.iter().max()?,
        })
    }
}

/// Word-length summary of the sampled stimuli, per section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthSummary {
    pub chosen: LengthStats,
    pub rejected: LengthStats,
    pub prompt: LengthStats,
    pub total: LengthStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub source_items: usize,
    pub dropped_unparseable: usize,
    pub dropped_percentile: usize,
    pub dropped_short: usize,
    pub survivors: usize,
    pub sampled: usize,
    pub percentile: f64,
    pub percentile_method: String,
    pub threshold_words: usize,
    pub summary: Option<LengthSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedCorpus {
    pub stimuli: Vec<StimulusRecord>,
    pub manifest: Manifest,
}

struct Candidate {
    id: String,
    prompt: String,
    chosen: String,
    rejected: String,
    counts: [usize; 3],
}

impl Candidate {
    fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Nearest-rank percentile of an unsorted sample.
pub fn nearest_rank(values: &[usize], percentile: f64) -> Option<usize> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let rank = ((percentile / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

pub fn prepare_stimuli(items: &[SourceItem], opts: &PrepareOptions) -> Result<PreparedCorpus, PrepareError> {
    if items.is_empty() {
        return Err(PrepareError::Empty);
    }
    let mut unparseable = 0;
    let mut candidates = Vec::new();
    for (line, item) in items.iter().enumerate() {
        let id = item.id.clone().unwrap_or_else(|| format!("item-{line:06}"));
        let parsed = item.sections().and_then(|(prompt, chosen, rejected)| {
            let t = tokenize_stimulus(&prompt, &chosen, &rejected, &id).ok()?;
            Some(Candidate {
                counts: t.word_count_per_section(),
                id,
                prompt,
                chosen,
                rejected,
            })
        });
        match parsed {
            Some(c) => candidates.push(c),
            None => unparseable += 1,
        }
    }
    let totals: Vec<usize> = candidates.iter().map(Candidate::total).collect();
    let threshold = nearest_rank(&totals, opts.percentile).unwrap_or(0);
    let before = candidates.len();
    candidates.retain(|c| c.total() <= threshold);
    let dropped_percentile = before - candidates.len();
    let before = candidates.len();
    candidates.retain(|c| c.counts[1] >= opts.min_response_words || c.counts[2] >= opts.min_response_words);
    let dropped_short = before - candidates.len();

    if opts.sample_size > candidates.len() {
        return Err(PrepareError::NotEnough {
            requested: opts.sample_size,
            available: candidates.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut picks = index::sample(&mut rng, candidates.len(), opts.sample_size).into_vec();
    picks.sort_unstable();
    let stimuli: Vec<StimulusRecord> = picks
        .iter()
        .map(|&i| {
            let c = &candidates[i];
            let chosen_is_a = rng.random::<bool>();
            let (a, b, label) = if chosen_is_a {
                (&c.chosen, &c.rejected, Choice::ResponseA)
            } else {
                (&c.rejected, &c.chosen, Choice::ResponseB)
            };
            StimulusRecord {
                id: c.id.clone(),
                prompt: c.prompt.clone(),
                response_a: a.clone(),
                response_b: b.clone(),
                source_label: Some(label),
            }
        })
        .collect();
    let column = |f: &dyn Fn(&Candidate) -> usize| -> Vec<usize> {
        picks.iter().map(|&i| f(&candidates[i])).collect()
    };
    let summary = (|| {
        Some(LengthSummary {
            chosen: LengthStats::of(&column(&|c| c.counts[1]))?,
            rejected: LengthStats::of(&column(&|c| c.counts[2]))?,
            prompt: LengthStats::of(&column(&|c| c.counts[0]))?,
            total: LengthStats::of(&column(&|c| c.total()))?,
        })
    })();
    Ok(PreparedCorpus {
        manifest: Manifest {
            seed: opts.seed,
            source_items: items.len(),
            dropped_unparseable: unparseable,
            dropped_percentile,
            dropped_short,
            survivors: candidates.len(),
            sampled: stimuli.len(),
            percentile: opts.percentile,
            percentile_method: "nearest_rank".into(),
            threshold_words: threshold,
            summary,
        },
        stimuli,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(id: &str, prompt: &str, chosen: &str, rejected: &str) -> SourceItem {
        SourceItem {
            id: Some(id.into()),
            prompt: Some(prompt.into()),
            chosen: chosen.into(),
            rejected: rejected.into(),
        }
    }

    fn words(n: usize) -> String {
        vec!["w"; n].join(" ")
    }

    #[test]
    fn nearest_rank_percentile() {
        let v: Vec<usize> = (1..=10).collect();
        assert_eq!(nearest_rank(&v, 90.0), Some(9));
        assert_eq!(nearest_rank(&v, 100.0), Some(10));
        assert_eq!(nearest_rank(&[5], 90.0), Some(5));
        assert_eq!(nearest_rank(&[], 90.0), None);
    }

    #[test]
    fn long_outlier_is_dropped() {
        let mut items: Vec<_> = (0..9)
            .map(|i| item(&format!("i{i}"), &words(10 + i), &words(5), &words(5)))
            .collect();
        items.push(item("huge", &words(10_000), &words(5), &words(5)));
        let out = prepare_stimuli(&items, &PrepareOptions::new(1, 9)).unwrap();
        assert!(out.stimuli.iter().all(|s| s.id != "huge"));
        assert_eq!(out.manifest.dropped_percentile, 1);
    }

    #[test]
    fn trivially_short_pairs_are_dropped() {
        let items = vec![
            item("short", "Can you help me plan a trip?", "Sounds good.", "No problem"),
            item("ok", "Can you help me plan a trip?", "Sure, where to?", "No problem"),
        ];
        let out = prepare_stimuli(
            &items,
            &PrepareOptions { percentile: 100.0, ..PrepareOptions::new(0, 1) },
        )
        .unwrap();
        assert_eq!(out.manifest.dropped_short, 1);
        assert_eq!(out.stimuli[0].id, "ok");
    }

    #[test]
    fn dialogue_prefix_is_split() {
        let it = SourceItem {
            id: None,
            prompt: None,
            chosen: "\n\nHuman: Hi there\n\nAssistant: Hello! How can I help?".into(),
            rejected: "\n\nHuman: Hi there\n\nAssistant: What".into(),
        };
        let (p, c, r) = it.sections().unwrap();
        assert_eq!(p, "Human: Hi there");
        assert_eq!(c, "Assistant: Hello! How can I help?");
        assert_eq!(r, "Assistant: What");
    }

    #[test]
    fn too_few_survivors() {
        let items = vec![item("a", "p q", "x y z", "x y z")];
        let err = prepare_stimuli(&items, &PrepareOptions::new(0, 2)).unwrap_err();
        assert_eq!(err, PrepareError::NotEnough { requested: 2, available: 1 });
    }

    #[test]
    fn labels_track_the_chosen_text() {
        let items: Vec<_> = (0..20)
            .map(|i| item(&format!("i{i}"), "prompt text", &format!("good answer {i}"), "bad answer here"))
            .collect();
        let out = prepare_stimuli(&items, &PrepareOptions { percentile: 100.0, ..PrepareOptions::new(4, 20) }).unwrap();
        for s in &out.stimuli {
            let chosen = match s.source_label.unwrap() {
                Choice::ResponseA => &s.response_a,
                Choice::ResponseB => &s.response_b,
            };
            assert!(chosen.starts_with("good"));
        }
        let m = &out.manifest;
        assert_eq!(m.survivors + m.dropped_percentile + m.dropped_short + m.dropped_unparseable, m.source_items);
    }
}
