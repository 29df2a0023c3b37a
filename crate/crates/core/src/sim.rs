//! Scripted annotators for end-to-end checks.
//!
//! Three populations read differently and, by default, choose with
//! different accuracy:
//!
//! * careful: prompt, both responses, then back to the prompt; picks the
//!   reference response almost always.
//! * skimmer: a single pass over each section; barely better than chance.
//! * looper: bounces between the responses (A, B, A, B) and picks at random.
//!
//! Everyone reads the chosen response to the end and abandons the rejected
//! one partway through, and short words are often skimmed too fast to
//! count as a fixation.

use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gaze::HoverEvent;
use crate::model::{
    tokenize_stimulus, Choice, Layout, Rationale, Section, StimulusRecord, TokenizedStimulus,
    TrialRecord,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Population {
    Careful,
    Skimmer,
    Looper,
}

impl Population {
    fn slot(self) -> usize {
        match self {
            Population::Careful => 0,
            Population::Skimmer => 1,
            Population::Looper => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub stimuli: usize,
    pub annotators_per_stimulus: usize,
    pub trials_per_participant: usize,
    /// Relative weights of careful, skimmer and looper participants.
    pub mix: [f64; 3],
    /// Probability that each population picks the reference response.
    pub accuracy: [f64; 3],
    /// Trials that barely touch the text, planted at random.
    pub low_coverage_trials: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 7,
            stimuli: 300,
            annotators_per_stimulus: 3,
            trials_per_participant: 10,
            mix: [0.45, 0.4, 0.15],
            accuracy: [0.95, 0.55, 0.5],
            low_coverage_trials: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimCorpus {
    pub stimuli: Vec<StimulusRecord>,
    pub trials: Vec<TrialRecord>,
    pub populations: BTreeMap<String, Population>,
    /// Trial ids of the planted low-coverage trials.
    pub low_coverage: Vec<String>,
}

const LETTERS: &[u8] = b"etaoinshrdlucmfwypvbgk";

fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    let len = match rng.random_range(0..10) {
        0..=2 => rng.random_range(1..=3),
        3..=7 => rng.random_range(4..=7),
        _ => rng.random_range(8..=12),
    };
    (0..len)
        .map(|_| LETTERS[rng.random_range(0..LETTERS.len())] as char)
        .collect()
}

fn passage(rng: &mut ChaCha8Rng, words: usize) -> String {
    let mut out = String::new();
    for i in 0..words {
        if i > 0 {
            out.push(if rng.random_range(0..12) == 0 { '\n' } else { ' ' });
        }
        out.push_str(&pseudo_word(rng));
    }
    out
}

pub fn simulate_stimuli(rng: &mut ChaCha8Rng, n: usize) -> Vec<StimulusRecord> {
    (0..n)
        .map(|i| {
            let lens = [rng.random_range(20..=80), rng.random_range(40..=200), rng.random_range(40..=200)];
            StimulusRecord {
                id: format!("sim-{i:05}"),
                prompt: passage(rng, lens[0]),
                response_a: passage(rng, lens[1]),
                response_b: passage(rng, lens[2]),
                source_label: Some(if rng.random::<bool>() {
                    Choice::ResponseA
                } else {
                    Choice::ResponseB
                }),
            }
        })
        .collect()
}

/// Emits hover events while the cursor moves through a trial.
struct Reader<'a> {
    rng: &'a mut ChaCha8Rng,
    stimulus: &'a TokenizedStimulus,
    clock: u64,
    events: Vec<HoverEvent>,
}

impl Reader<'_> {
    fn dwell(&mut self, len: usize) -> u64 {
        if len <= 3 && self.rng.random_bool(0.5) {
            return self.rng.random_range(40..150);
        }
        let noise: i64 = self.rng.random_range(-60..=60);
        (180 + 25 * len as i64 + noise).clamp(165, 1500) as u64
    }

    /// Reads words `from..to` of a section in order.
    fn read(&mut self, section: Section, from: usize, to: usize) {
        let words = self.stimulus.section_words(section);
        let to = to.min(words.len());
        for w in &words[from.min(to)..to] {
            let len = w.end - w.start;
            let total = self.dwell(len);
            // split the dwell over up to three characters of the word
            let pieces = len.clamp(1, 3) as u64;
            let step = total / pieces;
            for p in 0..pieces {
                let last = p + 1 == pieces;
                let dur = if last { total - step * p } else { step };
                self.events.push(HoverEvent {
                    section,
                    char_index: w.start + p as usize,
                    enter_ms: self.clock,
                    exit_ms: self.clock + dur,
                });
                self.clock += dur;
            }
            // brushing the gap before the next word
            if w.end < self.stimulus.char_len(section) && self.rng.random_range(0..4) == 0 {
                self.events.push(HoverEvent {
                    section,
                    char_index: w.end,
                    enter_ms: self.clock,
                    exit_ms: self.clock + 20,
                });
                self.clock += 20;
            }
            self.clock += self.rng.random_range(0..30);
        }
        self.clock += self.rng.random_range(100..400);
    }

    fn read_all(&mut self, section: Section) {
        self.read(section, 0, usize::MAX);
    }

    /// A second look at a stretch of 12-20 words.
    fn revisit(&mut self, section: Section) {
        let n = self.stimulus.word_count(section);
        let span = self.rng.random_range(12..=20).min(n);
        let start = self.rng.random_range(0..=n - span);
        self.read(section, start, start + span);
    }

    /// Reads the rejected response's opening and stops.
    fn abandon(&mut self, section: Section) {
        let n = self.stimulus.word_count(section);
        let keep = ((n as f64) * self.rng.random_range(0.45..0.9)).ceil() as usize;
        self.read(section, 0, keep.max(10));
    }
}

fn script(
    rng: &mut ChaCha8Rng,
    stimulus: &TokenizedStimulus,
    population: Population,
    choice: Choice,
    low_coverage: bool,
) -> Vec<HoverEvent> {
    let start = rng.random_range(500..3000);
    let mut r = Reader {
        rng,
        stimulus,
        clock: start,
        events: Vec::new(),
    };
    if low_coverage {
        let n = stimulus.word_count_total();
        let budget = (n / 25).max(1);
        r.read(Section::Prompt, 0, budget);
        return r.events;
    }
    let rejected = choice.other().section();
    let reading = |r: &mut Reader<'_>, s: Section| {
        if s == rejected {
            r.abandon(s)
        } else {
            r.read_all(s)
        }
    };
    r.read_all(Section::Prompt);
    match population {
        Population::Careful => {
            reading(&mut r, Section::ResponseA);
            reading(&mut r, Section::ResponseB);
            r.revisit(Section::Prompt);
        }
        Population::Skimmer => {
            reading(&mut r, Section::ResponseA);
            reading(&mut r, Section::ResponseB);
        }
        Population::Looper => {
            reading(&mut r, Section::ResponseA);
            reading(&mut r, Section::ResponseB);
            r.revisit(Section::ResponseA);
            r.revisit(Section::ResponseB);
        }
    }
    r.events
}

/// Participant populations in fixed proportions: each population gets its
/// share of `n` by largest remainder, then the order is shuffled.
fn allocate(rng: &mut ChaCha8Rng, n: usize, mix: &[f64; 3]) -> Vec<Population> {
    let kinds = [Population::Careful, Population::Skimmer, Population::Looper];
    let total: f64 = mix.iter().map(|w| w.max(0.0)).sum();
    let shares: Vec<f64> = if total > 0.0 {
        mix.iter().map(|w| w.max(0.0) / total * n as f64).collect()
    } else {
        vec![n as f64 / 3.0; 3]
    };
    let mut counts: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
    let mut by_remainder: Vec<usize> = (0..3).collect();
    by_remainder.sort_by(|&i, &j| (shares[j] - shares[j].floor()).total_cmp(&(shares[i] - shares[i].floor())).then(i.cmp(&j)));
    for &i in by_remainder.iter().cycle().take(n - counts.iter().sum::<usize>()) {
        counts[i] += 1;
    }
    let mut out: Vec<Population> = kinds.iter().zip(&counts).flat_map(|(&k, &c)| std::iter::repeat_n(k, c)).collect();
    out.shuffle(rng);
    out
}

pub fn simulate(config: &SimConfig) -> SimCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let stimuli = simulate_stimuli(&mut rng, config.stimuli);
    let tokenized: Vec<TokenizedStimulus> = stimuli
        .iter()
        .map(|s| {
            tokenize_stimulus(&s.prompt, &s.response_a, &s.response_b, &s.id)
                .expect("generated passages are non-empty")
        })
        .collect();

    let per = config.trials_per_participant.max(1);
    let slots = config.stimuli * config.annotators_per_stimulus;
    let participants = slots.div_ceil(per);
    let populations = allocate(&mut rng, participants, &config.mix);

    let planted: Vec<usize> = {
        let mut v = index::sample(&mut rng, slots, config.low_coverage_trials.min(slots)).into_vec();
        v.sort_unstable();
        v
    };

    // slot k * N + s is annotator k of stimulus s and participants take
    // consecutive runs of slots, so nobody sees a stimulus twice while
    // N >= trials_per_participant
    let mut trials = Vec::with_capacity(slots);
    let mut low_coverage = Vec::new();
    for slot in 0..slots {
        let s = slot % config.stimuli;
        let p = slot / per;
        let trial_no = slot % per;
        let population = populations[p];
        let truth = stimuli[s].source_label.unwrap_or(Choice::ResponseA);
        let choice = if rng.random_bool(config.accuracy[population.slot()]) {
            truth
        } else {
            truth.other()
        };
        let layout = if rng.random::<bool>() {
            Layout::ALeft
        } else {
            Layout::ARight
        };
        let rationale = Rationale::ALL[rng.random_range(0..Rationale::ALL.len())];
        let low = planted.binary_search(&slot).is_ok();
        let events = script(&mut rng, &tokenized[s], population, choice, low);
        let trial_id = format!("sim-p{p:04}-t{trial_no:02}");
        if low {
            low_coverage.push(trial_id.clone());
        }
        let epoch = 1_700_000_000_000 + (p as u64) * 3_600_000;
        trials.push(TrialRecord {
            trial_id,
            participant_id: format!("sim-p{p:04}"),
            stimulus_id: stimuli[s].id.clone(),
            layout,
            started_at: epoch + events.first().map_or(0, |e| e.enter_ms),
            ended_at: epoch + events.iter().map(|e| e.exit_ms).max().unwrap_or(0),
            events,
            choice: Some(choice),
            rationale: Some(rationale),
            excluded: false,
            exclusion_reason: None,
        });
    }
    SimCorpus {
        stimuli,
        trials,
        populations: populations
            .into_iter()
            .enumerate()
            .map(|(p, pop)| (format!("sim-p{p:04}"), pop))
            .collect(),
        low_coverage,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn populations_follow_the_mix_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pops = allocate(&mut rng, 90, &[0.45, 0.4, 0.15]);
        let count = |p| pops.iter().filter(|&&x| x == p).count();
        assert_eq!(
            (count(Population::Careful), count(Population::Skimmer), count(Population::Looper)),
            (41, 36, 13)
        );
        let pops = allocate(&mut rng, 7, &[1.0, 1.0, 1.0]);
        assert_eq!(pops.len(), 7);
        assert!(allocate(&mut rng, 5, &[0.0, 1.0, 0.0]).iter().all(|&p| p == Population::Skimmer));
    }
    use crate::gaze::{clean_fixations, consolidate};
    use crate::metrics::{coverage, extract_path, section_flags, MIN_VISIT_MS};

    fn small() -> SimConfig {
        SimConfig {
            stimuli: 20,
            low_coverage_trials: 3,
            ..SimConfig::default()
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(simulate(&small()), simulate(&small()));
    }

    #[test]
    fn each_stimulus_gets_distinct_annotators() {
        let c = simulate(&small());
        assert_eq!(c.trials.len(), 60);
        let mut seen: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for t in &c.trials {
            seen.entry(&t.stimulus_id).or_default().push(&t.participant_id);
        }
        for ps in seen.values_mut() {
            assert_eq!(ps.len(), 3);
            ps.sort();
            ps.dedup();
            assert_eq!(ps.len(), 3);
        }
    }

    #[test]
    fn scripts_produce_the_intended_paths() {
        let c = simulate(&small());
        let stimuli = crate::model::StimulusSet::from_records(c.stimuli.clone()).unwrap();
        for t in &c.trials {
            let stim = stimuli.get(&t.stimulus_id).unwrap();
            let cleaned = clean_fixations(&consolidate(&t.events, stim).fixations);
            let cov = coverage(&cleaned, stim).overall();
            if c.low_coverage.contains(&t.trial_id) {
                assert!(cov < 0.10, "{cov}");
                continue;
            }
            assert!(cov >= 0.10, "{cov}");
            let flags = section_flags(&extract_path(&t.events, MIN_VISIT_MS), t.choice).unwrap();
            match c.populations[&t.participant_id] {
                Population::Careful => {
                    assert!(flags.reread_prompt && !flags.looped, "{flags:?}");
                }
                Population::Skimmer => assert!(!flags.reread_any() && !flags.looped),
                Population::Looper => assert!(flags.looped && flags.bounce_count == 3),
            }
        }
    }
}
