//! Stimuli, sections, tokenization, and trial records.
//!
//! Character positions on the wire are section-local and count Unicode
//! scalar values, so a stimulus can be re-laid-out on screen without
//! changing any event coordinates.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaze::HoverEvent;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("section {section} is empty")]
    EmptySection { section: Section },
    #[error("character index {index} out of range for section {section} (length {len})")]
    CharOutOfRange {
        section: Section,
        index: usize,
        len: usize,
    },
    #[error("duplicate stimulus id {0:?}")]
    DuplicateStimulus(String),
    #[error("unknown {kind} {value:?}")]
    UnknownVariant { kind: &'static str, value: String },
}

/// One of the three text regions of a stimulus.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    Prompt,
    ResponseA,
    ResponseB,
}

impl Section {
    pub const ALL: [Section; 3] = [Section::Prompt, Section::ResponseA, Section::ResponseB];

    pub fn index(self) -> usize {
        match self {
            Section::Prompt => 0,
            Section::ResponseA => 1,
            Section::ResponseB => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Section::Prompt => "prompt",
            Section::ResponseA => "response_a",
            Section::ResponseB => "response_b",
        }
    }

    /// The role this section plays once `choice` is known.
    pub fn role(self, choice: Choice) -> Role {
        match (self, choice) {
            (Section::Prompt, _) => Role::Prompt,
            (Section::ResponseA, Choice::ResponseA) | (Section::ResponseB, Choice::ResponseB) => {
                Role::Chosen
            }
            _ => Role::Rejected,
        }
    }
}

impl fmt::Display for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A section named by what it meant to the annotator.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Prompt,
    Chosen,
    Rejected,
}

impl Role {
    /// Inverse of [`Section::role`].
    pub fn section(self, choice: Choice) -> Section {
        match self {
            Role::Prompt => Section::Prompt,
            Role::Chosen => choice.section(),
            Role::Rejected => choice.other().section(),
        }
    }
}

/// Which response the annotator preferred.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Choice {
    ResponseA,
    ResponseB,
}

impl Choice {
    pub fn section(self) -> Section {
        match self {
            Choice::ResponseA => Section::ResponseA,
            Choice::ResponseB => Section::ResponseB,
        }
    }

    pub fn other(self) -> Choice {
        match self {
            Choice::ResponseA => Choice::ResponseB,
            Choice::ResponseB => Choice::ResponseA,
        }
    }
}

impl FromStr for Choice {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "response_a" => Ok(Choice::ResponseA),
            "response_b" => Ok(Choice::ResponseB),
            _ => Err(ModelError::UnknownVariant {
                kind: "choice",
                value: s.to_owned(),
            }),
        }
    }
}

/// On-screen placement of the two responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    ALeft,
    ARight,
}

impl Layout {
    /// The response shown first (on the left).
    pub fn first(self) -> Choice {
        match self {
            Layout::ALeft => Choice::ResponseA,
            Layout::ARight => Choice::ResponseB,
        }
    }
}

/// Screen position of a response, left being first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Position {
    First,
    Second,
}

/// Stated reason for a preference.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Rationale {
    MoreHelpful,
    MoreAccurate,
    MoreConcise,
    LessHarmful,
    Other,
}

impl Rationale {
    pub const ALL: [Rationale; 5] = [
        Rationale::MoreHelpful,
        Rationale::MoreAccurate,
        Rationale::MoreConcise,
        Rationale::LessHarmful,
        Rationale::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Rationale::MoreHelpful => "more_helpful",
            Rationale::MoreAccurate => "more_accurate",
            Rationale::MoreConcise => "more_concise",
            Rationale::LessHarmful => "less_harmful",
            Rationale::Other => "other",
        }
    }
}

impl FromStr for Rationale {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Rationale::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| ModelError::UnknownVariant {
                kind: "rationale",
                value: s.to_owned(),
            })
    }
}

/// A whitespace-delimited token with its section-local character span.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Word {
    pub section: Section,
    /// Stimulus-global index.
    pub index: usize,
    pub start: usize,
    pub end: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct SectionText {
    text: String,
    /// Word (global index) owning each character, `None` for whitespace.
    owner: Vec<Option<usize>>,
    first_word: usize,
    word_count: usize,
}

/// Prompt plus two responses, split into words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedStimulus {
    id: String,
    sections: [SectionText; 3],
    words: Vec<Word>,
}

/// Splits the three texts into maximal runs of non-whitespace characters.
pub fn tokenize_stimulus(
    prompt: &str,
    response_a: &str,
    response_b: &str,
    id: &str,
) -> Result<TokenizedStimulus, ModelError> {
    let mut words = Vec::new();
    let mut build = |section: Section, text: &str| -> Result<SectionText, ModelError> {
        if text.trim().is_empty() {
            return Err(ModelError::EmptySection { section });
        }
        let first_word = words.len();
        let mut owner = Vec::with_capacity(text.len());
        let mut current: Option<(usize, String)> = None;
        for (pos, ch) in text.chars().enumerate() {
            if ch.is_whitespace() {
                owner.push(None);
                if let Some((start, surface)) = current.take() {
                    words.push(Word {
                        section,
                        index: words.len(),
                        start,
                        end: pos,
                        text: surface,
                    });
                }
            } else {
                let run = current.get_or_insert_with(|| (pos, String::new()));
                run.1.push(ch);
                owner.push(Some(words.len()));
            }
        }
        if let Some((start, surface)) = current.take() {
            words.push(Word {
                section,
                index: words.len(),
                start,
                end: owner.len(),
                text: surface,
            });
        }
        Ok(SectionText {
            text: text.to_owned(),
            owner,
            first_word,
            word_count: words.len() - first_word,
        })
    };
    let sections = [
        build(Section::Prompt, prompt)?,
        build(Section::ResponseA, response_a)?,
        build(Section::ResponseB, response_b)?,
    ];
    Ok(TokenizedStimulus {
        id: id.to_owned(),
        sections,
        words,
    })
}

impl TokenizedStimulus {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn text(&self, section: Section) -> &str {
        &self.sections[section.index()].text
    }

    /// Section length in characters.
    pub fn char_len(&self, section: Section) -> usize {
        self.sections[section.index()].owner.len()
    }

    pub fn words(&self) -> &[Word] {
        &self.words
    }

    pub fn word(&self, index: usize) -> Option<&Word> {
        self.words.get(index)
    }

    /// Words of one section, in order.
    pub fn section_words(&self, section: Section) -> &[Word] {
        let s = &self.sections[section.index()];
        &self.words[s.first_word..s.first_word + s.word_count]
    }

    pub fn word_count_total(&self) -> usize {
        self.words.len()
    }

    pub fn word_count(&self, section: Section) -> usize {
        self.sections[section.index()].word_count
    }

    pub fn word_count_per_section(&self) -> [usize; 3] {
        Section::ALL.map(|s| self.word_count(s))
    }

    /// Global index range covered by a section.
    pub fn word_range(&self, section: Section) -> std::ops::Range<usize> {
        let s = &self.sections[section.index()];
        s.first_word..s.first_word + s.word_count
    }

    pub fn section_of_word(&self, index: usize) -> Option<Section> {
        self.words.get(index).map(|w| w.section)
    }

    /// The global word index owning `char_index`, or `None` on whitespace.
    pub fn locate_char(
        &self,
        section: Section,
        char_index: usize,
    ) -> Result<Option<usize>, ModelError> {
        let owner = &self.sections[section.index()].owner;
        owner
            .get(char_index)
            .copied()
            .ok_or(ModelError::CharOutOfRange {
                section,
                index: char_index,
                len: owner.len(),
            })
    }
}

/// One line of the stimulus file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StimulusRecord {
    pub id: String,
    pub prompt: String,
    pub response_a: String,
    pub response_b: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_label: Option<Choice>,
}

impl StimulusRecord {
    pub fn tokenize(&self) -> Result<TokenizedStimulus, ModelError> {
        tokenize_stimulus(&self.prompt, &self.response_a, &self.response_b, &self.id)
    }
}

/// Tokenized stimuli keyed by id.
#[derive(Debug, Clone, Default)]
pub struct StimulusSet {
    records: BTreeMap<String, (StimulusRecord, TokenizedStimulus)>,
}

impl StimulusSet {
    pub fn from_records(
        records: impl IntoIterator<Item = StimulusRecord>,
    ) -> Result<Self, ModelError> {
        let mut set = StimulusSet::default();
        for record in records {
            let tokens = record.tokenize()?;
            if set.records.contains_key(&record.id) {
                return Err(ModelError::DuplicateStimulus(record.id));
            }
            set.records.insert(record.id.clone(), (record, tokens));
        }
        Ok(set)
    }

    pub fn get(&self, id: &str) -> Option<&TokenizedStimulus> {
        self.records.get(id).map(|(_, t)| t)
    }

    pub fn record(&self, id: &str) -> Option<&StimulusRecord> {
        self.records.get(id).map(|(r, _)| r)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Iterates in id order.
    pub fn iter(&self) -> impl Iterator<Item = (&StimulusRecord, &TokenizedStimulus)> {
        self.records.values().map(|(r, t)| (r, t))
    }
}

/// One annotator working through one stimulus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: String,
    pub participant_id: String,
    pub stimulus_id: String,
    pub layout: Layout,
    pub events: Vec<HoverEvent>,
    pub choice: Option<Choice>,
    pub rationale: Option<Rationale>,
    pub started_at: u64,
    pub ended_at: u64,
    #[serde(default)]
    pub excluded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exclusion_reason: Option<String>,
}

impl TrialRecord {
    /// Choice and rationale both present.
    pub fn is_annotated(&self) -> bool {
        self.choice.is_some() && self.rationale.is_some()
    }

    /// Screen position of the chosen response.
    pub fn chosen_position(&self) -> Option<Position> {
        self.choice.map(|c| {
            if c == self.layout.first() {
                Position::First
            } else {
                Position::Second
            }
        })
    }

    pub fn exclude(&mut self, reason: impl Into<String>) {
        self.excluded = true;
        self.exclusion_reason = Some(reason.into());
    }
}
