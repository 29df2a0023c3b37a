//! Word-level attention heatmaps as standalone HTML.

use std::fmt::Write;

use thiserror::Error;

use crate::analysis::ProcessedCorpus;
use crate::gaze::{aggregate_bins, AggregateVector, GazeError};
use crate::model::{Section, StimulusSet, TokenizedStimulus};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HeatmapError {
    #[error("unknown stimulus {0}")]
    UnknownStimulus(String),
    #[error("stimulus {0} has no retained trials")]
    NoTrials(String),
    #[error(transparent)]
    Gaze(#[from] GazeError),
}

const SHADE: &str = "214, 48, 39";

fn escape(out: &mut String, text: &str) {
    for ch in text.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
}

/// Background opacity for a mean bin: `mean / 5`, clamped to [0, 1].
pub fn opacity(mean: f64) -> f64 {
    if mean.is_finite() {
        (mean / 5.0).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

fn shaded_span(out: &mut String, class: &str, opacity: f64) {
    if opacity > 0.0 {
        let _ = write!(out, "<span class=\"{class}\" style=\"background-color: rgba({SHADE}, {opacity:.3})\"");
    } else {
        let _ = write!(out, "<span class=\"{class}\"");
    }
}

fn section_title(section: Section) -> &'static str {
    match section {
        Section::Prompt => "Prompt",
        Section::ResponseA => "Response A",
        Section::ResponseB => "Response B",
    }
}

/// Renders one stimulus with every word shaded by its mean bin.
pub fn render(stimulus: &TokenizedStimulus, aggregate: &AggregateVector) -> String {
    let mut out = String::new();
    out.push_str("<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>Reading heatmap: ");
    escape(&mut out, stimulus.id());
    out.push_str("</title>\n<style>\n");
    out.push_str("body { font-family: Georgia, serif; max-width: 48em; margin: 2em auto; line-height: 1.7; }\n");
    out.push_str(".text { white-space: pre-wrap; }\n");
    out.push_str(".w { border-radius: 2px; }\n");
    out.push_str(".legend span { display: inline-block; min-width: 2em; text-align: center; margin-right: 0.3em; }\n");
    out.push_str("</style>\n</head>\n<body>\n<h1>");
    escape(&mut out, stimulus.id());
    let _ = writeln!(
        out,
        "</h1>\n<p>Mean attention bin across {} annotator(s); darker means longer reading.</p>",
        aggregate.participant_count
    );
    out.push_str("<p class=\"legend\">");
    for bin in 0..=5u8 {
        shaded_span(&mut out, "bin", opacity(f64::from(bin)));
        let _ = write!(out, ">{bin}</span>");
    }
    out.push_str("</p>\n");

    for section in [Section::Prompt, Section::ResponseA, Section::ResponseB] {
        let _ = write!(out, "<h2>{}</h2>\n<div class=\"text\">", section_title(section));
        let text: Vec<char> = stimulus.text(section).chars().collect();
        let mut pos = 0;
        for word in stimulus.section_words(section) {
            let gap: String = text[pos..word.start].iter().collect();
            escape(&mut out, &gap);
            let mean = aggregate.means.get(word.index).copied().unwrap_or(0.0);
            shaded_span(&mut out, "w", opacity(mean));
            let _ = write!(out, " data-mean=\"{mean:.3}\">");
            escape(&mut out, &word.text);
            out.push_str("</span>");
            pos = word.end;
        }
        let tail: String = text[pos..].iter().collect();
        escape(&mut out, &tail);
        out.push_str("</div>\n");
    }
    out.push_str("</body>\n</html>\n");
    out
}

/// Heatmap of one stimulus over its retained trials.
pub fn heatmap(corpus: &ProcessedCorpus, stimuli: &StimulusSet, stimulus_id: &str) -> Result<String, HeatmapError> {
    let stimulus = stimuli
        .get(stimulus_id)
        .ok_or_else(|| HeatmapError::UnknownStimulus(stimulus_id.to_owned()))?;
    let trials: Vec<_> = corpus
        .retained()
        .filter(|(t, _)| t.stimulus_id == stimulus_id)
        .map(|(t, p)| (t.participant_id.as_str(), &p.bins))
        .collect();
    if trials.is_empty() {
        return Err(HeatmapError::NoTrials(stimulus_id.to_owned()));
    }
    Ok(render(stimulus, &aggregate_bins(trials)?))
}
