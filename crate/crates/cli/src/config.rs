use std::cmp::Ordering;
use std::path::Path;

use readtrace_core::analysis::AnalysisConfig;
use readtrace_core::study::StudyConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Settings read from `--config`. Both sections are optional and default
/// field by field.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub study: StudyConfig,
    pub analysis: AnalysisConfig,
}

impl Config {
    pub fn load(path: Option<&Path>) -> CliResult<Config> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::invalid(format!("config {}: {e}", path.display())))?;
        let config: Config = serde_json::from_str(&text)
            .map_err(|e| CliError::invalid(format!("config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> CliResult<()> {
        let a = &self.analysis;
        let s = &self.study;
        let problem = if a.min_fixation_ms > a.max_fixation_ms {
            "analysis.min_fixation_ms exceeds analysis.max_fixation_ms"
        } else if !(0.0..=1.0).contains(&a.min_coverage) {
            "analysis.min_coverage must lie in [0, 1]"
        } else if a.focus_min_bin > 5 {
            "analysis.focus_min_bin must be at most 5"
        } else if a.loop_min_bounces == 0 {
            "analysis.loop_min_bounces must be positive"
        } else if s.batch_size == 0 {
            "study.batch_size must be positive"
        } else if s.annotations_per_stimulus == 0 {
            "study.annotations_per_stimulus must be positive"
        } else if !matches!(
            s.min_mean_words.partial_cmp(&s.max_mean_words),
            Some(Ordering::Less | Ordering::Equal)
        ) {
            "study.min_mean_words exceeds study.max_mean_words"
        } else if s.max_candidate_batches == 0 {
            "study.max_candidate_batches must be positive"
        } else {
            return Ok(());
        };
        Err(CliError::invalid(format!("config: {problem}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_sections_fill_from_defaults() {
        let c: Config = serde_json::from_str(r#"{"analysis": {"min_coverage": 0.2}}"#).unwrap();
        assert_eq!(c.analysis.min_coverage, 0.2);
        assert_eq!(c.analysis.min_fixation_ms, 160);
        assert_eq!(c.study, StudyConfig::default());
    }

    #[test]
    fn unknown_keys_and_bad_ranges_are_rejected() {
        assert!(serde_json::from_str::<Config>(r#"{"analyse": {}}"#).is_err());
        let mut c = Config::default();
        c.study.min_mean_words = 400.0;
        assert!(matches!(c.validate(), Err(CliError::Invalid(_))));
        assert!(Config::default().validate().is_ok());
    }
}
