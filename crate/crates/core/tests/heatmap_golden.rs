use std::path::PathBuf;

use readtrace_core::analysis::{process, AnalysisConfig};
use readtrace_core::heatmap::heatmap;
use readtrace_core::sim::{simulate, SimConfig};
use readtrace_core::StimulusSet;

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Set READTRACE_BLESS=1 to rewrite the golden file after an intended change.
#[test]
fn simulated_heatmap_matches_golden_file() {
    let sim = simulate(&SimConfig { seed: 21, stimuli: 12, ..SimConfig::default() });
    let stimuli = StimulusSet::from_records(sim.stimuli).unwrap();
    let cfg = AnalysisConfig::default();
    let corpus = process(sim.trials, &stimuli, &cfg).unwrap();
    let html = heatmap(&corpus, &stimuli, "sim-00003").unwrap();

    let path = golden("heatmap_sim-00003.html");
    if std::env::var_os("READTRACE_BLESS").is_some() {
        std::fs::write(&path, &html).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap();
    assert_eq!(html, expected);
    assert!(html.contains("data-mean"));
}
