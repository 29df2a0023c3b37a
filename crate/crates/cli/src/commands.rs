use std::collections::BTreeMap;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use readtrace_core::analysis::{analyze, process, ProcessedCorpus};
use readtrace_core::heatmap::heatmap;
use readtrace_core::io::{load_stimuli, read_jsonl_file, to_jsonl_string};
use readtrace_core::prepare::{prepare_stimuli, PrepareOptions, SourceItem};
use readtrace_core::sim::{simulate, SimConfig};
use readtrace_core::study::Study;
use readtrace_core::{StimulusSet, TrialRecord};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{CliError, CliResult};
use crate::report;
use crate::server::{self, AppState};

#[derive(Debug, Parser)]
#[command(name = "readtrace", version, about = "Mouse-tracked reading signals for preference annotation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter and sample a preference corpus into stimuli.
    Prepare(PrepareArgs),
    /// Run the annotation study service.
    Serve(ServeArgs),
    /// Run the gaze pipeline and reading metrics over an export.
    Process(ProcessArgs),
    /// Agreement report and behavioral summary for an export.
    Analyze(AnalyzeArgs),
    /// Word-level attention heatmap for one stimulus.
    Heatmap(HeatmapArgs),
    /// Rebuild the trial export from a study's data directory.
    Export(ExportArgs),
    /// Generate a synthetic study with scripted annotator populations.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Line-delimited JSON with prompt, chosen and rejected texts.
    pub source: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub sample_size: usize,
    /// Directory for stimuli.jsonl and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub stimuli: PathBuf,
    /// Where the event and annotation logs live.
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
}

#[derive(Debug, Args)]
pub struct Inputs {
    /// Line-delimited JSON trial records.
    pub export: PathBuf,
    #[arg(long)]
    pub stimuli: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProcessArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    /// Line-delimited JSON of {stimulus_id, similarity}.
    #[arg(long)]
    pub similarity: Option<PathBuf>,
    /// Directory for agreement_report.json, behavior_summary.json and report.txt.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[arg(long)]
    pub stimulus: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long)]
    pub stimuli: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 300)]
    pub stimuli: usize,
    #[arg(long, default_value_t = 0)]
    pub low_coverage: usize,
    /// Directory for stimuli.jsonl, export.jsonl and truth.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SimilarityRow {
    stimulus_id: String,
    similarity: f64,
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Prepare(a) => run_prepare(&a),
        Command::Serve(a) => run_serve(&a),
        Command::Process(a) => run_process(&a),
        Command::Analyze(a) => run_analyze(&a),
        Command::Heatmap(a) => run_heatmap(&a),
        Command::Export(a) => run_export(&a),
        Command::Simulate(a) => run_simulate(&a),
    }
}

fn read_lines<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    read_jsonl_file(path).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

fn read_stimuli(path: &Path) -> CliResult<StimulusSet> {
    load_stimuli(path).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

/// Writes through a sibling temporary file so readers never see half a file.
fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

fn write_all(dir: &Path, files: &[(&str, String)]) -> CliResult<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, contents) in files {
        write_file(&dir.join(name), contents)?;
    }
    Ok(())
}

fn emit(out: Option<&Path>, contents: &str) -> CliResult<()> {
    match out {
        Some(path) => write_file(path, contents),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(contents.as_bytes()).context("writing stdout")?;
            Ok(())
        }
    }
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

fn run_prepare(a: &PrepareArgs) -> CliResult<()> {
    let items: Vec<SourceItem> = read_lines(&a.source)?;
    let prepared = prepare_stimuli(&items, &PrepareOptions::new(a.seed, a.sample_size)).map_err(CliError::invalid)?;
    write_all(
        &a.out,
        &[
            ("stimuli.jsonl", to_jsonl_string(&prepared.stimuli)),
            ("manifest.json", pretty(&prepared.manifest)),
        ],
    )?;
    print!("{}", report::prepare_summary(&prepared.manifest));
    Ok(())
}

fn run_serve(a: &ServeArgs) -> CliResult<()> {
    let config = Config::load(a.config.as_deref())?;
    let stimuli = Arc::new(read_stimuli(&a.stimuli)?);
    std::fs::create_dir_all(&a.data_dir).with_context(|| format!("creating {}", a.data_dir.display()))?;
    let study = Study::open(&a.data_dir, stimuli, config.study, a.seed)
        .map_err(|e| CliError::invalid(format!("{}: {e}", a.data_dir.display())))?;
    let runtime = tokio::runtime::Runtime::new().context("starting runtime")?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(a.addr)
            .await
            .with_context(|| format!("binding {}", a.addr))?;
        tracing::info!(addr = %listener.local_addr().context("local address")?, "serving");
        server::serve(listener, AppState::new(Arc::new(study))).await.context("server")?;
        Ok(())
    })
}

/// Loads inputs and runs the per-trial pipeline.
fn load_and_process(inputs: &Inputs) -> CliResult<(Config, StimulusSet, ProcessedCorpus)> {
    let config = Config::load(inputs.config.as_deref())?;
    let stimuli = read_stimuli(&inputs.stimuli)?;
    let trials: Vec<TrialRecord> = read_lines(&inputs.export)?;
    if trials.is_empty() {
        return Err(CliError::invalid(format!("{}: export has no trials", inputs.export.display())));
    }
    let corpus = process(trials, &stimuli, &config.analysis).map_err(CliError::invalid)?;
    Ok((config, stimuli, corpus))
}

fn run_process(a: &ProcessArgs) -> CliResult<()> {
    let (_, _, corpus) = load_and_process(&a.inputs)?;
    emit(a.out.as_deref(), &to_jsonl_string(&corpus.processed))
}

fn run_analyze(a: &AnalyzeArgs) -> CliResult<()> {
    let (config, stimuli, corpus) = load_and_process(&a.inputs)?;
    let similarity = match &a.similarity {
        Some(path) => {
            let rows: Vec<SimilarityRow> = read_lines(path)?;
            Some(rows.into_iter().map(|r| (r.stimulus_id, r.similarity)).collect::<BTreeMap<_, _>>())
        }
        None => None,
    };
    let analysis = analyze(&corpus, &stimuli, &config.analysis, similarity.as_ref()).map_err(CliError::invalid)?;
    let text = report::analysis_summary(&analysis);
    if let Some(dir) = &a.out {
        write_all(
            dir,
            &[
                ("agreement_report.json", pretty(&analysis.report)),
                ("behavior_summary.json", pretty(&analysis.summary)),
                ("report.txt", text.clone()),
            ],
        )?;
    }
    print!("{text}");
    Ok(())
}

fn run_heatmap(a: &HeatmapArgs) -> CliResult<()> {
    let (_, stimuli, corpus) = load_and_process(&a.inputs)?;
    let html = heatmap(&corpus, &stimuli, &a.stimulus).map_err(CliError::invalid)?;
    emit(a.out.as_deref(), &html)
}

fn run_export(a: &ExportArgs) -> CliResult<()> {
    let config = Config::load(a.config.as_deref())?;
    let stimuli = Arc::new(read_stimuli(&a.stimuli)?);
    if !a.data_dir.is_dir() {
        return Err(CliError::invalid(format!("{}: not a directory", a.data_dir.display())));
    }
    let study = Study::replay_dir(&a.data_dir, stimuli, config.study, 0)
        .map_err(|e| CliError::invalid(format!("{}: {e}", a.data_dir.display())))?;
    emit(a.out.as_deref(), &study.export_jsonl())
}

#[derive(Serialize)]
struct Truth<'a> {
    config: &'a SimConfig,
    populations: &'a BTreeMap<String, readtrace_core::sim::Population>,
    low_coverage: &'a [String],
}

fn run_simulate(a: &SimulateArgs) -> CliResult<()> {
    let config = SimConfig {
        seed: a.seed,
        stimuli: a.stimuli,
        low_coverage_trials: a.low_coverage,
        ..SimConfig::default()
    };
    if config.stimuli < config.trials_per_participant {
        return Err(CliError::invalid(format!(
            "--stimuli must be at least {} so no participant sees a stimulus twice",
            config.trials_per_participant
        )));
    }
    let sim = simulate(&config);
    let truth = Truth {
        config: &config,
        populations: &sim.populations,
        low_coverage: &sim.low_coverage,
    };
    write_all(
        &a.out,
        &[
            ("stimuli.jsonl", to_jsonl_string(&sim.stimuli)),
            ("export.jsonl", to_jsonl_string(&sim.trials)),
            ("truth.json", pretty(&truth)),
        ],
    )?;
    println!("{} stimuli, {} trials, {} participants", sim.stimuli.len(), sim.trials.len(), sim.populations.len());
    Ok(())
}
