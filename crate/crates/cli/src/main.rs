use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use prsafe_cli::config::{ConfigError, Overrides, PipelineConfig, Unit};
use prsafe_cli::pipeline::{render_from_artifacts, run_pipeline, Stage};
use prsafe_core::ps_index::ThresholdScope;
use prsafe_core::synthetic::{generate, SyntheticConfig};
use prsafe_fetch::{merge_corpora, repo_dir_name, FetchJob, Fetcher, SystemClock, UreqTransport};

#[derive(Parser)]
#[command(name = "prsafe", version, about = "Psychological-safety cues in pull requests and sustained participation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Study configuration (JSON). Flags below override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Corpus directory.
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_scope)]
    threshold_scope: Option<ThresholdScope>,
    /// Count the merge condition only for merged PRs that were never reopened.
    #[arg(long, global = true)]
    merged_only: bool,
    /// Count a contributor's commits in every repository, not only the one the PR targets.
    #[arg(long, global = true)]
    global_activity: bool,
    #[arg(long, global = true, value_enum)]
    unit: Option<Unit>,
    /// Comma-separated model numbers, e.g. 1,2.
    #[arg(long, global = true, value_delimiter = ',')]
    models: Option<Vec<u8>>,
}

#[derive(Subcommand)]
enum Command {
    /// Download pull requests, comments, reviews and commits from the GitHub API.
    /// The token is read from the environment variable named in the config
    /// (GITHUB_TOKEN by default).
    Fetch {
        #[command(flatten)]
        common: Common,
        /// Repositories as owner/name; replaces the config list when given.
        repos: Vec<String>,
    },
    /// Load and validate the corpus, write ingest_errors.jsonl.
    Ingest(Common),
    /// Extract the thirteen cues per PR.
    Cues(Common),
    /// Skewness and imbalance screening of cues and controls.
    Screen(Common),
    /// Label contributors' sustained participation.
    Label(Common),
    /// Compute the PS index per contributor and repository.
    Index(Common),
    /// Fit the logistic models.
    Fit(Common),
    /// Print the tables of an earlier run found in --out.
    Report(Common),
    /// Run every stage.
    Run(Common),
    /// Write a synthetic corpus and a matching config into --out.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 2019)]
        seed: u64,
        /// Total PR count; defaults to the study's repository sizes.
        #[arg(long)]
        total: Option<u64>,
    },
}

fn parse_scope(s: &str) -> Result<ThresholdScope, String> {
    match s {
        "global" => Ok(ThresholdScope::Global),
        "per_repository" | "per-repository" => Ok(ThresholdScope::PerRepository),
        _ => Err(format!("expected global or per_repository, got {s:?}")),
    }
}

impl Common {
    fn load(&self) -> Result<PipelineConfig, ConfigError> {
        let overrides = Overrides {
            corpus: self.corpus.clone(),
            out: self.out.clone(),
            threshold_scope: self.threshold_scope,
            merged_only: self.merged_only,
            global_activity: self.global_activity,
            unit: self.unit,
            models: self.models.clone(),
        };
        PipelineConfig::load(self.config.as_deref(), &overrides)
    }
}

fn stage(common: &Common, until: Stage) -> Result<u8, ConfigError> {
    let config = common.load()?;
    let outcome = run_pipeline(&config, until)?;
    print!("{}", outcome.display);
    for w in &outcome.manifest.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(f) = &outcome.manifest.failure {
        eprintln!("error: stage {:?} failed: {}", f.stage, f.message);
    }
    println!("artifacts in {}", outcome.out_dir.display());
    Ok(outcome.exit_code as u8)
}

fn fetch(common: &Common, repos: &[String]) -> Result<u8, ConfigError> {
    let config = common.load()?;
    config.validate_values()?;
    let out = config.out_dir()?.to_path_buf();
    let section = &config.fetch;
    let repos = if repos.is_empty() { section.repos.clone() } else { repos.to_vec() };
    if repos.is_empty() {
        return Err(ConfigError::Value("no repositories to fetch; list them or set fetch.repos".into()));
    }
    let jobs: Vec<FetchJob> = repos
        .iter()
        .map(|r| FetchJob {
            since: section.since,
            auth_token_source: section.token_env.clone(),
            page_size: section.page_size,
            ..FetchJob::new(r.clone(), out.join("repos").join(repo_dir_name(r)))
        })
        .collect();
    if std::env::var_os(&section.token_env).is_none() {
        eprintln!("warning: {} is not set; fetching unauthenticated", section.token_env);
    }
    let fetcher = Fetcher::new(Box::new(UreqTransport::default()), Box::new(SystemClock))
        .with_api_base(section.api_base.clone())
        .with_policy(section.retry.clone());
    let mut failed = false;
    let mut done = Vec::new();
    for (job, result) in jobs.iter().zip(fetcher.fetch_many(&jobs)) {
        match result {
            Ok(r) => {
                println!(
                    "{}: {} pulls, {} comments, {} reviews, {} commits ({} requests)",
                    r.repo_full_name, r.counts.pulls, r.counts.comments, r.counts.reviews, r.counts.commits, r.requests
                );
                done.push(job.output_dir.clone());
            }
            Err(e) => {
                eprintln!("error: {}: {e}", job.repo_full_name);
                failed = true;
            }
        }
    }
    if !done.is_empty() {
        match merge_corpora(&done, &out) {
            Ok(c) => println!("merged corpus: {} pulls in {}", c.pulls.len(), out.display()),
            Err(e) => {
                eprintln!("error: merging corpora: {e}");
                failed = true;
            }
        }
    }
    Ok(u8::from(failed))
}

fn report(common: &Common) -> Result<u8, ConfigError> {
    let config = common.load()?;
    let out = config.out_dir()?;
    match render_from_artifacts(out) {
        Ok((index, models)) => {
            print!("{index}\n{models}");
            Ok(0)
        }
        Err(e) => {
            eprintln!("error: {e}");
            Ok(1)
        }
    }
}

fn synth(common: &Common, seed: u64, total: Option<u64>) -> Result<u8, ConfigError> {
    let out = common.out.clone().ok_or(ConfigError::NoOut)?;
    let mut synth = SyntheticConfig { seed, ..SyntheticConfig::default() };
    if let Some(t) = total {
        synth = synth.with_total(t);
    }
    let corpus = generate(&synth);
    let corpus_dir = out.join("corpus");
    prsafe_core::save_corpus(&corpus, &corpus_dir).map_err(|e| ConfigError::Value(e.to_string()))?;
    let config = PipelineConfig {
        corpus: Some(PathBuf::from("corpus")),
        out: Some(PathBuf::from("results")),
        labeling: synth.labeling(),
        ..PipelineConfig::default()
    };
    let path = out.join("pipeline.json");
    write_config(&config, &path)?;
    println!("{} pulls in {}; config {}", corpus.pulls.len(), corpus_dir.display(), path.display());
    Ok(0)
}

fn write_config(config: &PipelineConfig, path: &Path) -> Result<(), ConfigError> {
    let mut text = serde_json::to_string_pretty(config).map_err(|e| ConfigError::Value(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| ConfigError::Value(format!("cannot write {}: {e}", path.display())))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Fetch { common, repos } => fetch(common, repos),
        Command::Ingest(c) => stage(c, Stage::Ingest),
        Command::Cues(c) => stage(c, Stage::Cues),
        Command::Screen(c) => stage(c, Stage::Screen),
        Command::Label(c) => stage(c, Stage::Label),
        Command::Index(c) => stage(c, Stage::Index),
        Command::Fit(c) => stage(c, Stage::Fit),
        Command::Report(c) => report(c),
        Command::Run(c) => stage(c, Stage::Report),
        Command::Synth { common, seed, total } => synth(common, *seed, *total),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
