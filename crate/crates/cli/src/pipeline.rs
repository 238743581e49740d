//! Stage orchestration, artifacts and the run manifest.
//!
//! Stages always run in the same order and each writes its artifacts before
//! the next starts. A failing stage stops the run; whatever was written stays
//! on disk and the manifest names the stage that failed.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use prsafe_core::corpus::{filter_repositories, write_error_report, ERRORS_FILE};
use prsafe_core::cues::{extract_all, write_cues_csv, BINARY_CUES, CUE_NAMES};
use prsafe_core::diagnostics::{screen_predictors, ScreeningDecision, ScreeningReport, VariableColumn, VariableKind};
use prsafe_core::glm::{canned_model, encode_design, fit_logistic, vif, vif_gate, ModelFit, ModelSpec, VifEntry};
use prsafe_core::participation::{build_timelines, label_all, write_labels_csv, RecentRule};
use prsafe_core::ps_index::{
    build_summary, compute_thresholds, write_contributor_csv, write_repository_csv, CueThresholds, PrScore, PsSummary,
    SkipReason,
};
use prsafe_core::report::{render_index_table, render_models_table, write_models_csv, ModelColumn};
use prsafe_core::{load_corpus, Corpus, CueVector, EmojiTable, ParticipationLabel, ParticipationStatus};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ConfigError, PipelineConfig, ReportFormat};
use crate::frame::{build_frame, build_rows, control_columns};

pub const CUES_FILE: &str = "cues.csv";
pub const SCREENING_FILE: &str = "screening_report.json";
pub const LABELS_FILE: &str = "labels.csv";
pub const REPO_INDEX_FILE: &str = "ps_index_repository.csv";
pub const CONTRIBUTOR_INDEX_FILE: &str = "ps_index_contributor.csv";
pub const MODELS_CSV: &str = "models_table.csv";
pub const MODELS_JSON: &str = "models_table.json";
pub const MODELS_TEXT: &str = "models_table.txt";
pub const INDEX_TEXT: &str = "ps_index_table.txt";
pub const MANIFEST_FILE: &str = "manifest.json";

/// The ten conditions of the PS index, named by the cue each one reads.
pub const INDEX_CUES: [&str; 10] = [
    "merged_or_not",
    "pr_comment_num",
    "has_exchange",
    "contrib_comment",
    "num_comments_con",
    "inte_comment",
    "reviewer_comment",
    "other_comment",
    "num_participant",
    "at_tag",
];

pub fn model_file(k: u8) -> String {
    format!("model_{k}.json")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Cues,
    Screen,
    Label,
    Index,
    Fit,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Cues,
        Stage::Screen,
        Stage::Label,
        Stage::Index,
        Stage::Fit,
        Stage::Report,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub stage: Stage,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub status: String,
    pub outcome: String,
    pub predictors: Vec<String>,
    pub transforms: BTreeMap<String, String>,
    pub n_obs: usize,
    pub dropped_rows: usize,
    pub vif: Vec<VifEntry>,
    pub error: Option<String>,
}

/// Everything needed to trace an output number back to its inputs. Maps are
/// ordered and nothing time-dependent is recorded, so identical runs write
/// identical manifests.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub config_sha256: String,
    pub config: serde_json::Value,
    pub emoji_table_version: Option<String>,
    pub completed_stages: Vec<Stage>,
    pub failure: Option<Failure>,
    pub row_counts: BTreeMap<String, u64>,
    pub thresholds: Option<CueThresholds>,
    pub screening: BTreeMap<String, ScreeningDecision>,
    pub models: BTreeMap<String, ModelRecord>,
    pub warnings: Vec<String>,
    /// sha256 of every artifact written in this run.
    pub artifacts: BTreeMap<String, String>,
}

/// Per-model artifact, written whether or not the fit succeeded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub model: String,
    pub status: String,
    pub error: Option<String>,
    pub spec: ModelSpec,
    pub n_obs: usize,
    pub dropped_rows: usize,
    pub vif: Vec<VifEntry>,
    pub fit: Option<ModelFit>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub manifest: Manifest,
    pub out_dir: PathBuf,
    /// 0 on success, 1 when a stage or a model failed.
    pub exit_code: i32,
    /// Human-readable tables for standard output.
    pub display: String,
}

type StageResult = Result<(), String>;

struct Run<'a> {
    config: &'a PipelineConfig,
    out: PathBuf,
    manifest: Manifest,
    display: String,
    table: Option<EmojiTable>,
    corpus: Corpus,
    cues: Vec<CueVector>,
    screening: Option<ScreeningReport>,
    labels: BTreeMap<(String, String), ParticipationLabel>,
    summary: PsSummary,
    models: Vec<(u8, ModelArtifact)>,
    model_failed: bool,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn err<E: std::fmt::Display>(context: &str) -> impl FnOnce(E) -> String + '_ {
    move |e| format!("{context}: {e}")
}

impl Run<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn count(&mut self, key: &str, n: usize) {
        self.manifest.row_counts.insert(key.to_string(), n as u64);
    }

    fn warn(&mut self, message: String) {
        log::info!("{message}");
        self.manifest.warnings.push(message);
    }

    fn record_artifact(&mut self, name: &str) -> StageResult {
        let bytes = std::fs::read(self.path(name)).map_err(err(name))?;
        self.manifest.artifacts.insert(name.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    fn write_csv(&mut self, name: &str, f: impl FnOnce(BufWriter<File>) -> Result<(), csv::Error>) -> StageResult {
        let file = File::create(self.path(name)).map_err(err(name))?;
        f(BufWriter::new(file)).map_err(err(name))?;
        self.record_artifact(name)
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> StageResult {
        let mut text = serde_json::to_string_pretty(value).map_err(err(name))?;
        text.push('\n');
        self.write_text(name, &text)
    }

    fn write_text(&mut self, name: &str, text: &str) -> StageResult {
        std::fs::write(self.path(name), text).map_err(err(name))?;
        self.record_artifact(name)
    }

    fn ingest(&mut self) -> StageResult {
        let corpus_dir = self.config.corpus.clone().expect("validated");
        let table = match &self.config.emoji_table {
            Some(p) => EmojiTable::load(p).map_err(err("emoji table"))?,
            None => EmojiTable::bundled(),
        };
        self.manifest.emoji_table_version = Some(table.version().to_string());
        self.table = Some(table);
        let (corpus, report) = load_corpus(&corpus_dir).map_err(|e| e.to_string())?;
        write_error_report(&report, &self.path(ERRORS_FILE)).map_err(|e| e.to_string())?;
        self.record_artifact(ERRORS_FILE)?;
        self.count("ingest.pulls", corpus.pulls.len());
        self.count("ingest.repos", corpus.repos.len());
        self.count("ingest.commits", corpus.commits.len());
        self.count("ingest.contexts", corpus.contexts.len());
        self.count("ingest.errors", report.errors.len());
        self.count("ingest.derived_roles", report.derived_roles);
        if !report.errors.is_empty() {
            self.warn(format!("{} invalid corpus lines skipped; see {ERRORS_FILE}", report.errors.len()));
        }
        let filtered = filter_repositories(&corpus, &self.config.filter);
        self.count("filter.repos", filtered.repos.len());
        self.count("filter.pulls", filtered.pulls.len());
        if filtered.pulls.is_empty() {
            return Err("no pull requests left after repository filtering".into());
        }
        self.corpus = filtered;
        Ok(())
    }

    fn cues(&mut self) -> StageResult {
        let table = self.table.as_ref().expect("ingest ran");
        self.cues = extract_all(&self.corpus.pulls, table);
        let (pulls, cues) = (&self.corpus.pulls, &self.cues);
        let file = File::create(self.out.join(CUES_FILE)).map_err(err(CUES_FILE))?;
        write_cues_csv(pulls, cues, BufWriter::new(file)).map_err(err(CUES_FILE))?;
        self.record_artifact(CUES_FILE)?;
        self.count("cues.rows", self.cues.len());
        Ok(())
    }

    fn screen(&mut self) -> StageResult {
        let mut columns: Vec<VariableColumn> = CUE_NAMES
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let kind = if BINARY_CUES.contains(name) {
                    VariableKind::Binary
                } else {
                    VariableKind::Continuous
                };
                VariableColumn::new(name, kind, self.cues.iter().map(|c| c.values()[i]).collect())
            })
            .collect();
        let rows = build_rows(&self.corpus, &BTreeMap::new(), self.config.unit);
        columns.extend(control_columns(&rows));
        let report = screen_predictors(&columns, &self.config.screening).map_err(err("screening"))?;
        for v in &report.variables {
            self.manifest.screening.insert(v.name.clone(), v.decision);
        }
        for name in CUE_NAMES {
            let retained = report.get(name).is_some_and(|v| v.decision.is_retained());
            let in_index = INDEX_CUES.contains(&name);
            if in_index && !retained {
                self.warn(format!(
                    "screening excluded {name}, which is one of the fixed PS index conditions; the index still uses it"
                ));
            } else if !in_index && retained {
                self.warn(format!("screening retained {name}, which the PS index does not use"));
            }
        }
        self.write_json(SCREENING_FILE, &report)?;
        self.display.push_str(&report.render_table());
        self.screening = Some(report);
        Ok(())
    }

    fn label(&mut self) -> StageResult {
        let pairs = self.corpus.pr_authors();
        let timelines = build_timelines(&self.corpus.commits, &pairs, self.config.activity_scope);
        let (labels, unlabeled) = label_all(&timelines, &pairs, &self.config.labeling).map_err(err("labeling"))?;
        let file = File::create(self.path(LABELS_FILE)).map_err(err(LABELS_FILE))?;
        write_labels_csv(&labels, BufWriter::new(file)).map_err(err(LABELS_FILE))?;
        self.record_artifact(LABELS_FILE)?;
        self.count("label.pairs", pairs.len());
        self.count("label.without_commits", unlabeled.len());
        for status in [
            ParticipationStatus::Sustained,
            ParticipationStatus::NotSustained,
            ParticipationStatus::Censored,
            ParticipationStatus::ExcludedGapReturn,
        ] {
            let n = labels.values().filter(|l| l.status == status).count();
            self.count(&format!("label.{}", status.as_str()), n);
        }
        let labeled: Vec<&ParticipationLabel> = labels.values().filter(|l| l.status.is_labeled()).collect();
        let short_only = labeled
            .iter()
            .filter(|l| l.sustainedp_or_not_12 == Some(true) && l.recent_sustainedp_or_not == Some(false))
            .count();
        if !labeled.is_empty() && short_only == 0 && self.config.models.contains(&3) {
            let why = match self.config.labeling.recent_rule {
                RecentRule::AnyAfterSnapshot => {
                    " (under recent_rule any_after_snapshot a sustained contributor is always recent-sustained)"
                }
                RecentRule::ActiveAtHorizon => "",
            };
            self.warn(format!(
                "no labelled contributor has sustainedp_or_not_12 = 1 with recent_sustainedp_or_not = 0, \
                 so Model 3 is quasi-separated{why}"
            ));
        }
        self.labels = labels;
        Ok(())
    }

    fn index(&mut self) -> StageResult {
        let repos: Vec<&str> = self.corpus.pulls.iter().map(|p| p.repo_full_name.as_str()).collect();
        let thresholds =
            compute_thresholds(&repos, &self.cues, self.config.threshold_scope).map_err(err("thresholds"))?;
        let summary = build_summary(
            &self.corpus.pulls,
            &self.cues,
            &self.labels,
            &thresholds,
            self.config.merged_rule,
        )
        .map_err(err("index"))?;
        self.manifest.thresholds = Some(thresholds);
        let scored = summary.pr_scores.values().filter(|s| matches!(s, PrScore::Scored(_))).count();
        self.count("index.scored_prs", scored);
        for reason in [SkipReason::Censored, SkipReason::ExcludedGapReturn, SkipReason::Unlabeled] {
            let n = summary.skipped().filter(|(_, r)| *r == reason).count();
            let key = match reason {
                SkipReason::Censored => "index.skipped_censored",
                SkipReason::ExcludedGapReturn => "index.skipped_gap_return",
                SkipReason::Unlabeled => "index.skipped_unlabeled",
            };
            self.count(key, n);
        }
        self.count("index.contributors", summary.contributor_index.len());
        self.count("index.repositories", summary.repository_index.len());
        self.write_csv(REPO_INDEX_FILE, |w| write_repository_csv(&summary, w))?;
        self.write_csv(CONTRIBUTOR_INDEX_FILE, |w| write_contributor_csv(&summary, w))?;
        self.summary = summary;
        Ok(())
    }

    fn fit(&mut self) -> StageResult {
        let screening = self.screening.clone().expect("screen ran");
        let rows = build_rows(&self.corpus, &self.labels, self.config.unit);
        self.count("fit.rows", rows.len());
        let frame = build_frame(&rows, &self.summary, &screening);
        for &k in &self.config.models {
            let mut spec = canned_model(k).expect("validated model number");
            let mut removed = Vec::new();
            spec.predictors.retain(|p| {
                let keep = frame.get(p).is_some();
                if !keep {
                    removed.push(p.clone());
                }
                keep
            });
            for p in &removed {
                self.warn(format!("{}: {p} dropped by predictor screening", spec.name));
            }
            for p in &spec.predictors {
                if screening.get(p).map(|s| s.decision) == Some(ScreeningDecision::TransformedRetained) {
                    spec.transforms.insert(p.clone(), "log1p".into());
                }
            }
            let mut artifact = ModelArtifact {
                model: spec.name.clone(),
                status: "failed".into(),
                error: None,
                spec: spec.clone(),
                n_obs: 0,
                dropped_rows: 0,
                vif: Vec::new(),
                fit: None,
            };
            match encode_design(&frame, &spec) {
                Err(e) => artifact.error = Some(e.to_string()),
                Ok(design) => {
                    artifact.n_obs = design.y.len();
                    artifact.dropped_rows = design.dropped_rows;
                    match vif(&design) {
                        Ok(entries) => {
                            if !vif_gate(&entries, self.config.vif_limit) {
                                let high: Vec<String> = entries
                                    .iter()
                                    .filter(|e| !(e.vif < self.config.vif_limit))
                                    .map(|e| format!("{} ({:.2})", e.column, e.vif))
                                    .collect();
                                self.warn(format!(
                                    "{}: VIF at or above {} for {}",
                                    spec.name,
                                    self.config.vif_limit,
                                    high.join(", ")
                                ));
                            }
                            artifact.vif = entries;
                        }
                        Err(e) => self.warn(format!("{}: VIF not computed: {e}", spec.name)),
                    }
                    match fit_logistic(&design, &self.config.fit) {
                        Ok(fit) => {
                            artifact.status = "fitted".into();
                            artifact.fit = Some(fit);
                        }
                        Err(e) => artifact.error = Some(e.to_string()),
                    }
                }
            }
            if let Some(e) = &artifact.error {
                self.model_failed = true;
                self.warn(format!("{} failed: {e}", spec.name));
            }
            self.manifest.models.insert(
                spec.name.clone(),
                ModelRecord {
                    status: artifact.status.clone(),
                    outcome: spec.outcome.clone(),
                    predictors: spec.predictors.clone(),
                    transforms: spec.transforms.clone(),
                    n_obs: artifact.n_obs,
                    dropped_rows: artifact.dropped_rows,
                    vif: artifact.vif.clone(),
                    error: artifact.error.clone(),
                },
            );
            self.write_json(&model_file(k), &artifact)?;
            self.models.push((k, artifact));
        }
        Ok(())
    }

    fn report(&mut self) -> StageResult {
        let models = std::mem::take(&mut self.models);
        let result = self.write_reports(&models);
        self.models = models;
        result
    }

    fn write_reports(&mut self, models: &[(u8, ModelArtifact)]) -> StageResult {
        let tables = render_tables(&self.summary, models);
        let columns = model_columns(models);
        if self.config.report_formats.contains(&ReportFormat::Csv) {
            self.write_csv(MODELS_CSV, |w| write_models_csv(&columns, w))?;
        }
        if self.config.report_formats.contains(&ReportFormat::Json) {
            let summaries: Vec<&ModelArtifact> = models.iter().map(|(_, a)| a).collect();
            self.write_json(MODELS_JSON, &summaries)?;
        }
        self.write_text(INDEX_TEXT, &tables.0)?;
        self.write_text(MODELS_TEXT, &tables.1)?;
        self.display.push_str(&tables.0);
        self.display.push('\n');
        self.display.push_str(&tables.1);
        Ok(())
    }

    fn finish(mut self, exit_code: i32) -> Result<RunOutcome, String> {
        let mut text = serde_json::to_string_pretty(&self.manifest).map_err(err(MANIFEST_FILE))?;
        text.push('\n');
        std::fs::write(self.path(MANIFEST_FILE), text).map_err(err(MANIFEST_FILE))?;
        Ok(RunOutcome {
            manifest: std::mem::take(&mut self.manifest),
            out_dir: self.out,
            exit_code,
            display: self.display,
        })
    }
}

fn model_columns(models: &[(u8, ModelArtifact)]) -> Vec<(String, ModelColumn<'_>)> {
    models
        .iter()
        .map(|(_, a)| {
            let col = match &a.fit {
                Some(f) => ModelColumn::Fitted(f),
                None => ModelColumn::Failed(a.error.as_deref().unwrap_or("not fitted")),
            };
            (a.model.clone(), col)
        })
        .collect()
}

/// Index table and model table as text.
pub fn render_tables(summary: &PsSummary, models: &[(u8, ModelArtifact)]) -> (String, String) {
    let index = render_index_table(&summary.repositories_ranked());
    let table = render_models_table(&model_columns(models));
    (index, table)
}

/// Run stages up to and including `until`. Configuration problems come back
/// as `Err` (exit status 2); stage failures come back as an outcome with
/// exit status 1 and a manifest that names the failed stage.
pub fn run_pipeline(config: &PipelineConfig, until: Stage) -> Result<RunOutcome, ConfigError> {
    config.validate()?;
    let out = config.out_dir()?.to_path_buf();
    std::fs::create_dir_all(&out).map_err(|e| ConfigError::Value(format!("cannot create {}: {e}", out.display())))?;
    let canonical = config.canonical_json();
    let mut run = Run {
        config,
        out,
        manifest: Manifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: sha256_hex(canonical.as_bytes()),
            config: serde_json::from_str(&canonical).expect("canonical config is JSON"),
            ..Manifest::default()
        },
        display: String::new(),
        table: None,
        corpus: Corpus::default(),
        cues: Vec::new(),
        screening: None,
        labels: BTreeMap::new(),
        summary: PsSummary::default(),
        models: Vec::new(),
        model_failed: false,
    };
    for stage in Stage::ALL.into_iter().filter(|s| *s <= until) {
        let result = match stage {
            Stage::Ingest => run.ingest(),
            Stage::Cues => run.cues(),
            Stage::Screen => run.screen(),
            Stage::Label => run.label(),
            Stage::Index => run.index(),
            Stage::Fit => run.fit(),
            Stage::Report => run.report(),
        };
        if let Err(message) = result {
            log::error!("stage {stage:?} failed: {message}");
            run.manifest.failure = Some(Failure { stage, message });
            return finish(run, 1);
        }
        run.manifest.completed_stages.push(stage);
    }
    let code = if run.model_failed { 1 } else { 0 };
    finish(run, code)
}

fn finish(run: Run<'_>, code: i32) -> Result<RunOutcome, ConfigError> {
    run.finish(code).map_err(ConfigError::Value)
}

/// Re-render the tables from the artifacts of an earlier run in `out`.
pub fn render_from_artifacts(out: &Path) -> Result<(String, String), String> {
    let mut models = Vec::new();
    for k in 1..=3u8 {
        let path = out.join(model_file(k));
        if path.is_file() {
            let text = std::fs::read_to_string(&path).map_err(err(&model_file(k)))?;
            let artifact: ModelArtifact = serde_json::from_str(&text).map_err(err(&model_file(k)))?;
            models.push((k, artifact));
        }
    }
    let index_path = out.join(REPO_INDEX_FILE);
    let mut summary = PsSummary::default();
    let mut reader = csv::Reader::from_path(&index_path).map_err(err(REPO_INDEX_FILE))?;
    for rec in reader.records() {
        let rec = rec.map_err(err(REPO_INDEX_FILE))?;
        let value: f64 = rec[1].parse().map_err(err(REPO_INDEX_FILE))?;
        summary.repository_index.insert(rec[0].to_string(), value);
    }
    if models.is_empty() {
        return Err(format!("no model_<k>.json files in {}", out.display()));
    }
    Ok(render_tables(&summary, &models))
}
