//! Study configuration: one JSON file per study, paths relative to the file,
//! command-line flags layered on top.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use prsafe_core::corpus::{FilterConfig, COMMITS_FILE, PULLS_FILE, REPOS_FILE};
use prsafe_core::diagnostics::ScreeningConfig;
use prsafe_core::glm::FitConfig;
use prsafe_core::participation::{ActivityScope, LabelingConfig};
use prsafe_core::ps_index::{MergedRule, ThresholdScope};
use prsafe_fetch::RetryPolicy;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Problems with the configuration or its referenced paths; exit status 2.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file {} not found", .0.display())]
    MissingConfig(PathBuf),
    #[error("cannot read config {}: {source}", path.display())]
    Unreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {}: {message}", path.display())]
    Invalid { path: PathBuf, message: String },
    #[error("no corpus given; set `corpus` in the config or pass --corpus")]
    NoCorpus,
    #[error("corpus path {} does not exist", .0.display())]
    MissingCorpus(PathBuf),
    #[error("corpus file {} does not exist", .0.display())]
    MissingCorpusFile(PathBuf),
    #[error("emoji table {} does not exist", .0.display())]
    MissingEmojiTable(PathBuf),
    #[error("no output directory given; set `out` in the config or pass --out")]
    NoOut,
    #[error("{0}")]
    Value(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    /// One row per pull request, repository and contributor variables attached.
    #[default]
    Pr,
    /// One row per labelled (repository, contributor) pair.
    Contributor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FetchSection {
    pub repos: Vec<String>,
    pub since: Option<DateTime<Utc>>,
    /// Name of the environment variable holding the API token.
    pub token_env: String,
    pub page_size: u32,
    pub api_base: String,
    pub retry: RetryPolicy,
}

impl Default for FetchSection {
    fn default() -> Self {
        FetchSection {
            repos: Vec::new(),
            since: None,
            token_env: prsafe_fetch::DEFAULT_TOKEN_ENV.to_string(),
            page_size: 100,
            api_base: prsafe_fetch::DEFAULT_API_BASE.to_string(),
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Alternative emoji table file; the bundled table when absent.
    pub emoji_table: Option<PathBuf>,
    pub filter: FilterConfig,
    pub labeling: LabelingConfig,
    pub activity_scope: ActivityScope,
    pub screening: ScreeningConfig,
    pub threshold_scope: ThresholdScope,
    pub merged_rule: MergedRule,
    pub unit: Unit,
    pub models: Vec<u8>,
    pub fit: FitConfig,
    /// VIF at or above this is reported as a warning.
    pub vif_limit: f64,
    pub report_formats: Vec<ReportFormat>,
    pub fetch: FetchSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus: None,
            out: None,
            emoji_table: None,
            filter: FilterConfig::default(),
            labeling: LabelingConfig::default(),
            activity_scope: ActivityScope::Repository,
            screening: ScreeningConfig::default(),
            threshold_scope: ThresholdScope::Global,
            merged_rule: MergedRule::Literal,
            unit: Unit::Pr,
            models: vec![1, 2, 3],
            fit: FitConfig::default(),
            vif_limit: 5.0,
            report_formats: vec![ReportFormat::Csv, ReportFormat::Json],
            fetch: FetchSection::default(),
        }
    }
}

/// Command-line values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub corpus: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub threshold_scope: Option<ThresholdScope>,
    pub merged_only: bool,
    pub global_activity: bool,
    pub unit: Option<Unit>,
    pub models: Option<Vec<u8>>,
}

fn join(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl PipelineConfig {
    /// Read a config file and resolve its relative paths against the file's
    /// directory.
    pub fn from_file(path: &Path) -> Result<PipelineConfig, ConfigError> {
        if !path.is_file() {
            return Err(ConfigError::MissingConfig(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Unreadable {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config: PipelineConfig = serde_json::from_str(&text).map_err(|e| ConfigError::Invalid {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.corpus = config.corpus.map(|p| join(base, &p));
        config.out = config.out.map(|p| join(base, &p));
        config.emoji_table = config.emoji_table.map(|p| join(base, &p));
        Ok(config)
    }

    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<PipelineConfig, ConfigError> {
        let mut config = match path {
            Some(p) => PipelineConfig::from_file(p)?,
            None => PipelineConfig::default(),
        };
        config.apply(overrides);
        Ok(config)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(c) = &o.corpus {
            self.corpus = Some(c.clone());
        }
        if let Some(d) = &o.out {
            self.out = Some(d.clone());
        }
        if let Some(s) = o.threshold_scope {
            self.threshold_scope = s;
        }
        if o.merged_only {
            self.merged_rule = MergedRule::MergedOnly;
        }
        if o.global_activity {
            self.activity_scope = ActivityScope::Global;
        }
        if let Some(u) = o.unit {
            self.unit = u;
        }
        if let Some(m) = &o.models {
            self.models = m.clone();
        }
    }

    pub fn out_dir(&self) -> Result<&Path, ConfigError> {
        self.out.as_deref().ok_or(ConfigError::NoOut)
    }

    /// Checks that do not touch the corpus contents.
    pub fn validate_values(&self) -> Result<(), ConfigError> {
        if self.models.is_empty() {
            return Err(ConfigError::Value("at least one model must be requested".into()));
        }
        if let Some(m) = self.models.iter().find(|m| !(1..=3).contains(*m)) {
            return Err(ConfigError::Value(format!("unknown model {m}; expected 1, 2 or 3")));
        }
        let mut sorted = self.models.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.models.len() {
            return Err(ConfigError::Value("models listed more than once".into()));
        }
        self.labeling
            .validate()
            .map_err(|e| ConfigError::Value(format!("labeling: {e}")))?;
        let s = &self.screening;
        if !(s.skew_threshold > 0.0) || !(0.0..0.5).contains(&s.minority_threshold) {
            return Err(ConfigError::Value(
                "screening thresholds out of range: skew_threshold > 0, 0 <= minority_threshold < 0.5".into(),
            ));
        }
        if !(self.vif_limit > 1.0) {
            return Err(ConfigError::Value("vif_limit must exceed 1".into()));
        }
        if !(self.fit.tol > 0.0) || self.fit.max_iter == 0 {
            return Err(ConfigError::Value("fit.tol must be positive and fit.max_iter nonzero".into()));
        }
        Ok(())
    }

    /// Full validation for stages that read the corpus.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.validate_values()?;
        let corpus = self.corpus.as_deref().ok_or(ConfigError::NoCorpus)?;
        if !corpus.is_dir() {
            return Err(ConfigError::MissingCorpus(corpus.to_path_buf()));
        }
        for f in [PULLS_FILE, COMMITS_FILE, REPOS_FILE] {
            let p = corpus.join(f);
            if !p.is_file() {
                return Err(ConfigError::MissingCorpusFile(p));
            }
        }
        if let Some(t) = &self.emoji_table {
            if !t.is_file() {
                return Err(ConfigError::MissingEmojiTable(t.clone()));
            }
        }
        self.out_dir()?;
        Ok(())
    }

    /// Canonical JSON of everything that can change a number in the output.
    /// The output directory is left out so that the same study run into two
    /// places hashes identically.
    pub fn canonical_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("out");
            obj.remove("fetch");
        }
        serde_json::to_string(&v).expect("value serializes")
    }
}
