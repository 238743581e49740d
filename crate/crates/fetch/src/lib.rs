//! Export a GitHub repository's pull requests, comments, reviews and commits
//! into the canonical corpus layout read by `prsafe_core::corpus`.
//!
//! Each listing endpoint is paged by page number. Every page is appended to a
//! staging file under `raw/` and recorded in `fetch_cursor.json` before the
//! next request, so an interrupted run resumes where it stopped. The
//! canonical files are rebuilt from staging at the end of every run,
//! deduplicated by GitHub id.
//!
//! The API token is read from the environment variable named in the job;
//! it is never taken from configuration values or command-line flags.

pub mod client;
pub mod cursor;
pub mod export;
pub mod transport;

use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use prsafe_core::corpus::CorpusError;
use prsafe_core::{load_corpus, save_corpus, Corpus};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use client::{RetryPolicy, RequestStats};
pub use cursor::{FetchCursor, CURSOR_FILE};
pub use export::RecordCounts;
pub use transport::{Clock, HttpResponse, SystemClock, Transport, TransportError, UreqTransport};

use client::Client;
use export::{ApiComment, ApiCommit, ApiEvent, ApiPull, ApiRepo, ApiReview, StagedReview};

pub const DEFAULT_TOKEN_ENV: &str = "GITHUB_TOKEN";
pub const DEFAULT_API_BASE: &str = "https://api.github.com";
pub const RAW_DIR: &str = "raw";
pub const REPORT_FILE: &str = "fetch_report.json";

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("invalid fetch job: {0}")]
    InvalidJob(String),
    #[error("repo not found: {0}")]
    RepoNotFound(String),
    #[error("not found: {url}")]
    NotFound { url: String },
    #[error("authentication rejected; check the token environment variable")]
    Unauthorized,
    #[error("forbidden without rate-limit headers: {url}")]
    Forbidden { url: String },
    #[error("HTTP {status} from {url}")]
    Http { url: String, status: u16 },
    #[error("giving up on {url} after {attempts} attempts: {last}")]
    RetriesExhausted { url: String, attempts: u32, last: String },
    #[error("unexpected payload from {url}: {message}")]
    Payload { url: String, message: String },
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("fetched corpus failed validation with {0} errors")]
    InvalidOutput(usize),
}

impl FetchError {
    pub(crate) fn io(path: &Path) -> impl FnOnce(std::io::Error) -> FetchError + '_ {
        move |source| FetchError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FetchJob {
    /// `owner/name`.
    pub repo_full_name: String,
    /// Drop PRs created, and commits authored, before this instant.
    pub since: Option<DateTime<Utc>>,
    /// Name of the environment variable holding the API token.
    pub auth_token_source: String,
    pub page_size: u32,
    pub output_dir: PathBuf,
}

impl FetchJob {
    pub fn new(repo_full_name: impl Into<String>, output_dir: impl Into<PathBuf>) -> Self {
        FetchJob {
            repo_full_name: repo_full_name.into(),
            since: None,
            auth_token_source: DEFAULT_TOKEN_ENV.to_string(),
            page_size: 100,
            output_dir: output_dir.into(),
        }
    }

    fn valid_segment(s: &str) -> bool {
        !s.is_empty()
            && s != "."
            && s != ".."
            && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
    }

    /// Check the name and page size, and that the output directory can be
    /// created and written.
    pub fn validate(&self) -> Result<(), FetchError> {
        let parts: Vec<&str> = self.repo_full_name.split('/').collect();
        if parts.len() != 2 || !parts.iter().all(|p| Self::valid_segment(p)) {
            return Err(FetchError::InvalidJob(format!(
                "repository must be owner/name, got {:?}",
                self.repo_full_name
            )));
        }
        if !(1..=100).contains(&self.page_size) {
            return Err(FetchError::InvalidJob(format!(
                "page_size must be within 1..=100, got {}",
                self.page_size
            )));
        }
        if self.auth_token_source.is_empty() {
            return Err(FetchError::InvalidJob("auth_token_source must name an environment variable".into()));
        }
        let dir = &self.output_dir;
        std::fs::create_dir_all(dir.join(RAW_DIR)).map_err(FetchError::io(dir))?;
        let probe = dir.join(".prsafe_write_probe");
        std::fs::write(&probe, b"").map_err(FetchError::io(&probe))?;
        std::fs::remove_file(&probe).map_err(FetchError::io(&probe))
    }
}

/// Token from the environment variable `name`, if set and non-empty.
pub fn resolve_token(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|t| !t.trim().is_empty())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchReport {
    pub repo_full_name: String,
    pub counts: RecordCounts,
    pub requests: u64,
    pub retries: u64,
    pub rate_limit_waits: u64,
    pub waited_ms: u64,
    /// Listing pages not requested because the cursor showed them complete.
    pub pages_resumed: u64,
    pub commits_without_login: u64,
    /// Non-fatal problems: a PR whose reviews vanished, unreadable staging lines.
    pub failures: Vec<String>,
    pub authenticated: bool,
}

/// Transport, clock and retry policy shared by fetch jobs.
pub struct Fetcher {
    transport: Box<dyn Transport>,
    clock: Box<dyn Clock>,
    pub policy: RetryPolicy,
    pub api_base: String,
}

impl Default for Fetcher {
    fn default() -> Self {
        Fetcher::new(Box::new(UreqTransport::default()), Box::new(SystemClock))
    }
}

const STAGE_PULLS: &str = "pulls";
const STAGE_ISSUE_COMMENTS: &str = "issue_comments";
const STAGE_REVIEW_COMMENTS: &str = "review_comments";
const STAGE_EVENTS: &str = "issue_events";
const STAGE_COMMITS: &str = "commits";
const STAGE_REVIEWS: &str = "reviews";

fn stage_path(dir: &Path, stage: &str) -> PathBuf {
    dir.join(RAW_DIR).join(format!("{stage}.jsonl"))
}

fn parse_items<T: serde::de::DeserializeOwned>(items: Vec<Value>, what: &str) -> Result<Vec<T>, FetchError> {
    items
        .into_iter()
        .map(|v| {
            serde_json::from_value(v).map_err(|e| FetchError::Payload {
                url: what.to_string(),
                message: e.to_string(),
            })
        })
        .collect()
}

impl Fetcher {
    pub fn new(transport: Box<dyn Transport>, clock: Box<dyn Clock>) -> Self {
        Fetcher {
            transport,
            clock,
            policy: RetryPolicy::default(),
            api_base: DEFAULT_API_BASE.to_string(),
        }
    }

    pub fn with_api_base(mut self, base: impl Into<String>) -> Self {
        self.api_base = base.into().trim_end_matches('/').to_string();
        self
    }

    pub fn with_policy(mut self, policy: RetryPolicy) -> Self {
        self.policy = policy;
        self
    }

    /// Fetch with the token named by `job.auth_token_source`.
    pub fn fetch(&self, job: &FetchJob) -> Result<FetchReport, FetchError> {
        let token = resolve_token(&job.auth_token_source);
        if token.is_none() {
            log::warn!(
                "{} is not set; fetching unauthenticated at the lower rate limit",
                job.auth_token_source
            );
        }
        self.fetch_with_token(job, token.as_deref())
    }

    /// Fetch with an explicit token. Callers outside tests should prefer
    /// [`Fetcher::fetch`], which reads it from the environment.
    pub fn fetch_with_token(&self, job: &FetchJob, token: Option<&str>) -> Result<FetchReport, FetchError> {
        job.validate()?;
        let dir = job.output_dir.as_path();
        let mut client = Client::new(self.transport.as_ref(), self.clock.as_ref(), &self.policy, token);
        let mut report = FetchReport {
            repo_full_name: job.repo_full_name.clone(),
            authenticated: token.is_some(),
            ..FetchReport::default()
        };
        let result = self.run(job, dir, &mut client, &mut report);
        let stats = client.stats;
        report.requests = stats.requests;
        report.retries = stats.retries;
        report.rate_limit_waits = stats.rate_limit_waits;
        report.waited_ms = stats.waited_ms;
        result?;
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        let path = dir.join(REPORT_FILE);
        std::fs::write(&path, text).map_err(FetchError::io(&path))?;
        Ok(report)
    }

    fn run(&self, job: &FetchJob, dir: &Path, client: &mut Client<'_>, report: &mut FetchReport) -> Result<(), FetchError> {
        let repo_url = format!("{}/repos/{}", self.api_base, job.repo_full_name);
        let repo: ApiRepo = match client.get_json(&repo_url) {
            Ok(v) => parse_items(vec![v], &repo_url)?.remove(0),
            Err(FetchError::NotFound { .. }) => return Err(FetchError::RepoNotFound(job.repo_full_name.clone())),
            Err(e) => return Err(e),
        };

        let mut cursor = match FetchCursor::load(dir)? {
            Some(c) if c.matches(&job.repo_full_name, job.since, job.page_size) => c,
            previous => {
                if previous.is_some() {
                    log::info!("listing parameters changed; restarting {}", job.repo_full_name);
                }
                // staged records are still valid; page numbers are not
                FetchCursor::new(&job.repo_full_name, job.since, job.page_size)
            }
        };

        let since_param = job
            .since
            .map(|s| format!("&since={}", s.to_rfc3339_opts(SecondsFormat::Secs, true)))
            .unwrap_or_default();
        let listings = [
            (STAGE_PULLS, format!("{repo_url}/pulls?state=all&sort=created&direction=asc")),
            (STAGE_ISSUE_COMMENTS, format!("{repo_url}/issues/comments?sort=created&direction=asc{since_param}")),
            (STAGE_REVIEW_COMMENTS, format!("{repo_url}/pulls/comments?sort=created&direction=asc{since_param}")),
            (STAGE_EVENTS, format!("{repo_url}/issues/events?")),
            (STAGE_COMMITS, format!("{repo_url}/commits?{}", since_param.trim_start_matches('&'))),
        ];
        for (stage, url) in &listings {
            let url = url.trim_end_matches('?');
            let start = cursor.start_page(stage);
            report.pages_resumed += u64::from(start - 1);
            let path = stage_path(dir, stage);
            let result = client.for_each_page(url, job.page_size, start, |page, items| {
                let n = items.len();
                match *stage {
                    STAGE_PULLS => export::append_staged(&path, &parse_items::<ApiPull>(items, url)?)?,
                    STAGE_ISSUE_COMMENTS | STAGE_REVIEW_COMMENTS => {
                        export::append_staged(&path, &parse_items::<ApiComment>(items, url)?)?
                    }
                    STAGE_EVENTS => export::append_staged(&path, &parse_items::<ApiEvent>(items, url)?)?,
                    _ => export::append_staged(&path, &parse_items::<ApiCommit>(items, url)?)?,
                }
                cursor.record_page(stage, page, n);
                cursor.save(dir)
            });
            match result {
                Ok(_) => {}
                // an empty repository answers 409 on the commit listing
                Err(FetchError::Http { status: 409, .. }) if *stage == STAGE_COMMITS => {}
                Err(e) => return Err(e),
            }
        }

        let (pulls, skipped) = export::read_staged::<ApiPull>(&stage_path(dir, STAGE_PULLS))?;
        if skipped > 0 {
            report.failures.push(format!("{skipped} unreadable staged pull lines skipped"));
        }
        let numbers: std::collections::BTreeSet<u64> = pulls
            .iter()
            .filter(|p| job.since.is_none_or(|s| p.created_at >= s))
            .map(|p| p.number)
            .collect();
        let reviews_path = stage_path(dir, STAGE_REVIEWS);
        for n in numbers {
            if cursor.reviews_done.contains(&n) {
                continue;
            }
            let url = format!("{repo_url}/pulls/{n}/reviews");
            let mut staged = Vec::new();
            let result = client.for_each_page(&url, job.page_size, 1, |_, items| {
                staged.extend(parse_items::<ApiReview>(items, &url)?);
                Ok(())
            });
            match result {
                Ok(_) => {}
                Err(FetchError::NotFound { url }) => {
                    report.failures.push(format!("reviews unavailable: {url}"));
                    continue;
                }
                Err(e) => return Err(e),
            }
            let staged: Vec<StagedReview> = staged.into_iter().map(|review| StagedReview { pr_number: n, review }).collect();
            export::append_staged(&reviews_path, &staged)?;
            cursor.reviews_done.insert(n);
            cursor.save(dir)?;
        }

        let mut staged = export::Staged {
            pulls,
            ..export::Staged::default()
        };
        let mut note = |name: &str, skipped: usize| {
            if skipped > 0 {
                report.failures.push(format!("{skipped} unreadable staged {name} lines skipped"));
            }
        };
        let (v, s) = export::read_staged(&stage_path(dir, STAGE_ISSUE_COMMENTS))?;
        staged.issue_comments = v;
        note(STAGE_ISSUE_COMMENTS, s);
        let (v, s) = export::read_staged(&stage_path(dir, STAGE_REVIEW_COMMENTS))?;
        staged.review_comments = v;
        note(STAGE_REVIEW_COMMENTS, s);
        let (v, s) = export::read_staged(&reviews_path)?;
        staged.reviews = v;
        note(STAGE_REVIEWS, s);
        let (v, s) = export::read_staged(&stage_path(dir, STAGE_EVENTS))?;
        staged.events = v;
        note(STAGE_EVENTS, s);
        let (v, s) = export::read_staged(&stage_path(dir, STAGE_COMMITS))?;
        staged.commits = v;
        note(STAGE_COMMITS, s);

        let assembled = export::assemble(&job.repo_full_name, repo.stargazers_count, job.since, staged);
        export::write_corpus_files(dir, &assembled)?;
        report.counts = assembled.counts;
        report.commits_without_login = assembled.commits_without_login;

        let (_, ingest) = load_corpus(dir)?;
        if !ingest.errors.is_empty() {
            return Err(FetchError::InvalidOutput(ingest.errors.len()));
        }
        Ok(())
    }

    /// Fetch several repositories, one thread each. Requests within a
    /// repository stay sequential.
    pub fn fetch_many(&self, jobs: &[FetchJob]) -> Vec<Result<FetchReport, FetchError>> {
        std::thread::scope(|s| {
            let handles: Vec<_> = jobs.iter().map(|job| s.spawn(move || self.fetch(job))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("fetch thread panicked"))
                .collect()
        })
    }
}

/// `fetch_repository` against api.github.com with the token from the job's
/// environment variable.
pub fn fetch_repository(job: &FetchJob) -> Result<FetchReport, FetchError> {
    Fetcher::default().fetch(job)
}

/// Subdirectory name used for one repository in a multi-repository fetch.
pub fn repo_dir_name(repo_full_name: &str) -> String {
    repo_full_name.replace('/', "__")
}

/// Concatenate per-repository corpora into one canonical corpus at `out`.
pub fn merge_corpora(dirs: &[PathBuf], out: &Path) -> Result<Corpus, FetchError> {
    let mut merged = Corpus::default();
    for dir in dirs {
        let (c, ingest) = load_corpus(dir)?;
        if !ingest.errors.is_empty() {
            return Err(FetchError::InvalidOutput(ingest.errors.len()));
        }
        merged.repos.extend(c.repos);
        merged.pulls.extend(c.pulls);
        merged.commits.extend(c.commits);
        merged.contexts.extend(c.contexts);
    }
    save_corpus(&merged, out)?;
    Ok(merged)
}
