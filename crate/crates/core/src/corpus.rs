//! Canonical pull-request corpus: record types, JSONL storage and
//! repository filtering.
//!
//! A corpus directory holds one record per line in these files:
//!
//! | file                        | required | record                         |
//! |-----------------------------|----------|--------------------------------|
//! | `pulls.jsonl`               | yes      | [`PullRequestRecord`]          |
//! | `comments.jsonl`            | no       | comment keyed by repo + PR     |
//! | `commits.jsonl`             | yes      | [`CommitEvent`]                |
//! | `contributor_context.jsonl` | no       | [`ContributorContext`]         |
//! | `repos.jsonl`               | yes      | [`RepoMeta`]                   |
//!
//! Malformed lines never abort a load: they are skipped and collected into an
//! [`IngestReport`], which can be persisted as `ingest_errors.jsonl`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PULLS_FILE: &str = "pulls.jsonl";
pub const COMMENTS_FILE: &str = "comments.jsonl";
pub const COMMITS_FILE: &str = "commits.jsonl";
pub const CONTEXT_FILE: &str = "contributor_context.jsonl";
pub const REPOS_FILE: &str = "repos.jsonl";
pub const ERRORS_FILE: &str = "ingest_errors.jsonl";

/// Category labels excluded by default when curating repositories.
pub const DEFAULT_EXCLUDED_LABELS: [&str; 5] = [
    "code-learning",
    "resource-list",
    "education",
    "non-english",
    "docs-only",
];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("required corpus file {} is missing", .0.display())]
    MissingFile(PathBuf),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to serialize record: {0}")]
    Serialize(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommentRole {
    Contributor,
    Integrator,
    Reviewer,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommentRecord {
    pub author: String,
    pub role: CommentRole,
    pub body: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PullRequestRecord {
    pub repo_full_name: String,
    pub pr_number: u64,
    pub author: String,
    pub created_at: DateTime<Utc>,
    pub merged: bool,
    pub closed_at: Option<DateTime<Utc>>,
    pub reopen_count: u32,
    /// Sorted by `created_at`, ascending.
    pub comments: Vec<CommentRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitEvent {
    pub repo_full_name: String,
    pub author: String,
    pub committed_at: DateTime<Utc>,
}

/// Contributor-level control variables for one (repository, author) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributorContext {
    pub repo_full_name: String,
    pub author: String,
    pub core_member: bool,
    pub contrib_rate_author: f64,
    pub followers: u64,
    pub num_languages: u32,
    pub contrib_follow_integrator: bool,
    pub social_strength: f64,
}

/// Repository activity size by pull-request count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepoSize {
    Small,
    Medium,
    Large,
}

impl RepoSize {
    /// Large above 1,000 PRs, medium from 101 to 1,000, small otherwise.
    pub fn from_pr_count(pr_count: u64) -> Self {
        match pr_count {
            0..=100 => RepoSize::Small,
            101..=1000 => RepoSize::Medium,
            _ => RepoSize::Large,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RepoSize::Small => "small",
            RepoSize::Medium => "medium",
            RepoSize::Large => "large",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepoMeta {
    pub repo_full_name: String,
    pub stars: u64,
    pub category_labels: BTreeSet<String>,
    pub pr_count: u64,
    pub repo_size: RepoSize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub repos: Vec<RepoMeta>,
    pub pulls: Vec<PullRequestRecord>,
    pub commits: Vec<CommitEvent>,
    pub contexts: Vec<ContributorContext>,
}

impl Corpus {
    pub fn repo(&self, name: &str) -> Option<&RepoMeta> {
        self.repos.iter().find(|r| r.repo_full_name == name)
    }

    /// Contributor contexts keyed by (repository, author).
    pub fn context_index(&self) -> HashMap<(&str, &str), &ContributorContext> {
        self.contexts
            .iter()
            .map(|c| ((c.repo_full_name.as_str(), c.author.as_str()), c))
            .collect()
    }

    /// Distinct (repository, PR author) pairs in first-seen order.
    pub fn pr_authors(&self) -> Vec<(String, String)> {
        let mut seen = HashSet::new();
        self.pulls
            .iter()
            .filter(|pr| seen.insert((pr.repo_full_name.as_str(), pr.author.as_str())))
            .map(|pr| (pr.repo_full_name.clone(), pr.author.clone()))
            .collect()
    }
}

/// Evidence used to assign a role to a comment when the export lacks one.
#[derive(Debug, Clone, Default)]
pub struct RoleContext<'a> {
    pub pr_author: &'a str,
    pub merged_by: Option<&'a str>,
    pub closed_by: Option<&'a str>,
    /// Logins that submitted a formal review on the PR.
    pub reviewers: &'a [String],
}

impl RoleContext<'_> {
    /// Contributor if the commenter opened the PR; integrator if they merged or
    /// closed it or hold an owner/member association; reviewer if they submitted
    /// a formal review; other otherwise. Earlier rules win.
    pub fn role_of(&self, author: &str, association: Option<&str>) -> CommentRole {
        if author == self.pr_author {
            return CommentRole::Contributor;
        }
        let is_member = association
            .map(|a| a.eq_ignore_ascii_case("OWNER") || a.eq_ignore_ascii_case("MEMBER"))
            .unwrap_or(false);
        if self.merged_by == Some(author) || self.closed_by == Some(author) || is_member {
            return CommentRole::Integrator;
        }
        if self.reviewers.iter().any(|r| r == author) {
            return CommentRole::Reviewer;
        }
        CommentRole::Other
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestError {
    pub file: String,
    pub line: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub errors: Vec<IngestError>,
    /// Comments whose role was derived rather than read from the file.
    pub derived_roles: usize,
}

impl IngestReport {
    fn push(&mut self, file: &str, line: usize, field: Option<&str>, message: impl Into<String>) {
        self.errors.push(IngestError {
            file: file.to_string(),
            line,
            field: field.map(str::to_string),
            message: message.into(),
        });
    }

    pub fn is_clean(&self) -> bool {
        self.errors.is_empty()
    }
}

#[derive(Deserialize)]
struct CommentLine {
    #[serde(default)]
    repo_full_name: Option<String>,
    #[serde(default)]
    pr_number: Option<u64>,
    author: String,
    #[serde(default)]
    role: Option<CommentRole>,
    #[serde(default)]
    author_association: Option<String>,
    #[serde(default)]
    body: Option<String>,
    created_at: DateTime<Utc>,
}

#[derive(Deserialize)]
struct PullLine {
    repo_full_name: String,
    pr_number: u64,
    author: String,
    created_at: DateTime<Utc>,
    merged: bool,
    #[serde(default)]
    closed_at: Option<DateTime<Utc>>,
    #[serde(default)]
    reopen_count: u32,
    #[serde(default)]
    merged_by: Option<String>,
    #[serde(default)]
    closed_by: Option<String>,
    #[serde(default)]
    reviewers: Vec<String>,
    #[serde(default)]
    comments: Vec<CommentLine>,
}

#[derive(Deserialize)]
struct RepoLine {
    repo_full_name: String,
    stars: u64,
    #[serde(default)]
    category_labels: BTreeSet<String>,
    pr_count: u64,
    #[serde(default)]
    repo_size: Option<RepoSize>,
}

/// Field name out of a serde "missing field `x`" message.
fn missing_field(message: &str) -> Option<String> {
    let rest = message.split("missing field `").nth(1)?;
    rest.split('`').next().map(str::to_string)
}

fn read_lines<T: DeserializeOwned>(
    path: &Path,
    report: &mut IngestReport,
) -> Result<Vec<(usize, T)>, CorpusError> {
    let file = File::open(path).map_err(io_err(path))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<T>(&line) {
            Ok(rec) => out.push((line_no, rec)),
            Err(e) => {
                let msg = e.to_string();
                report.push(&name, line_no, missing_field(&msg).as_deref(), msg);
            }
        }
    }
    Ok(out)
}

fn required(dir: &Path, name: &str) -> Result<PathBuf, CorpusError> {
    let path = dir.join(name);
    if path.is_file() {
        Ok(path)
    } else {
        Err(CorpusError::MissingFile(path))
    }
}

fn comment_from_line(line: CommentLine, ctx: &RoleContext<'_>, report: &mut IngestReport) -> CommentRecord {
    let role = match line.role {
        Some(role) => role,
        None => {
            report.derived_roles += 1;
            ctx.role_of(&line.author, line.author_association.as_deref())
        }
    };
    CommentRecord {
        author: line.author,
        role,
        body: line.body.unwrap_or_default(),
        created_at: line.created_at,
    }
}

fn in_unit_interval(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

/// Load and validate a corpus directory.
///
/// Fails only when a required file is missing or unreadable; every record
/// level problem lands in the returned [`IngestReport`].
pub fn load_corpus(dir: &Path) -> Result<(Corpus, IngestReport), CorpusError> {
    let pulls_path = required(dir, PULLS_FILE)?;
    let commits_path = required(dir, COMMITS_FILE)?;
    let repos_path = required(dir, REPOS_FILE)?;
    let mut report = IngestReport::default();
    let mut corpus = Corpus::default();

    let mut repo_names = HashSet::new();
    for (line_no, r) in read_lines::<RepoLine>(&repos_path, &mut report)? {
        let derived = RepoSize::from_pr_count(r.pr_count);
        if let Some(given) = r.repo_size {
            if given != derived {
                report.push(
                    REPOS_FILE,
                    line_no,
                    Some("repo_size"),
                    format!(
                        "repo_size {} inconsistent with pr_count {} (expected {})",
                        given.as_str(),
                        r.pr_count,
                        derived.as_str()
                    ),
                );
                continue;
            }
        }
        if !repo_names.insert(r.repo_full_name.clone()) {
            report.push(REPOS_FILE, line_no, Some("repo_full_name"), "duplicate repository");
            continue;
        }
        corpus.repos.push(RepoMeta {
            repo_full_name: r.repo_full_name,
            stars: r.stars,
            category_labels: r.category_labels,
            pr_count: r.pr_count,
            repo_size: derived,
        });
    }

    let mut pr_index: HashMap<(String, u64), usize> = HashMap::new();
    for (line_no, p) in read_lines::<PullLine>(&pulls_path, &mut report)? {
        if p.pr_number == 0 {
            report.push(PULLS_FILE, line_no, Some("pr_number"), "pr_number must be positive");
            continue;
        }
        let key = (p.repo_full_name.clone(), p.pr_number);
        if pr_index.contains_key(&key) {
            report.push(
                PULLS_FILE,
                line_no,
                Some("pr_number"),
                format!("duplicate pr_number {} in {}", p.pr_number, p.repo_full_name),
            );
            continue;
        }
        let ctx = RoleContext {
            pr_author: &p.author,
            merged_by: p.merged_by.as_deref(),
            closed_by: p.closed_by.as_deref(),
            reviewers: &p.reviewers,
        };
        let comments: Vec<CommentRecord> = p
            .comments
            .into_iter()
            .map(|c| comment_from_line(c, &ctx, &mut report))
            .collect();
        pr_index.insert(key, corpus.pulls.len());
        corpus.pulls.push(PullRequestRecord {
            repo_full_name: p.repo_full_name,
            pr_number: p.pr_number,
            author: p.author,
            created_at: p.created_at,
            merged: p.merged,
            closed_at: p.closed_at,
            reopen_count: p.reopen_count,
            comments,
        });
    }

    let comments_path = dir.join(COMMENTS_FILE);
    if comments_path.is_file() {
        for (line_no, c) in read_lines::<CommentLine>(&comments_path, &mut report)? {
            let (Some(repo), Some(number)) = (c.repo_full_name.clone(), c.pr_number) else {
                let field = if c.repo_full_name.is_none() { "repo_full_name" } else { "pr_number" };
                report.push(COMMENTS_FILE, line_no, Some(field), format!("missing field `{field}`"));
                continue;
            };
            let Some(&idx) = pr_index.get(&(repo.clone(), number)) else {
                report.push(
                    COMMENTS_FILE,
                    line_no,
                    Some("pr_number"),
                    format!("comment references unknown pull request {repo}#{number}"),
                );
                continue;
            };
            let pr_author = corpus.pulls[idx].author.clone();
            let ctx = RoleContext {
                pr_author: &pr_author,
                ..Default::default()
            };
            let comment = comment_from_line(c, &ctx, &mut report);
            corpus.pulls[idx].comments.push(comment);
        }
    }
    for pr in &mut corpus.pulls {
        pr.comments.sort_by_key(|c| c.created_at);
    }

    for (_, c) in read_lines::<CommitEvent>(&commits_path, &mut report)? {
        corpus.commits.push(c);
    }

    let context_path = dir.join(CONTEXT_FILE);
    if context_path.is_file() {
        let mut seen = HashSet::new();
        for (line_no, c) in read_lines::<ContributorContext>(&context_path, &mut report)? {
            if !in_unit_interval(c.contrib_rate_author) {
                report.push(CONTEXT_FILE, line_no, Some("contrib_rate_author"), "fraction outside [0, 1]");
                continue;
            }
            if !in_unit_interval(c.social_strength) {
                report.push(CONTEXT_FILE, line_no, Some("social_strength"), "fraction outside [0, 1]");
                continue;
            }
            if c.num_languages == 0 {
                report.push(CONTEXT_FILE, line_no, Some("num_languages"), "num_languages must be positive");
                continue;
            }
            if !seen.insert((c.repo_full_name.clone(), c.author.clone())) {
                report.push(CONTEXT_FILE, line_no, Some("author"), "duplicate (repository, author) context");
                continue;
            }
            corpus.contexts.push(c);
        }
    }

    Ok((corpus, report))
}

fn write_jsonl<'a, T: Serialize + 'a>(
    path: &Path,
    records: impl IntoIterator<Item = &'a T>,
) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for rec in records {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Write `corpus` in canonical form, comments embedded in their pull requests.
pub fn save_corpus(corpus: &Corpus, dir: &Path) -> Result<(), CorpusError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_jsonl(&dir.join(REPOS_FILE), &corpus.repos)?;
    write_jsonl(&dir.join(PULLS_FILE), &corpus.pulls)?;
    write_jsonl(&dir.join(COMMITS_FILE), &corpus.commits)?;
    write_jsonl(&dir.join(CONTEXT_FILE), &corpus.contexts)
}

pub fn write_error_report(report: &IngestReport, path: &Path) -> Result<(), CorpusError> {
    write_jsonl(path, &report.errors)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub top_n_by_stars: usize,
    pub excluded_labels: BTreeSet<String>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            top_n_by_stars: 200,
            excluded_labels: DEFAULT_EXCLUDED_LABELS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Keep the `top_n_by_stars` most starred repositories (all ties at the
/// boundary included), drop any carrying an excluded label, and remove every
/// record belonging to a dropped repository.
pub fn filter_repositories(corpus: &Corpus, config: &FilterConfig) -> Corpus {
    let mut stars: Vec<u64> = corpus.repos.iter().map(|r| r.stars).collect();
    stars.sort_unstable_by(|a, b| b.cmp(a));
    let cutoff = match config.top_n_by_stars {
        0 => None,
        n if n >= stars.len() => stars.last().copied(),
        n => Some(stars[n - 1]),
    };
    let kept: BTreeMap<&str, ()> = corpus
        .repos
        .iter()
        .filter(|r| cutoff.is_some_and(|c| r.stars >= c))
        .filter(|r| r.category_labels.is_disjoint(&config.excluded_labels))
        .map(|r| (r.repo_full_name.as_str(), ()))
        .collect();
    let keep = |name: &str| kept.contains_key(name);
    Corpus {
        repos: corpus.repos.iter().filter(|r| keep(&r.repo_full_name)).cloned().collect(),
        pulls: corpus.pulls.iter().filter(|p| keep(&p.repo_full_name)).cloned().collect(),
        commits: corpus.commits.iter().filter(|c| keep(&c.repo_full_name)).cloned().collect(),
        contexts: corpus.contexts.iter().filter(|c| keep(&c.repo_full_name)).cloned().collect(),
    }
}
