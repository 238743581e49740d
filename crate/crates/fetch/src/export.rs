//! GitHub payload shapes, raw page staging and assembly of the canonical
//! corpus files.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use prsafe_core::corpus::{RoleContext, COMMITS_FILE, PULLS_FILE, REPOS_FILE};
use prsafe_core::{CommentRole, CommitEvent, RepoMeta, RepoSize};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::FetchError;

/// Login used by GitHub for deleted accounts.
pub const GHOST: &str = "ghost";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiUser {
    pub login: String,
}

fn login(user: &Option<ApiUser>) -> String {
    user.as_ref().map(|u| u.login.clone()).unwrap_or_else(|| GHOST.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiRepo {
    pub full_name: String,
    #[serde(default)]
    pub stargazers_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiPull {
    pub id: u64,
    pub number: u64,
    pub user: Option<ApiUser>,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub closed_at: Option<DateTime<Utc>>,
    #[serde(default)]
    pub merged_at: Option<DateTime<Utc>>,
}

/// Issue comments and review comments share this shape; only the URL field
/// naming the parent differs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiComment {
    pub id: u64,
    #[serde(default)]
    pub issue_url: Option<String>,
    #[serde(default)]
    pub pull_request_url: Option<String>,
    pub user: Option<ApiUser>,
    #[serde(default)]
    pub body: Option<String>,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub author_association: Option<String>,
}

impl ApiComment {
    /// Trailing number of the parent issue or pull URL.
    pub fn parent_number(&self) -> Option<u64> {
        let url = self.issue_url.as_deref().or(self.pull_request_url.as_deref())?;
        url.trim_end_matches('/').rsplit('/').next()?.parse().ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiReview {
    pub id: u64,
    pub user: Option<ApiUser>,
    #[serde(default)]
    pub body: Option<String>,
    /// Absent on pending reviews.
    #[serde(default)]
    pub submitted_at: Option<DateTime<Utc>>,
    #[serde(default)]
    pub author_association: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagedReview {
    pub pr_number: u64,
    #[serde(flatten)]
    pub review: ApiReview,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiEventIssue {
    pub number: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiEvent {
    pub id: u64,
    pub event: String,
    pub actor: Option<ApiUser>,
    #[serde(default)]
    pub issue: Option<ApiEventIssue>,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiGitSignature {
    #[serde(default)]
    pub date: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiGitCommit {
    #[serde(default)]
    pub author: Option<ApiGitSignature>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiCommit {
    pub sha: String,
    /// `None` when the commit email is not linked to an account.
    pub author: Option<ApiUser>,
    pub commit: ApiGitCommit,
}

/// Append records to a staging file, first repairing a line cut short by an
/// earlier crash so the new records start on their own line.
pub fn append_staged<T: Serialize>(path: &Path, items: &[T]) -> Result<(), FetchError> {
    let mut file = OpenOptions::new()
        .create(true)
        .read(true)
        .append(true)
        .open(path)
        .map_err(FetchError::io(path))?;
    let len = file.metadata().map_err(FetchError::io(path))?.len();
    let mut w = Vec::new();
    if len > 0 {
        let mut last = [0u8; 1];
        file.seek(SeekFrom::End(-1)).map_err(FetchError::io(path))?;
        file.read_exact(&mut last).map_err(FetchError::io(path))?;
        if last[0] != b'\n' {
            w.push(b'\n');
        }
    }
    for item in items {
        serde_json::to_writer(&mut w, item).expect("staged record serializes");
        w.push(b'\n');
    }
    file.write_all(&w).map_err(FetchError::io(path))?;
    file.sync_data().map_err(FetchError::io(path))
}

/// Read a staging file, skipping lines that do not parse. Returns the records
/// and the number skipped.
pub fn read_staged<T: DeserializeOwned>(path: &Path) -> Result<(Vec<T>, usize), FetchError> {
    if !path.is_file() {
        return Ok((Vec::new(), 0));
    }
    let file = File::open(path).map_err(FetchError::io(path))?;
    let mut out = Vec::new();
    let mut skipped = 0;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(FetchError::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(v) => out.push(v),
            Err(_) => skipped += 1,
        }
    }
    Ok((out, skipped))
}

/// Keep the last copy of every key; staging may hold a page twice after a
/// resumed run.
pub fn dedup_by<T, K: Ord>(items: Vec<T>, key: impl Fn(&T) -> K) -> Vec<T> {
    let mut map = BTreeMap::new();
    for item in items {
        map.insert(key(&item), item);
    }
    map.into_values().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExportComment {
    pub author: String,
    pub role: CommentRole,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub author_association: Option<String>,
    pub body: String,
    pub created_at: DateTime<Utc>,
}

/// One `pulls.jsonl` line: the canonical PR record plus the role inputs it
/// was derived from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExportPull {
    pub repo_full_name: String,
    pub pr_number: u64,
    pub author: String,
    pub created_at: DateTime<Utc>,
    pub merged: bool,
    pub closed_at: Option<DateTime<Utc>>,
    pub reopen_count: u32,
    pub merged_by: Option<String>,
    pub closed_by: Option<String>,
    pub reviewers: Vec<String>,
    pub comments: Vec<ExportComment>,
}

#[derive(Debug, Default)]
pub struct Staged {
    pub pulls: Vec<ApiPull>,
    pub issue_comments: Vec<ApiComment>,
    pub review_comments: Vec<ApiComment>,
    pub reviews: Vec<StagedReview>,
    pub events: Vec<ApiEvent>,
    pub commits: Vec<ApiCommit>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordCounts {
    pub pulls: u64,
    pub comments: u64,
    pub reviews: u64,
    pub commits: u64,
}

#[derive(Debug)]
pub struct Assembled {
    pub repo: RepoMeta,
    pub pulls: Vec<ExportPull>,
    pub commits: Vec<CommitEvent>,
    pub counts: RecordCounts,
    pub commits_without_login: u64,
}

#[derive(Default)]
struct IssueHistory {
    reopened: u32,
    merged_by: Option<String>,
    closed_by: Option<String>,
}

fn export_comment(c: &ApiComment, ctx: &RoleContext<'_>) -> ExportComment {
    let author = login(&c.user);
    ExportComment {
        role: ctx.role_of(&author, c.author_association.as_deref()),
        author,
        author_association: c.author_association.clone(),
        body: c.body.clone().unwrap_or_default(),
        created_at: c.created_at,
    }
}

/// Join staged endpoint data into canonical records. Comments are embedded
/// in their PRs with roles derived here; PRs created before `since` are
/// dropped along with everything attached to them.
pub fn assemble(repo_full_name: &str, stars: u64, since: Option<DateTime<Utc>>, staged: Staged) -> Assembled {
    let pulls: Vec<ApiPull> = dedup_by(staged.pulls, |p| p.number)
        .into_iter()
        .filter(|p| since.is_none_or(|s| p.created_at >= s))
        .collect();
    let kept: BTreeSet<u64> = pulls.iter().map(|p| p.number).collect();

    let mut events = dedup_by(staged.events, |e| e.id);
    events.sort_by_key(|e| (e.created_at, e.id));
    let mut history: HashMap<u64, IssueHistory> = HashMap::new();
    for e in &events {
        let Some(issue) = &e.issue else { continue };
        let h = history.entry(issue.number).or_default();
        match e.event.as_str() {
            "reopened" => h.reopened += 1,
            "merged" => h.merged_by = Some(login(&e.actor)),
            "closed" => h.closed_by = Some(login(&e.actor)),
            _ => {}
        }
    }

    let mut comments_by_pr: BTreeMap<u64, Vec<&ApiComment>> = BTreeMap::new();
    let issue_comments = dedup_by(staged.issue_comments, |c| c.id);
    let review_comments = dedup_by(staged.review_comments, |c| c.id);
    for c in issue_comments.iter().chain(review_comments.iter()) {
        if let Some(n) = c.parent_number().filter(|n| kept.contains(n)) {
            comments_by_pr.entry(n).or_default().push(c);
        }
    }
    let reviews: Vec<StagedReview> = dedup_by(staged.reviews, |r| r.review.id)
        .into_iter()
        .filter(|r| kept.contains(&r.pr_number))
        .collect();
    let mut reviews_by_pr: BTreeMap<u64, Vec<&ApiReview>> = BTreeMap::new();
    for r in &reviews {
        reviews_by_pr.entry(r.pr_number).or_default().push(&r.review);
    }

    let mut counts = RecordCounts {
        pulls: pulls.len() as u64,
        reviews: reviews.len() as u64,
        ..RecordCounts::default()
    };
    let no_reviews = Vec::new();
    let mut out = Vec::with_capacity(pulls.len());
    for p in &pulls {
        let author = login(&p.user);
        let h = history.remove(&p.number).unwrap_or_default();
        let pr_reviews = reviews_by_pr.get(&p.number).unwrap_or(&no_reviews);
        let reviewers: Vec<String> = pr_reviews
            .iter()
            .filter(|r| r.submitted_at.is_some())
            .map(|r| login(&r.user))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let ctx = RoleContext {
            pr_author: &author,
            merged_by: h.merged_by.as_deref(),
            closed_by: h.closed_by.as_deref(),
            reviewers: &reviewers,
        };
        let mut comments: Vec<ExportComment> = comments_by_pr
            .get(&p.number)
            .map(|cs| cs.iter().map(|c| export_comment(c, &ctx)).collect())
            .unwrap_or_default();
        // a review submitted with a summary body reads as a comment
        for r in pr_reviews {
            let (Some(at), Some(body)) = (r.submitted_at, r.body.as_deref()) else { continue };
            if body.trim().is_empty() {
                continue;
            }
            let author = login(&r.user);
            comments.push(ExportComment {
                role: ctx.role_of(&author, r.author_association.as_deref()),
                author,
                author_association: r.author_association.clone(),
                body: body.to_string(),
                created_at: at,
            });
        }
        comments.sort_by(|a, b| (a.created_at, &a.author, &a.body).cmp(&(b.created_at, &b.author, &b.body)));
        counts.comments += comments.len() as u64;
        out.push(ExportPull {
            repo_full_name: repo_full_name.to_string(),
            pr_number: p.number,
            author,
            created_at: p.created_at,
            merged: p.merged_at.is_some(),
            closed_at: p.closed_at,
            reopen_count: h.reopened,
            merged_by: h.merged_by,
            closed_by: h.closed_by,
            reviewers,
            comments,
        });
    }

    let mut commits = Vec::new();
    let mut commits_without_login = 0;
    for c in dedup_by(staged.commits, |c| c.sha.clone()) {
        let date = c.commit.author.as_ref().and_then(|a| a.date);
        match (c.author, date) {
            (Some(u), Some(d)) if since.is_none_or(|s| d >= s) => commits.push(CommitEvent {
                repo_full_name: repo_full_name.to_string(),
                author: u.login,
                committed_at: d,
            }),
            (Some(_), Some(_)) => {}
            _ => commits_without_login += 1,
        }
    }
    commits.sort_by(|a, b| (a.committed_at, &a.author).cmp(&(b.committed_at, &b.author)));
    counts.commits = commits.len() as u64;

    let pr_count = out.len() as u64;
    Assembled {
        repo: RepoMeta {
            repo_full_name: repo_full_name.to_string(),
            stars,
            category_labels: BTreeSet::new(),
            pr_count,
            repo_size: RepoSize::from_pr_count(pr_count),
        },
        pulls: out,
        commits,
        counts,
        commits_without_login,
    }
}

fn write_atomic<T: Serialize>(dir: &Path, name: &str, records: &[T]) -> Result<(), FetchError> {
    let tmp = dir.join(format!("{name}.tmp"));
    let path = dir.join(name);
    let file = File::create(&tmp).map_err(FetchError::io(&tmp))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r).expect("record serializes");
        w.write_all(b"\n").map_err(FetchError::io(&tmp))?;
    }
    w.flush().map_err(FetchError::io(&tmp))?;
    drop(w);
    std::fs::rename(&tmp, &path).map_err(FetchError::io(&path))
}

/// Replace the canonical files in `dir` with the assembled records.
pub fn write_corpus_files(dir: &Path, a: &Assembled) -> Result<(), FetchError> {
    write_atomic(dir, PULLS_FILE, &a.pulls)?;
    write_atomic(dir, COMMITS_FILE, &a.commits)?;
    write_atomic(dir, REPOS_FILE, std::slice::from_ref(&a.repo))
}
