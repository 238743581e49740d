//! PR-level PS scores and their contributor- and repository-level means.
//!
//! A PR scores one point per satisfied condition out of ten, but only when
//! its author is a sustained contributor; PRs of non-sustained contributors
//! score zero. Censored, excluded and unlabeled authors are not scored and
//! do not enter either aggregate.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::PullRequestRecord;
use crate::cues::CueVector;
use crate::participation::{ParticipationLabel, ParticipationStatus};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IndexError {
    #[error("cannot compute thresholds over an empty set of pull requests")]
    EmptyScope,
    #[error("no thresholds for repository {0}")]
    MissingRepository(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdScope {
    #[default]
    Global,
    PerRepository,
}

/// Cut points above which a count cue is "high".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountThresholds {
    pub pr_comment_num: f64,
    pub num_comments_con: f64,
    pub num_participant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueThresholds {
    pub scope: ThresholdScope,
    pub global: CountThresholds,
    /// Filled only for per-repository scope.
    pub per_repository: BTreeMap<String, CountThresholds>,
}

impl CueThresholds {
    pub fn for_repo(&self, repo: &str) -> Result<&CountThresholds, IndexError> {
        match self.scope {
            ThresholdScope::Global => Ok(&self.global),
            ThresholdScope::PerRepository => self
                .per_repository
                .get(repo)
                .ok_or_else(|| IndexError::MissingRepository(repo.to_string())),
        }
    }
}

/// Median with the usual midpoint rule for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[mid] } else { (v[mid - 1] + v[mid]) / 2.0 })
}

fn count_thresholds<'a>(cues: impl Iterator<Item = &'a CueVector> + Clone) -> Result<CountThresholds, IndexError> {
    let col = |f: fn(&CueVector) -> u32| -> Result<f64, IndexError> {
        let v: Vec<f64> = cues.clone().map(|c| f(c) as f64).collect();
        median(&v).ok_or(IndexError::EmptyScope)
    };
    Ok(CountThresholds {
        pr_comment_num: col(|c| c.pr_comment_num)?,
        num_comments_con: col(|c| c.num_comments_con)?,
        num_participant: col(|c| c.num_participant)?,
    })
}

/// Median of each count cue, over the whole corpus and (for per-repository
/// scope) over each repository. `repos[i]` is the repository of `cues[i]`.
pub fn compute_thresholds(repos: &[&str], cues: &[CueVector], scope: ThresholdScope) -> Result<CueThresholds, IndexError> {
    let global = count_thresholds(cues.iter())?;
    let mut per_repository = BTreeMap::new();
    if scope == ThresholdScope::PerRepository {
        let mut grouped: BTreeMap<&str, Vec<&CueVector>> = BTreeMap::new();
        for (repo, cue) in repos.iter().zip(cues) {
            grouped.entry(repo).or_default().push(cue);
        }
        for (repo, group) in grouped {
            per_repository.insert(repo.to_string(), count_thresholds(group.iter().copied())?);
        }
    }
    Ok(CueThresholds {
        scope,
        global,
        per_repository,
    })
}

/// Reading of the merge-state condition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergedRule {
    /// Merged or not merged both satisfy the condition.
    #[default]
    Literal,
    /// Only merged PRs satisfy it.
    MergedOnly,
}

/// Number of the ten conditions satisfied by `cues`, ignoring the outcome gate.
pub fn count_conditions(cues: &CueVector, thresholds: &CountThresholds, merged_rule: MergedRule) -> u8 {
    let conditions = [
        match merged_rule {
            MergedRule::Literal => true,
            MergedRule::MergedOnly => cues.merged_or_not,
        },
        cues.pr_comment_num as f64 > thresholds.pr_comment_num,
        cues.has_exchange,
        cues.contrib_comment,
        cues.num_comments_con as f64 > thresholds.num_comments_con,
        cues.inte_comment,
        cues.reviewer_comment,
        cues.other_comment,
        cues.num_participant as f64 > thresholds.num_participant,
        cues.at_tag,
    ];
    conditions.iter().filter(|c| **c).count() as u8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    Censored,
    ExcludedGapReturn,
    Unlabeled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrScore {
    Scored(u8),
    Skipped(SkipReason),
}

impl PrScore {
    pub fn value(self) -> Option<u8> {
        match self {
            PrScore::Scored(v) => Some(v),
            PrScore::Skipped(_) => None,
        }
    }
}

pub fn score_pr(
    cues: &CueVector,
    label: Option<&ParticipationLabel>,
    thresholds: &CountThresholds,
    merged_rule: MergedRule,
) -> PrScore {
    match label.map(|l| l.status) {
        None => PrScore::Skipped(SkipReason::Unlabeled),
        Some(ParticipationStatus::Censored) => PrScore::Skipped(SkipReason::Censored),
        Some(ParticipationStatus::ExcludedGapReturn) => PrScore::Skipped(SkipReason::ExcludedGapReturn),
        Some(ParticipationStatus::NotSustained) => PrScore::Scored(0),
        Some(ParticipationStatus::Sustained) => PrScore::Scored(count_conditions(cues, thresholds, merged_rule)),
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Mean PS score of one contributor's PRs in a repository.
pub fn contributor_index(scores: &[u8]) -> Option<f64> {
    mean(scores.iter().map(|&s| f64::from(s)))
}

/// Unweighted mean of contributor indices in a repository.
pub fn repository_index(contributor_indices: &[f64]) -> Option<f64> {
    mean(contributor_indices.iter().copied())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributorScore {
    pub index: f64,
    pub scored_prs: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PsSummary {
    pub pr_scores: BTreeMap<(String, u64), PrScore>,
    pub contributor_index: BTreeMap<(String, String), ContributorScore>,
    pub repository_index: BTreeMap<String, f64>,
}

impl PsSummary {
    pub fn skipped(&self) -> impl Iterator<Item = (&(String, u64), SkipReason)> {
        self.pr_scores.iter().filter_map(|(k, s)| match s {
            PrScore::Skipped(r) => Some((k, *r)),
            PrScore::Scored(_) => None,
        })
    }

    /// Repositories by descending index, ties broken by name.
    pub fn repositories_ranked(&self) -> Vec<(&str, f64)> {
        let mut v: Vec<(&str, f64)> = self.repository_index.iter().map(|(r, x)| (r.as_str(), *x)).collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        v
    }
}

/// Score every PR and aggregate. `cues[i]` belongs to `pulls[i]`; labels are
/// keyed by (repository, PR author).
pub fn build_summary(
    pulls: &[PullRequestRecord],
    cues: &[CueVector],
    labels: &BTreeMap<(String, String), ParticipationLabel>,
    thresholds: &CueThresholds,
    merged_rule: MergedRule,
) -> Result<PsSummary, IndexError> {
    let mut summary = PsSummary::default();
    let mut by_contributor: BTreeMap<(String, String), Vec<u8>> = BTreeMap::new();
    for (pr, cue) in pulls.iter().zip(cues) {
        let key = (pr.repo_full_name.clone(), pr.author.clone());
        let t = thresholds.for_repo(&pr.repo_full_name)?;
        let score = score_pr(cue, labels.get(&key), t, merged_rule);
        if let PrScore::Scored(v) = score {
            by_contributor.entry(key).or_default().push(v);
        }
        summary
            .pr_scores
            .insert((pr.repo_full_name.clone(), pr.pr_number), score);
    }
    let mut by_repo: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (key, scores) in by_contributor {
        if let Some(index) = contributor_index(&scores) {
            by_repo.entry(key.0.clone()).or_default().push(index);
            summary.contributor_index.insert(
                key,
                ContributorScore {
                    index,
                    scored_prs: scores.len(),
                },
            );
        }
    }
    for (repo, indices) in by_repo {
        if let Some(index) = repository_index(&indices) {
            summary.repository_index.insert(repo, index);
        }
    }
    Ok(summary)
}

/// `ps_index_repository.csv`: repository and index to three decimals,
/// highest first.
pub fn write_repository_csv<W: Write>(summary: &PsSummary, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["repo", "ps_index"])?;
    for (repo, index) in summary.repositories_ranked() {
        w.write_record([repo, &crate::report::format_index(index)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_contributor_csv<W: Write>(summary: &PsSummary, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["repo", "author", "ps_index", "scored_prs"])?;
    for ((repo, author), c) in &summary.contributor_index {
        w.write_record([repo, author, &format!("{:.6}", c.index), &c.scored_prs.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
