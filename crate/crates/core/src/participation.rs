//! Commit activity timelines and sustained-participation labels.
//!
//! All comparisons happen at day granularity on UTC dates. A span of `m`
//! months is `m * 365 / 12` days, so twelve months is exactly 365 days.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CommitEvent;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LabelError {
    #[error("invalid labeling configuration: {0}")]
    Config(String),
    #[error("timeline for {repo}/{author} is empty")]
    EmptyTimeline { repo: String, author: String },
}

/// Day-deduplicated, ascending commit dates of one contributor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityTimeline {
    pub repo_full_name: String,
    pub author: String,
    pub commit_dates: Vec<NaiveDate>,
}

impl ActivityTimeline {
    pub fn new(repo: &str, author: &str, dates: impl IntoIterator<Item = NaiveDate>) -> Self {
        let set: BTreeSet<NaiveDate> = dates.into_iter().collect();
        ActivityTimeline {
            repo_full_name: repo.to_string(),
            author: author.to_string(),
            commit_dates: set.into_iter().collect(),
        }
    }

    /// Same timeline with every date moved by `days` (may be negative).
    pub fn shifted(&self, days: i64) -> Self {
        ActivityTimeline {
            commit_dates: self.commit_dates.iter().map(|d| shift(*d, days)).collect(),
            ..self.clone()
        }
    }
}

fn shift(date: NaiveDate, days: i64) -> NaiveDate {
    if days >= 0 {
        date + Days::new(days as u64)
    } else {
        date - Days::new(days.unsigned_abs())
    }
}

pub fn months_to_days(months: u32) -> i64 {
    i64::from(months) * 365 / 12
}

/// Timeline of `author` in `repo`, or `None` when they have no commits there.
pub fn build_timeline(commits: &[CommitEvent], repo: &str, author: &str) -> Option<ActivityTimeline> {
    let dates: Vec<NaiveDate> = commits
        .iter()
        .filter(|c| c.repo_full_name == repo && c.author == author)
        .map(|c| c.committed_at.date_naive())
        .collect();
    (!dates.is_empty()).then(|| ActivityTimeline::new(repo, author, dates))
}

/// Whose commits count towards a (repository, author) timeline.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivityScope {
    /// Only commits to the repository itself.
    #[default]
    Repository,
    /// Commits by the author anywhere in the corpus.
    Global,
}

/// Timelines for many (repository, author) pairs in one pass over `commits`.
/// Pairs without commits are absent from the result.
pub fn build_timelines(
    commits: &[CommitEvent],
    pairs: &[(String, String)],
    scope: ActivityScope,
) -> BTreeMap<(String, String), ActivityTimeline> {
    let mut by_key: BTreeMap<(&str, &str), BTreeSet<NaiveDate>> = BTreeMap::new();
    for c in commits {
        let repo = match scope {
            ActivityScope::Repository => c.repo_full_name.as_str(),
            ActivityScope::Global => "",
        };
        by_key
            .entry((repo, c.author.as_str()))
            .or_default()
            .insert(c.committed_at.date_naive());
    }
    pairs
        .iter()
        .filter_map(|(repo, author)| {
            let lookup = match scope {
                ActivityScope::Repository => repo.as_str(),
                ActivityScope::Global => "",
            };
            let dates = by_key.get(&(lookup, author.as_str()))?;
            Some((
                (repo.clone(), author.clone()),
                ActivityTimeline::new(repo, author, dates.iter().copied()),
            ))
        })
        .collect()
}

/// True iff two consecutive commit dates are more than `gap_months` apart.
pub fn detect_gap_return(timeline: &ActivityTimeline, gap_months: u32) -> bool {
    has_gap(&timeline.commit_dates, months_to_days(gap_months))
}

fn has_gap(dates: &[NaiveDate], gap_days: i64) -> bool {
    dates.windows(2).any(|w| (w[1] - w[0]).num_days() > gap_days)
}

/// How the long-horizon outcome is read from the timeline.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecentRule {
    /// Any commit after the snapshot up to the horizon end.
    #[default]
    AnyAfterSnapshot,
    /// A commit in the last window before the horizon end, i.e. the
    /// contributor is still active at the horizon.
    ActiveAtHorizon,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelingConfig {
    pub snapshot_date: NaiveDate,
    pub window_months: u32,
    pub recent_horizon_end: NaiveDate,
    pub data_end: NaiveDate,
    pub censor_margin_months: u32,
    /// Inactivity span that marks a return after disengagement.
    pub gap_months: u32,
    pub recent_rule: RecentRule,
}

impl Default for LabelingConfig {
    fn default() -> Self {
        LabelingConfig {
            snapshot_date: NaiveDate::from_ymd_opt(2019, 6, 30).unwrap(),
            window_months: 12,
            recent_horizon_end: NaiveDate::from_ymd_opt(2024, 12, 31).unwrap(),
            data_end: NaiveDate::from_ymd_opt(2025, 1, 1).unwrap(),
            censor_margin_months: 12,
            gap_months: 12,
            recent_rule: RecentRule::AnyAfterSnapshot,
        }
    }
}

impl LabelingConfig {
    pub fn window_end(&self) -> NaiveDate {
        shift(self.snapshot_date, months_to_days(self.window_months))
    }

    pub fn validate(&self) -> Result<(), LabelError> {
        if self.window_months == 0 || self.censor_margin_months == 0 || self.gap_months == 0 {
            return Err(LabelError::Config(
                "window_months, censor_margin_months and gap_months must be positive".into(),
            ));
        }
        if self.snapshot_date >= self.data_end {
            return Err(LabelError::Config(format!(
                "snapshot_date {} must precede data_end {}",
                self.snapshot_date, self.data_end
            )));
        }
        if self.window_end() > self.data_end {
            return Err(LabelError::Config(format!(
                "participation window ending {} extends beyond data_end {}",
                self.window_end(),
                self.data_end
            )));
        }
        Ok(())
    }

    /// Every date moved by `days`.
    pub fn shifted(&self, days: i64) -> Self {
        LabelingConfig {
            snapshot_date: shift(self.snapshot_date, days),
            recent_horizon_end: shift(self.recent_horizon_end, days),
            data_end: shift(self.data_end, days),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParticipationStatus {
    Sustained,
    NotSustained,
    Censored,
    ExcludedGapReturn,
}

impl ParticipationStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ParticipationStatus::Sustained => "sustained",
            ParticipationStatus::NotSustained => "not_sustained",
            ParticipationStatus::Censored => "censored",
            ParticipationStatus::ExcludedGapReturn => "excluded_gap_return",
        }
    }

    /// Sustained and not-sustained contributors carry outcome values.
    pub fn is_labeled(self) -> bool {
        matches!(self, ParticipationStatus::Sustained | ParticipationStatus::NotSustained)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipationLabel {
    pub status: ParticipationStatus,
    pub sustainedp_or_not_12: Option<bool>,
    pub recent_sustainedp_or_not: Option<bool>,
}

/// Assign a participation label. Rules apply in order:
///
/// 1. a gap return among commits up to the snapshot excludes the contributor;
/// 2. any commit in `(snapshot, snapshot + window]` means sustained;
/// 3. a last commit within the censoring margin of `data_end` means censored;
/// 4. otherwise not sustained.
pub fn label_participation(
    timeline: &ActivityTimeline,
    config: &LabelingConfig,
) -> Result<ParticipationLabel, LabelError> {
    config.validate()?;
    let dates = &timeline.commit_dates;
    let Some(&last) = dates.last() else {
        return Err(LabelError::EmptyTimeline {
            repo: timeline.repo_full_name.clone(),
            author: timeline.author.clone(),
        });
    };
    let snapshot = config.snapshot_date;
    let before_snapshot = dates.partition_point(|d| *d <= snapshot);
    if has_gap(&dates[..before_snapshot], months_to_days(config.gap_months)) {
        return Ok(ParticipationLabel {
            status: ParticipationStatus::ExcludedGapReturn,
            sustainedp_or_not_12: None,
            recent_sustainedp_or_not: None,
        });
    }
    let any_in = |lo: NaiveDate, hi: NaiveDate| dates.iter().any(|d| *d > lo && *d <= hi);
    let recent_lo = match config.recent_rule {
        RecentRule::AnyAfterSnapshot => snapshot,
        RecentRule::ActiveAtHorizon => {
            snapshot.max(shift(config.recent_horizon_end, -months_to_days(config.window_months)))
        }
    };
    let recent = any_in(recent_lo, config.recent_horizon_end);

    if any_in(snapshot, config.window_end()) {
        return Ok(ParticipationLabel {
            status: ParticipationStatus::Sustained,
            sustainedp_or_not_12: Some(true),
            recent_sustainedp_or_not: Some(recent),
        });
    }
    if (config.data_end - last).num_days() <= months_to_days(config.censor_margin_months) {
        return Ok(ParticipationLabel {
            status: ParticipationStatus::Censored,
            sustainedp_or_not_12: None,
            recent_sustainedp_or_not: None,
        });
    }
    Ok(ParticipationLabel {
        status: ParticipationStatus::NotSustained,
        sustainedp_or_not_12: Some(false),
        recent_sustainedp_or_not: Some(recent),
    })
}

/// One row of `labels.csv`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledContributor {
    pub repo_full_name: String,
    pub author: String,
    pub label: ParticipationLabel,
}

/// Label every pair that has a timeline; pairs without commits are returned
/// separately as unlabeled.
pub fn label_all(
    timelines: &BTreeMap<(String, String), ActivityTimeline>,
    pairs: &[(String, String)],
    config: &LabelingConfig,
) -> Result<(BTreeMap<(String, String), ParticipationLabel>, Vec<(String, String)>), LabelError> {
    config.validate()?;
    let mut labels = BTreeMap::new();
    let mut unlabeled = Vec::new();
    for pair in pairs {
        match timelines.get(pair) {
            Some(t) => {
                labels.insert(pair.clone(), label_participation(t, config)?);
            }
            None => unlabeled.push(pair.clone()),
        }
    }
    Ok((labels, unlabeled))
}

pub fn write_labels_csv<W: Write>(
    labels: &BTreeMap<(String, String), ParticipationLabel>,
    out: W,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["repo", "author", "status", "sustainedp_or_not_12", "recent_sustainedp_or_not"])?;
    let bin = |b: Option<bool>| b.map(|v| u8::from(v).to_string()).unwrap_or_default();
    for ((repo, author), label) in labels {
        w.write_record([
            repo.as_str(),
            author.as_str(),
            label.status.as_str(),
            &bin(label.sustainedp_or_not_12),
            &bin(label.recent_sustainedp_or_not),
        ])?;
    }
    w.flush()?;
    Ok(())
}
