//! Regression rows: outcomes, repository PS index and contributor controls.

use std::collections::BTreeMap;

use prsafe_core::diagnostics::{ScreeningDecision, ScreeningReport, VariableColumn, VariableKind};
use prsafe_core::glm::Frame;
use prsafe_core::ps_index::PsSummary;
use prsafe_core::{ContributorContext, Corpus, ParticipationLabel};

use crate::config::Unit;

/// Continuous controls that go through skewness screening. `watchers` is the
/// repository star count.
pub const SCREENED_CONTROLS: [&str; 3] = ["followers", "num_languages", "watchers"];

/// One regression row before encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub repo: String,
    pub author: String,
    pub label: Option<ParticipationLabel>,
    pub context: Option<ContributorContext>,
    pub watchers: f64,
    pub repo_size: String,
}

/// Rows at the requested unit in corpus order: one per PR, or one per
/// distinct (repository, PR author) pair. Unlabelled rows are kept here and
/// dropped at encoding for their missing outcome.
pub fn build_rows(corpus: &Corpus, labels: &BTreeMap<(String, String), ParticipationLabel>, unit: Unit) -> Vec<Row> {
    let contexts = corpus.context_index();
    let row = |repo: &str, author: &str| {
        let meta = corpus.repo(repo);
        Row {
            repo: repo.to_string(),
            author: author.to_string(),
            label: labels.get(&(repo.to_string(), author.to_string())).copied(),
            context: contexts.get(&(repo, author)).map(|c| (*c).clone()),
            watchers: meta.map_or(0.0, |m| m.stars as f64),
            repo_size: meta.map_or("small", |m| m.repo_size.as_str()).to_string(),
        }
    };
    match unit {
        Unit::Pr => corpus.pulls.iter().map(|p| row(&p.repo_full_name, &p.author)).collect(),
        Unit::Contributor => corpus.pr_authors().iter().map(|(r, a)| row(r, a)).collect(),
    }
}

fn control_values(rows: &[Row], name: &str) -> Vec<f64> {
    rows.iter()
        .filter_map(|r| match name {
            "watchers" => Some(r.watchers),
            "followers" => r.context.as_ref().map(|c| c.followers as f64),
            _ => r.context.as_ref().map(|c| f64::from(c.num_languages)),
        })
        .collect()
}

/// Screening inputs for the continuous controls, over rows that carry a
/// contributor context.
pub fn control_columns(rows: &[Row]) -> Vec<VariableColumn> {
    SCREENED_CONTROLS
        .iter()
        .map(|name| VariableColumn::new(name, VariableKind::Continuous, control_values(rows, name)))
        .collect()
}

fn b(x: bool) -> f64 {
    if x {
        1.0
    } else {
        0.0
    }
}

/// The regression frame. Screened controls are log1p-transformed when
/// screening said so; excluded ones are left out of the frame.
pub fn build_frame(rows: &[Row], summary: &PsSummary, screening: &ScreeningReport) -> Frame {
    let decision = |name: &str| screening.get(name).map(|s| s.decision);
    let transform = |name: &str, v: f64| match decision(name) {
        Some(ScreeningDecision::TransformedRetained) => Some(v.ln_1p()),
        Some(ScreeningDecision::Excluded) => None,
        _ => Some(v),
    };
    let ctx = |f: fn(&ContributorContext) -> f64| -> Vec<Option<f64>> {
        rows.iter().map(|r| r.context.as_ref().map(f)).collect()
    };
    let mut frame = Frame::new();
    frame.insert_numeric(
        "sustainedp_or_not_12",
        rows.iter().map(|r| r.label.and_then(|l| l.sustainedp_or_not_12).map(b)).collect(),
    );
    frame.insert_numeric(
        "recent_sustainedp_or_not",
        rows.iter().map(|r| r.label.and_then(|l| l.recent_sustainedp_or_not).map(b)).collect(),
    );
    frame.insert_numeric(
        "PS_index_repository",
        rows.iter().map(|r| summary.repository_index.get(&r.repo).copied()).collect(),
    );
    frame.insert_numeric("core_member", ctx(|c| b(c.core_member)));
    frame.insert_numeric("contrib_rate_author", ctx(|c| c.contrib_rate_author));
    frame.insert_numeric("contrib_follow_integrator", ctx(|c| b(c.contrib_follow_integrator)));
    frame.insert_numeric("social_strength", ctx(|c| c.social_strength));
    for name in ["followers", "num_languages"] {
        if decision(name) == Some(ScreeningDecision::Excluded) {
            continue;
        }
        let values = rows
            .iter()
            .map(|r| {
                let c = r.context.as_ref()?;
                let raw = if name == "followers" { c.followers as f64 } else { f64::from(c.num_languages) };
                transform(name, raw)
            })
            .collect();
        frame.insert_numeric(name, values);
    }
    if decision("watchers") != Some(ScreeningDecision::Excluded) {
        frame.insert_numeric("watchers", rows.iter().map(|r| transform("watchers", r.watchers)).collect());
    }
    frame.insert_categorical("repo_size", rows.iter().map(|r| Some(r.repo_size.clone())).collect());
    frame
}
