//! Seeded generator for corpora shaped like the studied repository set.
//!
//! Outcomes are drawn from a known logistic process over the contributor
//! controls, so a generated corpus exercises every pipeline stage including
//! all three canned models.

use std::collections::BTreeSet;

use chrono::{DateTime, Duration, NaiveDate, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, LogNormal, Poisson};
use serde::{Deserialize, Serialize};

use crate::corpus::{
    CommentRecord, CommentRole, CommitEvent, ContributorContext, Corpus, PullRequestRecord, RepoMeta,
    RepoSize,
};
use crate::participation::{LabelingConfig, RecentRule};

/// Repositories and PR counts of the studied set. The rows sum to 60,685,
/// one more than the stated total, [`STUDY_TOTAL`].
pub const STUDY_REPOSITORIES: [(&str, u64); 26] = [
    ("python/cpython", 12317),
    ("nodejs/node", 12057),
    ("facebook/react", 7445),
    ("mrdoob/three.js", 7123),
    ("grafana/grafana", 4531),
    ("spring-projects/spring-boot", 3215),
    ("Zeit/next.js", 2902),
    ("tensorflow/models", 2102),
    ("pytorch/pytorch", 1923),
    ("storybooks/storybook", 1713),
    ("keras-team/keras", 1203),
    ("gin-gonic/gin", 715),
    ("pallets/flask", 699),
    ("TheAlgorithms/Java", 587),
    ("golang/go", 553),
    ("nvbn/thefuck", 417),
    ("exercism/go", 397),
    ("expressjs/express", 215),
    ("axios/axios", 147),
    ("tiangolo/fastapi", 107),
    ("ytdl-org/youtube-dl", 83),
    ("pubnub/go", 57),
    ("swisskyrepo/PayloadsAllTheThings", 53),
    ("d2l-ai/d2l-zh", 52),
    ("appscode/go", 37),
    ("adam-p/markdown-here", 35),
];

pub const STUDY_TOTAL: u64 = 60_684;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub seed: u64,
    /// `(full name, PR count)` per repository.
    pub repositories: Vec<(String, u64)>,
    /// Average PRs per contributor.
    pub prs_per_contributor: f64,
    /// Probability that a PR carries a conflict-keyword comment.
    pub conflict_rate: f64,
    /// Probability that a contributor returns after a long pre-snapshot gap.
    pub gap_return_rate: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 2019,
            repositories: STUDY_REPOSITORIES.iter().map(|(r, n)| (r.to_string(), *n)).collect(),
            prs_per_contributor: 4.0,
            conflict_rate: 0.018,
            gap_return_rate: 0.04,
        }
    }
}

impl SyntheticConfig {
    pub fn total_prs(&self) -> u64 {
        self.repositories.iter().map(|(_, n)| n).sum()
    }

    /// Adjust the largest repository so the PR counts sum to `total`.
    pub fn with_total(mut self, total: u64) -> Self {
        let current = self.total_prs();
        if let Some(largest) = self.repositories.iter_mut().max_by_key(|(_, n)| *n) {
            largest.1 = (largest.1 + total).saturating_sub(current);
        }
        self
    }

    /// Labeling rules under which every generated outcome is identifiable:
    /// the long horizon asks for activity in its final window and the
    /// censoring margin is short enough not to swallow those commits.
    pub fn labeling(&self) -> LabelingConfig {
        LabelingConfig {
            censor_margin_months: 6,
            recent_rule: RecentRule::ActiveAtHorizon,
            ..LabelingConfig::default()
        }
    }
}

const EMOJIS: [&str; 6] = ["\u{1F44D}", "\u{1F389}", "\u{2764}\u{FE0F}", "\u{1F680}", "\u{1F604}", "\u{1F440}"];

const PHRASES: [&str; 10] = [
    "Thanks for the patch.",
    "Could you add a test for this case?",
    "LGTM.",
    "I rebased on main.",
    "This changes the public API, please document it.",
    "Updated as suggested.",
    "Can you squash the commits?",
    "Nice catch.",
    "Benchmarks look fine on my machine.",
    "Closing in favour of the follow-up PR.",
];

fn ts(date: NaiveDate, rng: &mut ChaCha8Rng) -> DateTime<Utc> {
    let secs = rng.random_range(0..86_400);
    Utc.from_utc_datetime(&date.and_hms_opt(0, 0, 0).unwrap()) + Duration::seconds(secs)
}

fn day(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

fn date_between(lo: NaiveDate, hi: NaiveDate, rng: &mut ChaCha8Rng) -> NaiveDate {
    lo + Duration::days(rng.random_range(0..=(hi - lo).num_days()))
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct Contributor {
    login: String,
    context: ContributorContext,
}

/// Generate a corpus. Identical configurations give identical corpora.
pub fn generate(config: &SyntheticConfig) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let followers_dist = LogNormal::<f64>::new(3.0, 1.6).unwrap();
    let languages_dist = Poisson::<f64>::new(2.0).unwrap();
    let comments_dist = Geometric::new(0.3).unwrap();
    let reopen_dist = Geometric::new(0.9).unwrap();
    let mut corpus = Corpus::default();

    for (rank, (repo, pr_count)) in config.repositories.iter().enumerate() {
        let short = repo.replace('/', "-").to_lowercase();
        corpus.repos.push(RepoMeta {
            repo_full_name: repo.clone(),
            stars: 200_000u64.saturating_sub(rank as u64 * 5_000),
            category_labels: BTreeSet::new(),
            pr_count: *pr_count,
            repo_size: RepoSize::from_pr_count(*pr_count),
        });
        let culture: f64 = rng.random_range(-0.6..0.6);
        let integrators: Vec<String> = (0..rng.random_range(2..6)).map(|i| format!("{short}-maint{i}")).collect();
        let n_contrib = ((*pr_count as f64 / config.prs_per_contributor).ceil() as usize).max(3);
        let contributors: Vec<Contributor> = (0..n_contrib)
            .map(|i| {
                let login = format!("{short}-dev{i}");
                let context = ContributorContext {
                    repo_full_name: repo.clone(),
                    author: login.clone(),
                    core_member: rng.random_bool(0.12),
                    contrib_rate_author: rng.random::<f64>().powi(2),
                    followers: followers_dist.sample(&mut rng).floor() as u64,
                    num_languages: 1 + languages_dist.sample(&mut rng) as u32,
                    contrib_follow_integrator: rng.random_bool(0.3),
                    social_strength: rng.random::<f64>().powi(3),
                };
                Contributor { login, context }
            })
            .collect();

        for c in &contributors {
            write_commits(repo, c, culture, config, &mut rng, &mut corpus.commits);
        }

        for n in 0..*pr_count {
            // Quadratic skew gives a few prolific authors and a long tail.
            let author = &contributors[((rng.random::<f64>().powi(2)) * n_contrib as f64) as usize];
            let created = ts(date_between(day(2019, 1, 1), day(2019, 6, 20), &mut rng), &mut rng);
            let merged = rng.random_bool(sigmoid(0.3 + culture));
            let closed_at = rng
                .random_bool(0.93)
                .then(|| created + Duration::hours(rng.random_range(1..24 * 60)));
            let engaged = culture + if author.context.core_member { 0.5 } else { 0.0 };
            let n_comments = (comments_dist.sample(&mut rng) as f64 * (1.0 + engaged.max(0.0))).round() as usize;
            let mut comments = Vec::with_capacity(n_comments);
            let mut at = created;
            for _ in 0..n_comments {
                at += Duration::minutes(rng.random_range(5..5_000));
                let (who, role) = match rng.random_range(0..10) {
                    0..=3 => (author.login.clone(), CommentRole::Contributor),
                    4..=6 => (integrators[rng.random_range(0..integrators.len())].clone(), CommentRole::Integrator),
                    7..=8 => {
                        let other = &contributors[rng.random_range(0..n_contrib)].login;
                        if *other == author.login {
                            (author.login.clone(), CommentRole::Contributor)
                        } else {
                            (other.clone(), CommentRole::Reviewer)
                        }
                    }
                    _ => (format!("user{}", rng.random_range(0..50_000)), CommentRole::Other),
                };
                let mut body = PHRASES[rng.random_range(0..PHRASES.len())].to_string();
                if rng.random_bool(0.15) {
                    body = format!("@{} {body}", integrators[0]);
                }
                if rng.random_bool((0.08 + 0.1 * culture).clamp(0.0, 1.0)) {
                    for _ in 0..rng.random_range(1..4) {
                        body.push(' ');
                        body.push_str(EMOJIS[rng.random_range(0..EMOJIS.len())]);
                    }
                }
                comments.push(CommentRecord {
                    author: who,
                    role,
                    body,
                    created_at: at,
                });
            }
            if !comments.is_empty() && rng.random_bool(config.conflict_rate) {
                let i = rng.random_range(0..comments.len());
                comments[i].body.push_str(" There is a merge conflict with main.");
            }
            corpus.pulls.push(PullRequestRecord {
                repo_full_name: repo.clone(),
                pr_number: n + 1,
                author: author.login.clone(),
                created_at: created,
                merged,
                closed_at,
                reopen_count: reopen_dist.sample(&mut rng) as u32,
                comments,
            });
        }
        corpus.contexts.extend(contributors.into_iter().map(|c| c.context));
    }
    corpus
}

fn write_commits(
    repo: &str,
    c: &Contributor,
    culture: f64,
    config: &SyntheticConfig,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<CommitEvent>,
) {
    let ctx = &c.context;
    let mut dates = Vec::new();
    if rng.random_bool(config.gap_return_rate) {
        dates.push(date_between(day(2016, 1, 1), day(2017, 6, 30), rng));
    }
    for _ in 0..rng.random_range(1..4) {
        dates.push(date_between(day(2018, 9, 1), day(2019, 6, 30), rng));
    }
    let core = if ctx.core_member { 1.0 } else { 0.0 };
    let follow = if ctx.contrib_follow_integrator { 1.0 } else { 0.0 };
    let logf = (ctx.followers as f64).ln_1p();
    let short_eta = -0.4 + 0.8 * culture + 0.6 * core + 1.5 * ctx.contrib_rate_author + 0.05 * logf
        - 0.1 * ctx.num_languages as f64
        + 0.2 * follow
        - 0.3 * ctx.social_strength;
    let sustained = rng.random_bool(sigmoid(short_eta));
    if sustained {
        for _ in 0..rng.random_range(1..4) {
            dates.push(date_between(day(2019, 7, 1), day(2020, 6, 28), rng));
        }
    }
    if rng.random_bool(0.3) {
        dates.push(date_between(day(2021, 1, 1), day(2022, 12, 31), rng));
    }
    let long_eta = -1.6 + 1.4 * if sustained { 1.0 } else { 0.0 } + 0.3 * culture + 1.0 * core
        + 0.5 * ctx.contrib_rate_author
        + 0.1 * logf
        - 0.2 * ctx.social_strength;
    if rng.random_bool(sigmoid(long_eta)) {
        dates.push(date_between(day(2024, 1, 15), day(2024, 6, 15), rng));
    } else if !sustained && rng.random_bool(0.03) {
        dates.push(date_between(day(2024, 9, 1), day(2024, 12, 15), rng));
    }
    out.extend(dates.into_iter().map(|d| CommitEvent {
        repo_full_name: repo.to_string(),
        author: c.login.clone(),
        committed_at: ts(d, rng),
    }));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn study_total() {
        let config = SyntheticConfig::default();
        assert_eq!(config.total_prs(), 60_685);
        let trimmed = config.with_total(STUDY_TOTAL);
        assert_eq!(trimmed.total_prs(), 60_684);
        assert_eq!(trimmed.repositories[0], ("python/cpython".to_string(), 12_316));
    }

    #[test]
    fn generation_is_deterministic() {
        let config = SyntheticConfig {
            repositories: vec![("a/b".into(), 40), ("c/d".into(), 120)],
            ..SyntheticConfig::default()
        };
        let a = generate(&config);
        let b = generate(&config);
        assert_eq!(a, b);
        assert_eq!(a.pulls.len(), 160);
        assert_eq!(a.repos[1].repo_size, RepoSize::Medium);
        let other = generate(&SyntheticConfig { seed: 7, ..config });
        assert_ne!(a, other);
    }
}
