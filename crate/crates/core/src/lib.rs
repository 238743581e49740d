//! Observable psychological-safety cues from pull-request interaction data.
//!
//! The crate is organised as a pipeline of independent stages:
//!
//! - [`corpus`]: canonical JSONL corpus loading, validation, repository filtering
//! - [`cues`]: the thirteen per-PR interaction cues and emoji counting
//! - [`participation`]: commit timelines and sustained-participation labels
//! - [`diagnostics`]: skewness, log transforms and predictor screening
//! - [`ps_index`]: PR-level PS scores and their contributor / repository means
//! - [`glm`]: design matrices, logistic regression by IRLS, odds ratios and VIF
//! - [`report`]: tabular renderings of index and model results
//! - [`synthetic`]: seeded generator for realistically shaped corpora
//!
//! Every stage is a pure function of its inputs; nothing reads the clock or an
//! unseeded RNG, so identical inputs always produce identical outputs.

pub mod corpus;
pub mod cues;
pub mod diagnostics;
pub mod glm;
pub mod participation;
pub mod ps_index;
pub mod report;
pub mod synthetic;

pub use corpus::{
    load_corpus, save_corpus, CommentRecord, CommentRole, CommitEvent, ContributorContext,
    Corpus, FilterConfig, PullRequestRecord, RepoMeta, RepoSize,
};
pub use cues::{extract_cues, CueVector, EmojiTable};
pub use participation::{label_participation, LabelingConfig, ParticipationLabel, ParticipationStatus};
