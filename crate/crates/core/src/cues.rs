//! The thirteen observable interaction cues computed per pull request.

use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CommentRole, PullRequestRecord};

const BUNDLED_TABLE: &str = include_str!("../data/emoji_table.txt");

/// Cue names in canonical column order.
pub const CUE_NAMES: [&str; 13] = [
    "merged_or_not",
    "pr_comment_num",
    "reopen_num",
    "has_exchange",
    "comment_conflict",
    "contrib_comment",
    "num_comments_con",
    "inte_comment",
    "reviewer_comment",
    "other_comment",
    "num_participant",
    "at_tag",
    "emoji_count",
];

/// Cues that take values in {0, 1}; the remaining cues are counts.
pub const BINARY_CUES: [&str; 8] = [
    "merged_or_not",
    "has_exchange",
    "comment_conflict",
    "contrib_comment",
    "inte_comment",
    "reviewer_comment",
    "other_comment",
    "at_tag",
];

#[derive(Debug, Error)]
pub enum EmojiTableError {
    #[error("emoji table is empty")]
    Empty,
    #[error("emoji table line {line}: invalid codepoint `{token}`")]
    BadCodepoint { line: usize, token: String },
    #[error("emoji table line {line}: duplicate sequence")]
    Duplicate { line: usize },
    #[error("reading emoji table: {0}")]
    Io(#[from] std::io::Error),
}

/// A set of codepoint sequences counted as emojis.
#[derive(Debug, Clone)]
pub struct EmojiTable {
    version: String,
    sequences: HashSet<String>,
    /// Candidate sequences keyed by first char, longest first.
    by_first: HashMap<char, Vec<String>>,
    max_chars: usize,
}

impl EmojiTable {
    /// Parse the table format: one sequence of hex codepoints per line,
    /// `#` starts a comment, and a `# version: <id>` comment names the table.
    pub fn parse(text: &str) -> Result<Self, EmojiTableError> {
        let mut version = String::from("unversioned");
        let mut sequences = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let (content, comment) = match raw.find('#') {
                Some(pos) => (&raw[..pos], Some(&raw[pos + 1..])),
                None => (raw, None),
            };
            if let Some(v) = comment.and_then(|c| c.trim().strip_prefix("version:")) {
                if content.trim().is_empty() {
                    version = v.trim().to_string();
                }
            }
            let content = content.trim();
            if content.is_empty() {
                continue;
            }
            let mut seq = String::new();
            for token in content.split_whitespace() {
                let ch = u32::from_str_radix(token, 16)
                    .ok()
                    .and_then(char::from_u32)
                    .ok_or_else(|| EmojiTableError::BadCodepoint {
                        line: line_no,
                        token: token.to_string(),
                    })?;
                seq.push(ch);
            }
            sequences.push((line_no, seq));
        }
        Self::from_sequences(version, sequences)
    }

    fn from_sequences(version: String, sequences: Vec<(usize, String)>) -> Result<Self, EmojiTableError> {
        if sequences.is_empty() {
            return Err(EmojiTableError::Empty);
        }
        let mut set = HashSet::new();
        let mut by_first: HashMap<char, Vec<String>> = HashMap::new();
        let mut max_chars = 0;
        for (line, seq) in sequences {
            if !set.insert(seq.clone()) {
                return Err(EmojiTableError::Duplicate { line });
            }
            max_chars = max_chars.max(seq.chars().count());
            let first = seq.chars().next().expect("non-empty sequence");
            by_first.entry(first).or_default().push(seq);
        }
        for candidates in by_first.values_mut() {
            candidates.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        }
        Ok(EmojiTable {
            version,
            sequences: set,
            by_first,
            max_chars,
        })
    }

    /// Table built from an explicit list of sequences.
    pub fn from_strs<'a>(version: &str, seqs: impl IntoIterator<Item = &'a str>) -> Result<Self, EmojiTableError> {
        let list = seqs
            .into_iter()
            .filter(|s| !s.is_empty())
            .enumerate()
            .map(|(i, s)| (i + 1, s.to_string()))
            .collect();
        Self::from_sequences(version.to_string(), list)
    }

    pub fn load(path: &Path) -> Result<Self, EmojiTableError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// The table shipped with the crate.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_TABLE).expect("bundled emoji table is valid")
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn contains(&self, seq: &str) -> bool {
        self.sequences.contains(seq)
    }

    /// Length in chars of the longest sequence.
    pub fn max_sequence_chars(&self) -> usize {
        self.max_chars
    }

    /// Count non-overlapping table sequences in `text`, scanning left to right
    /// and taking the longest match at each position.
    pub fn count(&self, text: &str) -> u32 {
        let mut count = 0;
        let mut rest = text;
        while let Some(first) = rest.chars().next() {
            let matched = self
                .by_first
                .get(&first)
                .and_then(|cands| cands.iter().find(|s| rest.starts_with(s.as_str())));
            match matched {
                Some(seq) => {
                    count += 1;
                    rest = &rest[seq.len()..];
                }
                None => rest = &rest[first.len_utf8()..],
            }
        }
        count
    }
}

pub fn count_emojis(text: &str, table: &EmojiTable) -> u32 {
    table.count(text)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CueVector {
    pub merged_or_not: bool,
    pub pr_comment_num: u32,
    pub reopen_num: u32,
    pub has_exchange: bool,
    pub comment_conflict: bool,
    pub contrib_comment: bool,
    pub num_comments_con: u32,
    pub inte_comment: bool,
    pub reviewer_comment: bool,
    pub other_comment: bool,
    pub num_participant: u32,
    pub at_tag: bool,
    pub emoji_count: u32,
}

impl CueVector {
    /// Values in [`CUE_NAMES`] order.
    pub fn values(&self) -> [f64; 13] {
        let b = |x: bool| if x { 1.0 } else { 0.0 };
        [
            b(self.merged_or_not),
            self.pr_comment_num as f64,
            self.reopen_num as f64,
            b(self.has_exchange),
            b(self.comment_conflict),
            b(self.contrib_comment),
            self.num_comments_con as f64,
            b(self.inte_comment),
            b(self.reviewer_comment),
            b(self.other_comment),
            self.num_participant as f64,
            b(self.at_tag),
            self.emoji_count as f64,
        ]
    }
}

/// Text outside fenced code blocks (``` or ~~~ fences).
fn unfenced_lines(body: &str) -> impl Iterator<Item = &str> {
    let mut fence: Option<&str> = None;
    body.lines().filter(move |line| {
        let trimmed = line.trim_start();
        let marker = ["```", "~~~"].into_iter().find(|m| trimmed.starts_with(m));
        match (fence, marker) {
            (None, Some(m)) => {
                fence = Some(m);
                false
            }
            (Some(open), Some(m)) if open == m => {
                fence = None;
                false
            }
            (Some(_), _) => false,
            (None, None) => true,
        }
    })
}

/// True when `body` has an `@login` mention outside code fences. The `@` must
/// not follow a word character (so e-mail addresses do not count) and must be
/// followed by an alphanumeric login start.
pub fn has_mention(body: &str) -> bool {
    unfenced_lines(body).any(|line| {
        let chars: Vec<char> = line.chars().collect();
        chars.iter().enumerate().any(|(i, &c)| {
            c == '@'
                && (i == 0 || !(chars[i - 1].is_alphanumeric() || matches!(chars[i - 1], '_' | '.' | '-')))
                && chars.get(i + 1).is_some_and(|n| n.is_ascii_alphanumeric())
        })
    })
}

/// True when `body` contains a word starting with "conflict", case-insensitive.
pub fn has_conflict_keyword(body: &str) -> bool {
    let lower = body.to_lowercase();
    lower.match_indices("conflict").any(|(pos, _)| {
        lower[..pos]
            .chars()
            .next_back()
            .is_none_or(|prev| !(prev.is_alphanumeric() || prev == '_'))
    })
}

pub fn extract_cues(pr: &PullRequestRecord, table: &EmojiTable) -> CueVector {
    let has_role = |role: CommentRole| pr.comments.iter().any(|c| c.role == role);
    let num_comments_con = pr
        .comments
        .iter()
        .filter(|c| c.role == CommentRole::Contributor)
        .count() as u32;
    let participants: HashSet<&str> = pr.comments.iter().map(|c| c.author.as_str()).collect();
    let contrib_comment = num_comments_con > 0;
    let inte_comment = has_role(CommentRole::Integrator);
    CueVector {
        merged_or_not: pr.merged,
        pr_comment_num: pr.comments.len() as u32,
        reopen_num: pr.reopen_count,
        has_exchange: contrib_comment && inte_comment,
        comment_conflict: pr.comments.iter().any(|c| has_conflict_keyword(&c.body)),
        contrib_comment,
        num_comments_con,
        inte_comment,
        reviewer_comment: has_role(CommentRole::Reviewer),
        other_comment: has_role(CommentRole::Other),
        num_participant: participants.len() as u32,
        at_tag: pr.comments.iter().any(|c| has_mention(&c.body)),
        emoji_count: pr.comments.iter().map(|c| table.count(&c.body)).sum(),
    }
}

/// Cue vector for every pull request, in corpus order.
pub fn extract_all(pulls: &[PullRequestRecord], table: &EmojiTable) -> Vec<CueVector> {
    pulls.iter().map(|pr| extract_cues(pr, table)).collect()
}

/// Write `cues.csv`: the PR key followed by the thirteen cue columns.
pub fn write_cues_csv<W: Write>(
    pulls: &[PullRequestRecord],
    cues: &[CueVector],
    out: W,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["repo_full_name", "pr_number"];
    header.extend(CUE_NAMES);
    w.write_record(&header)?;
    for (pr, cue) in pulls.iter().zip(cues) {
        let mut row = vec![pr.repo_full_name.clone(), pr.pr_number.to_string()];
        row.extend(cue.values().iter().map(|v| format!("{}", *v as u64)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
