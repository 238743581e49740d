mod oracles;

use chrono::{Duration, TimeZone, Utc};
use prsafe_core::cues::{extract_cues, has_conflict_keyword, has_mention};
use prsafe_core::{CommentRecord, CommentRole, EmojiTable, PullRequestRecord};
use proptest::prelude::*;
use std::sync::LazyLock;

static TABLE: LazyLock<EmojiTable> = LazyLock::new(EmojiTable::bundled);

const PIECES: [&str; 16] = [
    "\u{1F44D}",
    "\u{1F44D}\u{1F3FD}",
    "\u{2764}\u{FE0F}",
    "\u{2764}",
    "\u{FE0F}",
    "\u{200D}",
    "\u{1F468}",
    "\u{1F469}",
    "\u{1F467}",
    "\u{1F1FA}",
    "\u{1F1F8}",
    "a",
    " ",
    "#",
    "\u{FE0F}\u{20E3}",
    "\u{1F3F3}\u{FE0F}\u{200D}\u{1F308}",
];

fn text_strategy() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(&PIECES[..]), 0..30).prop_map(|v| v.concat())
}

#[test]
fn bundled_table_known_sequences() {
    let t = EmojiTable::bundled();
    assert_eq!(t.version(), "unicode-15.1-r1");
    // family: one sequence, not three people
    assert_eq!(t.count("\u{1F468}\u{200D}\u{1F469}\u{200D}\u{1F467}"), 1);
    // flag from two regional indicators
    assert_eq!(t.count("\u{1F1FA}\u{1F1F8}"), 1);
    // skin tone modifier is part of the sequence
    assert_eq!(t.count("\u{1F44D}\u{1F3FD}"), 1);
    assert_eq!(t.count("thanks \u{1F389}\u{1F389} \u{2764}\u{FE0F}"), 3);
    assert_eq!(t.count("plain ascii 123 #*"), 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn emoji_count_matches_window_scan(text in text_strategy()) {
        let t = &*TABLE;
        let want = oracles::window_scan_emoji(&text, |s| t.contains(s), t.max_sequence_chars());
        prop_assert_eq!(t.count(&text), want);
    }

    #[test]
    fn mentions_in_prefix_position(login in "[a-zA-Z0-9][a-zA-Z0-9-]{0,20}", prefix in "[ (,]{0,2}") {
        let mentioned = format!("{prefix}@{login} please look");
        prop_assert!(has_mention(&mentioned));
        let email = format!("mail me at x{login}@example.com");
        prop_assert!(!has_mention(&email));
        let fenced = format!("```\n@{login}\n```");
        prop_assert!(!has_mention(&fenced));
    }

    #[test]
    fn conflict_keyword_word_start(suffix in "[a-z]{0,5}", upper in any::<bool>()) {
        let word = if upper { format!("CONFLICT{suffix}") } else { format!("conflict{suffix}") };
        let phrase = format!("a {word} here");
        prop_assert!(has_conflict_keyword(&phrase));
        let embedded = format!("a de{word} here");
        prop_assert!(!has_conflict_keyword(&embedded));
    }
}

fn comment_strategy() -> impl Strategy<Value = (usize, u8, String)> {
    (0usize..5, 0u8..4, prop::sample::select(vec!["ok", "@bob hi", "merge conflict", "\u{1F680} nice", "lgtm"]))
        .prop_map(|(a, r, b)| (a, r, b.to_string()))
}

fn build_pr(comments: &[(usize, u8, String)]) -> PullRequestRecord {
    let t0 = Utc.with_ymd_and_hms(2019, 3, 1, 0, 0, 0).unwrap();
    PullRequestRecord {
        repo_full_name: "o/r".into(),
        pr_number: 1,
        author: "u0".into(),
        created_at: t0,
        merged: true,
        closed_at: None,
        reopen_count: 0,
        comments: comments
            .iter()
            .enumerate()
            .map(|(i, (a, r, b))| CommentRecord {
                author: format!("u{a}"),
                role: match r {
                    0 => CommentRole::Contributor,
                    1 => CommentRole::Integrator,
                    2 => CommentRole::Reviewer,
                    _ => CommentRole::Other,
                },
                body: b.clone(),
                created_at: t0 + Duration::hours(i as i64),
            })
            .collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn cue_invariants(comments in prop::collection::vec(comment_strategy(), 0..12)) {
        let table = &*TABLE;
        let pr = build_pr(&comments);
        let c = extract_cues(&pr, table);
        prop_assert_eq!(c.has_exchange, c.contrib_comment && c.inte_comment);
        prop_assert!(c.pr_comment_num >= c.num_comments_con);
        if c.pr_comment_num >= 1 {
            prop_assert!(c.num_participant >= 1);
        }
        let mut reversed = pr.clone();
        reversed.comments.reverse();
        prop_assert_eq!(extract_cues(&reversed, table), c);
    }
}
