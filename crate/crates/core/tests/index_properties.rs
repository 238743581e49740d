use std::collections::BTreeMap;

use chrono::{TimeZone, Utc};
use prsafe_core::ps_index::{build_summary, compute_thresholds, score_pr, CountThresholds, MergedRule, PrScore, ThresholdScope};
use prsafe_core::{CueVector, ParticipationLabel, ParticipationStatus, PullRequestRecord};
use proptest::prelude::*;

fn cue_strategy() -> impl Strategy<Value = CueVector> {
    (
        prop::array::uniform8(any::<bool>()),
        (0u32..8, 0u32..3, 0u32..6, 0u32..6, 0u32..4),
    )
        .prop_map(|(b, (comments, reopen, con, part, emoji))| CueVector {
            merged_or_not: b[0],
            pr_comment_num: comments.max(con),
            reopen_num: reopen,
            has_exchange: b[2] && b[3],
            comment_conflict: b[1],
            contrib_comment: b[2],
            num_comments_con: con,
            inte_comment: b[3],
            reviewer_comment: b[4],
            other_comment: b[5],
            num_participant: part,
            at_tag: b[6],
            emoji_count: emoji,
        })
}

fn status_strategy() -> impl Strategy<Value = ParticipationStatus> {
    prop_oneof![
        Just(ParticipationStatus::Sustained),
        Just(ParticipationStatus::NotSustained),
        Just(ParticipationStatus::Censored),
        Just(ParticipationStatus::ExcludedGapReturn),
    ]
}

fn label(status: ParticipationStatus) -> ParticipationLabel {
    let labeled = status.is_labeled();
    ParticipationLabel {
        status,
        sustainedp_or_not_12: labeled.then_some(status == ParticipationStatus::Sustained),
        recent_sustainedp_or_not: labeled.then_some(false),
    }
}

fn thresholds() -> impl Strategy<Value = CountThresholds> {
    (0.0f64..5.0, 0.0f64..3.0, 0.0f64..4.0).prop_map(|(a, b, c)| CountThresholds {
        pr_comment_num: a,
        num_comments_con: b,
        num_participant: c,
    })
}

fn pr(repo: &str, n: u64, author: &str) -> PullRequestRecord {
    PullRequestRecord {
        repo_full_name: repo.into(),
        pr_number: n,
        author: author.into(),
        created_at: Utc.with_ymd_and_hms(2019, 1, 1, 0, 0, 0).unwrap(),
        merged: false,
        closed_at: None,
        reopen_count: 0,
        comments: vec![],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn score_bounds_and_gate(cues in cue_strategy(), status in status_strategy(), t in thresholds()) {
        let l = label(status);
        let score = score_pr(&cues, Some(&l), &t, MergedRule::Literal);
        match status {
            ParticipationStatus::Sustained => {
                let v = score.value().unwrap();
                prop_assert!((1..=10).contains(&v));
            }
            ParticipationStatus::NotSustained => prop_assert_eq!(score, PrScore::Scored(0)),
            _ => prop_assert!(score.value().is_none()),
        }
        let strict = score_pr(&cues, Some(&l), &t, MergedRule::MergedOnly);
        if let (Some(a), Some(b)) = (score.value(), strict.value()) {
            prop_assert!(b <= a);
        }
    }

    #[test]
    fn raising_counts_never_lowers_score(cues in cue_strategy(), t in thresholds(), bump in 1u32..5) {
        let l = label(ParticipationStatus::Sustained);
        let before = score_pr(&cues, Some(&l), &t, MergedRule::Literal).value().unwrap();
        let mut raised = cues;
        raised.pr_comment_num += bump;
        raised.num_comments_con += bump;
        raised.num_participant += bump;
        let after = score_pr(&raised, Some(&l), &t, MergedRule::Literal).value().unwrap();
        prop_assert!(after >= before);
    }

    #[test]
    fn repository_index_ignores_order(
        rows in prop::collection::vec((0usize..6, cue_strategy()), 1..40),
        statuses in prop::collection::vec(status_strategy(), 6),
        rotate in 0usize..40,
    ) {
        let pulls: Vec<PullRequestRecord> = rows.iter().enumerate()
            .map(|(i, (a, _))| pr(if a % 2 == 0 { "o/even" } else { "o/odd" }, i as u64 + 1, &format!("dev{a}")))
            .collect();
        let cues: Vec<CueVector> = rows.iter().map(|(_, c)| *c).collect();
        let labels: BTreeMap<(String, String), ParticipationLabel> = pulls.iter()
            .map(|p| {
                let a: usize = p.author[3..].parse().unwrap();
                ((p.repo_full_name.clone(), p.author.clone()), label(statuses[a]))
            })
            .collect();
        let repos: Vec<&str> = pulls.iter().map(|p| p.repo_full_name.as_str()).collect();
        let t = compute_thresholds(&repos, &cues, ThresholdScope::Global).unwrap();
        let a = build_summary(&pulls, &cues, &labels, &t, MergedRule::Literal).unwrap();

        let k = rotate % pulls.len();
        let mut p2 = pulls.clone();
        let mut c2 = cues.clone();
        p2.rotate_left(k);
        c2.rotate_left(k);
        p2.reverse();
        c2.reverse();
        let repos2: Vec<&str> = p2.iter().map(|p| p.repo_full_name.as_str()).collect();
        let t2 = compute_thresholds(&repos2, &c2, ThresholdScope::Global).unwrap();
        prop_assert_eq!(&t, &t2);
        let b = build_summary(&p2, &c2, &labels, &t2, MergedRule::Literal).unwrap();
        prop_assert_eq!(a.repository_index.len(), b.repository_index.len());
        for (repo, x) in &a.repository_index {
            prop_assert!((x - b.repository_index[repo]).abs() < 1e-12);
            prop_assert!((0.0..=10.0).contains(x));
        }
        for ((repo, author), c) in &a.contributor_index {
            if labels[&(repo.clone(), author.clone())].status == ParticipationStatus::Sustained {
                prop_assert!(c.index >= 1.0);
            }
        }
    }
}
