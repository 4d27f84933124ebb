use proptest::prelude::*;
use rose_core::conflict::{build_clusters, resolve, role, update_tokens, ConflictRequest, Role};
use rose_core::selection::{possible_choices, select_action, Choice, SelectionInput};
use rose_core::verify::one_winner;
use std::collections::BTreeMap;

fn requests() -> impl Strategy<Value = Vec<ConflictRequest>> {
    prop::collection::vec((1..10u32, 1..10u32), 0..16).prop_map(|pairs| {
        pairs
            .into_iter()
            .filter(|(s, r)| s != r)
            .map(|(sender, receiver)| ConflictRequest { sender, receiver, time: 0 })
            .collect()
    })
}

fn tokens() -> impl Strategy<Value = BTreeMap<u32, u32>> {
    prop::collection::vec(0..5u32, 9).prop_map(|t| t.into_iter().enumerate().map(|(k, v)| (k as u32 + 1, v)).collect())
}

fn role_strategy() -> impl Strategy<Value = Role> {
    prop_oneof![Just(Role::Sender), Just(Role::Receiver), Just(Role::Both), Just(Role::Neither)]
}

proptest! {
    #[test]
    fn exactly_one_winner_per_component(reqs in requests(), toks in tokens()) {
        let clusters = build_clusters(&reqs);
        let w = resolve(&clusters, &toks);
        prop_assert!(one_winner(&clusters, &w));
        for comp in &clusters.components {
            prop_assert_eq!(comp.iter().filter(|id| w[id]).count(), 1);
            let best = comp.iter().map(|id| toks[id]).max().unwrap();
            let winner = comp.iter().find(|id| w[id]).unwrap();
            prop_assert_eq!(toks[winner], best);
            // ties go to the smallest ID
            prop_assert_eq!(Some(winner), comp.iter().find(|id| toks[id] == best));
        }
    }

    #[test]
    fn resolution_ignores_request_order(mut reqs in requests(), toks in tokens()) {
        let a = resolve(&build_clusters(&reqs), &toks);
        reqs.reverse();
        let b = resolve(&build_clusters(&reqs), &toks);
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a, resolve(&build_clusters(&reqs), &toks));
    }

    #[test]
    fn components_partition_the_participants(reqs in requests()) {
        let clusters = build_clusters(&reqs);
        let mut all: Vec<u32> = clusters.components.iter().flatten().copied().collect();
        let n = all.len();
        all.sort_unstable();
        all.dedup();
        prop_assert_eq!(all.len(), n);
        for r in &reqs {
            prop_assert!(clusters.components.iter().any(|c| c.contains(&r.sender) && c.contains(&r.receiver)));
            prop_assert!(role(&reqs, r.sender) != Role::Neither);
            prop_assert!(role(&reqs, r.receiver).receives());
        }
    }

    #[test]
    fn selection_stays_within_possible_choices(
        lc in any::<bool>(), r in role_strategy(), winner in any::<bool>(), flag in any::<bool>(),
        intended_safe in any::<bool>(), straight_safe in any::<bool>(),
    ) {
        let x = SelectionInput { intended_is_lane_change: lc, role: r, winner, flag, intended_safe, straight_safe };
        let (choice, _) = select_action(&x);
        prop_assert!(possible_choices(&x).contains(&choice));
        if r.receives() && !winner {
            prop_assert_eq!(choice, Choice::Backup);
        }
        if choice == Choice::Intended {
            prop_assert!(intended_safe);
            prop_assert!(!lc || (winner && !flag));
        }
        if choice == Choice::Straight {
            prop_assert!(straight_safe);
        }
    }

    #[test]
    fn tokens_count_steps_without_progress(seq in prop::collection::vec(any::<bool>(), 0..30)) {
        let mut t = 0;
        let mut run = 0;
        for progressed in seq {
            t = update_tokens(t, progressed);
            run = if progressed { 0 } else { run + 1 };
            prop_assert_eq!(t, run);
        }
    }
}
