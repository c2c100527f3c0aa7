mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use cbrowse::corpus::{CorpusIndex, DocumentRecord};
use cbrowse::engine::{BrowseRequest, Engine, Page, PostFilter};
use cbrowse::metrics::mann_whitney_u;
use cbrowse::ranking::RankingConfig;
use cbrowse::session::{
    assign_arm, build_session_context, EventPayload, EventStore, ExperimentArm, ResultOrigin, SessionContext,
    SessionEvent,
};
use common::*;
use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn corpus(seed: u64, n: usize) -> (ChaCha8Rng, Vec<DocumentRecord>, Vec<(String, Vec<String>)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = loop {
        let r = random_records(&mut rng, n);
        if has_browsable_value(&r) {
            break r;
        }
    };
    let th = random_thesaurus(&mut rng);
    (rng, records, th)
}

fn ids(list: &cbrowse::RankedList) -> Vec<String> {
    list.entries.iter().map(|e| e.doc_id.clone()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn seed_never_in_output(seed in any::<u64>(), n in 1usize..80) {
        let (mut rng, records, th_entries) = corpus(seed, n);
        let th = build_thesaurus(&th_entries);
        let index = CorpusIndex::from_records(records.clone()).unwrap();
        let cfg = RankingConfig::default();
        for _ in 0..5 {
            let q = random_query(&mut rng, &records);
            let ctx = random_context(&mut rng);
            for arm in ExperimentArm::ALL {
                let list = library_rank(&index, &th, &cfg, arm, &q, &ctx);
                prop_assert!(list.entries.iter().all(|e| e.doc_id != q.seed_doc_id));
            }
        }
    }

    #[test]
    fn candidate_sets_agree_across_arms(seed in any::<u64>(), n in 2usize..80) {
        let (mut rng, records, th_entries) = corpus(seed, n);
        let th = build_thesaurus(&th_entries);
        let index = CorpusIndex::from_records(records.clone()).unwrap();
        let cfg = RankingConfig::default();
        let q = random_query(&mut rng, &records);
        let ctx = random_context(&mut rng);
        let sets: Vec<BTreeSet<String>> = ExperimentArm::ALL
            .iter()
            .map(|arm| ids(&library_rank(&index, &th, &cfg, *arm, &q, &ctx)).into_iter().collect())
            .collect();
        prop_assert_eq!(&sets[0], &sets[1]);
        prop_assert_eq!(&sets[0], &sets[2]);
    }

    #[test]
    fn empty_context_degenerates_to_default(seed in any::<u64>(), n in 2usize..80) {
        let (mut rng, records, th_entries) = corpus(seed, n);
        let th = build_thesaurus(&th_entries);
        let index = CorpusIndex::from_records(records.clone()).unwrap();
        let cfg = RankingConfig::default();
        let q = random_query(&mut rng, &records);
        let empty = SessionContext::default();
        let a = library_rank(&index, &th, &cfg, ExperimentArm::Baseline, &q, &empty);
        let c = library_rank(&index, &th, &cfg, ExperimentArm::SessionContext, &q, &empty);
        prop_assert_eq!(ids(&a), ids(&c));
    }

    #[test]
    fn scaling_boosts_keeps_order(seed in any::<u64>(), n in 2usize..80, factor in prop::sample::select(vec![0.5, 2.0, 7.0, 1000.0])) {
        let (mut rng, records, th_entries) = corpus(seed, n);
        let th = build_thesaurus(&th_entries);
        let index = CorpusIndex::from_records(records.clone()).unwrap();
        let cfg = RankingConfig::default();
        let scaled = cfg.scaled(factor);
        let q = random_query(&mut rng, &records);
        let ctx = random_context(&mut rng);
        for arm in ExperimentArm::ALL {
            prop_assert_eq!(
                ids(&library_rank(&index, &th, &cfg, arm, &q, &ctx)),
                ids(&library_rank(&index, &th, &scaled, arm, &q, &ctx)),
                "{}", arm
            );
        }
    }

    #[test]
    fn context_lists_are_capped_and_normalized(seed in any::<u64>(), n_events in 0usize..40) {
        let (mut rng, records, _) = corpus(seed, 40);
        let index = CorpusIndex::from_records(records.clone()).unwrap();
        let events: Vec<SessionEvent> = (0..n_events)
            .map(|i| {
                let doc = records.choose(&mut rng).unwrap().doc_id.clone();
                let payload = if i % 3 == 0 {
                    EventPayload::ViewResults {
                        origin: ResultOrigin::Stratagem,
                        doc_ids: records.choose_multiple(&mut rng, 5).map(|d| d.doc_id.clone()).collect(),
                        offset: 0,
                        total_hits: 5,
                    }
                } else {
                    EventPayload::ViewDoc { doc_id: doc }
                };
                SessionEvent::new("s", i as u64, ExperimentArm::SessionContext, payload)
            })
            .collect();
        let seed_doc = records[0].doc_id.clone();
        let ctx = build_session_context(&events, &index, Some(&seed_doc));
        for list in [&ctx.keywords, &ctx.categories] {
            prop_assert!(list.len() <= 3);
            prop_assert!(list.iter().all(|t| t.rank > 0.0 && t.rank <= 1.0));
            if !list.is_empty() {
                prop_assert_eq!(list[0].rank, 1.0);
            }
            prop_assert!(list.windows(2).all(|w| w[0].rank > w[1].rank || (w[0].rank == w[1].rank && w[0].term < w[1].term)));
        }
    }

    #[test]
    fn post_filter_only_removes(seed in any::<u64>(), from in 1990i32..2021, span in 0i32..15) {
        let (mut rng, records, _) = corpus(seed, 60);
        let index = CorpusIndex::from_records(records.clone()).unwrap();
        let engine = Engine::new(Arc::new(index), Default::default(), RankingConfig::default(), EventStore::new())
            .with_arm_force(Some(ExperimentArm::Similarity));
        let q = random_query(&mut rng, &records);
        let mut req = BrowseRequest {
            session_id: "s".into(),
            kind: q.kind,
            value: q.value.clone(),
            seed_doc_id: q.seed_doc_id.clone(),
            page: Page::new(1, 200),
            filters: PostFilter::default(),
        };
        let all: Vec<String> = engine.browse(&req, 1).unwrap().results.into_iter().map(|r| r.id).collect();
        req.filters.year_from = Some(from);
        req.filters.year_to = Some(from + span);
        let some: Vec<String> = engine.browse(&req, 2).unwrap().results.into_iter().map(|r| r.id).collect();
        let kept: Vec<String> = all
            .iter()
            .filter(|id| {
                let y = records.iter().find(|d| &d.doc_id == *id).unwrap().year.unwrap();
                y >= from && y <= from + span
            })
            .cloned()
            .collect();
        prop_assert_eq!(some, kept);
    }

    #[test]
    fn mann_whitney_swap_symmetry(
        a in prop::collection::vec(1u8..40, 1..30),
        b in prop::collection::vec(1u8..40, 1..30),
    ) {
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let b: Vec<f64> = b.into_iter().map(f64::from).collect();
        let ab = mann_whitney_u(&a, &b).unwrap();
        let ba = mann_whitney_u(&b, &a).unwrap();
        prop_assert_eq!(ab.u + ba.u, (a.len() * b.len()) as f64);
        prop_assert!((ab.p - ba.p).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab.p));
        prop_assert!((ab.r - ba.r).abs() < 1e-12);
    }

    #[test]
    fn arm_assignment_is_a_function_of_session_and_seed(id in "[a-z0-9-]{1,24}", seed in any::<u64>()) {
        prop_assert_eq!(assign_arm(&id, seed), assign_arm(&id, seed));
    }
}

/// Adding a document that shares no value with the seed leaves the relative
/// order of the similarity ranking unchanged for the documents above it.
#[test]
fn unrelated_document_keeps_similarity_order_above_it() {
    let mut violations = 0;
    for seed in 0..200u64 {
        let (mut rng, mut records, _) = corpus(seed, 50);
        let q = random_query(&mut rng, &records);
        let cfg = RankingConfig::default();
        let th = build_thesaurus(&[]);
        let before = ids(&library_rank(
            &CorpusIndex::from_records(records.clone()).unwrap(),
            &th,
            &cfg,
            ExperimentArm::Similarity,
            &q,
            &SessionContext::default(),
        ));
        let mut stranger = DocumentRecord::new("zz-stranger", "unrelated words entirely");
        stranger.keywords = vec![q.value.clone(), "Nothing Shared".into()];
        stranger.authors = vec!["Nobody Known".into()];
        let seed_doc = records.iter().find(|d| d.doc_id == q.seed_doc_id).unwrap();
        if seed_doc.keywords.iter().any(|k| k == &q.value) {
            // the stranger must not share the query value with the seed
            stranger.keywords.retain(|k| k != &q.value);
        }
        records.push(stranger);
        let after = ids(&library_rank(
            &CorpusIndex::from_records(records).unwrap(),
            &th,
            &cfg,
            ExperimentArm::Similarity,
            &q,
            &SessionContext::default(),
        ));
        let pos = after.iter().position(|id| id == "zz-stranger").unwrap_or(after.len());
        let above: Vec<&String> = after[..pos].iter().collect();
        let before_above: Vec<&String> = before.iter().filter(|id| above.contains(id)).collect();
        if above != before_above {
            violations += 1;
        }
    }
    assert_eq!(violations, 0);
}
