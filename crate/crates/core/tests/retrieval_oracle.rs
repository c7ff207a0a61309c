use std::path::Path;

use proptest::prelude::*;
use solfix::knowledge::{KnowledgeEntry, KnowledgeStore};
use solfix::retriever::{parse_eval_set, Query, Retriever, ScoringParams};

mod support;
use support::{code_weighting_queries, code_weighting_store, oracle_bm25, oracle_terms};

const FIXTURE_KB: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/kb/kb.jsonl");
const PAYABLE_ID: &str = "430c5230d857";

fn fixture_store() -> KnowledgeStore {
    KnowledgeStore::load(Path::new(FIXTURE_KB)).unwrap()
}

fn params(weight_code: f64) -> ScoringParams {
    ScoringParams {
        weight_code,
        ..ScoringParams::plain()
    }
}

#[test]
fn scores_match_brute_force() {
    let store = fixture_store();
    let queries = [
        Query::new("TypeError: Type address is not implicitly convertible to expected type address payable.")
            .with_code_tokens(&["guessHistory.player = msg.sender;"]),
        Query::new("ParserError: Expected primary expression. byte b;").with_code_tokens(&["byte"]),
        Query::new("\"now\" has been deprecated. Use \"block.timestamp\" instead.").with_versions("0.6", "0.8"),
        Query::new("nothing in common"),
    ];
    for (wc, vb) in [(1.0, 1.0), (2.0, 1.0), (2.0, 1.5), (3.5, 2.0)] {
        let r = Retriever::new(
            &store,
            ScoringParams {
                weight_code: wc,
                version_boost: vb,
            },
        )
        .unwrap();
        for q in &queries {
            let want = oracle_bm25(&store, q, wc, vb);
            for (e, w) in store.entries.iter().zip(want) {
                let got = r.score(q, &e.id).unwrap();
                assert!((got - w).abs() < 1e-9, "{} wc={wc} vb={vb}: {got} vs {w}", e.id);
            }
        }
    }
}

#[test]
fn code_weighting_decides_acc_at_1() {
    let (store, truth) = code_weighting_store();
    let eval: Vec<(Query, String)> = code_weighting_queries()
        .into_iter()
        .map(|q| (q, truth.clone()))
        .collect();
    assert!(eval.len() >= 10);
    let plain = Retriever::new(&store, params(1.0)).unwrap().acc_at_k(&eval, 1).unwrap();
    let weighted = Retriever::new(&store, params(2.0)).unwrap().acc_at_k(&eval, 1).unwrap();
    assert!(plain < 100.0, "weight 1 gave {plain}");
    assert_eq!(weighted, 100.0);
}

#[test]
fn guess_game_error_ranks_payable_first() {
    let store = fixture_store();
    let r = Retriever::new(&store, ScoringParams::default()).unwrap();
    let q = Query::new("TypeError: Type address is not implicitly convertible to expected type address payable.")
        .with_code_tokens(&["guessHistory.player = msg.sender;"])
        .with_versions("0.5", "0.8");
    let top = r.retrieve(&q, 3).unwrap();
    assert_eq!(top[0].entry_id, PAYABLE_ID);
    assert_eq!(top.iter().map(|t| t.rank).collect::<Vec<_>>(), vec![1, 2, 3]);
}

#[test]
fn eval_set_lines() {
    let text = concat!(
        r#"{"query":"TypeError: \"send\" and \"transfer\" are only available for objects of type \"address payable\", not \"address\".","answer":"x","label":1,"groundtruth_id":"4ada65ec69ae"}"#,
        "\n",
        r#"{"query":"q","answer":"y","label":0,"groundtruth_id":"faf740f030dd"}"#,
        "\n\n"
    );
    let set = parse_eval_set(text).unwrap();
    assert_eq!(set.len(), 1);
    assert_eq!(set[0].1, "4ada65ec69ae");
    let store = fixture_store();
    let r = Retriever::new(&store, ScoringParams::default()).unwrap();
    assert_eq!(r.acc_at_k(&set, 5).unwrap(), 100.0);
    assert!(parse_eval_set(r#"{"query":"q","answer":"a","label":2,"groundtruth_id":"x"}"#).is_err());
}

const WORDS: &[&str] = &[
    "address",
    "payable",
    "transfer",
    "now",
    "block.timestamp",
    "byte",
    "bytes1",
    "var",
    "throw",
    "revert",
    "constructor",
    "fallback",
    "receive",
    "type",
    "function",
    "msg.sender",
    "x",
    "wei",
];

fn entry_strategy() -> impl Strategy<Value = KnowledgeEntry> {
    (
        prop::collection::vec((prop::sample::select(WORDS), any::<bool>()), 1..12),
        0usize..4,
    )
        .prop_map(|(words, step)| {
            let mut text = String::new();
            let mut spans = Vec::new();
            for (w, code) in words {
                if !text.is_empty() {
                    text.push(' ');
                }
                if code {
                    spans.push((text.len(), text.len() + w.len()));
                }
                text.push_str(w);
            }
            let (s, t) = [("0.4", "0.5"), ("0.5", "0.6"), ("0.6", "0.7"), ("0.7", "0.8")][step];
            KnowledgeEntry::new(s, t, &text, spans).unwrap()
        })
}

fn store_strategy() -> impl Strategy<Value = KnowledgeStore> {
    prop::collection::vec(entry_strategy(), 1..10).prop_map(|mut es| {
        es.sort_by(|a, b| a.id.cmp(&b.id));
        es.dedup_by(|a, b| a.id == b.id);
        KnowledgeStore::new(es)
    })
}

fn query_strategy() -> impl Strategy<Value = Query> {
    (
        prop::collection::vec(prop::sample::select(WORDS), 1..6),
        prop::collection::vec(prop::sample::select(WORDS), 0..3),
        prop::option::of(0usize..3),
    )
        .prop_map(|(text, code, pair)| {
            let q = Query::new(text.join(" ")).with_code_tokens(&code);
            match pair {
                Some(i) => q.with_versions(["0.4", "0.5", "0.6"][i], "0.8"),
                None => q,
            }
        })
}

proptest! {
    #[test]
    fn retrieve_k_is_prefix_of_k_plus_1(store in store_strategy(), q in query_strategy(), k in 1usize..6, wc in 1.0f64..4.0) {
        let r = Retriever::new(&store, params(wc)).unwrap();
        let a = r.retrieve(&q, k).unwrap();
        let b = r.retrieve(&q, k + 1).unwrap();
        prop_assert_eq!(&a[..], &b[..a.len()]);
        prop_assert_eq!(a.len(), k.min(store.len()));
        for w in b.windows(2) {
            prop_assert!(w[0].score > w[1].score || (w[0].score == w[1].score && w[0].entry_id < w[1].entry_id));
        }
    }

    #[test]
    fn acc_at_k_non_decreasing(store in store_strategy(), qs in prop::collection::vec(query_strategy(), 1..6), pick in any::<prop::sample::Index>()) {
        let truth = store.entries[pick.index(store.len())].id.clone();
        let eval: Vec<(Query, String)> = qs.into_iter().map(|q| (q, truth.clone())).collect();
        let r = Retriever::new(&store, ScoringParams::default()).unwrap();
        let mut last = 0.0;
        for k in 1..=store.len() + 1 {
            let acc = r.acc_at_k(&eval, k).unwrap();
            prop_assert!(acc >= last);
            last = acc;
        }
        prop_assert_eq!(last, 100.0);
    }

    #[test]
    fn weighted_scorer_matches_brute_force(store in store_strategy(), q in query_strategy(), wc in 1.0f64..4.0, vb in 1.0f64..2.0) {
        let r = Retriever::new(&store, ScoringParams { weight_code: wc, version_boost: vb }).unwrap();
        for (e, want) in store.entries.iter().zip(oracle_bm25(&store, &q, wc, vb)) {
            prop_assert!((r.score(&q, &e.id).unwrap() - want).abs() < 1e-9);
        }
    }

    /// With no code anywhere, weight_code has no effect.
    #[test]
    fn weight_is_inert_without_code(store in store_strategy(), q in query_strategy(), wc in 1.0f64..4.0) {
        let prose_only = KnowledgeStore::new(
            store.entries.iter().map(|e| KnowledgeEntry::new(&e.source_version, &e.target_version, &e.text, vec![]).unwrap()).collect(),
        );
        let plain = Retriever::new(&prose_only, ScoringParams::plain()).unwrap();
        let weighted = Retriever::new(&prose_only, params(wc)).unwrap();
        prop_assert_eq!(plain.rank_all(&q), weighted.rank_all(&q));
    }

    /// Raising the code weight never lowers an entry's score.
    #[test]
    fn scores_monotone_in_weight(store in store_strategy(), q in query_strategy(), lo in 1.0f64..3.0, step in 0.0f64..2.0) {
        let a = Retriever::new(&store, params(lo)).unwrap();
        let b = Retriever::new(&store, params(lo + step)).unwrap();
        for e in &store.entries {
            prop_assert!(b.score(&q, &e.id).unwrap() + 1e-12 >= a.score(&q, &e.id).unwrap());
        }
    }

    /// Plain parameters reproduce an unweighted BM25 ranking.
    #[test]
    fn plain_params_match_baseline(store in store_strategy(), q in query_strategy()) {
        let scores = oracle_bm25(&store, &q, 1.0, 1.0);
        let mut want: Vec<(f64, &str)> = scores.iter().copied().zip(store.entries.iter().map(|e| e.id.as_str())).collect();
        want.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
        let got = Retriever::new(&store, ScoringParams::plain()).unwrap().rank_all(&q);
        prop_assert_eq!(got.len(), want.len());
        for (i, (g, (score, id))) in got.iter().zip(&want).enumerate() {
            prop_assert_eq!(g.rank, i + 1);
            prop_assert!((g.score - score).abs() < 1e-9);
            // Near-ties may legitimately swap under rounding.
            if i + 1 < want.len() && (want[i].0 - want[i + 1].0).abs() > 1e-9 && (i == 0 || (want[i - 1].0 - want[i].0).abs() > 1e-9) {
                prop_assert_eq!(g.entry_id.as_str(), *id);
            }
        }
    }

    /// An entry matching the query only inside code never falls behind an
    /// entry with no code matches when the code weight goes up.
    #[test]
    fn code_only_matches_keep_their_lead(store in store_strategy(), q in query_strategy(), lo in 1.0f64..3.0, step in 0.0f64..2.0) {
        let terms: Vec<String> = q.terms();
        let matches = |e: &KnowledgeEntry, in_code: bool| -> usize {
            oracle_terms(&e.text)
                .into_iter()
                .filter(|(t, a, b)| terms.contains(t) && e.code_spans.iter().any(|&(s, x)| s <= *a && *b <= x) == in_code)
                .count()
        };
        let code_only: Vec<&KnowledgeEntry> = store.entries.iter().filter(|e| matches(e, true) > 0 && matches(e, false) == 0).collect();
        let no_code: Vec<&KnowledgeEntry> = store.entries.iter().filter(|e| matches(e, true) == 0).collect();
        let a = Retriever::new(&store, params(lo)).unwrap();
        let b = Retriever::new(&store, params(lo + step)).unwrap();
        for x in &code_only {
            for y in &no_code {
                let before = a.score(&q, &x.id).unwrap() - a.score(&q, &y.id).unwrap();
                let after = b.score(&q, &x.id).unwrap() - b.score(&q, &y.id).unwrap();
                if before >= 0.0 {
                    prop_assert!(after >= -1e-12, "{} fell behind {}", x.id, y.id);
                }
            }
        }
    }
}
