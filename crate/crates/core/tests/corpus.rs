mod common;

use std::collections::BTreeSet;

use common::oracles::best_window;
use declare::corpus::{
    apply_blocklist, extract_snippet, extract_snippet_with_len, extract_snippets, ingest_reader, make_folds,
    read_blocklist, write_corpus, Label, SNIPPET_LEN, TIE_TOLERANCE,
};
use declare::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn snippet_matches_exhaustive_scan() {
    let emb = common::snippet_embeddings(1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut kept, mut dropped) = (0, 0);
    for _ in 0..200 {
        let (claim, article) = common::snippet_case(&mut rng);
        let (start, sim) = best_window(&claim, &article, &emb, SNIPPET_LEN, TIE_TOLERANCE);
        match extract_snippet(&claim, &article, &emb, 0.5) {
            Some(s) => {
                kept += 1;
                assert_eq!(s.start, start);
                assert!((s.score.sim - sim).abs() < 1e-9);
                assert_eq!(s.tokens.len(), SNIPPET_LEN.min(article.len()));
            }
            None => {
                dropped += 1;
                assert!(sim < 0.5 + 1e-9, "dropped a window scoring {sim}");
            }
        }
    }
    assert!(kept > 10 && dropped > 10, "threshold not exercised: {kept} kept, {dropped} dropped");
}

#[test]
fn short_windows_match_exhaustive_scan() {
    let emb = common::snippet_embeddings(3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let (claim, article) = common::snippet_case(&mut rng);
        let s = extract_snippet_with_len(&claim, &article, &emb, f64::NEG_INFINITY, 7).unwrap();
        assert_eq!(s.start, best_window(&claim, &article, &emb, 7, TIE_TOLERANCE).0);
    }
}

#[test]
fn snippet_scores_combine_as_product() {
    let emb = common::snippet_embeddings(5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (claim, article) = common::snippet_case(&mut rng);
    let s = extract_snippet_with_len(&claim, &article, &emb, f64::NEG_INFINITY, 10).unwrap();
    assert_eq!(s.score.sim, s.score.sim_bow * s.score.sim_semantic);
    assert!((0.0..=1.0).contains(&s.score.sim_bow));
}

#[test]
fn ties_go_to_the_earliest_window() {
    let emb = common::snippet_embeddings(7);
    let toks = |s: &str| s.split_whitespace().map(String::from).collect::<Vec<_>>();
    let article = toks("v1 v2 v9 v9 v1 v2");
    let s = extract_snippet_with_len(&toks("v1 v2"), &article, &emb, f64::NEG_INFINITY, 2).unwrap();
    assert_eq!(s.start, 0);
}

#[test]
fn extraction_drops_weak_articles_and_empty_claims() {
    let emb = common::snippet_embeddings(1);
    let text = r#"{"id":"a","claim":"v1 v2","label":true,"articles":[{"text":"v1 v2 v1","source":"x.com"},{"text":"v33 v34","source":"y.com"}]}
{"id":"b","claim":"v3","label":false,"articles":[{"text":"v31 v32","source":"x.com"}]}
"#;
    let mut instances = ingest_reader(text.as_bytes()).unwrap().instances;
    let dropped = extract_snippets(&mut instances, &emb, 0.5);
    assert_eq!(dropped, 2);
    assert_eq!(instances.len(), 1);
    assert_eq!(instances[0].articles.len(), 1);
}

#[test]
fn ingest_round_trips_through_writer() {
    let instances = common::synthetic_corpus(5, 2, 8, 3);
    let mut buf = Vec::new();
    write_corpus(&instances, &mut buf).unwrap();
    let back = ingest_reader(buf.as_slice()).unwrap().instances;
    assert_eq!(back, instances);
}

#[test]
fn ingest_reports_bad_lines() {
    assert!(matches!(ingest_reader("{not json\n".as_bytes()), Err(Error::Parse { line: 1, .. })));
    let dup = r#"{"id":"a","claim":"x","articles":[{"text":"y","source":"s"}]}
{"id":"a","claim":"x","articles":[{"text":"y","source":"s"}]}"#;
    assert!(matches!(ingest_reader(dup.as_bytes()), Err(Error::Record { .. })));
    let no_articles = r#"{"id":"a","claim":"x","articles":[]}"#;
    assert_eq!(ingest_reader(no_articles.as_bytes()).unwrap().skipped, 1);
    let labelled = r#"{"id":"a","claim":"x","label":" Mostly True ","articles":[{"text":"y","source":"s"}]}"#;
    let r = ingest_reader(labelled.as_bytes()).unwrap();
    assert_eq!(r.instances[0].label, Some(Label::Category("mostly true".into())));
}

#[test]
fn blocklisted_sources_are_removed() {
    let mut instances = common::synthetic_corpus(6, 3, 8, 3);
    let blocked = read_blocklist("# comment\nsite0.com\n\nsite1.com\n".as_bytes()).unwrap();
    let before: usize = instances.iter().map(|i| i.articles.len()).sum();
    let removed = apply_blocklist(&mut instances, &blocked);
    let after: usize = instances.iter().map(|i| i.articles.len()).sum();
    assert!(removed > 0);
    assert_eq!(before - removed, after);
    assert!(instances.iter().flat_map(|i| &i.articles).all(|a| !blocked.contains(&a.source)));
}

proptest! {
    #[test]
    fn folds_partition_the_ids(n in 10usize..200, k in 1usize..10, seed in any::<u64>()) {
        prop_assume!(n - n / 10 >= k);
        let ids: Vec<String> = (0..n).map(|i| format!("c{i}")).collect();
        let plan = make_folds(&ids, k, seed).unwrap();
        prop_assert_eq!(plan.validation.len(), n / 10);
        prop_assert_eq!(plan.num_folds(), k);
        let mut seen = BTreeSet::new();
        for id in plan.validation.iter().chain(plan.folds.iter().flatten()) {
            prop_assert!(seen.insert(id.clone()), "{} assigned twice", id);
        }
        prop_assert_eq!(seen.len(), n);
        let sizes: Vec<usize> = plan.folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        prop_assert_eq!(make_folds(&ids, k, seed).unwrap(), plan);
    }
}

#[test]
fn folds_reject_tiny_or_duplicate_inputs() {
    let ids: Vec<String> = (0..5).map(|i| i.to_string()).collect();
    assert!(make_folds(&ids, 2, 0).is_err());
    let dup = vec!["a".to_string(); 20];
    assert!(make_folds(&dup, 2, 0).is_err());
}
