use bort_core::corpus::{
    corpus_stats, corrupt_tokens, denoise_state_target, generate_corpus, mask_tokens, Corpus, CorpusError, Corruption,
    CorruptionMask, Split, SplitCounts,
};
use bort_core::dialog::{random_state, serialize_state, Database, DomainSpec, Schema};
use bort_core::model::Vocab;
use bort_core::rng::RngStreams;
use proptest::prelude::*;

fn small(seed: u64) -> (Schema, Database, Corpus) {
    let schema = Schema::default_synthetic();
    let db = Database::generate(&schema, 40, 17);
    let corpus = generate_corpus(&schema, &db, SplitCounts { train: 30, dev: 10, test: 10 }, seed).unwrap();
    (schema, db, corpus)
}

#[test]
fn generation_is_deterministic() {
    let (_, _, a) = small(7);
    let (_, _, b) = small(7);
    assert_eq!(a, b);
    let (_, _, c) = small(8);
    assert_ne!(a.train, c.train);
}

#[test]
fn generated_sessions_validate() {
    let (schema, _, corpus) = small(3);
    corpus.validate(&schema).unwrap();
    for s in corpus.train.iter().chain(&corpus.dev).chain(&corpus.test) {
        assert!((1..=2).contains(&s.goal.domains.len()), "{}", s.id);
        assert!((1..=8).contains(&s.turns.len()), "{}", s.id);
    }
}

#[test]
fn single_session_splits() {
    let schema = Schema::default_synthetic();
    let db = Database::generate(&schema, 40, 17);
    let counts = SplitCounts { train: 1, dev: 1, test: 1 };
    let a = generate_corpus(&schema, &db, counts, 7).unwrap();
    assert_eq!(a, generate_corpus(&schema, &db, counts, 7).unwrap());
    assert_eq!(a.counts(), counts);
}

#[test]
fn zero_count_is_rejected() {
    let schema = Schema::default_synthetic();
    let db = Database::generate(&schema, 40, 17);
    let r = generate_corpus(&schema, &db, SplitCounts { train: 0, dev: 1, test: 1 }, 1);
    assert!(matches!(r, Err(CorpusError::InvalidCounts(_))));
}

#[test]
fn schema_without_informable_slots_is_rejected() {
    let schema = Schema::new(vec![DomainSpec {
        name: "police".into(),
        informable: vec![],
        requestable: vec!["phone".into()],
        has_db: false,
    }])
    .unwrap();
    let db = Database::new(vec![]);
    let r = generate_corpus(&schema, &db, SplitCounts { train: 1, dev: 1, test: 1 }, 1);
    assert!(matches!(r, Err(CorpusError::NoInformableSlots)));
}

#[test]
fn directory_roundtrip() {
    let (_, _, corpus) = small(5);
    let dir = tempfile::tempdir().unwrap();
    corpus.write_dir(dir.path()).unwrap();
    assert_eq!(Corpus::read_dir(dir.path()).unwrap(), corpus);
}

#[test]
fn truncated_file_reports_line() {
    let (_, _, corpus) = small(5);
    let dir = tempfile::tempdir().unwrap();
    corpus.write_dir(dir.path()).unwrap();
    let path = dir.path().join("dev.jsonl");
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, &text[..text.len() / 2]).unwrap();
    match Corpus::read_dir(dir.path()) {
        Err(CorpusError::Format { path, .. }) => assert!(path.starts_with("dev.jsonl:"), "{path}"),
        other => panic!("expected a format error, got {other:?}"),
    }
}

#[test]
fn low_resource_subset() {
    let (_, _, corpus) = small(5);
    let sub = corpus.subset_low_resource(0.2, 9).unwrap();
    assert_eq!(sub.train.len(), 6);
    assert_eq!(sub.dev, corpus.dev);
    assert_eq!(sub.test, corpus.test);
    // Sampled without replacement, original order kept.
    let pos: Vec<usize> = sub.train.iter().map(|s| corpus.train.iter().position(|t| t.id == s.id).unwrap()).collect();
    assert!(pos.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(sub, corpus.subset_low_resource(0.2, 9).unwrap());
    assert_eq!(corpus.subset_low_resource(1.0, 9).unwrap(), corpus);
    assert_eq!(corpus.subset_low_resource(0.01, 9).unwrap().train.len(), 1);
    for bad in [0.0, -0.5, 1.5, f64::NAN] {
        assert!(matches!(corpus.subset_low_resource(bad, 9), Err(CorpusError::InvalidFraction(_))));
    }
}

#[test]
fn zero_shot_split() {
    let (schema, _, corpus) = small(5);
    let z = corpus.exclude_domain(&schema, "taxi").unwrap();
    assert!(z.train.iter().all(|s| !s.goal.touches("taxi")));
    assert!(z.dev.iter().chain(&z.test).all(|s| s.goal.touches("taxi")));
    let kept = corpus.train.iter().filter(|s| !s.goal.touches("taxi")).count();
    assert_eq!(z.train.len(), kept);
    assert!(matches!(corpus.exclude_domain(&schema, "police"), Err(CorpusError::UnknownDomain(_))));
}

#[test]
fn split_names_parse() {
    assert_eq!("dev".parse::<Split>().unwrap(), Split::Dev);
    assert!("valid".parse::<Split>().is_err());
}

// Frozen statistics of the default corpus (seed 17, 40 entities per domain).
#[test]
fn default_corpus_statistics() {
    let schema = Schema::default_synthetic();
    let db = Database::generate(&schema, 40, 17);
    let corpus = generate_corpus(&schema, &db, SplitCounts::default(), 17).unwrap();
    let stats = corpus_stats(&corpus.train);
    assert_eq!(stats.sessions, 400);
    assert_eq!(stats.turns, 1773);
    assert!((stats.mean_turns - 4.4325).abs() < 1e-12);
    assert_eq!(stats.domains_per_session.get(&1), Some(&205));
    assert_eq!(stats.domains_per_session.get(&2), Some(&195));
    assert_eq!(Vocab::build(&schema, &corpus.train).len(), 203);
}

#[test]
fn corruption_rate() {
    let tokens: Vec<u32> = (0..100_000).collect();
    let mut rng = RngStreams::new(11).stream("rate");
    let (out, mask) = corrupt_tokens(&tokens, &u32::MAX, 0.15, &mut rng);
    let rate = mask.corrupted() as f64 / tokens.len() as f64;
    assert!((rate - 0.15).abs() < 0.02, "{rate}");
    let deleted = mask.0.iter().filter(|c| **c == Corruption::Delete).count();
    assert!((deleted as f64 / mask.corrupted() as f64 - 0.5).abs() < 0.02);
    assert_eq!(out.len(), tokens.len() - deleted);
}

proptest! {
    #[test]
    fn corruption_mask_is_aligned(len in 0usize..200, alpha in 0.0f64..=1.0, seed in any::<u64>()) {
        let tokens: Vec<usize> = (0..len).collect();
        let (out, mask) = corrupt_tokens(&tokens, &usize::MAX, alpha, &mut RngStreams::new(seed).stream("n"));
        prop_assert_eq!(mask.len(), len);
        let deleted = mask.0.iter().filter(|c| **c == Corruption::Delete).count();
        prop_assert_eq!(out.len(), len - deleted);
        // Kept tokens survive in order.
        let kept: Vec<usize> = tokens.iter().zip(&mask.0).filter(|(_, c)| **c == Corruption::Keep).map(|(t, _)| *t).collect();
        let survivors: Vec<usize> = out.iter().copied().filter(|t| *t != usize::MAX).collect();
        prop_assert_eq!(kept, survivors);
    }

    #[test]
    fn masking_never_changes_length(len in 0usize..200, p in 0.0f64..=1.0, seed in any::<u64>()) {
        let tokens: Vec<usize> = (0..len).collect();
        let (out, n) = mask_tokens(&tokens, &usize::MAX, p, &mut RngStreams::new(seed).stream("m"));
        prop_assert_eq!(out.len(), len);
        prop_assert_eq!(out.iter().filter(|t| **t == usize::MAX).count(), n);
    }

    #[test]
    fn denoise_target_is_part_of_previous_state(seed in any::<u64>(), alpha in 0.0f64..=1.0) {
        let schema = Schema::default_synthetic();
        let streams = RngStreams::new(seed);
        let state = random_state(&schema, &mut streams.stream("state"));
        let tokens = serialize_state(&schema, &state).unwrap();
        let (_, mask) = corrupt_tokens(&tokens, &"<mask>".to_string(), alpha, &mut streams.stream("noise"));
        let target = denoise_state_target(&schema, &state, &mask).unwrap();
        for e in &target.edits {
            prop_assert_eq!(e.value.as_deref(), state.get(&e.domain, &e.slot));
        }
        if mask.corrupted() == 0 {
            prop_assert!(target.is_empty());
        }
        let all = denoise_state_target(&schema, &state, &CorruptionMask(vec![Corruption::Mask; tokens.len()])).unwrap();
        prop_assert_eq!(all.len(), state.len());
    }
}
