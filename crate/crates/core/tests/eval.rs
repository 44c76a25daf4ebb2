use bort_core::corpus::{generate_corpus, Session, SplitCounts};
use bort_core::dialog::{Database, Schema};
use bort_core::eval::{combined, corpus_bleu, evaluate, f1_from_counts, sweep_csv, EvalError, NoiseSweep};
use bort_core::inference::{DbSummary, Mode, PredictedTurn, Predictor, SessionRun};
use bort_core::model::{ModelConfig, Vocab};
use bort_core::ModelParamsF32;
use proptest::prelude::*;

fn corpus() -> (Schema, Database, Vec<Session>, Vec<Session>) {
    let schema = Schema::default_synthetic();
    let db = Database::generate(&schema, 40, 17);
    let c = generate_corpus(&schema, &db, SplitCounts { train: 20, dev: 5, test: 30 }, 4).unwrap();
    (schema, db, c.train, c.test)
}

fn gold_run(sessions: &[Session]) -> Vec<SessionRun> {
    sessions
        .iter()
        .map(|s| SessionRun {
            session_id: s.id.clone(),
            turns: s
                .turns
                .iter()
                .map(|t| PredictedTurn {
                    pred_delta: t.gold_delta.clone(),
                    pred_state: t.gold_state.clone(),
                    db: DbSummary { domain: String::new(), match_count: 0, bookable: false },
                    resp_delex: t.resp_delex.clone(),
                    resp_lex: t.resp_lex.clone(),
                    warnings: 0,
                })
                .collect(),
        })
        .collect()
}

#[test]
fn gold_run_scores() {
    let (schema, db, _, test) = corpus();
    let r = evaluate(&schema, &db, &gold_run(&test), &test).unwrap();
    assert_eq!(r.joint_goal_accuracy, 100.0);
    assert!((r.bleu - 100.0).abs() < 1e-9);
    assert!(r.success <= r.inform);
    assert_eq!(r.combined, combined(r.inform, r.success, r.bleu));
    assert_eq!(r.counts.sessions, 30);
    assert_eq!(r.counts.turns, test.iter().map(|s| s.turns.len()).sum::<usize>());
    let sessions: usize = r.per_domain.values().map(|d| d.sessions).sum();
    assert_eq!(sessions, test.iter().map(|s| s.goal.domains.len()).sum::<usize>());
    for d in r.per_domain.values() {
        assert!(d.success <= d.inform);
    }
}

#[test]
fn untrained_model_invariants() {
    let (schema, db, train, test) = corpus();
    let vocab = Vocab::build(&schema, &train);
    let cfg = ModelConfig { hidden_size: 8, embed_size: 8, attention_size: 8, max_state_len: 10, max_response_len: 10, ..ModelConfig::new(vocab.len(), 1) };
    let params = ModelParamsF32::init(cfg).unwrap();
    let p = Predictor::new(&params, &vocab, &schema, &db);
    for (mode, pr) in [(Mode::EndToEnd, 0.0), (Mode::PolicyOpt, 0.2)] {
        let run = p.run_sessions(&test, mode, pr, 0);
        let r = evaluate(&schema, &db, &run, &test).unwrap();
        assert!(r.success <= r.inform);
        for v in [r.inform, r.success, r.bleu, r.joint_goal_accuracy, r.success_f1] {
            assert!((0.0..=100.0).contains(&v));
        }
    }
}

#[test]
fn misaligned_runs_are_rejected() {
    let (schema, db, _, test) = corpus();
    let run = gold_run(&test);
    assert!(matches!(evaluate(&schema, &db, &run[1..], &test), Err(EvalError::SessionCount { .. })));
    let mut swapped = run.clone();
    swapped.swap(0, 1);
    assert!(matches!(evaluate(&schema, &db, &swapped, &test), Err(EvalError::SessionMismatch { index: 0, .. })));
    let mut short = run;
    short[2].turns.pop();
    assert!(matches!(evaluate(&schema, &db, &short, &test), Err(EvalError::TurnCount(_))));
}

#[test]
fn f1_counts() {
    assert_eq!(f1_from_counts(0, 3, 3), 0.0);
    assert_eq!(f1_from_counts(2, 2, 2), 100.0);
    // P = 1/2, R = 1/4.
    assert!((f1_from_counts(1, 2, 4) - 100.0 / 3.0).abs() < 1e-12);
}

#[test]
fn sweep_csv_layout() {
    let a = NoiseSweep::new("bort", vec![(0.0, 100.0), (0.1, 90.5)]).unwrap();
    let b = NoiseSweep::new("base", vec![(0.0, 99.0)]).unwrap();
    let csv = sweep_csv(&[a, b]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "model,p,combined");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("bort,0"));
    assert!(NoiseSweep::new("x", vec![(0.1, 1.0), (0.1, 2.0)]).is_err());
}

fn words() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "the", "[hotel_name]"]).prop_map(String::from), 1..12)
}

proptest! {
    #[test]
    fn bleu_ignores_pair_order(pairs in prop::collection::vec((words(), words()), 1..8), rot in 0usize..8) {
        let refs: Vec<(&[String], &[String])> = pairs.iter().map(|(h, r)| (&h[..], &r[..])).collect();
        let mut rotated = refs.clone();
        let k = rot % rotated.len();
        rotated.rotate_left(k);
        let a = corpus_bleu(&refs);
        prop_assert!((a - corpus_bleu(&rotated)).abs() < 1e-9);
        prop_assert!((0.0..=100.0 + 1e-9).contains(&a));
    }

    #[test]
    fn bleu_of_identity_is_100(refs in prop::collection::vec(prop::collection::vec(prop::sample::select(vec!["a", "b", "c"]).prop_map(String::from), 4..10), 1..5)) {
        let pairs: Vec<(&[String], &[String])> = refs.iter().map(|r| (&r[..], &r[..])).collect();
        prop_assert!((corpus_bleu(&pairs) - 100.0).abs() < 1e-9);
    }
}
