use bort_core::corpus::{generate_corpus, Corpus, SplitCounts};
use bort_core::dialog::{Database, Schema};
use bort_core::model::{checkpoint::checkpoint_hash, ModelConfig, Vocab};
use bort_core::rng::RngStreams;
use bort_core::training::{
    build_examples, example_loss, sample_noise, ActiveTerms, ConfigError, LossBreakdown, TrainConfig, TrainData,
    TrainError, Trainer, Weights,
};
use bort_core::ModelParamsF32;

struct Fixture {
    schema: Schema,
    db: Database,
    corpus: Corpus,
    vocab: Vocab,
}

impl Fixture {
    fn new() -> Self {
        let schema = Schema::default_synthetic();
        let db = Database::generate(&schema, 40, 17);
        let corpus = generate_corpus(&schema, &db, SplitCounts { train: 16, dev: 4, test: 4 }, 21).unwrap();
        let vocab = Vocab::build(&schema, &corpus.train);
        Self { schema, db, corpus, vocab }
    }

    fn data(&self) -> TrainData<'_> {
        TrainData { schema: &self.schema, db: &self.db, vocab: &self.vocab, train: &self.corpus.train, dev: &self.corpus.dev }
    }

    fn params(&self, seed: u64) -> ModelParamsF32 {
        let cfg = ModelConfig {
            hidden_size: 12,
            embed_size: 12,
            attention_size: 12,
            max_state_len: 20,
            max_response_len: 20,
            ..ModelConfig::new(self.vocab.len(), seed)
        };
        ModelParamsF32::init(cfg).unwrap()
    }
}

fn config(max_epochs: usize) -> TrainConfig {
    TrainConfig { batch_size: 8, max_epochs, ..TrainConfig::default() }
}

#[test]
fn aux_path_with_zero_weights_leaves_task_gradients_alone() {
    let f = Fixture::new();
    let p = f.params(1);
    let examples = build_examples(&f.schema, &f.db, &f.vocab, &f.corpus.train, true);
    let all = ActiveTerms { br_enc: true, br_dec: true, dr_state: true, dr_resp: true };
    let mut rng = RngStreams::new(2).stream("noise");
    for ex in examples.iter().take(6) {
        let noise = sample_noise(&f.schema, &f.vocab, ex, 0.15, all, &mut rng);
        let w = Weights::<f32>::for_batch(1, 0.0, 0.0);
        let mut with_aux = ModelParamsF32::zeros(p.config.clone()).unwrap();
        let mut without = ModelParamsF32::zeros(p.config.clone()).unwrap();
        let a = example_loss::<f32, true>(&p, ex, noise.as_ref(), all, &w, Some(&mut with_aux));
        let b = example_loss::<f32, false>(&p, ex, None, ActiveTerms::default(), &w, Some(&mut without));
        assert_eq!((a.b, a.r), (b.b, b.r));
        assert!(a.br_enc > 0.0 && b.br_enc == 0.0);
        for ((name, _, x), (_, _, y)) in with_aux.tensors().into_iter().zip(without.tensors()) {
            assert!(x.iter().zip(y).all(|(u, v)| u == v), "{name} differs");
        }
    }
}

#[test]
fn total_loss_identity() {
    let f = Fixture::new();
    let mut t = Trainer::new(f.data(), config(1), f.params(3)).unwrap();
    let log = t.run_epoch().unwrap().clone();
    let l = &log.train;
    let expect = l.l_b + l.l_r + 0.05 * (l.l_br_enc + l.l_br_dec) + 0.03 * (l.l_dr_state + l.l_dr_resp);
    assert!((l.l_total - expect).abs() < 1e-12);
    assert_eq!(LossBreakdown::total(1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 0.5, 0.25), 1.0 + 2.0 + 3.5 + 2.75);
    assert!(t.finished());
    assert_eq!(log.steps, f.corpus.train.iter().map(|s| s.turns.len()).sum::<usize>().div_ceil(8) as u64);
}

#[test]
fn training_reduces_loss() {
    let f = Fixture::new();
    let mut t = Trainer::new(f.data(), TrainConfig { patience: 10, ..config(4) }, f.params(3)).unwrap();
    t.run(|_, _| {}).unwrap();
    let totals: Vec<f64> = t.state.log.epochs.iter().map(|e| e.train.l_total).collect();
    assert_eq!(totals.len(), 4);
    assert!(totals.windows(2).all(|w| w[1] < w[0]), "{totals:?}");
}

#[test]
fn runs_are_reproducible() {
    let f = Fixture::new();
    let run = || {
        let mut t = Trainer::new(f.data(), config(2), f.params(4)).unwrap();
        t.run(|_, _| {}).unwrap();
        (t.summary().checkpoint_hash, checkpoint_hash(&t.state.params))
    };
    assert_eq!(run(), run());
}

#[test]
fn resume_continues_identically() {
    let f = Fixture::new();
    let mut straight = Trainer::new(f.data(), config(3), f.params(5)).unwrap();
    straight.run(|_, _| {}).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let mut first = Trainer::new(f.data(), config(1), f.params(5)).unwrap();
    first.run(|_, _| {}).unwrap();
    first.save_resume(dir.path()).unwrap();
    let mut resumed = Trainer::<f32>::resume(f.data(), config(3), dir.path()).unwrap();
    assert!(!resumed.finished());
    resumed.run(|_, _| {}).unwrap();

    assert_eq!(checkpoint_hash(&resumed.state.params), checkpoint_hash(&straight.state.params));
    assert_eq!(resumed.summary().checkpoint_hash, straight.summary().checkpoint_hash);
    assert_eq!(resumed.state.learning_rate, straight.state.learning_rate);
    let strip = |t: &Trainer<f32>| {
        t.state.log.epochs.iter().map(|e| (e.epoch, e.train.clone(), e.dev.clone(), e.learning_rate, e.steps)).collect::<Vec<_>>()
    };
    assert_eq!(strip(&resumed), strip(&straight));
}

#[test]
fn resume_rejects_changed_config() {
    let f = Fixture::new();
    let dir = tempfile::tempdir().unwrap();
    let mut t = Trainer::new(f.data(), config(1), f.params(5)).unwrap();
    t.run(|_, _| {}).unwrap();
    t.save_resume(dir.path()).unwrap();
    let changed = TrainConfig { lambda1: 0.1, ..config(3) };
    assert!(matches!(Trainer::<f32>::resume(f.data(), changed, dir.path()), Err(TrainError::Resume(_))));
    let empty = tempfile::tempdir().unwrap();
    assert!(matches!(Trainer::<f32>::resume(f.data(), config(3), empty.path()), Err(TrainError::Resume(_))));
}

#[test]
fn mismatched_vocab_is_rejected() {
    let f = Fixture::new();
    let p = ModelParamsF32::init(ModelConfig { hidden_size: 4, embed_size: 4, attention_size: 4, ..ModelConfig::new(f.vocab.len() + 1, 0) }).unwrap();
    assert!(matches!(Trainer::new(f.data(), config(1), p), Err(TrainError::VocabMismatch { .. })));
}

#[test]
fn config_file_parsing() {
    let mut c = TrainConfig::default();
    c.apply_text("# comment\nlambda1 = 0.1\nuse_dr = false  # trailing\n\n").unwrap();
    assert_eq!(c.lambda1, 0.1);
    assert!(!c.use_dr);
    assert!(matches!(c.apply_text("gamma = 1"), Err(ConfigError::UnknownKey(_))));
    assert!(matches!(c.apply_text("lambda1 0.1"), Err(ConfigError::Syntax { line: 1 })));
    assert!(matches!(c.apply_text("batch_size = many"), Err(ConfigError::BadValue { .. })));

    let mut back = TrainConfig::baseline();
    back.apply_text(&c.to_text()).unwrap();
    assert_eq!(back, c);
}

#[test]
fn config_validation() {
    for bad in [
        TrainConfig { lambda1: -0.1, ..TrainConfig::default() },
        TrainConfig { alpha: 1.5, ..TrainConfig::default() },
        TrainConfig { batch_size: 0, ..TrainConfig::default() },
        TrainConfig { br_enc_only: true, br_dec_only: true, ..TrainConfig::default() },
        TrainConfig { learning_rate: f64::NAN, ..TrainConfig::default() },
    ] {
        assert!(matches!(bad.validate(), Err(ConfigError::Invalid(_))), "{bad:?}");
    }
    let terms = TrainConfig { br_enc_only: true, dr_resp_only: true, ..TrainConfig::default() }.active_terms();
    assert_eq!(terms, ActiveTerms { br_enc: true, br_dec: false, dr_state: false, dr_resp: true });
    assert!(!TrainConfig::baseline().active_terms().any());
    assert!(!TrainConfig { lambda1: 0.0, lambda2: 0.0, ..TrainConfig::default() }.active_terms().any());
}
