use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::{ConfigError, TrainConfig};
use super::example::{build_examples, TurnExample};
use super::loss::{example_loss, sample_noise, ExampleLoss, LossBreakdown, Weights};
use super::optim::{clip_grad_norm, zero_grads, AdamW};
use crate::corpus::Session;
use crate::dialog::{Database, Schema};
use crate::eval::{evaluate, EvalError, EvalReport};
use crate::inference::{Mode, Predictor};
use crate::model::checkpoint::{checkpoint_hash, from_bytes, to_bytes, CheckpointError};
use crate::model::{ModelParams, Scalar, Vocab};
use crate::rng::RngStreams;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("model config does not match the vocabulary ({model} vs {vocab} tokens)")]
    VocabMismatch { model: usize, vocab: usize },
    #[error("no training examples")]
    Empty,
    #[error("non-finite loss at epoch {epoch}, step {step}: batch {examples:?}, losses {loss:?}")]
    NonFinite { epoch: usize, step: u64, examples: Vec<String>, loss: LossBreakdown },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("resume state: {0}")]
    Resume(String),
}

/// Patience-based early stopping on a score to maximize.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: Option<f64>,
    pub best_epoch: Option<usize>,
    pub bad_epochs: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Progress {
    Improved,
    Plateau { stop: bool },
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, ..Self::default() }
    }

    pub fn observe(&mut self, epoch: usize, score: f64) -> Progress {
        if self.best.is_none_or(|b| score > b) {
            self.best = Some(score);
            self.best_epoch = Some(epoch);
            self.bad_epochs = 0;
            Progress::Improved
        } else {
            self.bad_epochs += 1;
            Progress::Plateau { stop: self.bad_epochs >= self.patience }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train: LossBreakdown,
    pub dev: EvalReport,
    pub learning_rate: f64,
    pub steps: u64,
    pub wall_secs: f64,
    pub best: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

impl TrainingLog {
    pub fn to_jsonl(&self) -> String {
        self.epochs.iter().map(|e| serde_json::to_string(e).expect("log serializes") + "\n").collect()
    }

    pub fn best(&self) -> Option<&EpochLog> {
        self.best_epoch.and_then(|b| self.epochs.iter().find(|e| e.epoch == b))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub best_epoch: Option<usize>,
    pub best_dev_combined: Option<f64>,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub steps: u64,
    pub checkpoint_hash: String,
}

/// Corpus material a run trains and validates on.
#[derive(Clone, Copy)]
pub struct TrainData<'a> {
    pub schema: &'a Schema,
    pub db: &'a Database,
    pub vocab: &'a Vocab,
    pub train: &'a [Session],
    pub dev: &'a [Session],
}

/// Mutable state of a run, enough to continue it exactly after an epoch.
#[derive(Clone, Debug)]
pub struct TrainState<T> {
    pub params: ModelParams<T>,
    pub best_params: ModelParams<T>,
    pub optimizer: AdamW<T>,
    pub epoch: usize,
    pub learning_rate: f64,
    pub stopping: EarlyStopping,
    pub log: TrainingLog,
    pub finished: bool,
}

#[derive(Serialize, Deserialize)]
struct ResumeMeta {
    config: TrainConfig,
    epoch: usize,
    learning_rate: f64,
    adam_step: u64,
    stopping: EarlyStopping,
    log: TrainingLog,
}

const RESUME_FILES: [&str; 4] = ["params.ckpt", "best.ckpt", "adam_m.ckpt", "adam_v.ckpt"];

pub struct Trainer<'a, T> {
    data: TrainData<'a>,
    config: TrainConfig,
    examples: Vec<TurnExample>,
    streams: RngStreams,
    pub state: TrainState<T>,
}

impl<'a, T: Scalar> Trainer<'a, T> {
    /// Starts a run from `params`. The model's user-delex flag follows the
    /// config switch so inference feeds the same utterance form.
    pub fn new(data: TrainData<'a>, config: TrainConfig, mut params: ModelParams<T>) -> Result<Self, TrainError> {
        config.validate()?;
        params.config.user_delex = config.use_user_delex;
        let optimizer = AdamW::new(&params, config.weight_decay);
        let state = TrainState {
            best_params: params.clone(),
            params,
            optimizer,
            epoch: 0,
            learning_rate: config.learning_rate,
            stopping: EarlyStopping::new(config.patience),
            log: TrainingLog::default(),
            finished: false,
        };
        Self::with_state(data, config, state)
    }

    fn with_state(data: TrainData<'a>, config: TrainConfig, state: TrainState<T>) -> Result<Self, TrainError> {
        if state.params.config.vocab_size != data.vocab.len() {
            return Err(TrainError::VocabMismatch { model: state.params.config.vocab_size, vocab: data.vocab.len() });
        }
        let examples = build_examples(data.schema, data.db, data.vocab, data.train, config.use_user_delex);
        if examples.is_empty() {
            return Err(TrainError::Empty);
        }
        Ok(Self { data, streams: RngStreams::new(config.seed), config, examples, state })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn examples(&self) -> &[TurnExample] {
        &self.examples
    }

    fn batches(&self, epoch: usize) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.examples.len()).collect();
        order.shuffle(&mut self.streams.indexed("shuffle", epoch as u64));
        order.chunks(self.config.batch_size).map(<[usize]>::to_vec).collect()
    }

    /// One optimizer step over `batch`. Noise is drawn per example in batch
    /// order.
    fn step<const AUX: bool>(&mut self, batch: &[usize], noise_rng: &mut crate::rng::StreamRng, grads: &mut ModelParams<T>) -> Result<Vec<ExampleLoss>, TrainError> {
        let terms = self.config.active_terms();
        let w = Weights::<T>::for_batch(batch.len(), self.config.lambda1, self.config.lambda2);
        zero_grads(grads);
        let mut parts = Vec::with_capacity(batch.len());
        for &i in batch {
            let ex = &self.examples[i];
            let noise = sample_noise(self.data.schema, self.data.vocab, ex, self.config.alpha, terms, noise_rng);
            parts.push(example_loss::<T, AUX>(&self.state.params, ex, noise.as_ref(), terms, &w, Some(grads)));
        }
        let loss = LossBreakdown::mean(&parts, self.config.lambda1, self.config.lambda2);
        if !loss.is_finite() || !grads.is_finite() {
            return Err(TrainError::NonFinite {
                epoch: self.state.epoch + 1,
                step: self.state.optimizer.step + 1,
                examples: batch.iter().map(|&i| format!("{}#{}", self.examples[i].session, self.examples[i].turn)).collect(),
                loss,
            });
        }
        clip_grad_norm(grads, self.config.clip_norm);
        self.state.optimizer.update(&mut self.state.params, grads, self.state.learning_rate);
        Ok(parts)
    }

    fn train_epoch<const AUX: bool>(&mut self) -> Result<Vec<ExampleLoss>, TrainError> {
        let epoch = self.state.epoch;
        let mut noise_rng = self.streams.indexed("noise", epoch as u64);
        let mut grads = ModelParams::zeros(self.state.params.config.clone()).expect("validated config");
        let mut all = Vec::with_capacity(self.examples.len());
        for batch in self.batches(epoch) {
            all.extend(self.step::<AUX>(&batch, &mut noise_rng, &mut grads)?);
        }
        Ok(all)
    }

    /// Runs the first `n` steps of the first epoch and returns the checkpoint
    /// hash after each. Used to compare the reconstruction-free path with the
    /// full one.
    pub fn trajectory<const AUX: bool>(&mut self, n: usize) -> Result<Vec<String>, TrainError> {
        let mut noise_rng = self.streams.indexed("noise", 0);
        let mut grads = ModelParams::zeros(self.state.params.config.clone()).expect("validated config");
        let mut out = Vec::with_capacity(n);
        for batch in self.batches(0).into_iter().cycle().take(n) {
            self.step::<AUX>(&batch, &mut noise_rng, &mut grads)?;
            out.push(checkpoint_hash(&self.state.params));
        }
        Ok(out)
    }

    /// End-to-end evaluation of `params` on the dev split.
    pub fn evaluate_dev(&self, params: &ModelParams<T>) -> Result<EvalReport, TrainError> {
        let predictor = Predictor::new(params, self.data.vocab, self.data.schema, self.data.db);
        let run = predictor.run_sessions(self.data.dev, Mode::EndToEnd, 0.0, self.config.seed);
        Ok(evaluate(self.data.schema, self.data.db, &run, self.data.dev)?)
    }

    /// One epoch of training followed by dev evaluation, learning-rate decay
    /// on a plateau and the stopping decision.
    pub fn run_epoch(&mut self) -> Result<&EpochLog, TrainError> {
        let start = Instant::now();
        let parts = if self.config.active_terms().any() { self.train_epoch::<true>()? } else { self.train_epoch::<false>()? };
        let train = LossBreakdown::mean(&parts, self.config.lambda1, self.config.lambda2);
        let dev = self.evaluate_dev(&self.state.params)?;
        self.state.epoch += 1;
        let epoch = self.state.epoch;
        let lr = self.state.learning_rate;
        let progress = self.state.stopping.observe(epoch, dev.combined);
        let best = progress == Progress::Improved;
        match progress {
            Progress::Improved => self.state.best_params = self.state.params.clone(),
            Progress::Plateau { stop } => {
                self.state.learning_rate *= self.config.lr_decay;
                self.state.finished |= stop;
            }
        }
        if epoch >= self.config.max_epochs {
            self.state.finished = true;
        }
        let log = &mut self.state.log;
        log.best_epoch = self.state.stopping.best_epoch;
        log.stopped_early = matches!(progress, Progress::Plateau { stop: true });
        log.epochs.push(EpochLog {
            epoch,
            train,
            dev,
            learning_rate: lr,
            steps: self.state.optimizer.step,
            wall_secs: start.elapsed().as_secs_f64(),
            best,
        });
        Ok(log.epochs.last().expect("just pushed"))
    }

    pub fn finished(&self) -> bool {
        self.state.finished
    }

    /// Trains until early stopping or `max_epochs`, calling `on_epoch` after
    /// each epoch.
    pub fn run(&mut self, mut on_epoch: impl FnMut(&EpochLog, &Self)) -> Result<(), TrainError> {
        while !self.finished() {
            self.run_epoch()?;
            on_epoch(self.state.log.epochs.last().expect("epoch logged"), self);
        }
        Ok(())
    }

    pub fn summary(&self) -> TrainingSummary {
        let log = &self.state.log;
        TrainingSummary {
            best_epoch: log.best_epoch,
            best_dev_combined: self.state.stopping.best,
            epochs_run: log.epochs.len(),
            stopped_early: log.stopped_early,
            steps: self.state.optimizer.step,
            checkpoint_hash: checkpoint_hash(&self.state.best_params),
        }
    }

    pub fn into_state(self) -> TrainState<T> {
        self.state
    }

    /// Writes everything needed to continue the run into `dir`.
    pub fn save_resume(&self, dir: &Path) -> Result<(), TrainError> {
        let io = |e: std::io::Error| TrainError::Resume(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        let s = &self.state;
        for (name, p) in RESUME_FILES.iter().zip([&s.params, &s.best_params, &s.optimizer.m, &s.optimizer.v]) {
            std::fs::write(dir.join(name), to_bytes(p)).map_err(io)?;
        }
        let meta = ResumeMeta {
            config: self.config.clone(),
            epoch: s.epoch,
            learning_rate: s.learning_rate,
            adam_step: s.optimizer.step,
            stopping: s.stopping.clone(),
            log: s.log.clone(),
        };
        std::fs::write(dir.join("state.json"), serde_json::to_string_pretty(&meta).expect("meta serializes")).map_err(io)
    }

    /// Continues a run saved by [`Trainer::save_resume`]. The stored config
    /// must equal `config` except for `max_epochs`.
    pub fn resume(data: TrainData<'a>, config: TrainConfig, dir: &Path) -> Result<Self, TrainError> {
        config.validate()?;
        let read = |name: &str| std::fs::read(dir.join(name)).map_err(|e| TrainError::Resume(format!("{name}: {e}")));
        let meta: ResumeMeta =
            serde_json::from_slice(&read("state.json")?).map_err(|e| TrainError::Resume(format!("state.json: {e}")))?;
        let comparable = TrainConfig { max_epochs: config.max_epochs, ..meta.config.clone() };
        if comparable != config {
            return Err(TrainError::Resume("config differs from the interrupted run".into()));
        }
        let mut tensors = Vec::new();
        for name in RESUME_FILES {
            tensors.push(from_bytes::<T>(&read(name)?)?);
        }
        let v = tensors.pop().expect("four files");
        let m = tensors.pop().expect("four files");
        let best_params = tensors.pop().expect("four files");
        let params = tensors.pop().expect("four files");
        let mut optimizer = AdamW::new(&params, config.weight_decay);
        optimizer.m = m;
        optimizer.v = v;
        optimizer.step = meta.adam_step;
        let state = TrainState {
            params,
            best_params,
            optimizer,
            epoch: meta.epoch,
            learning_rate: meta.learning_rate,
            stopping: meta.stopping,
            finished: meta.log.stopped_early || meta.epoch >= config.max_epochs,
            log: meta.log,
        };
        Self::with_state(data, config, state)
    }
}
