//! Encoder/decoder networks: a shared bidirectional GRU encoder, the state
//! and response decoders, and the two reconstruction decoders.

mod attention;
pub mod checkpoint;
mod gru;
pub mod ops;
mod scalar;
pub mod vocab;

use ndarray::{s, Array1, Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dialog::DbStateId;
use crate::rng::RngStreams;

pub use attention::DecoderParams;
pub use checkpoint::{load_params, save_params, CheckpointError};
pub use gru::GruParams;
pub(crate) use gru::GruTrace;
pub use scalar::Scalar;
pub use vocab::{Vocab, VocabError, BOS_ID, EOS_ID, EQ_ID, MASK_ID, NULL_ID, PAD_ID, SEMI_ID, SEP_ID, UNK_ID};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("db state id {0} out of range (0..{rows})", rows = DbStateId::COUNT)]
    DbStateOutOfRange(usize),
    #[error("token id {id} outside vocabulary of {vocab}")]
    TokenOutOfRange { id: usize, vocab: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub hidden_size: usize,
    pub embed_size: usize,
    pub attention_size: usize,
    pub vocab_size: usize,
    pub db_embedding_rows: usize,
    pub max_state_len: usize,
    pub max_response_len: usize,
    pub max_recon_len: usize,
    pub init_scale: f64,
    pub seed: u64,
    /// Response generation reads the delexicalized user utterance.
    pub user_delex: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_size: 100,
            embed_size: 100,
            attention_size: 100,
            vocab_size: 0,
            db_embedding_rows: DbStateId::COUNT,
            max_state_len: 40,
            max_response_len: 60,
            max_recon_len: 120,
            init_scale: 0.08,
            seed: 0,
            user_delex: true,
        }
    }
}

impl ModelConfig {
    pub fn new(vocab_size: usize, seed: u64) -> Self {
        Self { vocab_size, seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("hidden_size", self.hidden_size),
            ("embed_size", self.embed_size),
            ("attention_size", self.attention_size),
            ("vocab_size", self.vocab_size),
            ("max_state_len", self.max_state_len),
            ("max_response_len", self.max_response_len),
            ("max_recon_len", self.max_recon_len),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ModelError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.vocab_size <= UNK_ID {
            return Err(ModelError::InvalidConfig("vocab_size must cover the reserved tokens".into()));
        }
        if self.db_embedding_rows != DbStateId::COUNT {
            return Err(ModelError::InvalidConfig(format!("db_embedding_rows must be {}", DbStateId::COUNT)));
        }
        if !(self.init_scale.is_finite() && self.init_scale > 0.0) {
            return Err(ModelError::InvalidConfig("init_scale must be positive".into()));
        }
        Ok(())
    }
}

/// Bidirectional GRU encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams<T> {
    pub fwd: GruParams<T>,
    pub bwd: GruParams<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    /// `V × E`
    pub embed: Array2<T>,
    /// `10 × E`
    pub db_embed: Array2<T>,
    pub encoder: EncoderParams<T>,
    pub state_dec: DecoderParams<T>,
    pub resp_dec: DecoderParams<T>,
    /// Attends over the encoder states.
    pub enc_recon: DecoderParams<T>,
    /// Attends over the state decoder's hidden states.
    pub dec_recon: DecoderParams<T>,
}

/// Per-position encoder states `T × 2H` and the summary
/// `[forward last ; backward first]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderOutput<T> {
    pub states: Array2<T>,
    pub summary: Array1<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderOutput<T> {
    /// Emitted tokens (greedy, `<eos>` included when reached) or the
    /// teacher-forcing target.
    pub tokens: Vec<usize>,
    /// `L × V`
    pub logits: Array2<T>,
    /// `L × H`
    pub hidden: Array2<T>,
}

#[derive(Clone, Copy, Debug)]
pub enum Decode<'a> {
    /// Teacher forcing against a target ending in `<eos>`.
    Forced(&'a [usize]),
    Greedy { max_len: usize },
}

pub(crate) struct EncoderTrace<T> {
    pub fwd: GruTrace<T>,
    pub bwd: GruTrace<T>,
    pub out: EncoderOutput<T>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn zeros(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let (h, e, a, v) = (config.hidden_size, config.embed_size, config.attention_size, config.vocab_size);
        Ok(Self {
            embed: Array2::zeros((v, e)),
            db_embed: Array2::zeros((config.db_embedding_rows, e)),
            encoder: EncoderParams { fwd: GruParams::zeros(e, h), bwd: GruParams::zeros(e, h) },
            state_dec: DecoderParams::zeros(e, h, 2 * h, a, v),
            resp_dec: DecoderParams::zeros(e, h, 2 * h, a, v),
            enc_recon: DecoderParams::zeros(e, h, 2 * h, a, v),
            dec_recon: DecoderParams::zeros(e, h, h, a, v),
            config,
        })
    }

    /// Uniform initialization in `(−init_scale, init_scale)` drawn from the
    /// model-init stream, tensor by tensor in [`Self::tensors`] order.
    pub fn init(config: ModelConfig) -> Result<Self, ModelError> {
        let mut p = Self::zeros(config)?;
        let scale = p.config.init_scale;
        let mut rng = RngStreams::new(p.config.seed).stream("model-init");
        for (_, t) in p.tensors_mut() {
            for v in t.iter_mut() {
                *v = T::of(rng.gen_range(-scale..scale));
            }
        }
        Ok(p)
    }

    /// Named parameter tensors with their shapes, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[T])> {
        tensor_list(self)
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [T])> {
        tensor_list_mut(self)
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, _, d)| d.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, _, d)| d.iter().all(|v| v.is_finite()))
    }

    /// Same parameters in another precision.
    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let mut out = ModelParams::<U>::zeros(self.config.clone()).expect("config already validated");
        for ((_, _, src), (_, dst)) in self.tensors().into_iter().zip(out.tensors_mut()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = U::of(s.f64());
            }
        }
        out
    }

    fn check_ids(&self, ids: &[usize]) -> Result<(), ModelError> {
        let vocab = self.config.vocab_size;
        match ids.iter().find(|&&i| i >= vocab) {
            Some(&id) => Err(ModelError::TokenOutOfRange { id, vocab }),
            None => Ok(()),
        }
    }

    pub(crate) fn embed_rows(&self, ids: &[usize]) -> Array2<T> {
        let e = self.config.embed_size;
        let mut x = Array2::zeros((ids.len(), e));
        for (r, &id) in ids.iter().enumerate() {
            x.row_mut(r).assign(&self.embed.row(id));
        }
        x
    }

    /// Decoder inputs: the start row followed by the embeddings of
    /// `targets[..L-1]`.
    pub(crate) fn decoder_inputs(&self, start: Start, targets: &[usize]) -> Array2<T> {
        let e = self.config.embed_size;
        let mut x = Array2::zeros((targets.len(), e));
        if targets.is_empty() {
            return x;
        }
        x.row_mut(0).assign(&self.start_row(start));
        for (r, &id) in targets[..targets.len() - 1].iter().enumerate() {
            x.row_mut(r + 1).assign(&self.embed.row(id));
        }
        x
    }

    fn start_row(&self, start: Start) -> ndarray::ArrayView1<'_, T> {
        match start {
            Start::Bos => self.embed.row(BOS_ID),
            Start::Db(id) => self.db_embed.row(id),
        }
    }

    pub(crate) fn encode_trace(&self, ids: &[usize]) -> EncoderTrace<T> {
        let padded;
        let ids = if ids.is_empty() {
            padded = [PAD_ID];
            &padded[..]
        } else {
            ids
        };
        let h = self.config.hidden_size;
        let len = ids.len();
        let x = self.embed_rows(ids);
        let mut xr = x.clone();
        xr.invert_axis(ndarray::Axis(0));
        let xr = xr.as_standard_layout().to_owned();
        let zero = Array1::zeros(h);
        let fwd = self.encoder.fwd.forward(x, zero.view());
        let bwd = self.encoder.bwd.forward(xr, zero.view());
        let mut states = Array2::zeros((len, 2 * h));
        states.slice_mut(s![.., ..h]).assign(&fwd.out);
        let mut rev = bwd.out.view();
        rev.invert_axis(ndarray::Axis(0));
        states.slice_mut(s![.., h..]).assign(&rev);
        let mut summary = Array1::zeros(2 * h);
        summary.slice_mut(s![..h]).assign(&fwd.out.row(len - 1));
        summary.slice_mut(s![h..]).assign(&bwd.out.row(len - 1));
        EncoderTrace { fwd, bwd, out: EncoderOutput { states, summary } }
    }

    /// Backward through the encoder; returns the gradient w.r.t. each input
    /// embedding row.
    pub(crate) fn encode_backward(&self, tr: &EncoderTrace<T>, d_states: ArrayView2<T>, d_summary: ndarray::ArrayView1<T>, grads: &mut ModelParams<T>) -> Array2<T> {
        let h = self.config.hidden_size;
        let len = d_states.nrows();
        let mut d_f = d_states.slice(s![.., ..h]).to_owned();
        let mut d_b = d_states.slice(s![.., h..]).to_owned();
        d_b.invert_axis(ndarray::Axis(0));
        let mut d_b = d_b.as_standard_layout().to_owned();
        {
            let mut last = d_f.row_mut(len - 1);
            last += &d_summary.slice(s![..h]);
        }
        {
            let mut last = d_b.row_mut(len - 1);
            last += &d_summary.slice(s![h..]);
        }
        let (dx_f, _) = self.encoder.fwd.backward(&tr.fwd, d_f.view(), &mut grads.encoder.fwd);
        let (mut dx_b, _) = self.encoder.bwd.backward(&tr.bwd, d_b.view(), &mut grads.encoder.bwd);
        dx_b.invert_axis(ndarray::Axis(0));
        dx_f + &dx_b
    }

    /// Runs the encoder. Empty input is encoded as a single `<pad>`.
    pub fn encode(&self, ids: &[usize]) -> Result<EncoderOutput<T>, ModelError> {
        self.check_ids(ids)?;
        Ok(self.encode_trace(ids).out)
    }

    fn run_decoder(&self, dec: &DecoderParams<T>, start: Start, mem: ArrayView2<T>, summary: ndarray::ArrayView1<T>, mode: Decode<'_>) -> Result<DecoderOutput<T>, ModelError> {
        match mode {
            Decode::Forced(target) => {
                self.check_ids(target)?;
                let inputs = self.decoder_inputs(start, target);
                let tr = dec.forward(inputs, mem, summary, target);
                Ok(DecoderOutput { tokens: target.to_vec(), logits: tr.logits, hidden: tr.gru.out })
            }
            Decode::Greedy { max_len } => {
                let start = self.start_row(start).to_vec();
                let g = dec.greedy(&start, mem, summary, max_len, |id| self.embed.row(id).to_vec());
                Ok(DecoderOutput { tokens: g.tokens, logits: g.logits, hidden: g.hidden })
            }
        }
    }

    /// State decoder; the returned hidden sequence is `H_db`.
    pub fn decode_state(&self, enc: &EncoderOutput<T>, mode: Decode<'_>) -> Result<DecoderOutput<T>, ModelError> {
        self.run_decoder(&self.state_dec, Start::Bos, enc.states.view(), enc.summary.view(), mode)
    }

    /// Response decoder started from the DB-state embedding row `db_id`.
    pub fn decode_response(&self, enc: &EncoderOutput<T>, db_id: usize, mode: Decode<'_>) -> Result<DecoderOutput<T>, ModelError> {
        if db_id >= self.config.db_embedding_rows {
            return Err(ModelError::DbStateOutOfRange(db_id));
        }
        self.run_decoder(&self.resp_dec, Start::Db(db_id), enc.states.view(), enc.summary.view(), mode)
    }

    pub fn reconstruct_from_encoder(&self, enc: &EncoderOutput<T>, target: &[usize]) -> Result<DecoderOutput<T>, ModelError> {
        self.run_decoder(&self.enc_recon, Start::Bos, enc.states.view(), enc.summary.view(), Decode::Forced(target))
    }

    /// Reconstruction from the state decoder's hidden sequence. The summary
    /// is the mean of the hidden states.
    pub fn reconstruct_from_decoder(&self, state_hidden: &Array2<T>, target: &[usize]) -> Result<DecoderOutput<T>, ModelError> {
        let summary = hidden_summary(state_hidden);
        self.run_decoder(&self.dec_recon, Start::Bos, state_hidden.view(), summary.view(), Decode::Forced(target))
    }
}

/// Mean over rows.
pub fn hidden_summary<T: Scalar>(hidden: &Array2<T>) -> Array1<T> {
    let n = T::of(hidden.nrows().max(1) as f64);
    hidden.sum_axis(ndarray::Axis(0)) / n
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum Start {
    Bos,
    Db(usize),
}

fn gru_tensors<'a, T>(prefix: &str, g: &'a GruParams<T>, out: &mut Vec<(String, Vec<usize>, &'a [T])>) {
    out.push((format!("{prefix}.w_x"), g.w_x.shape().to_vec(), g.w_x.as_slice().expect("standard layout")));
    out.push((format!("{prefix}.w_h"), g.w_h.shape().to_vec(), g.w_h.as_slice().expect("standard layout")));
    out.push((format!("{prefix}.b_x"), g.b_x.shape().to_vec(), g.b_x.as_slice().expect("standard layout")));
    out.push((format!("{prefix}.b_h"), g.b_h.shape().to_vec(), g.b_h.as_slice().expect("standard layout")));
}

fn dec_tensors<'a, T>(prefix: &str, d: &'a DecoderParams<T>, out: &mut Vec<(String, Vec<usize>, &'a [T])>) {
    out.push((format!("{prefix}.bridge_w"), d.bridge_w.shape().to_vec(), d.bridge_w.as_slice().expect("standard layout")));
    out.push((format!("{prefix}.bridge_b"), d.bridge_b.shape().to_vec(), d.bridge_b.as_slice().expect("standard layout")));
    gru_tensors(&format!("{prefix}.gru"), &d.gru, out);
    out.push((format!("{prefix}.att_q"), d.att_q.shape().to_vec(), d.att_q.as_slice().expect("standard layout")));
    out.push((format!("{prefix}.att_k"), d.att_k.shape().to_vec(), d.att_k.as_slice().expect("standard layout")));
    out.push((format!("{prefix}.att_v"), d.att_v.shape().to_vec(), d.att_v.as_slice().expect("standard layout")));
    out.push((format!("{prefix}.out_w"), d.out_w.shape().to_vec(), d.out_w.as_slice().expect("standard layout")));
    out.push((format!("{prefix}.out_b"), d.out_b.shape().to_vec(), d.out_b.as_slice().expect("standard layout")));
}

fn tensor_list<T>(p: &ModelParams<T>) -> Vec<(String, Vec<usize>, &[T])> {
    let mut out = Vec::new();
    out.push(("embed".to_string(), p.embed.shape().to_vec(), p.embed.as_slice().expect("standard layout")));
    out.push(("db_embed".to_string(), p.db_embed.shape().to_vec(), p.db_embed.as_slice().expect("standard layout")));
    gru_tensors("encoder.fwd", &p.encoder.fwd, &mut out);
    gru_tensors("encoder.bwd", &p.encoder.bwd, &mut out);
    dec_tensors("state_dec", &p.state_dec, &mut out);
    dec_tensors("resp_dec", &p.resp_dec, &mut out);
    dec_tensors("enc_recon", &p.enc_recon, &mut out);
    dec_tensors("dec_recon", &p.dec_recon, &mut out);
    out
}

fn gru_tensors_mut<'a, T>(prefix: &str, g: &'a mut GruParams<T>, out: &mut Vec<(String, &'a mut [T])>) {
    out.push((format!("{prefix}.w_x"), g.w_x.as_slice_mut().expect("standard layout")));
    out.push((format!("{prefix}.w_h"), g.w_h.as_slice_mut().expect("standard layout")));
    out.push((format!("{prefix}.b_x"), g.b_x.as_slice_mut().expect("standard layout")));
    out.push((format!("{prefix}.b_h"), g.b_h.as_slice_mut().expect("standard layout")));
}

fn dec_tensors_mut<'a, T>(prefix: &str, d: &'a mut DecoderParams<T>, out: &mut Vec<(String, &'a mut [T])>) {
    out.push((format!("{prefix}.bridge_w"), d.bridge_w.as_slice_mut().expect("standard layout")));
    out.push((format!("{prefix}.bridge_b"), d.bridge_b.as_slice_mut().expect("standard layout")));
    gru_tensors_mut(&format!("{prefix}.gru"), &mut d.gru, out);
    out.push((format!("{prefix}.att_q"), d.att_q.as_slice_mut().expect("standard layout")));
    out.push((format!("{prefix}.att_k"), d.att_k.as_slice_mut().expect("standard layout")));
    out.push((format!("{prefix}.att_v"), d.att_v.as_slice_mut().expect("standard layout")));
    out.push((format!("{prefix}.out_w"), d.out_w.as_slice_mut().expect("standard layout")));
    out.push((format!("{prefix}.out_b"), d.out_b.as_slice_mut().expect("standard layout")));
}

fn tensor_list_mut<T>(p: &mut ModelParams<T>) -> Vec<(String, &mut [T])> {
    let mut out = Vec::new();
    out.push(("embed".to_string(), p.embed.as_slice_mut().expect("standard layout")));
    out.push(("db_embed".to_string(), p.db_embed.as_slice_mut().expect("standard layout")));
    gru_tensors_mut("encoder.fwd", &mut p.encoder.fwd, &mut out);
    gru_tensors_mut("encoder.bwd", &mut p.encoder.bwd, &mut out);
    dec_tensors_mut("state_dec", &mut p.state_dec, &mut out);
    dec_tensors_mut("resp_dec", &mut p.resp_dec, &mut out);
    dec_tensors_mut("enc_recon", &mut p.enc_recon, &mut out);
    dec_tensors_mut("dec_recon", &mut p.dec_recon, &mut out);
    out
}
