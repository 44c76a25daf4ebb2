use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::example::TurnExample;
use crate::corpus::{corrupt_tokens, denoise_state_target};
use crate::dialog::{serialize_delta, tokens, Schema};
use crate::model::{hidden_summary, DecoderParams, ModelParams, Scalar, Start, Vocab, EOS_ID, PAD_ID};

/// Which auxiliary terms are computed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ActiveTerms {
    pub br_enc: bool,
    pub br_dec: bool,
    pub dr_state: bool,
    pub dr_resp: bool,
}

impl ActiveTerms {
    pub fn any(&self) -> bool {
        self.br_enc || self.br_dec || self.dr_state || self.dr_resp
    }

    pub fn any_dr(&self) -> bool {
        self.dr_state || self.dr_resp
    }
}

/// Mean per-token negative log-likelihood of every term, and the identity
/// `l_total = l_b + l_r + λ₁(l_br_enc + l_br_dec) + λ₂(l_dr_state + l_dr_resp)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_b: f64,
    pub l_r: f64,
    pub l_br_enc: f64,
    pub l_br_dec: f64,
    pub l_dr_state: f64,
    pub l_dr_resp: f64,
    pub l_total: f64,
    pub tokens: TokenCounts,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenCounts {
    pub b: usize,
    pub r: usize,
    pub br_enc: usize,
    pub br_dec: usize,
    pub dr_state: usize,
    pub dr_resp: usize,
}

impl LossBreakdown {
    pub fn total(l_b: f64, l_r: f64, l_br_enc: f64, l_br_dec: f64, l_dr_state: f64, l_dr_resp: f64, lambda1: f64, lambda2: f64) -> f64 {
        l_b + l_r + lambda1 * (l_br_enc + l_br_dec) + lambda2 * (l_dr_state + l_dr_resp)
    }

    /// Mean of per-example losses, with `l_total` assembled by the identity.
    pub fn mean(parts: &[ExampleLoss], lambda1: f64, lambda2: f64) -> Self {
        let n = parts.len().max(1) as f64;
        let sum = |f: fn(&ExampleLoss) -> f64| parts.iter().map(f).sum::<f64>() / n;
        let (l_b, l_r) = (sum(|p| p.b), sum(|p| p.r));
        let (l_br_enc, l_br_dec) = (sum(|p| p.br_enc), sum(|p| p.br_dec));
        let (l_dr_state, l_dr_resp) = (sum(|p| p.dr_state), sum(|p| p.dr_resp));
        let mut tokens = TokenCounts::default();
        for p in parts {
            tokens.b += p.tokens.b;
            tokens.r += p.tokens.r;
            tokens.br_enc += p.tokens.br_enc;
            tokens.br_dec += p.tokens.br_dec;
            tokens.dr_state += p.tokens.dr_state;
            tokens.dr_resp += p.tokens.dr_resp;
        }
        Self {
            l_total: Self::total(l_b, l_r, l_br_enc, l_br_dec, l_dr_state, l_dr_resp, lambda1, lambda2),
            l_b,
            l_r,
            l_br_enc,
            l_br_dec,
            l_dr_state,
            l_dr_resp,
            tokens,
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.l_b, self.l_r, self.l_br_enc, self.l_br_dec, self.l_dr_state, self.l_dr_resp, self.l_total]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Loss of one example, per term (unweighted).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExampleLoss {
    pub b: f64,
    pub r: f64,
    pub br_enc: f64,
    pub br_dec: f64,
    pub dr_state: f64,
    pub dr_resp: f64,
    pub tokens: TokenCounts,
}

/// Gradient scale applied to each term.
#[derive(Clone, Copy, Debug)]
pub struct Weights<T> {
    pub b: T,
    pub r: T,
    pub br_enc: T,
    pub br_dec: T,
    pub dr_state: T,
    pub dr_resp: T,
}

impl<T: Scalar> Weights<T> {
    pub fn for_batch(batch: usize, lambda1: f64, lambda2: f64) -> Self {
        let inv = 1.0 / batch.max(1) as f64;
        Self {
            b: T::of(inv),
            r: T::of(inv),
            br_enc: T::of(lambda1 * inv),
            br_dec: T::of(lambda1 * inv),
            dr_state: T::of(lambda2 * inv),
            dr_resp: T::of(lambda2 * inv),
        }
    }
}

/// Pre-sampled denoising inputs of one example.
#[derive(Clone, Debug, PartialEq)]
pub struct Noise {
    pub state_context: Option<Vec<usize>>,
    pub state_target: Option<Vec<usize>>,
    pub resp_context: Option<Vec<usize>>,
}

/// Draws the corruptions for one example: state first, then response. The
/// first turn draws nothing.
pub fn sample_noise<R: Rng + ?Sized>(schema: &Schema, vocab: &Vocab, ex: &TurnExample, alpha: f64, terms: ActiveTerms, rng: &mut R) -> Option<Noise> {
    let prev = ex.prev.as_ref()?;
    if !terms.any_dr() {
        return None;
    }
    let mask = tokens::MASK.to_string();
    let mut noise = Noise { state_context: None, state_target: None, resp_context: None };
    if terms.dr_state {
        let (corrupted, m) = corrupt_tokens(&prev.state_tokens, &mask, alpha, rng);
        let target = denoise_state_target(schema, &prev.state, &m).expect("mask aligned with serialization");
        noise.state_context = Some(vocab.context(&[&corrupted[..], &prev.resp_tokens[..], &prev.user_lex[..]]));
        let mut t = vocab.encode(&serialize_delta(&target));
        t.push(EOS_ID);
        noise.state_target = Some(t);
    }
    if terms.dr_resp {
        let (corrupted, _) = corrupt_tokens(&prev.resp_tokens, &mask, alpha, rng);
        noise.resp_context = Some(vocab.context(&[&prev.state_now[..], &corrupted[..], &prev.user_resp[..]]));
    }
    Some(noise)
}

#[derive(Clone, Copy)]
enum Dec {
    State,
    Resp,
}

fn dec_pair<'a, T>(p: &'a ModelParams<T>, g: &'a mut ModelParams<T>, d: Dec) -> (&'a DecoderParams<T>, &'a mut DecoderParams<T>) {
    match d {
        Dec::State => (&p.state_dec, &mut g.state_dec),
        Dec::Resp => (&p.resp_dec, &mut g.resp_dec),
    }
}

fn scatter_rows<T: Scalar>(table: &mut Array2<T>, ids: &[usize], d: &Array2<T>) {
    for (r, &id) in ids.iter().enumerate() {
        let mut row = table.row_mut(id);
        row += &d.row(r);
    }
}

fn scatter_decoder_inputs<T: Scalar>(grads: &mut ModelParams<T>, start: Start, target: &[usize], d: &Array2<T>) {
    if target.is_empty() {
        return;
    }
    match start {
        Start::Bos => {
            let mut row = grads.embed.row_mut(crate::model::BOS_ID);
            row += &d.row(0);
        }
        Start::Db(id) => {
            let mut row = grads.db_embed.row_mut(id);
            row += &d.row(0);
        }
    }
    for (l, &id) in target[..target.len() - 1].iter().enumerate() {
        let mut row = grads.embed.row_mut(id);
        row += &d.row(l + 1);
    }
}

fn context_ids(ctx: &[usize]) -> &[usize] {
    if ctx.is_empty() {
        &[PAD_ID]
    } else {
        ctx
    }
}

/// Encoder plus one task decoder, no auxiliary heads. Returns the mean loss
/// and the number of scored tokens.
fn seq2seq<T: Scalar>(p: &ModelParams<T>, grads: Option<&mut ModelParams<T>>, ctx: &[usize], dec: Dec, start: Start, target: &[usize], weight: T) -> (f64, usize) {
    let enc = p.encode_trace(ctx);
    let inputs = p.decoder_inputs(start, target);
    let dp = match dec {
        Dec::State => &p.state_dec,
        Dec::Resp => &p.resp_dec,
    };
    let tr = dp.forward(inputs, enc.out.states.view(), enc.out.summary.view(), target);
    let out = (tr.loss.f64(), tr.counted);
    if let Some(g) = grads {
        let back = {
            let (dp, dg) = dec_pair(p, g, dec);
            dp.backward(&tr, enc.out.states.view(), weight, None, dg)
        };
        scatter_decoder_inputs(g, start, target, &back.d_inputs);
        let dx = p.encode_backward(&enc, back.d_mem.view(), back.d_summary.view(), g);
        scatter_rows(&mut g.embed, context_ids(ctx), &dx);
    }
    out
}

/// Loss of one example and, when `grads` is given, its weighted gradient
/// accumulated into `grads`. With `AUX = false` the reconstruction paths are
/// not compiled in.
pub fn example_loss<T: Scalar, const AUX: bool>(
    p: &ModelParams<T>,
    ex: &TurnExample,
    noise: Option<&Noise>,
    terms: ActiveTerms,
    w: &Weights<T>,
    mut grads: Option<&mut ModelParams<T>>,
) -> ExampleLoss {
    let mut out = ExampleLoss::default();
    let br_enc = AUX && terms.br_enc;
    let br_dec = AUX && terms.br_dec;

    // Dialog state tracking with the back-reconstruction heads.
    let enc = p.encode_trace(&ex.dst_context);
    let inputs = p.decoder_inputs(Start::Bos, &ex.delta_target);
    let sb = p.state_dec.forward(inputs, enc.out.states.view(), enc.out.summary.view(), &ex.delta_target);
    out.b = sb.loss.f64();
    out.tokens.b = sb.counted;
    let recon = &ex.recon_target;
    let enc_tr = br_enc.then(|| {
        let inputs = p.decoder_inputs(Start::Bos, recon);
        p.enc_recon.forward(inputs, enc.out.states.view(), enc.out.summary.view(), recon)
    });
    let dec_tr = br_dec.then(|| {
        let summary = hidden_summary(&sb.gru.out);
        let inputs = p.decoder_inputs(Start::Bos, recon);
        p.dec_recon.forward(inputs, sb.gru.out.view(), summary.view(), recon)
    });
    if let Some(t) = &enc_tr {
        out.br_enc = t.loss.f64();
        out.tokens.br_enc = t.counted;
    }
    if let Some(t) = &dec_tr {
        out.br_dec = t.loss.f64();
        out.tokens.br_dec = t.counted;
    }
    if let Some(g) = grads.as_deref_mut() {
        let h_db = &sb.gru.out;
        let extra = dec_tr.as_ref().map(|t| {
            let back = p.dec_recon.backward(t, h_db.view(), w.br_dec, None, &mut g.dec_recon);
            scatter_decoder_inputs(g, Start::Bos, recon, &back.d_inputs);
            let n = T::of(h_db.nrows() as f64);
            let spread: Array1<T> = back.d_summary / n;
            back.d_mem + &spread.insert_axis(Axis(0))
        });
        let back = p.state_dec.backward(&sb, enc.out.states.view(), w.b, extra.as_ref().map(|e| e.view()), &mut g.state_dec);
        scatter_decoder_inputs(g, Start::Bos, &ex.delta_target, &back.d_inputs);
        let mut d_states = back.d_mem;
        let mut d_summary = back.d_summary;
        if let Some(t) = &enc_tr {
            let b2 = p.enc_recon.backward(t, enc.out.states.view(), w.br_enc, None, &mut g.enc_recon);
            scatter_decoder_inputs(g, Start::Bos, recon, &b2.d_inputs);
            d_states += &b2.d_mem;
            d_summary += &b2.d_summary;
        }
        let dx = p.encode_backward(&enc, d_states.view(), d_summary.view(), g);
        scatter_rows(&mut g.embed, context_ids(&ex.dst_context), &dx);
    }

    let (l, n) = seq2seq(p, grads.as_deref_mut(), &ex.resp_context, Dec::Resp, Start::Db(ex.db_id), &ex.resp_target, w.r);
    out.r = l;
    out.tokens.r = n;

    if AUX {
        if let (Some(noise), Some(prev)) = (noise, ex.prev.as_ref()) {
            if terms.dr_state {
                if let (Some(ctx), Some(target)) = (&noise.state_context, &noise.state_target) {
                    let (l, n) = seq2seq(p, grads.as_deref_mut(), ctx, Dec::State, Start::Bos, target, w.dr_state);
                    out.dr_state = l;
                    out.tokens.dr_state = n;
                }
            }
            if terms.dr_resp {
                if let Some(ctx) = &noise.resp_context {
                    let (l, n) = seq2seq(p, grads.as_deref_mut(), ctx, Dec::Resp, Start::Db(prev.db_id), &prev.resp_target, w.dr_resp);
                    out.dr_resp = l;
                    out.tokens.dr_resp = n;
                }
            }
        }
    }
    out
}
