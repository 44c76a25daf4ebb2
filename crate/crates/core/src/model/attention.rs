use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::gru::{GruParams, GruTrace};
use super::ops::{argmax, dot, gemv_t_acc, softmax_in_place};
use super::Scalar;
use crate::model::vocab::{EOS_ID, PAD_ID};

/// Attention decoder over a memory of width `M`.
///
/// The initial state is a tanh bridge from the memory summary. At step `l`
/// the GRU consumes the previous token, its new state `s_l` queries the
/// memory with additive attention, and the output layer reads `[s_l ; c_l]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderParams<T> {
    /// `M × H`
    pub bridge_w: Array2<T>,
    pub bridge_b: Array1<T>,
    pub gru: GruParams<T>,
    /// `H × A`
    pub att_q: Array2<T>,
    /// `M × A`
    pub att_k: Array2<T>,
    pub att_v: Array1<T>,
    /// `(H + M) × V`
    pub out_w: Array2<T>,
    pub out_b: Array1<T>,
}

pub(crate) struct DecoderTrace<T> {
    pub summary: Array1<T>,
    pub h0: Array1<T>,
    pub gru: GruTrace<T>,
    /// `tanh(q_l + k_t)` flattened as `[l][t][a]`.
    pub u: Vec<T>,
    pub alpha: Array2<T>,
    pub feat: Array2<T>,
    /// Softmax probabilities `L × V`.
    pub probs: Array2<T>,
    pub logits: Array2<T>,
    pub targets: Vec<usize>,
    /// Mean negative log-likelihood over non-pad targets.
    pub loss: T,
    pub counted: usize,
}

/// Gradients flowing out of a decoder.
pub(crate) struct DecoderInputGrads<T> {
    pub d_inputs: Array2<T>,
    pub d_mem: Array2<T>,
    pub d_summary: Array1<T>,
}

impl<T: Scalar> DecoderParams<T> {
    pub fn zeros(embed: usize, hidden: usize, mem: usize, attn: usize, vocab: usize) -> Self {
        Self {
            bridge_w: Array2::zeros((mem, hidden)),
            bridge_b: Array1::zeros(hidden),
            gru: GruParams::zeros(embed, hidden),
            att_q: Array2::zeros((hidden, attn)),
            att_k: Array2::zeros((mem, attn)),
            att_v: Array1::zeros(attn),
            out_w: Array2::zeros((hidden + mem, vocab)),
            out_b: Array1::zeros(vocab),
        }
    }

    pub fn hidden(&self) -> usize {
        self.gru.hidden()
    }

    pub fn mem_width(&self) -> usize {
        self.att_k.nrows()
    }

    pub fn vocab(&self) -> usize {
        self.out_b.len()
    }

    fn initial_state(&self, summary: ArrayView1<T>) -> Array1<T> {
        (summary.dot(&self.bridge_w) + &self.bridge_b).mapv(T::tanh)
    }

    /// Teacher-forced pass. `inputs` row `l` is the embedding fed at step `l`
    /// (start embedding then `targets[..L-1]`).
    pub(crate) fn forward(&self, inputs: Array2<T>, mem: ArrayView2<T>, summary: ArrayView1<T>, targets: &[usize]) -> DecoderTrace<T> {
        let len = inputs.nrows();
        assert_eq!(len, targets.len(), "one input per target");
        let (hs, ms) = (self.hidden(), self.mem_width());
        let tm = mem.nrows();
        let attn = self.att_v.len();
        let h0 = self.initial_state(summary);
        let gru = self.gru.forward(inputs, h0.view());
        let q = gru.out.dot(&self.att_q);
        let k = mem.dot(&self.att_k);
        let v = self.att_v.as_slice().expect("contiguous");
        let ks = k.as_slice().expect("contiguous");
        let mut u = vec![T::zero(); len * tm * attn];
        let mut alpha = Array2::<T>::zeros((len, tm));
        for l in 0..len {
            let ql = q.row(l);
            let ql = ql.as_slice().expect("contiguous");
            let mut arow = alpha.row_mut(l);
            let arow = arow.as_slice_mut().expect("contiguous");
            for t in 0..tm {
                let ut = &mut u[(l * tm + t) * attn..(l * tm + t + 1) * attn];
                let kt = &ks[t * attn..(t + 1) * attn];
                for a in 0..attn {
                    ut[a] = (ql[a] + kt[a]).tanh();
                }
                arow[t] = dot(ut, v);
            }
            softmax_in_place(arow);
        }
        let ctx = alpha.dot(&mem);
        let mut feat = Array2::<T>::zeros((len, hs + ms));
        feat.slice_mut(s![.., ..hs]).assign(&gru.out);
        feat.slice_mut(s![.., hs..]).assign(&ctx);
        let logits = feat.dot(&self.out_w) + &self.out_b;
        let mut probs = logits.clone();
        let mut loss = T::zero();
        let mut counted = 0;
        for (l, &y) in targets.iter().enumerate() {
            let mut row = probs.row_mut(l);
            let row = row.as_slice_mut().expect("contiguous");
            let lse = softmax_in_place(row);
            if y != PAD_ID {
                loss += lse - logits[[l, y]];
                counted += 1;
            }
        }
        if counted > 0 {
            loss /= T::of(counted as f64);
        }
        DecoderTrace { summary: summary.to_owned(), h0, gru, u, alpha, feat, probs, logits, targets: targets.to_vec(), loss, counted }
    }

    /// Backward pass of `scale · loss`. `d_hidden_extra` is an additional
    /// gradient on the GRU states (from a consumer of the hidden sequence).
    pub(crate) fn backward(
        &self,
        tr: &DecoderTrace<T>,
        mem: ArrayView2<T>,
        scale: T,
        d_hidden_extra: Option<ArrayView2<T>>,
        grads: &mut DecoderParams<T>,
    ) -> DecoderInputGrads<T> {
        let len = tr.targets.len();
        let (hs, tm) = (self.hidden(), mem.nrows());
        let attn = self.att_v.len();
        let mut dlogits = tr.probs.clone();
        let per_token = if tr.counted > 0 { scale / T::of(tr.counted as f64) } else { T::zero() };
        for (l, &y) in tr.targets.iter().enumerate() {
            let mut row = dlogits.row_mut(l);
            if y == PAD_ID {
                row.fill(T::zero());
            } else {
                row[y] -= T::one();
                row *= per_token;
            }
        }
        grads.out_w += &tr.feat.t().dot(&dlogits);
        grads.out_b += &dlogits.sum_axis(Axis(0));
        let dfeat = dlogits.dot(&self.out_w.t());
        let mut d_s = dfeat.slice(s![.., ..hs]).to_owned();
        if let Some(extra) = d_hidden_extra {
            d_s += &extra;
        }
        let dctx = dfeat.slice(s![.., hs..]).to_owned();
        let dalpha = dctx.dot(&mem.t());
        let mut d_mem = tr.alpha.t().dot(&dctx);
        let mut dq = Array2::<T>::zeros((len, attn));
        let mut dk = Array2::<T>::zeros((tm, attn));
        let v = self.att_v.as_slice().expect("contiguous");
        let mut dv = vec![T::zero(); attn];
        for l in 0..len {
            let arow = tr.alpha.row(l);
            let darow = dalpha.row(l);
            let mean: T = arow.iter().zip(darow.iter()).map(|(a, d)| *a * *d).sum();
            let mut dql = dq.row_mut(l);
            let dql = dql.as_slice_mut().expect("contiguous");
            for t in 0..tm {
                let de = arow[t] * (darow[t] - mean);
                if de == T::zero() {
                    continue;
                }
                let ut = &tr.u[(l * tm + t) * attn..(l * tm + t + 1) * attn];
                let mut dkt = dk.row_mut(t);
                let dkt = dkt.as_slice_mut().expect("contiguous");
                for a in 0..attn {
                    dv[a] += de * ut[a];
                    let du = de * v[a] * (T::one() - ut[a] * ut[a]);
                    dql[a] += du;
                    dkt[a] += du;
                }
            }
        }
        grads.att_v += &ArrayView1::from(&dv[..]);
        grads.att_q += &tr.gru.out.t().dot(&dq);
        d_s += &dq.dot(&self.att_q.t());
        grads.att_k += &mem.t().dot(&dk);
        d_mem += &dk.dot(&self.att_k.t());
        let (d_inputs, dh0) = self.gru.backward(&tr.gru, d_s.view(), &mut grads.gru);
        let dpre = &dh0 * &tr.h0.mapv(|h| T::one() - h * h);
        grads.bridge_w += &outer(tr.summary.view(), dpre.view());
        grads.bridge_b += &dpre;
        let d_summary = self.bridge_w.dot(&dpre);
        DecoderInputGrads { d_inputs, d_mem, d_summary }
    }

    /// Greedy decoding from a start embedding. `embed_row(id)` returns the
    /// embedding fed after emitting `id`. Stops after `<eos>` (included) or
    /// `max_len` tokens.
    pub(crate) fn greedy<F>(&self, start: &[T], mem: ArrayView2<T>, summary: ArrayView1<T>, max_len: usize, embed_row: F) -> GreedyOutput<T>
    where
        F: Fn(usize) -> Vec<T>,
    {
        let (hs, ms, vs) = (self.hidden(), self.mem_width(), self.vocab());
        let tm = mem.nrows();
        let attn = self.att_v.len();
        let k = mem.dot(&self.att_k);
        let ks = k.as_slice().expect("contiguous");
        let v = self.att_v.as_slice().expect("contiguous");
        let mut h = self.initial_state(summary).to_vec();
        let mut input = start.to_vec();
        let mut tokens = Vec::new();
        let mut logits_rows: Vec<T> = Vec::new();
        let mut hidden_rows: Vec<T> = Vec::new();
        let mut feat = vec![T::zero(); hs + ms];
        let mut scores = vec![T::zero(); tm];
        let mut u = vec![T::zero(); attn];
        while tokens.len() < max_len {
            h = self.gru.step(&input, &h);
            let mut q = vec![T::zero(); attn];
            gemv_t_acc(&self.att_q, &h, &mut q);
            for t in 0..tm {
                for a in 0..attn {
                    u[a] = (q[a] + ks[t * attn + a]).tanh();
                }
                scores[t] = dot(&u, v);
            }
            softmax_in_place(&mut scores);
            feat[..hs].copy_from_slice(&h);
            let ctx = &mut feat[hs..];
            ctx.fill(T::zero());
            for t in 0..tm {
                let m = mem.row(t);
                for (c, mv) in ctx.iter_mut().zip(m.iter()) {
                    *c += scores[t] * *mv;
                }
            }
            let mut logits = self.out_b.to_vec();
            gemv_t_acc(&self.out_w, &feat, &mut logits);
            let next = argmax(&logits);
            debug_assert_eq!(logits.len(), vs);
            logits_rows.extend_from_slice(&logits);
            hidden_rows.extend_from_slice(&h);
            tokens.push(next);
            if next == EOS_ID {
                break;
            }
            input = embed_row(next);
        }
        let n = tokens.len();
        GreedyOutput {
            tokens,
            logits: Array2::from_shape_vec((n, vs), logits_rows).expect("shape"),
            hidden: Array2::from_shape_vec((n, hs), hidden_rows).expect("shape"),
        }
    }
}

pub(crate) struct GreedyOutput<T> {
    pub tokens: Vec<usize>,
    pub logits: Array2<T>,
    pub hidden: Array2<T>,
}

fn outer<T: Scalar>(a: ArrayView1<T>, b: ArrayView1<T>) -> Array2<T> {
    let a2 = a.insert_axis(Axis(1));
    let b2 = b.insert_axis(Axis(0));
    a2.dot(&b2)
}
