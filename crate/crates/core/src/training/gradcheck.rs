use rand::Rng;
use serde::Serialize;

use super::example::{PrevTurn, TurnExample};
use super::loss::{example_loss, ActiveTerms, ExampleLoss, Noise, Weights};
use crate::dialog::DialogState;
use crate::model::{ModelConfig, ModelError, ModelParams, EOS_ID, MASK_ID, PAD_ID, SEP_ID};
use crate::rng::RngStreams;

pub const TERMS: [&str; 7] = ["l_b", "l_r", "l_br_enc", "l_br_dec", "l_dr_state", "l_dr_resp", "l_total"];

#[derive(Clone, Debug, Serialize)]
pub struct TermCheck {
    pub term: String,
    pub max_rel_error: f64,
    pub worst_tensor: String,
    pub worst_index: usize,
    pub checked: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub terms: Vec<TermCheck>,
    pub max_rel_error: f64,
    /// Analytic gradient of the embedding row of a token that appears
    /// nowhere in the example.
    pub unused_row_grad_max: f64,
}

/// Micro model used by the gradient check and the regression fixtures.
pub fn micro_config(vocab_size: usize, hidden: usize, seed: u64) -> ModelConfig {
    ModelConfig {
        hidden_size: hidden,
        embed_size: hidden,
        attention_size: hidden,
        vocab_size,
        max_state_len: 12,
        max_response_len: 12,
        max_recon_len: 24,
        init_scale: 1.0,
        seed,
        ..ModelConfig::default()
    }
}

/// A random turn over `vocab` ids with every input path populated. Returns
/// the example, its noise and one token id that the example never uses.
pub fn synthetic_turn(vocab: usize, seed: u64) -> (TurnExample, Noise, usize) {
    let unused = vocab - 1;
    let mut rng = RngStreams::new(seed).stream("grad-check");
    let mut words = |n: usize| -> Vec<usize> { (0..n).map(|_| rng.gen_range(SEP_ID + 2..unused)).collect() };
    let (state, resp, utt) = (words(4), words(3), words(5));
    let mut dst_context = state.clone();
    dst_context.push(SEP_ID);
    dst_context.extend(&resp);
    dst_context.push(SEP_ID);
    dst_context.extend(&utt);
    // An empty segment so the reconstruction target holds a `<pad>`.
    let mut recon_target = vec![PAD_ID, SEP_ID];
    recon_target.extend(&dst_context);
    recon_target.push(EOS_ID);
    let with_eos = |mut v: Vec<usize>| {
        v.push(EOS_ID);
        v
    };
    let delta_target = with_eos(words(4));
    let resp_target = with_eos(words(5));
    let resp_context = {
        let mut c = words(4);
        c.push(SEP_ID);
        c.extend(words(3));
        c
    };
    let prev_resp = with_eos(words(3));
    let mut state_context = words(6);
    state_context[1] = MASK_ID;
    let noise = Noise {
        state_context: Some(state_context),
        state_target: Some(with_eos(words(3))),
        resp_context: Some({
            let mut c = words(5);
            c[2] = MASK_ID;
            c
        }),
    };
    let ex = TurnExample {
        session: "grad-check".into(),
        turn: 1,
        dst_context,
        delta_target,
        resp_context,
        resp_target,
        db_id: 3,
        recon_target,
        prev: Some(PrevTurn {
            state: DialogState::new(),
            state_tokens: Vec::new(),
            resp_tokens: Vec::new(),
            resp_target: prev_resp,
            db_id: 6,
            user_lex: Vec::new(),
            user_resp: Vec::new(),
            state_now: Vec::new(),
        }),
    };
    (ex, noise, unused)
}

fn weights_for(term: &str, lambda1: f64, lambda2: f64) -> [f64; 6] {
    match term {
        "l_b" => [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        "l_r" => [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        "l_br_enc" => [0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
        "l_br_dec" => [0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        "l_dr_state" => [0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        "l_dr_resp" => [0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
        _ => [1.0, 1.0, lambda1, lambda1, lambda2, lambda2],
    }
}

fn objective(l: &ExampleLoss, w: &[f64; 6]) -> f64 {
    w[0] * l.b + w[1] * l.r + w[2] * l.br_enc + w[3] * l.br_dec + w[4] * l.dr_state + w[5] * l.dr_resp
}

pub fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / (a.abs() + n.abs()).max(1e-8)
}

/// Compares analytic gradients of every parameter against central finite
/// differences (`ε = 1e-5`) in double precision, for each loss term alone
/// and for the weighted total.
pub fn grad_check(config: &ModelConfig, lambda1: f64, lambda2: f64) -> Result<GradCheckReport, ModelError> {
    let params = ModelParams::<f64>::init(config.clone())?;
    let (ex, noise, unused) = synthetic_turn(config.vocab_size, config.seed);
    let all = ActiveTerms { br_enc: true, br_dec: true, dr_state: true, dr_resp: true };
    let eps = 1e-5;
    let mut terms = Vec::new();
    let mut unused_row_grad_max: f64 = 0.0;
    for term in TERMS {
        let w = weights_for(term, lambda1, lambda2);
        let weights = Weights { b: w[0], r: w[1], br_enc: w[2], br_dec: w[3], dr_state: w[4], dr_resp: w[5] };
        let mut grads = ModelParams::<f64>::zeros(config.clone())?;
        example_loss::<f64, true>(&params, &ex, Some(&noise), all, &weights, Some(&mut grads));
        let row = grads.embed.row(unused);
        unused_row_grad_max = row.iter().fold(unused_row_grad_max, |m, v| m.max(v.abs()));
        let analytic: Vec<(String, Vec<f64>)> = grads.tensors().into_iter().map(|(n, _, d)| (n, d.to_vec())).collect();
        let mut probe = params.clone();
        let mut check = TermCheck { term: term.into(), max_rel_error: 0.0, worst_tensor: String::new(), worst_index: 0, checked: 0 };
        for (ti, (name, ga)) in analytic.iter().enumerate() {
            for (i, &a) in ga.iter().enumerate() {
                let original = probe.tensors_mut()[ti].1[i];
                let eval = |v: f64, probe: &mut ModelParams<f64>| {
                    probe.tensors_mut()[ti].1[i] = v;
                    let l = example_loss::<f64, true>(probe, &ex, Some(&noise), all, &weights, None);
                    objective(&l, &w)
                };
                let up = eval(original + eps, &mut probe);
                let down = eval(original - eps, &mut probe);
                probe.tensors_mut()[ti].1[i] = original;
                let n = (up - down) / (2.0 * eps);
                let r = rel_error(a, n);
                check.checked += 1;
                if r > check.max_rel_error {
                    check.max_rel_error = r;
                    check.worst_tensor = name.clone();
                    check.worst_index = i;
                }
            }
        }
        terms.push(check);
    }
    let max_rel_error = terms.iter().map(|t| t.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport { terms, max_rel_error, unused_row_grad_max })
}
