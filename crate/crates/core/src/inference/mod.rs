//! Greedy decoding, session rollouts under the end-to-end and
//! policy-optimization protocols, run artifacts and live chat sessions.

mod artifact;
mod chat;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use artifact::{ArtifactError, RunArtifact, RunMeta, SessionRun};
pub use chat::{ChatDb, ChatSession, ChatTurn, Role, TranscriptEntry, PROTOCOL_NOTE};

use crate::corpus::{mask_tokens, Session, Turn};
use crate::dialog::{
    active_domain, db_state_id, diff_state, merge_state, parse_delta, parse_state, query_db, relexicalize, serialize_state, tokens,
    Database, DbResult, DialogState, LevenshteinState, Schema,
};
use crate::model::{Decode, ModelParams, Scalar, Vocab};
use crate::rng::RngStreams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    EndToEnd,
    PolicyOpt,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::EndToEnd => "end_to_end",
            Mode::PolicyOpt => "policy_opt",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "end_to_end" | "end-to-end" => Ok(Mode::EndToEnd),
            "policy_opt" | "policy-opt" => Ok(Mode::PolicyOpt),
            other => Err(format!("unknown mode {other:?} (expected end_to_end or policy_opt)")),
        }
    }
}

/// DB summary stored per predicted turn.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DbSummary {
    pub domain: String,
    pub match_count: usize,
    pub bookable: bool,
}

impl From<&DbResult> for DbSummary {
    fn from(r: &DbResult) -> Self {
        Self { domain: r.domain.clone(), match_count: r.match_count, bookable: r.bookable }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictedTurn {
    pub pred_delta: LevenshteinState,
    pub pred_state: DialogState,
    pub db: DbSummary,
    pub resp_delex: Vec<String>,
    pub resp_lex: Vec<String>,
    pub warnings: usize,
}

/// Read access to a corpus turn. Rollouts go through this trait so tests can
/// observe which annotations a protocol consults.
pub trait TurnView {
    fn user_lex(&self) -> &[String];
    fn user_delex(&self) -> &[String];
    fn resp_delex(&self) -> &[String];
    fn gold_state(&self) -> &DialogState;
    fn gold_delta(&self) -> &LevenshteinState;
}

impl TurnView for Turn {
    fn user_lex(&self) -> &[String] {
        &self.user_lex
    }

    fn user_delex(&self) -> &[String] {
        &self.user_delex
    }

    fn resp_delex(&self) -> &[String] {
        &self.resp_delex
    }

    fn gold_state(&self) -> &DialogState {
        &self.gold_state
    }

    fn gold_delta(&self) -> &LevenshteinState {
        &self.gold_delta
    }
}

/// Encoder inputs of one rollout turn, for protocol inspection.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TurnTrace {
    pub dst_context: Option<Vec<String>>,
    pub resp_context: Vec<String>,
}

/// Output of the state decoder for one turn.
#[derive(Clone, Debug, PartialEq)]
pub struct StatePrediction {
    pub tokens: Vec<String>,
    pub delta: LevenshteinState,
    pub state: DialogState,
    pub warnings: usize,
}

/// A trained model together with everything needed to run it.
pub struct Predictor<'a, T> {
    pub params: &'a ModelParams<T>,
    pub vocab: &'a Vocab,
    pub schema: &'a Schema,
    pub db: &'a Database,
}

impl<'a, T: Scalar> Predictor<'a, T> {
    pub fn new(params: &'a ModelParams<T>, vocab: &'a Vocab, schema: &'a Schema, db: &'a Database) -> Self {
        Self { params, vocab, schema, db }
    }

    fn state_tokens(&self, state: &DialogState) -> Vec<String> {
        // States produced by parsing only hold schema slots.
        serialize_state(self.schema, state).unwrap_or_default()
    }

    pub fn dst_context(&self, prev_state: &DialogState, prev_resp: &[String], user_lex: &[String]) -> Vec<String> {
        let st = self.state_tokens(prev_state);
        join_context(&[&st, prev_resp, user_lex])
    }

    /// Greedy state decoding over `(previous state, previous response,
    /// utterance)`, parsed leniently and merged into `prev_state`.
    pub fn predict_turn_state(&self, prev_state: &DialogState, prev_resp: &[String], user_lex: &[String]) -> StatePrediction {
        let st = self.state_tokens(prev_state);
        let ctx = self.vocab.context(&[&st[..], prev_resp, user_lex]);
        let enc = self.params.encode(&ctx).expect("vocabulary ids are in range");
        let out = self
            .params
            .decode_state(&enc, Decode::Greedy { max_len: self.params.config.max_state_len })
            .expect("greedy decoding cannot fail");
        let tokens = self.vocab.decode(&out.tokens);
        let (delta, warnings) = parse_delta(self.schema, &tokens);
        let state = merge_state(&delta, prev_state);
        StatePrediction { tokens, delta, state, warnings }
    }

    /// Greedy response decoding from already-serialized state tokens.
    pub fn predict_response_tokens(&self, state_tokens: &[String], prev_resp: &[String], user: &[String], db_id: usize) -> Vec<String> {
        let ctx = self.vocab.context(&[state_tokens, prev_resp, user]);
        let enc = self.params.encode(&ctx).expect("vocabulary ids are in range");
        let out = self
            .params
            .decode_response(&enc, db_id, Decode::Greedy { max_len: self.params.config.max_response_len })
            .expect("db ids come from db_state_id");
        self.vocab.decode(&out.tokens)
    }

    pub fn predict_turn_response(&self, prev_resp: &[String], user: &[String], state: &DialogState, db_result: &DbResult) -> Vec<String> {
        let st = self.state_tokens(state);
        self.predict_response_tokens(&st, prev_resp, user, db_state_id(db_result).index())
    }

    /// User utterance in the form the response decoder was trained on.
    fn response_user<'v, V: TurnView>(&self, turn: &'v V) -> &'v [String] {
        if self.params.config.user_delex {
            turn.user_delex()
        } else {
            turn.user_lex()
        }
    }

    /// Rolls out one session. End-to-end: generated previous state with the
    /// oracle previous response for tracking, generated previous response
    /// for generation. Policy optimization: the oracle state with each
    /// serialized token masked with probability `p`.
    pub fn rollout_session<V: TurnView>(&self, turns: &[V], mode: Mode, p: f64, rng: &mut crate::rng::StreamRng, mut trace: Option<&mut Vec<TurnTrace>>) -> Vec<PredictedTurn> {
        let mut out = Vec::with_capacity(turns.len());
        let mut pred_state = DialogState::new();
        let mut gen_prev_resp: Vec<String> = Vec::new();
        let mut oracle_prev_resp: &[String] = &[];
        let mut active: Option<String> = None;
        for turn in turns {
            let resp_user = self.response_user(turn);
            let (delta, state, state_tokens, warnings, dst_context) = match mode {
                Mode::EndToEnd => {
                    let ctx = trace.is_some().then(|| self.dst_context(&pred_state, oracle_prev_resp, turn.user_lex()));
                    let pred = self.predict_turn_state(&pred_state, oracle_prev_resp, turn.user_lex());
                    let toks = self.state_tokens(&pred.state);
                    (pred.delta, pred.state, toks, pred.warnings, ctx)
                }
                Mode::PolicyOpt => {
                    let oracle = serialize_state(self.schema, turn.gold_state()).expect("corpus states are valid");
                    let (masked, _) = mask_tokens(&oracle, &tokens::MASK.to_string(), p, rng);
                    let (parsed, warnings) = parse_state(self.schema, &masked);
                    let delta = diff_state(self.schema, &pred_state, &parsed);
                    (delta, parsed, masked, warnings, None)
                }
            };
            let domain_delta = match mode {
                Mode::EndToEnd => &delta,
                Mode::PolicyOpt => turn.gold_delta(),
            };
            let domain = active_domain(self.schema, domain_delta, active.as_deref()).to_string();
            let db_result = query_db(self.schema, self.db, &state, &domain);
            let resp_delex = self.predict_response_tokens(&state_tokens, &gen_prev_resp, resp_user, db_state_id(&db_result).index());
            if let Some(tr) = trace.as_deref_mut() {
                tr.push(TurnTrace { dst_context, resp_context: join_context(&[&state_tokens, &gen_prev_resp, resp_user]) });
            }
            let resp_lex = relexicalize(self.schema, self.db, &resp_delex, &db_result, &state);
            out.push(PredictedTurn {
                pred_delta: delta,
                pred_state: state.clone(),
                db: DbSummary::from(&db_result),
                resp_delex: resp_delex.clone(),
                resp_lex,
                warnings,
            });
            pred_state = state;
            gen_prev_resp = resp_delex;
            oracle_prev_resp = turn.resp_delex();
            active = Some(domain);
        }
        out
    }

    /// Rolls out every session. Policy-optimization noise for a session is
    /// drawn from a stream keyed by the session id.
    pub fn run_sessions(&self, sessions: &[Session], mode: Mode, p: f64, seed: u64) -> Vec<SessionRun> {
        let streams = RngStreams::new(seed);
        sessions
            .iter()
            .map(|s| {
                let mut rng = streams.stream(&format!("policy-noise/{}", s.id));
                SessionRun { session_id: s.id.clone(), turns: self.rollout_session(&s.turns, mode, p, &mut rng, None) }
            })
            .collect()
    }
}

/// Context tokens as fed to the encoder (segments joined by `<sep>`, empty
/// segments as `<pad>`).
pub fn join_context(segments: &[&[String]]) -> Vec<String> {
    let mut out = Vec::new();
    for (i, seg) in segments.iter().enumerate() {
        if i > 0 {
            out.push(tokens::SEP.to_string());
        }
        if seg.is_empty() {
            out.push(tokens::PAD.to_string());
        } else {
            out.extend(seg.iter().cloned());
        }
    }
    out
}
