use crate::corpus::Session;
use crate::dialog::{active_domain, db_state_id, query_db, serialize_delta, serialize_state, Database, DialogState, Schema};
use crate::model::{Vocab, EOS_ID};

/// Everything one training turn needs, with the teacher-forced contexts
/// already encoded.
#[derive(Clone, Debug)]
pub struct TurnExample {
    pub session: String,
    pub turn: usize,
    /// `C(t)`: previous state, previous response, lexical user utterance.
    pub dst_context: Vec<usize>,
    pub delta_target: Vec<usize>,
    /// Current state, previous response, user utterance (delexicalized when
    /// the switch is on).
    pub resp_context: Vec<usize>,
    pub resp_target: Vec<usize>,
    pub db_id: usize,
    /// `C(t)` followed by `<eos>`.
    pub recon_target: Vec<usize>,
    /// Absent at the first turn.
    pub prev: Option<PrevTurn>,
}

#[derive(Clone, Debug)]
pub struct PrevTurn {
    pub state: DialogState,
    pub state_tokens: Vec<String>,
    pub resp_tokens: Vec<String>,
    pub resp_target: Vec<usize>,
    pub db_id: usize,
    pub user_lex: Vec<String>,
    /// The user utterance in the form fed to response generation.
    pub user_resp: Vec<String>,
    pub state_now: Vec<String>,
}

fn with_eos(mut ids: Vec<usize>) -> Vec<usize> {
    ids.push(EOS_ID);
    ids
}

/// Builds the per-turn examples of `sessions` in corpus order.
pub fn build_examples(schema: &Schema, db: &Database, vocab: &Vocab, sessions: &[Session], user_delex: bool) -> Vec<TurnExample> {
    let mut out = Vec::new();
    for session in sessions {
        let mut prev_state = DialogState::new();
        let mut prev_resp: Vec<String> = Vec::new();
        let mut prev_db: Option<usize> = None;
        let mut active: Option<String> = None;
        for (i, turn) in session.turns.iter().enumerate() {
            let prev_tokens = serialize_state(schema, &prev_state).expect("corpus states are valid");
            let cur_tokens = serialize_state(schema, &turn.gold_state).expect("corpus states are valid");
            let user_resp = if user_delex { &turn.user_delex } else { &turn.user_lex };
            let dst_context = vocab.context(&[&prev_tokens[..], &prev_resp[..], &turn.user_lex[..]]);
            let resp_context = vocab.context(&[&cur_tokens[..], &prev_resp[..], &user_resp[..]]);
            let domain = active_domain(schema, &turn.gold_delta, active.as_deref()).to_string();
            let db_id = db_state_id(&query_db(schema, db, &turn.gold_state, &domain)).index();
            let prev = prev_db.map(|prev_db_id| PrevTurn {
                state: prev_state.clone(),
                state_tokens: prev_tokens.clone(),
                resp_tokens: prev_resp.clone(),
                resp_target: with_eos(vocab.encode(&prev_resp)),
                db_id: prev_db_id,
                user_lex: turn.user_lex.clone(),
                user_resp: user_resp.clone(),
                state_now: cur_tokens.clone(),
            });
            out.push(TurnExample {
                session: session.id.clone(),
                turn: i,
                recon_target: with_eos(dst_context.clone()),
                dst_context,
                delta_target: with_eos(vocab.encode(&serialize_delta(&turn.gold_delta))),
                resp_context,
                resp_target: with_eos(vocab.encode(&turn.resp_delex)),
                db_id,
                prev,
            });
            prev_state = turn.gold_state.clone();
            prev_resp = turn.resp_delex.clone();
            prev_db = Some(db_id);
            active = Some(domain);
        }
    }
    out
}
