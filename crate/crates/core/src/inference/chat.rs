use serde::{Deserialize, Serialize};

use super::Predictor;
use crate::dialog::{
    active_domain, db_state_id, delexicalize, detect_spans, query_db, relexicalize, tokenize, DialogState, LevenshteinState,
};
use crate::model::Scalar;

/// Attached to every live turn: without an oracle, state tracking reads the
/// generated previous response.
pub const PROTOCOL_NOTE: &str =
    "live chat: dialog state tracking conditions on the generated previous response (no oracle response exists)";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatDb {
    pub domain: String,
    pub match_count: usize,
    pub bookable: bool,
    pub bucket_id: usize,
}

/// One system turn as returned by the HTTP API.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub levenshtein_state: LevenshteinState,
    pub merged_state: DialogState,
    pub db: ChatDb,
    pub response_delex: String,
    pub response_lex: String,
    pub warnings: Vec<String>,
    pub protocol_note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    System,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub role: Role,
    pub text: String,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    pub system: Option<ChatTurn>,
}

/// State of one live conversation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ChatSession {
    pub state: DialogState,
    pub prev_response: Vec<String>,
    pub active_domain: Option<String>,
    pub turns: usize,
    pub transcript: Vec<TranscriptEntry>,
}

impl ChatSession {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn respond<T: Scalar>(&mut self, predictor: &Predictor<'_, T>, text: &str) -> ChatTurn {
        let schema = predictor.schema;
        let user = tokenize(text);
        let pred = predictor.predict_turn_state(&self.state, &self.prev_response, &user);
        let mut warnings = Vec::new();
        if pred.warnings > 0 {
            warnings.push(format!("{} malformed state fragment(s) skipped: {}", pred.warnings, pred.tokens.join(" ")));
        }
        let domain = active_domain(schema, &pred.delta, self.active_domain.as_deref()).to_string();
        let db_result = query_db(schema, predictor.db, &pred.state, &domain);
        let resp_user = if predictor.params.config.user_delex {
            let spans = detect_spans(schema, &user, Some(&domain));
            delexicalize(&user, &spans).expect("detected spans are valid")
        } else {
            user.clone()
        };
        let resp = predictor.predict_turn_response(&self.prev_response, &resp_user, &pred.state, &db_result);
        if resp.is_empty() {
            warnings.push("empty response decoded".into());
        }
        let lex = relexicalize(schema, predictor.db, &resp, &db_result, &pred.state);
        let turn = ChatTurn {
            levenshtein_state: pred.delta,
            merged_state: pred.state.clone(),
            db: ChatDb {
                domain: db_result.domain.clone(),
                match_count: db_result.match_count,
                bookable: db_result.bookable,
                bucket_id: db_state_id(&db_result).index(),
            },
            response_delex: resp.join(" "),
            response_lex: lex.join(" "),
            warnings,
            protocol_note: PROTOCOL_NOTE.into(),
        };
        self.transcript.push(TranscriptEntry { role: Role::User, text: text.to_string(), system: None });
        self.transcript.push(TranscriptEntry { role: Role::System, text: turn.response_lex.clone(), system: Some(turn.clone()) });
        self.state = pred.state;
        self.prev_response = resp;
        self.active_domain = Some(domain);
        self.turns += 1;
        turn
    }
}
