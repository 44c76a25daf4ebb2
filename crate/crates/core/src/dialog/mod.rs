//! Dialog-state algebra, canonical serialization, delexicalization and the
//! entity database.

mod db;
mod delex;
mod schema;
mod serial;
mod state;

pub use db::{db_state_id, match_bucket, query_db, Database, DbResult, DbStateId, Entity};
pub use delex::{delexicalize, detect_spans, relexicalize, tokenize, validate_spans, Span};
pub use schema::{placeholder, DomainSpec, InformableSlot, Schema, SlotValues};
pub use serial::{parse_delta, parse_state, serialize_delta, serialize_state, serialize_state_aligned, TokenRole};
pub use state::{diff_state, merge_state, DialogState, Edit, LevenshteinState};

use thiserror::Error;

/// Reserved tokens shared by serialization, the vocabulary and the model.
pub mod tokens {
    pub const PAD: &str = "<pad>";
    pub const BOS: &str = "<bos>";
    pub const EOS: &str = "<eos>";
    pub const MASK: &str = "<mask>";
    pub const NULL: &str = "<null>";
    pub const SEP: &str = "<sep>";
    pub const UNK: &str = "<unk>";
    pub const SEMI: &str = ";";
    pub const EQ: &str = "=";
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DialogError {
    #[error("schema violation: {domain}.{slot} is not an informable slot")]
    SchemaViolation { domain: String, slot: String },
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("invalid database: {0}")]
    InvalidDb(String),
    #[error("invalid span [{start}, {end}) over {len} tokens")]
    InvalidSpan { start: usize, end: usize, len: usize },
    #[error("db state id {0} out of range 0..10")]
    DbStateOutOfRange(usize),
}

/// Lowercase, single-space-separated form used for every value comparison.
pub fn normalize_value(v: &str) -> String {
    v.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>().join(" ")
}

/// Domain the DB is queried for at a turn: the domain of the first edit of
/// the turn's delta, else the previous turn's active domain, else the first
/// schema domain.
pub fn active_domain<'a>(schema: &'a Schema, delta: &'a LevenshteinState, prev: Option<&'a str>) -> &'a str {
    delta
        .first_domain()
        .or(prev)
        .or_else(|| schema.domains().first().map(|d| d.name.as_str()))
        .unwrap_or("")
}

/// Words used for free-text slot values by [`random_state`].
const FREE_WORDS: [&str; 8] = ["cambridge", "station", "museum", "10:30", "17:45", "the", "airport", "college"];

/// Random state over `schema`: each informable slot is present with
/// probability ½, lexicon slots take a lexicon value and free slots one to
/// three words.
pub fn random_state<R: rand::Rng + ?Sized>(schema: &Schema, rng: &mut R) -> DialogState {
    let mut s = DialogState::new();
    for d in schema.domains() {
        for slot in &d.informable {
            if !rng.gen_bool(0.5) {
                continue;
            }
            let value = match &slot.values {
                SlotValues::Lexicon(vals) => vals[rng.gen_range(0..vals.len())].clone(),
                SlotValues::Free => {
                    let n = rng.gen_range(1..=3);
                    (0..n).map(|_| FREE_WORDS[rng.gen_range(0..FREE_WORDS.len())]).collect::<Vec<_>>().join(" ")
                }
            };
            s.set(&d.name, &slot.name, &value);
        }
    }
    s
}
