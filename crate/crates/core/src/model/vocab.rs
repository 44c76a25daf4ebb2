use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corpus::Session;
use crate::dialog::{serialize_delta, serialize_state, tokens, Schema, SlotValues};

pub const PAD_ID: usize = 0;
pub const BOS_ID: usize = 1;
pub const EOS_ID: usize = 2;
pub const MASK_ID: usize = 3;
pub const NULL_ID: usize = 4;
pub const SEMI_ID: usize = 5;
pub const SEP_ID: usize = 6;
pub const UNK_ID: usize = 7;
pub const EQ_ID: usize = 8;

const RESERVED: [&str; 9] =
    [tokens::PAD, tokens::BOS, tokens::EOS, tokens::MASK, tokens::NULL, tokens::SEMI, tokens::SEP, tokens::UNK, tokens::EQ];

#[derive(Debug, thiserror::Error)]
pub enum VocabError {
    #[error("duplicate token {0:?}")]
    Duplicate(String),
    #[error("reserved token {token:?} must have id {expected}")]
    Reserved { token: String, expected: usize },
}

/// Token ↔ id bijection. Reserved tokens occupy ids 0..9, followed by domain
/// tags, slot names and placeholders in schema order, then corpus words in
/// lexicographic order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, VocabError> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(VocabError::Duplicate(t.clone()));
            }
        }
        for (i, r) in RESERVED.iter().enumerate() {
            if index.get(*r) != Some(&i) {
                return Err(VocabError::Reserved { token: r.to_string(), expected: i });
            }
        }
        Ok(Self { tokens, index })
    }

    /// Builds the vocabulary from the schema and the training sessions.
    pub fn build(schema: &Schema, train: &[Session]) -> Self {
        let mut ordered: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let mut seen: BTreeSet<String> = ordered.iter().cloned().collect();
        let mut push = |t: String, ordered: &mut Vec<String>| {
            if seen.insert(t.clone()) {
                ordered.push(t);
            }
        };
        for d in schema.domains() {
            push(d.tag(), &mut ordered);
        }
        for d in schema.domains() {
            for s in &d.informable {
                push(s.name.clone(), &mut ordered);
            }
            for s in &d.requestable {
                push(s.clone(), &mut ordered);
            }
        }
        for d in schema.domains() {
            push(d.placeholder("name"), &mut ordered);
            for s in &d.informable {
                push(d.placeholder(&s.name), &mut ordered);
            }
            for s in &d.requestable {
                push(d.placeholder(s), &mut ordered);
            }
        }
        let mut words = BTreeSet::new();
        for d in schema.domains() {
            for s in &d.informable {
                if let SlotValues::Lexicon(values) = &s.values {
                    for v in values {
                        words.extend(v.split_whitespace().map(str::to_string));
                    }
                }
            }
        }
        for session in train {
            for turn in &session.turns {
                words.extend(turn.user_lex.iter().cloned());
                words.extend(turn.user_delex.iter().cloned());
                words.extend(turn.resp_delex.iter().cloned());
                words.extend(serialize_delta(&turn.gold_delta));
                if let Ok(s) = serialize_state(schema, &turn.gold_state) {
                    words.extend(s);
                }
            }
        }
        for w in words {
            push(w, &mut ordered);
        }
        Self::from_tokens(ordered).expect("constructed without duplicates")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Id of `token`, or `<unk>`.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map(String::as_str).unwrap_or(tokens::UNK)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    /// Encoder context: segments joined by `<sep>`, an empty segment
    /// standing as a single `<pad>`.
    pub fn context<S: AsRef<str>>(&self, segments: &[&[S]]) -> Vec<usize> {
        let mut out = Vec::new();
        for (i, seg) in segments.iter().enumerate() {
            if i > 0 {
                out.push(SEP_ID);
            }
            if seg.is_empty() {
                out.push(PAD_ID);
            } else {
                out.extend(seg.iter().map(|t| self.id(t.as_ref())));
            }
        }
        out
    }

    /// Token strings for `ids`, stopping before the first `<eos>`.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().take_while(|&&i| i != EOS_ID).map(|&i| self.token(i).to_string()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.tokens).expect("string list serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

impl Serialize for Vocab {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.tokens.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Vocab {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let tokens = Vec::<String>::deserialize(deserializer)?;
        Self::from_tokens(tokens).map_err(serde::de::Error::custom)
    }
}
