use serde::{Deserialize, Serialize};

use super::{placeholder, Database, DbResult, DialogError, DialogState, Schema, SlotValues};

/// Half-open token span `[start, end)` carrying a slot value.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub domain: String,
    pub slot: String,
}

/// Checks that spans are sorted, non-empty, in bounds and non-overlapping.
pub fn validate_spans(len: usize, spans: &[Span]) -> Result<(), DialogError> {
    let mut prev_end = 0;
    for (i, s) in spans.iter().enumerate() {
        if s.start >= s.end || s.end > len || (i > 0 && s.start < prev_end) {
            return Err(DialogError::InvalidSpan { start: s.start, end: s.end, len });
        }
        prev_end = s.end;
    }
    Ok(())
}

/// Replaces each span by a single `[<domain>_<slot>]` placeholder.
pub fn delexicalize<S: AsRef<str>>(tokens: &[S], spans: &[Span]) -> Result<Vec<String>, DialogError> {
    validate_spans(tokens.len(), spans)?;
    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    for s in spans {
        out.extend(tokens[i..s.start].iter().map(|t| t.as_ref().to_string()));
        out.push(placeholder(&s.domain, &s.slot));
        i = s.end;
    }
    out.extend(tokens[i..].iter().map(|t| t.as_ref().to_string()));
    Ok(out)
}

/// Fills placeholders of a delexicalized response.
///
/// `[<domain>_name]` and requestable placeholders come from the first matched
/// entity of `db_result` (only for its own domain); informable placeholders
/// come from the state. Anything unfillable stays verbatim.
pub fn relexicalize<S: AsRef<str>>(
    schema: &Schema,
    db: &Database,
    delex: &[S],
    db_result: &DbResult,
    state: &DialogState,
) -> Vec<String> {
    let entity = db_result.first_match(db);
    let mut out = Vec::with_capacity(delex.len());
    for tok in delex {
        let tok = tok.as_ref();
        let fill = schema.split_placeholder(tok).and_then(|(d, slot)| {
            if d.is_informable(slot) {
                if let Some(v) = state.get(&d.name, slot) {
                    return Some(v.to_string());
                }
            }
            if d.name != db_result.domain {
                return None;
            }
            entity.and_then(|e| e.attributes.get(slot)).cloned()
        });
        match fill {
            Some(v) => out.extend(v.split_whitespace().map(str::to_string)),
            None => out.push(tok.to_string()),
        }
    }
    out
}

/// Lowercases and splits raw text into tokens, separating punctuation other
/// than `:` (kept inside times like `02:15`) and `'`.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.to_lowercase().chars() {
        if ch.is_alphanumeric() || ch == ':' || ch == '\'' || ch == '_' {
            cur.push(ch);
        } else {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            if !ch.is_whitespace() {
                out.push(ch.to_string());
            }
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Finds lexicon values in a token sequence, longest match first, scanning
/// left to right. A value shared by several domains goes to `prefer` when
/// given, else to the first domain in schema order. Free-text slots are never
/// matched.
pub fn detect_spans<S: AsRef<str>>(schema: &Schema, tokens: &[S], prefer: Option<&str>) -> Vec<Span> {
    let mut lexicon: Vec<(Vec<&str>, &str, &str)> = Vec::new();
    for d in schema.domains() {
        for s in &d.informable {
            if let SlotValues::Lexicon(values) = &s.values {
                for v in values {
                    lexicon.push((v.split_whitespace().collect(), d.name.as_str(), s.name.as_str()));
                }
            }
        }
    }
    lexicon.sort_by_key(|(v, d, _)| (std::cmp::Reverse(v.len()), Some(*d) != prefer));
    let toks: Vec<&str> = tokens.iter().map(AsRef::as_ref).collect();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        let hit = lexicon
            .iter()
            .find(|(v, _, _)| !v.is_empty() && toks.len() - i >= v.len() && toks[i..i + v.len()] == v[..]);
        match hit {
            Some((v, d, s)) => {
                spans.push(Span { start: i, end: i + v.len(), domain: d.to_string(), slot: s.to_string() });
                i += v.len();
            }
            None => i += 1,
        }
    }
    spans
}
