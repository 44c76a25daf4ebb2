//! Canonical token form of dialog states and Levenshtein states:
//! `[<domain>] <slot> = <value tokens> ; <slot> = ... ; [<domain>] ...`

use super::tokens::{EOS, EQ, MASK, NULL, SEMI};
use super::{DialogError, DialogState, Edit, LevenshteinState, Schema};

/// What part of a state a serialized token belongs to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TokenRole {
    DomainTag(String),
    Slot { domain: String, slot: String },
}

/// Serializes a dialog state in schema order. An empty state gives no tokens.
pub fn serialize_state(schema: &Schema, state: &DialogState) -> Result<Vec<String>, DialogError> {
    Ok(serialize_state_aligned(schema, state)?.into_iter().map(|(t, _)| t).collect())
}

/// Like [`serialize_state`], tagging each token with the entry it belongs to.
/// The slot name, `=`, the value tokens and the trailing `;` all belong to
/// their slot.
pub fn serialize_state_aligned(
    schema: &Schema,
    state: &DialogState,
) -> Result<Vec<(String, TokenRole)>, DialogError> {
    let mut out = Vec::new();
    let mut current: Option<&str> = None;
    for (d, s, v) in state.canonical_entries(schema)? {
        if current != Some(d) {
            out.push((format!("[{d}]"), TokenRole::DomainTag(d.to_string())));
            current = Some(d);
        }
        let role = TokenRole::Slot { domain: d.to_string(), slot: s.to_string() };
        out.push((s.to_string(), role.clone()));
        out.push((EQ.to_string(), role.clone()));
        for tok in v.split_whitespace() {
            out.push((tok.to_string(), role.clone()));
        }
        out.push((SEMI.to_string(), role));
    }
    Ok(out)
}

/// Serializes a Levenshtein state in its stored order; NULL edits use `<null>`.
pub fn serialize_delta(delta: &LevenshteinState) -> Vec<String> {
    let mut out = Vec::new();
    let mut current: Option<&str> = None;
    for e in &delta.edits {
        if current != Some(e.domain.as_str()) {
            out.push(format!("[{}]", e.domain));
            current = Some(e.domain.as_str());
        }
        out.push(e.slot.clone());
        out.push(EQ.to_string());
        match &e.value {
            Some(v) => out.extend(v.split_whitespace().map(str::to_string)),
            None => out.push(NULL.to_string()),
        }
        out.push(SEMI.to_string());
    }
    out
}

/// Lenient parse of a dialog state. Malformed fragments are skipped and
/// counted; a repeated slot keeps its last value without a warning.
pub fn parse_state<S: AsRef<str>>(schema: &Schema, tokens: &[S]) -> (DialogState, usize) {
    let (entries, mut warnings) = parse_entries(schema, tokens);
    let mut state = DialogState::new();
    for (d, s, v) in entries {
        match v {
            Some(v) => state.set(&d, &s, &v),
            None => warnings += 1,
        }
    }
    (state, warnings)
}

/// Lenient parse of a Levenshtein state, returned in schema order.
pub fn parse_delta<S: AsRef<str>>(schema: &Schema, tokens: &[S]) -> (LevenshteinState, usize) {
    let (entries, warnings) = parse_entries(schema, tokens);
    let mut delta = LevenshteinState::new(entries.into_iter().map(|(domain, slot, value)| Edit { domain, slot, value }).collect());
    let dropped = delta.canonicalize(schema);
    (delta, warnings + dropped)
}

fn is_value_token(schema: &Schema, tok: &str) -> bool {
    let reserved = tok.starts_with('<') && tok.ends_with('>') && tok.len() > 2;
    let bracketed = tok.starts_with('[') && tok.ends_with(']');
    !(reserved || bracketed || tok == EQ || tok == SEMI || schema.domain_for_tag(tok).is_some())
}

type Entry = (String, String, Option<String>);

fn parse_entries<S: AsRef<str>>(schema: &Schema, tokens: &[S]) -> (Vec<Entry>, usize) {
    let toks: Vec<&str> = tokens.iter().map(AsRef::as_ref).take_while(|t| *t != EOS).collect();
    let mut entries = Vec::new();
    let mut warnings = 0;
    let mut domain: Option<&str> = None;
    let mut i = 0;
    while i < toks.len() {
        if let Some(d) = schema.domain_for_tag(toks[i]) {
            domain = Some(d.name.as_str());
            i += 1;
            continue;
        }
        // A fragment runs up to the next `;` or domain tag.
        let start = i;
        while i < toks.len() && toks[i] != SEMI && schema.domain_for_tag(toks[i]).is_none() {
            i += 1;
        }
        let frag = &toks[start..i];
        let terminated = i < toks.len() && toks[i] == SEMI;
        if terminated {
            i += 1;
        }
        if frag.is_empty() {
            if terminated {
                warnings += 1;
            }
            continue;
        }
        // `<mask> slot = ...` is read as a masked domain tag: the slots that
        // follow cannot be attributed to any domain.
        if frag[0] == MASK && frag.get(2) == Some(&EQ) {
            domain = None;
            warnings += 1;
            continue;
        }
        match parse_fragment(schema, domain, frag) {
            Some(e) => entries.push(e),
            None => warnings += 1,
        }
    }
    (entries, warnings)
}

fn parse_fragment(schema: &Schema, domain: Option<&str>, frag: &[&str]) -> Option<Entry> {
    let spec = schema.domain(domain?)?;
    let [slot, eq, value @ ..] = frag else { return None };
    if *eq != EQ || !spec.is_informable(slot) || value.is_empty() {
        return None;
    }
    if value == [NULL] {
        return Some((spec.name.clone(), slot.to_string(), None));
    }
    if !value.iter().all(|t| is_value_token(schema, t)) {
        return None;
    }
    Some((spec.name.clone(), slot.to_string(), Some(value.join(" "))))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn schema() -> Schema {
        Schema::default_synthetic()
    }

    #[test]
    fn serialize_examples() {
        let s = schema();
        assert!(serialize_state(&s, &DialogState::new()).unwrap().is_empty());
        let mut st = DialogState::new();
        st.set("hotel", "area", "north");
        assert_eq!(serialize_state(&s, &st).unwrap(), toks("[hotel] area = north ;"));
        st.set("taxi", "destination", "city station");
        st.set("hotel", "stars", "4");
        assert_eq!(
            serialize_state(&s, &st).unwrap(),
            toks("[hotel] area = north ; stars = 4 ; [taxi] destination = city station ;")
        );
        assert_eq!(parse_state(&s, &serialize_state(&s, &st).unwrap()), (st, 0));
    }

    #[test]
    fn serialize_unknown_slot_fails() {
        let mut st = DialogState::new();
        st.set("hotel", "parking", "yes");
        assert!(matches!(serialize_state(&schema(), &st), Err(DialogError::SchemaViolation { .. })));
    }

    #[test]
    fn empty_value_is_a_warning() {
        assert_eq!(parse_state(&schema(), &toks("[hotel] area = ;")), (DialogState::new(), 1));
    }

    #[test]
    fn duplicate_slot_last_wins_silently() {
        let (st, w) = parse_state(&schema(), &toks("[hotel] area = north ; area = south ;"));
        assert_eq!(st.get("hotel", "area"), Some("south"));
        assert_eq!(st.len(), 1);
        assert_eq!(w, 0);
    }

    #[test]
    fn malformed_fragment_skipped() {
        let (st, w) = parse_state(&schema(), &toks("[hotel] area north ; stars = 4 ; bogus = 1 ; [taxi] leaveat = 10:15 ;"));
        assert_eq!(w, 2);
        assert_eq!(st.get("hotel", "stars"), Some("4"));
        assert_eq!(st.get("taxi", "leaveat"), Some("10:15"));
    }

    #[test]
    fn masked_tag_drops_following_slots() {
        let (st, w) = parse_state(&schema(), &toks("[hotel] area = north ; <mask> food = chinese ; pricerange = cheap ;"));
        assert_eq!(st.len(), 1);
        assert_eq!(w, 2);
    }

    #[test]
    fn masked_value_is_rejected() {
        let (st, w) = parse_state(&schema(), &toks("[hotel] area = <mask> ; stars = 4 ;"));
        assert_eq!(st.len(), 1);
        assert_eq!(w, 1);
    }

    #[test]
    fn delta_roundtrip_with_null() {
        let s = schema();
        let d = LevenshteinState::new(vec![Edit::delete("hotel", "area"), Edit::set("taxi", "destination", "city station")]);
        let t = serialize_delta(&d);
        assert_eq!(t, toks("[hotel] area = <null> ; [taxi] destination = city station ;"));
        assert_eq!(parse_delta(&s, &t), (d, 0));
    }

    #[test]
    fn null_inside_state_is_a_warning() {
        assert_eq!(parse_state(&schema(), &toks("[hotel] area = <null> ;")), (DialogState::new(), 1));
    }

    #[test]
    fn parsing_stops_at_eos() {
        let (st, w) = parse_state(&schema(), &toks("[hotel] area = north ; <eos> garbage"));
        assert_eq!((st.len(), w), (1, 0));
    }

    #[test]
    fn alignment_covers_every_token() {
        let s = schema();
        let mut st = DialogState::new();
        st.set("hotel", "area", "north");
        st.set("taxi", "destination", "stevenage train station");
        let aligned = serialize_state_aligned(&s, &st).unwrap();
        assert_eq!(aligned.len(), serialize_state(&s, &st).unwrap().len());
        assert_eq!(aligned[0].1, TokenRole::DomainTag("hotel".into()));
        assert_eq!(aligned[4].1, TokenRole::Slot { domain: "hotel".into(), slot: "area".into() });
    }
}
