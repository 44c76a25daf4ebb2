use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{normalize_value, DialogError, Schema};

/// Accumulated belief state: domain → slot → value.
///
/// Values are stored normalized (lowercase, single-spaced). The map order is
/// lexicographic; canonical order is only applied when serializing against a
/// [`Schema`], so two states are equal regardless of insertion order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DialogState {
    domains: BTreeMap<String, BTreeMap<String, String>>,
}

impl DialogState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.domains.is_empty()
    }

    /// Number of (domain, slot) entries.
    pub fn len(&self) -> usize {
        self.domains.values().map(BTreeMap::len).sum()
    }

    /// Sets a slot. Empty values are ignored since a state never holds one.
    pub fn set(&mut self, domain: &str, slot: &str, value: &str) {
        let v = normalize_value(value);
        if v.is_empty() {
            return;
        }
        self.domains.entry(domain.to_string()).or_default().insert(slot.to_string(), v);
    }

    /// Removes a slot, dropping the domain when it becomes empty.
    pub fn remove(&mut self, domain: &str, slot: &str) -> Option<String> {
        let slots = self.domains.get_mut(domain)?;
        let old = slots.remove(slot);
        if slots.is_empty() {
            self.domains.remove(domain);
        }
        old
    }

    pub fn get(&self, domain: &str, slot: &str) -> Option<&str> {
        self.domains.get(domain)?.get(slot).map(String::as_str)
    }

    pub fn domain(&self, domain: &str) -> Option<&BTreeMap<String, String>> {
        self.domains.get(domain)
    }

    pub fn domain_names(&self) -> impl Iterator<Item = &str> {
        self.domains.keys().map(String::as_str)
    }

    /// Iterates `(domain, slot, value)` in lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, &str)> {
        self.domains
            .iter()
            .flat_map(|(d, slots)| slots.iter().map(move |(s, v)| (d.as_str(), s.as_str(), v.as_str())))
    }

    /// Entries in schema order. Fails on any domain or slot the schema lacks.
    pub fn canonical_entries<'a>(&'a self, schema: &Schema) -> Result<Vec<(&'a str, &'a str, &'a str)>, DialogError> {
        let mut entries = Vec::with_capacity(self.len());
        for (d, s, v) in self.iter() {
            let key = schema
                .order_key(d, s)
                .ok_or_else(|| DialogError::SchemaViolation { domain: d.into(), slot: s.into() })?;
            entries.push((key, (d, s, v)));
        }
        entries.sort_by_key(|(k, _)| *k);
        Ok(entries.into_iter().map(|(_, e)| e).collect())
    }

    /// True when every entry is a known informable slot.
    pub fn validate(&self, schema: &Schema) -> Result<(), DialogError> {
        self.canonical_entries(schema).map(|_| ())
    }

    /// Subset relation over entries.
    pub fn is_subset_of(&self, other: &DialogState) -> bool {
        self.iter().all(|(d, s, v)| other.get(d, s) == Some(v))
    }
}

/// One edit of a Levenshtein state; `value == None` is the NULL symbol.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Edit {
    pub domain: String,
    pub slot: String,
    pub value: Option<String>,
}

impl Edit {
    pub fn set(domain: &str, slot: &str, value: &str) -> Self {
        Self { domain: domain.into(), slot: slot.into(), value: Some(normalize_value(value)) }
    }

    pub fn delete(domain: &str, slot: &str) -> Self {
        Self { domain: domain.into(), slot: slot.into(), value: None }
    }
}

/// Ordered edit list turning one dialog state into the next.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LevenshteinState {
    pub edits: Vec<Edit>,
}

impl LevenshteinState {
    pub fn new(edits: Vec<Edit>) -> Self {
        Self { edits }
    }

    pub fn is_empty(&self) -> bool {
        self.edits.is_empty()
    }

    pub fn len(&self) -> usize {
        self.edits.len()
    }

    /// Sorts edits into schema order, keeping the last edit per (domain, slot)
    /// and dropping edits the schema does not know. Returns the number of
    /// dropped edits.
    pub fn canonicalize(&mut self, schema: &Schema) -> usize {
        let mut keyed: BTreeMap<(usize, usize), Edit> = BTreeMap::new();
        let mut dropped = 0;
        for e in self.edits.drain(..) {
            match schema.order_key(&e.domain, &e.slot) {
                Some(k) => {
                    keyed.insert(k, e);
                }
                None => dropped += 1,
            }
        }
        self.edits = keyed.into_values().collect();
        dropped
    }

    /// Domain of the first edit.
    pub fn first_domain(&self) -> Option<&str> {
        self.edits.first().map(|e| e.domain.as_str())
    }
}

impl Serialize for LevenshteinState {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serde_json::Map::new();
        for e in &self.edits {
            let entry = map
                .entry(e.domain.clone())
                .or_insert_with(|| serde_json::Value::Object(serde_json::Map::new()));
            if let serde_json::Value::Object(slots) = entry {
                let v = match &e.value {
                    Some(v) => serde_json::Value::String(v.clone()),
                    None => serde_json::Value::Null,
                };
                slots.insert(e.slot.clone(), v);
            }
        }
        map.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for LevenshteinState {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let map = serde_json::Map::<String, serde_json::Value>::deserialize(deserializer)?;
        let mut edits = Vec::new();
        for (domain, slots) in map {
            let serde_json::Value::Object(slots) = slots else {
                return Err(serde::de::Error::custom(format!("domain {domain}: expected object")));
            };
            for (slot, v) in slots {
                let value = match v {
                    serde_json::Value::Null => None,
                    serde_json::Value::String(s) => Some(normalize_value(&s)),
                    other => return Err(serde::de::Error::custom(format!("{domain}.{slot}: bad value {other}"))),
                };
                edits.push(Edit { domain: domain.clone(), slot, value });
            }
        }
        Ok(Self { edits })
    }
}

/// Applies a Levenshtein state to the previous dialog state.
///
/// NULL edits delete (a no-op when the slot is absent); other edits insert or
/// overwrite. Domains left without slots disappear.
pub fn merge_state(delta: &LevenshteinState, prev: &DialogState) -> DialogState {
    let mut next = prev.clone();
    for e in &delta.edits {
        match &e.value {
            None => {
                next.remove(&e.domain, &e.slot);
            }
            Some(v) => next.set(&e.domain, &e.slot, v),
        }
    }
    next
}

/// Minimal edit list with `merge_state(diff_state(a, b), a) == b`, in schema
/// order.
pub fn diff_state(schema: &Schema, prev: &DialogState, curr: &DialogState) -> LevenshteinState {
    let mut edits = Vec::new();
    for (d, s, _) in prev.iter() {
        if curr.get(d, s).is_none() {
            edits.push(Edit::delete(d, s));
        }
    }
    for (d, s, v) in curr.iter() {
        if prev.get(d, s) != Some(v) {
            edits.push(Edit::set(d, s, v));
        }
    }
    // Unknown pairs sort last but are kept so the inverse property holds for
    // any pair of states.
    edits.sort_by_key(|e| schema.order_key(&e.domain, &e.slot).unwrap_or((usize::MAX, usize::MAX)));
    LevenshteinState { edits }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(entries: &[(&str, &str, &str)]) -> DialogState {
        let mut s = DialogState::new();
        for (d, sl, v) in entries {
            s.set(d, sl, v);
        }
        s
    }

    #[test]
    fn merge_empty_delta_is_identity() {
        let b = st(&[("hotel", "area", "north")]);
        assert_eq!(merge_state(&LevenshteinState::default(), &b), b);
    }

    #[test]
    fn merge_null_deletes_and_drops_domain() {
        let b = st(&[("hotel", "area", "north")]);
        let d = LevenshteinState::new(vec![Edit::delete("hotel", "area")]);
        assert_eq!(merge_state(&d, &b), DialogState::new());
    }

    #[test]
    fn merge_null_on_absent_slot_is_noop() {
        let b = st(&[("hotel", "area", "north")]);
        let d = LevenshteinState::new(vec![Edit::delete("hotel", "stars"), Edit::delete("taxi", "leaveat")]);
        assert_eq!(merge_state(&d, &b), b);
    }

    #[test]
    fn merge_inserts_multi_token_value() {
        let d = LevenshteinState::new(vec![Edit::set("taxi", "destination", "stevenage train station")]);
        let out = merge_state(&d, &DialogState::new());
        assert_eq!(out.get("taxi", "destination"), Some("stevenage train station"));
    }

    #[test]
    fn merge_does_not_mutate_prev() {
        let b = st(&[("hotel", "area", "north")]);
        let snapshot = b.clone();
        let _ = merge_state(&LevenshteinState::new(vec![Edit::set("hotel", "area", "south")]), &b);
        assert_eq!(b, snapshot);
    }

    #[test]
    fn diff_examples() {
        let schema = Schema::default_synthetic();
        let b = st(&[("hotel", "area", "north"), ("hotel", "stars", "4")]);
        assert!(diff_state(&schema, &b, &b).is_empty());
        assert_eq!(
            diff_state(&schema, &DialogState::new(), &st(&[("hotel", "stars", "4")])).edits,
            vec![Edit::set("hotel", "stars", "4")]
        );
        let d = diff_state(&schema, &b, &st(&[("hotel", "stars", "5")]));
        assert_eq!(d.edits, vec![Edit::delete("hotel", "area"), Edit::set("hotel", "stars", "5")]);
        assert_eq!(merge_state(&d, &b), st(&[("hotel", "stars", "5")]));
    }

    #[test]
    fn diff_follows_schema_order() {
        let schema = Schema::default_synthetic();
        let cur = st(&[("taxi", "leaveat", "10:15"), ("hotel", "pricerange", "cheap"), ("hotel", "area", "east")]);
        let d = diff_state(&schema, &DialogState::new(), &cur);
        let slots: Vec<_> = d.edits.iter().map(|e| e.slot.as_str()).collect();
        assert_eq!(slots, ["area", "pricerange", "leaveat"]);
    }

    #[test]
    fn case_is_normalized() {
        assert_eq!(st(&[("hotel", "area", "North")]), st(&[("hotel", "area", " north ")]));
    }

    #[test]
    fn levenshtein_json_keeps_nulls() {
        let d = LevenshteinState::new(vec![Edit::delete("hotel", "area"), Edit::set("hotel", "stars", "5")]);
        let text = serde_json::to_string(&d).unwrap();
        assert_eq!(text, r#"{"hotel":{"area":null,"stars":"5"}}"#);
        let back: LevenshteinState = serde_json::from_str(&text).unwrap();
        assert_eq!(back, d);
    }
}
