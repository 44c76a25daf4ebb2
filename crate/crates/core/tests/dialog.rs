use bort_core::dialog::{
    db_state_id, delexicalize, diff_state, merge_state, parse_delta, parse_state, query_db, random_state, relexicalize,
    serialize_delta, serialize_state, tokenize, Database, DialogState, Edit, LevenshteinState, Schema,
};
use bort_core::rng::RngStreams;
use proptest::prelude::*;

fn state(seed: u64, label: &str) -> DialogState {
    random_state(&Schema::default_synthetic(), &mut RngStreams::new(seed).stream(label))
}

fn edit_strategy() -> impl Strategy<Value = Edit> {
    let domain = prop::sample::select(vec!["hotel", "restaurant", "taxi", "police"]);
    let slot = prop::sample::select(vec!["area", "stars", "food", "destination", "leaveat", "colour"]);
    let value = prop::option::of(prop::sample::select(vec!["north", "4", "cheap", "city centre", "10:30"]));
    (domain, slot, value).prop_map(|(d, s, v)| match v {
        Some(v) => Edit::set(d, s, v),
        None => Edit::delete(d, s),
    })
}

proptest! {
    #[test]
    fn merge_inverts_diff(a in any::<u64>(), b in any::<u64>()) {
        let schema = Schema::default_synthetic();
        let (sa, sb) = (state(a, "a"), state(b, "b"));
        let delta = diff_state(&schema, &sa, &sb);
        prop_assert_eq!(merge_state(&delta, &sa), sb.clone());
        // One edit per changed slot, none for a slot that stays.
        let changed = sa.iter().filter(|(d, s, v)| sb.get(d, s) != Some(*v)).count()
            + sb.iter().filter(|(d, s, _)| sa.get(d, s).is_none()).count();
        prop_assert_eq!(delta.len(), changed);
        prop_assert!(diff_state(&schema, &sa, &sa).is_empty());
    }

    #[test]
    fn diff_is_in_schema_order(a in any::<u64>(), b in any::<u64>()) {
        let schema = Schema::default_synthetic();
        let delta = diff_state(&schema, &state(a, "a"), &state(b, "b"));
        let keys: Vec<_> = delta.edits.iter().map(|e| schema.order_key(&e.domain, &e.slot).unwrap()).collect();
        prop_assert!(keys.windows(2).all(|w| w[0] < w[1]));
        let mut canon = delta.clone();
        prop_assert_eq!(canon.canonicalize(&schema), 0);
        prop_assert_eq!(canon, delta);
    }

    #[test]
    fn state_roundtrip_without_warnings(seed in any::<u64>()) {
        let schema = Schema::default_synthetic();
        let s = state(seed, "s");
        let tokens = serialize_state(&schema, &s).unwrap();
        let (back, warnings) = parse_state(&schema, &tokens);
        prop_assert_eq!(warnings, 0);
        prop_assert_eq!(back, s);
    }

    #[test]
    fn delta_roundtrip_without_warnings(a in any::<u64>(), b in any::<u64>()) {
        let schema = Schema::default_synthetic();
        let delta = diff_state(&schema, &state(a, "a"), &state(b, "b"));
        let (back, warnings) = parse_delta(&schema, &serialize_delta(&delta));
        prop_assert_eq!(warnings, 0);
        prop_assert_eq!(back, delta);
    }

    #[test]
    fn merge_applies_edits_in_order(edits in prop::collection::vec(edit_strategy(), 0..12), seed in any::<u64>()) {
        let prev = state(seed, "prev");
        let merged = merge_state(&LevenshteinState::new(edits.clone()), &prev);
        for e in &edits {
            let last = edits.iter().rev().find(|x| x.domain == e.domain && x.slot == e.slot).unwrap();
            prop_assert_eq!(merged.get(&e.domain, &e.slot), last.value.as_deref());
        }
        for (d, s, v) in prev.iter() {
            if !edits.iter().any(|e| e.domain == d && e.slot == s) {
                prop_assert_eq!(merged.get(d, s), Some(v));
            }
        }
    }

    #[test]
    fn canonicalize_drops_and_counts_unknown(edits in prop::collection::vec(edit_strategy(), 0..12)) {
        let schema = Schema::default_synthetic();
        let unknown = edits.iter().filter(|e| schema.order_key(&e.domain, &e.slot).is_none()).count();
        let mut delta = LevenshteinState::new(edits);
        let dropped = delta.canonicalize(&schema);
        prop_assert_eq!(dropped, unknown);
        prop_assert!(delta.edits.iter().all(|e| schema.order_key(&e.domain, &e.slot).is_some()));
    }

    #[test]
    fn levenshtein_json_roundtrip(a in any::<u64>(), b in any::<u64>()) {
        let schema = Schema::default_synthetic();
        let delta = diff_state(&schema, &state(a, "a"), &state(b, "b"));
        let json = serde_json::to_string(&delta).unwrap();
        let back: LevenshteinState = serde_json::from_str(&json).unwrap();
        let mut canon = back.clone();
        canon.canonicalize(&schema);
        prop_assert_eq!(canon, delta);
    }

    #[test]
    fn db_state_id_in_range(seed in any::<u64>()) {
        let schema = Schema::default_synthetic();
        let db = Database::generate(&schema, 40, 17);
        let s = state(seed, "q");
        for d in schema.domains() {
            let r = query_db(&schema, &db, &s, &d.name);
            prop_assert!(db_state_id(&r).index() < 10);
            prop_assert_eq!(r.match_count, r.matched_entities.len());
            for id in &r.matched_entities {
                let e = db.get(id).unwrap();
                for (slot, v) in s.domain(&d.name).into_iter().flatten() {
                    prop_assert_eq!(e.attributes.get(slot), Some(v));
                }
            }
        }
    }
}

#[test]
fn delete_of_absent_slot_is_noop() {
    let mut prev = DialogState::new();
    prev.set("hotel", "area", "north");
    let delta = LevenshteinState::new(vec![Edit::delete("hotel", "stars")]);
    assert_eq!(merge_state(&delta, &prev), prev);
}

#[test]
fn unknown_slot_in_delta_is_dropped_with_warning() {
    let schema = Schema::default_synthetic();
    let toks: Vec<String> = "[hotel] area = north ; colour = blue ;".split(' ').map(String::from).collect();
    let (delta, warnings) = parse_delta(&schema, &toks);
    assert_eq!(delta.edits, vec![Edit::set("hotel", "area", "north")]);
    assert_eq!(warnings, 1);
}

#[test]
fn serialized_form() {
    let schema = Schema::default_synthetic();
    let mut s = DialogState::new();
    s.set("taxi", "destination", "City  Station");
    s.set("hotel", "stars", "4");
    s.set("hotel", "area", "north");
    assert_eq!(
        serialize_state(&schema, &s).unwrap().join(" "),
        "[hotel] area = north ; stars = 4 ; [taxi] destination = city station ;"
    );
    assert!(serialize_state(&schema, &DialogState::new()).unwrap().is_empty());
}

#[test]
fn delex_relex_roundtrip_on_generated_db() {
    let schema = Schema::default_synthetic();
    let db = Database::generate(&schema, 40, 17);
    let mut s = DialogState::new();
    s.set("hotel", "area", "north");
    let r = query_db(&schema, &db, &s, "hotel");
    let e = r.first_match(&db).unwrap();
    let delex: Vec<&str> = "[hotel_name] is in the [hotel_area] , call [hotel_phone] .".split(' ').collect();
    let lex = relexicalize(&schema, &db, &delex, &r, &s);
    let mut expect = Vec::new();
    expect.extend(e.name().unwrap().split_whitespace().map(String::from));
    expect.extend("is in the north , call".split(' ').map(String::from));
    expect.extend(e.attributes["phone"].split_whitespace().map(String::from));
    expect.push(".".into());
    assert_eq!(lex, expect);

    // Placeholders of another domain stay verbatim.
    let other = relexicalize(&schema, &db, &["[restaurant_phone]"], &r, &s);
    assert_eq!(other, vec!["[restaurant_phone]"]);
}

#[test]
fn delexicalize_rejects_overlap() {
    use bort_core::dialog::Span;
    let toks = ["a", "b", "c"];
    let spans = [
        Span { start: 0, end: 2, domain: "hotel".into(), slot: "area".into() },
        Span { start: 1, end: 3, domain: "hotel".into(), slot: "stars".into() },
    ];
    assert!(delexicalize(&toks, &spans).is_err());
}

#[test]
fn tokenizer_keeps_times_and_placeholders_apart() {
    assert_eq!(tokenize("Leave at 10:15, please!"), vec!["leave", "at", "10:15", ",", "please", "!"]);
}
