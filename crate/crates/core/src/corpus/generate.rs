//! Template-grammar dialog simulator.
//!
//! A session samples a goal over one or two domains and then alternates
//! templated user acts (inform, change, drop, don't-care, request, bye) with
//! system acts (request a missing slot, offer `[<domain>_name]`, report no
//! match, answer requestables, book, bye). Gold states, Levenshtein deltas
//! and value spans are recorded as the simulation goes.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{Corpus, CorpusError, Goal, GoalDomain, Session, SlotRef, SplitCounts, Turn};
use crate::dialog::{
    delexicalize, diff_state, placeholder, query_db, relexicalize, Database, DialogState, DomainSpec, Schema,
    SlotValues, Span,
};
use crate::rng::{RngStreams, StreamRng};

/// Upper bound on turns per session.
pub const MAX_TURNS: usize = 8;

const MAX_ATTEMPTS: usize = 200;

/// Generates train/dev/test splits. Every session is a pure function of
/// `(seed, split, index)`.
pub fn generate_corpus(schema: &Schema, db: &Database, counts: SplitCounts, seed: u64) -> Result<Corpus, CorpusError> {
    if counts.train == 0 || counts.dev == 0 || counts.test == 0 {
        return Err(CorpusError::InvalidCounts(counts));
    }
    if !schema.has_informable_slots() {
        return Err(CorpusError::NoInformableSlots);
    }
    let streams = RngStreams::new(seed);
    let gen = Generator { schema, db };
    let split = |name: &str, label: u64, n: usize| -> Result<Vec<Session>, CorpusError> {
        (0..n)
            .map(|i| {
                let mut rng = streams.indexed("corpus", (label << 32) | i as u64);
                gen.session(format!("{name}-{i:05}"), &mut rng)
            })
            .collect()
    };
    Ok(Corpus {
        seed,
        schema_hash: schema.hash(),
        train: split("train", 0, counts.train)?,
        dev: split("dev", 1, counts.dev)?,
        test: split("test", 2, counts.test)?,
    })
}

struct Generator<'a> {
    schema: &'a Schema,
    db: &'a Database,
}

/// Tokens plus value spans under construction.
#[derive(Default)]
struct Utt {
    tokens: Vec<String>,
    spans: Vec<Span>,
}

impl Utt {
    fn words(&mut self, text: &str) -> &mut Self {
        self.tokens.extend(text.split_whitespace().map(str::to_string));
        self
    }

    fn value(&mut self, domain: &str, slot: &str, value: &str) -> &mut Self {
        let start = self.tokens.len();
        self.words(value);
        self.spans.push(Span { start, end: self.tokens.len(), domain: domain.into(), slot: slot.into() });
        self
    }
}

fn pick<'t>(rng: &mut StreamRng, items: &[&'t str]) -> &'t str {
    items.choose(rng).copied().expect("template list is non-empty")
}

fn domain_word(domain: &str) -> &str {
    domain
}

fn slot_word(slot: &str) -> &str {
    match slot {
        "area" => "area",
        "stars" => "star rating",
        "pricerange" => "price range",
        "food" => "type of food",
        "destination" => "destination",
        "leaveat" => "departure time",
        "phone" => "phone number",
        "address" => "address",
        "postcode" => "postcode",
        other => other,
    }
}

/// Surface patterns around a slot value; `{}` marks the value.
fn slot_patterns(slot: &str) -> &'static [&'static str] {
    match slot {
        "area" => &["in the {}", "in the {} of town", "located in the {}"],
        "stars" => &["with {} stars", "rated {} stars"],
        "pricerange" => &["that is {}", "in the {} price range", "with {} prices"],
        "food" => &["serving {} food", "that serves {} food"],
        "destination" => &["to {}", "going to {}"],
        "leaveat" => &["leaving at {}", "departing at {}"],
        _ => &["with {}"],
    }
}

fn free_values(slot: &str) -> &'static [&'static str] {
    match slot {
        "destination" => &[
            "city station",
            "stevenage train station",
            "the airport",
            "the museum",
            "kings college",
            "the science park",
            "the botanic garden",
            "arts theatre",
        ],
        "leaveat" | "arriveby" => {
            &["02:15", "08:30", "09:45", "10:15", "11:00", "12:30", "14:45", "16:00", "17:15", "19:30", "21:00"]
        }
        _ => &["anything", "something nice", "the usual"],
    }
}

fn push_slot_phrase(u: &mut Utt, rng: &mut StreamRng, domain: &str, slot: &str, value: &str) {
    let pat = pick(rng, slot_patterns(slot));
    let (before, after) = pat.split_once("{}").expect("pattern has a hole");
    u.words(before).value(domain, slot, value).words(after);
}

fn push_slot_phrases(u: &mut Utt, rng: &mut StreamRng, domain: &str, slots: &[(String, String)]) {
    for (i, (s, v)) in slots.iter().enumerate() {
        if i > 0 {
            u.words("and");
        }
        push_slot_phrase(u, rng, domain, s, v);
    }
}

/// System-side phrase with a placeholder in place of the value.
fn placeholder_phrase(domain: &str, slot: &str) -> String {
    slot_patterns(slot)[0].replace("{}", &placeholder(domain, slot))
}

#[derive(Clone)]
enum Perturbation {
    Change { slot: String, wrong: String },
    Extra { slot: String, value: String },
}

/// Mutable simulation state of one session.
struct Sim<'g, 'a> {
    gen: &'g Generator<'a>,
    state: DialogState,
    active: Option<String>,
    turns: Vec<Turn>,
}

impl Sim<'_, '_> {
    fn emit(
        &mut self,
        user: Utt,
        next: DialogState,
        resp_delex: Vec<String>,
        offered: bool,
        provided: Vec<SlotRef>,
    ) -> Result<(), CorpusError> {
        let schema = self.gen.schema;
        let gold_delta = diff_state(schema, &self.state, &next);
        if let Some(d) = gold_delta.first_domain() {
            self.active = Some(d.to_string());
        }
        let active = self.active.clone().unwrap_or_else(|| schema.domains()[0].name.clone());
        let db_result = query_db(schema, self.gen.db, &next, &active);
        let resp_lex = relexicalize(schema, self.gen.db, &resp_delex, &db_result, &next);
        let user_delex = delexicalize(&user.tokens, &user.spans)?;
        let offered_entity = if offered { db_result.matched_entities.first().cloned() } else { None };
        self.turns.push(Turn {
            user_lex: user.tokens,
            user_spans: user.spans,
            user_delex,
            resp_delex,
            resp_lex,
            gold_state: next.clone(),
            gold_delta,
            offered_entity,
            provided_requestables: provided,
        });
        self.state = next;
        Ok(())
    }
}

fn words(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

impl Generator<'_> {
    fn session(&self, id: String, rng: &mut StreamRng) -> Result<Session, CorpusError> {
        for _ in 0..MAX_ATTEMPTS {
            let goal = self.sample_goal(rng)?;
            let turns = self.simulate(&goal, rng)?;
            if (1..=MAX_TURNS).contains(&turns.len()) {
                let domains = goal.domains.iter().map(|g| g.domain.clone()).collect();
                return Ok(Session { id, goal, turns, domains });
            }
        }
        Err(CorpusError::Generation(format!("session {id}: no plan within {MAX_TURNS} turns")))
    }

    fn sample_goal(&self, rng: &mut StreamRng) -> Result<Goal, CorpusError> {
        let usable: Vec<&DomainSpec> = self
            .schema
            .domains()
            .iter()
            .filter(|d| !d.informable.is_empty() && (!d.has_db || self.db.in_domain(&d.name).next().is_some()))
            .collect();
        if usable.is_empty() {
            return Err(CorpusError::NoInformableSlots);
        }
        let n = if usable.len() > 1 && rng.gen_bool(0.5) { 2 } else { 1 };
        let mut chosen: Vec<&DomainSpec> = usable.choose_multiple(rng, n).copied().collect();
        // Database domains first, db-less ones (taxi) last.
        chosen.sort_by_key(|d| !d.has_db);
        let mut domains = Vec::new();
        for d in chosen {
            let mut constraints = Vec::new();
            let mut requests = Vec::new();
            if d.has_db {
                let entities: Vec<_> = self.db.in_domain(&d.name).collect();
                let entity = entities.choose(rng).expect("non-empty");
                let lex: Vec<&str> = d
                    .informable
                    .iter()
                    .filter(|s| matches!(s.values, SlotValues::Lexicon(_)) && entity.attributes.contains_key(&s.name))
                    .map(|s| s.name.as_str())
                    .collect();
                let k = if lex.len() <= 2 { lex.len() } else { rng.gen_range(2..=3.min(lex.len())) };
                let mut picked: Vec<&str> = lex.choose_multiple(rng, k).copied().collect();
                picked.sort_by_key(|s| d.informable_index(s));
                for s in picked {
                    constraints.push((s.to_string(), entity.attributes[s].clone()));
                }
                for r in &d.requestable {
                    if rng.gen_bool(0.5) {
                        requests.push(r.clone());
                    }
                }
            } else {
                for s in d.informable.iter().take(3) {
                    let v = match &s.values {
                        SlotValues::Lexicon(vs) => vs.choose(rng).cloned().unwrap_or_default(),
                        SlotValues::Free => pick(rng, free_values(&s.name)).to_string(),
                    };
                    constraints.push((s.name.clone(), v));
                }
            }
            if constraints.is_empty() {
                continue;
            }
            domains.push(GoalDomain { domain: d.name.clone(), constraints: constraints.into_iter().collect(), requests });
        }
        if domains.is_empty() {
            return Err(CorpusError::Generation("goal without constraints".into()));
        }
        Ok(Goal { domains })
    }

    fn simulate(&self, goal: &Goal, rng: &mut StreamRng) -> Result<Vec<Turn>, CorpusError> {
        let mut sim = Sim { gen: self, state: DialogState::new(), active: None, turns: Vec::new() };
        for (k, gd) in goal.domains.iter().enumerate() {
            let spec = self.schema.domain(&gd.domain).expect("goal domains come from the schema");
            self.run_domain(&mut sim, spec, gd, k > 0, rng)?;
            if sim.turns.len() > MAX_TURNS {
                return Ok(sim.turns);
            }
        }
        if sim.turns.len() < MAX_TURNS && rng.gen_bool(0.7) {
            let mut u = Utt::default();
            u.words(pick(
                rng,
                &["thank you , goodbye", "that is all i need , thanks", "thanks for your help", "great , bye", "thank you very much"],
            ));
            let resp = words(pick(
                rng,
                &[
                    "you are welcome , goodbye .",
                    "have a nice day !",
                    "glad i could help , goodbye .",
                    "thank you for using our service .",
                    "enjoy your day , bye .",
                ],
            ));
            let next = sim.state.clone();
            sim.emit(u, next, resp, false, vec![])?;
        }
        Ok(sim.turns)
    }

    fn run_domain(
        &self,
        sim: &mut Sim,
        spec: &DomainSpec,
        gd: &GoalDomain,
        follow_up: bool,
        rng: &mut StreamRng,
    ) -> Result<(), CorpusError> {
        let d = spec.name.as_str();
        let dw = domain_word(d);
        let mut goal: Vec<(String, String)> = gd.constraints.iter().map(|(s, v)| (s.clone(), v.clone())).collect();
        goal.shuffle(rng);

        let perturb = if spec.has_db && rng.gen_bool(0.3) {
            self.sample_perturbation(spec, &goal, rng)
        } else {
            None
        };

        // Opening inform.
        let j = rng.gen_range(1..=goal.len());
        let mut mention: Vec<(String, String)> = goal[..j].to_vec();
        let mut told: Vec<String> = mention.iter().map(|(s, _)| s.clone()).collect();
        match &perturb {
            Some(Perturbation::Change { slot, wrong }) => {
                if let Some(m) = mention.iter_mut().find(|(s, _)| s == slot) {
                    m.1 = wrong.clone();
                } else {
                    mention.push((slot.clone(), wrong.clone()));
                    told.push(slot.clone());
                }
            }
            Some(Perturbation::Extra { slot, value }) => mention.push((slot.clone(), value.clone())),
            None => {}
        }
        let mut u = Utt::default();
        let opener = if follow_up {
            pick(rng, &["i also need a {}", "i am also looking for a {}", "can you also find me a {}", "next , i need a {}"])
        } else {
            pick(
                rng,
                &["i am looking for a {}", "i need a {}", "can you find me a {}", "i would like a {}", "please help me find a {}"],
            )
        };
        u.words(&opener.replace("{}", dw));
        push_slot_phrases(&mut u, rng, d, &mention);
        let mut next = sim.state.clone();
        for (s, v) in &mention {
            next.set(d, s, v);
        }

        // Ask for missing slots until everything is filled or the user says
        // they do not care.
        let mut dontcare = false;
        loop {
            let filled = spec.informable.iter().all(|s| next.get(d, &s.name).is_some());
            if filled || dontcare {
                break;
            }
            let missing = spec
                .informable
                .iter()
                .find(|s| next.get(d, &s.name).is_none())
                .map(|s| s.name.clone())
                .expect("not filled");
            let w = slot_word(&missing);
            let resp = words(&pick(
                rng,
                &[
                    "what {} would you like ?",
                    "do you have a {} in mind ?",
                    "which {} do you prefer ?",
                    "is there a particular {} you want ?",
                    "any preference on the {} ?",
                ],
            )
            .replace("{}", w));
            sim.emit(std::mem::take(&mut u), next.clone(), resp, false, vec![])?;

            let remaining: Vec<(String, String)> = goal.iter().filter(|(s, _)| !told.contains(s)).cloned().collect();
            if let Some(pos) = remaining.iter().position(|(s, _)| *s == missing) {
                let mut say = vec![remaining[pos].clone()];
                for (i, r) in remaining.iter().enumerate() {
                    if i != pos && rng.gen_bool(0.5) {
                        say.push(r.clone());
                    }
                }
                let pat = pick(rng, &["{} please", "i would like it {}", "i prefer {}", "{} would be great", "{}"]);
                let (before, after) = pat.split_once("{}").expect("hole");
                u.words(before);
                push_slot_phrases(&mut u, rng, d, &say);
                u.words(after);
                for (s, v) in &say {
                    next.set(d, s, v);
                    told.push(s.clone());
                }
            } else {
                u.words(&pick(rng, &["i do not care about the {}", "any {} is fine", "the {} does not matter"]).replace("{}", w));
                if !remaining.is_empty() {
                    u.words(pick(rng, &[", but i want it", ". i would like it", ", just make it"]));
                    push_slot_phrases(&mut u, rng, d, &remaining);
                    for (s, v) in &remaining {
                        next.set(d, s, v);
                        told.push(s.clone());
                    }
                }
                dontcare = true;
            }
        }

        // Offer, fixing the perturbation after the first offer if needed.
        let mut pending = perturb;
        loop {
            let found = query_db(self.schema, self.db, &next, d).match_count > 0;
            let resp = if !spec.has_db {
                let phrases: Vec<String> = spec
                    .informable
                    .iter()
                    .filter(|s| next.get(d, &s.name).is_some())
                    .map(|s| placeholder_phrase(d, &s.name))
                    .collect();
                words(&pick(rng, &["i have booked a {d} {p} .", "your {d} is booked {p} .", "booking complete , a {d} {p} ."])
                    .replace("{d}", dw)
                    .replace("{p}", &phrases.join(" and ")))
            } else if found {
                let mut r = words(&pick(
                    rng,
                    &[
                        "i recommend {} .",
                        "how about {} ?",
                        "{} would be a good choice .",
                        "i found {} for you .",
                        "you might like {} .",
                        "{} matches your request .",
                    ],
                )
                .replace("{}", &placeholder(d, "name")));
                let present: Vec<&str> = spec
                    .informable
                    .iter()
                    .filter(|s| next.get(d, &s.name).is_some())
                    .map(|s| s.name.as_str())
                    .collect();
                if !present.is_empty() && rng.gen_bool(0.5) {
                    let s = pick(rng, &present);
                    r.extend(words(&format!("it is {} .", placeholder_phrase(d, s))));
                }
                r
            } else {
                words(&pick(
                    rng,
                    &[
                        "sorry , there is no {} matching your request .",
                        "i could not find a {} like that .",
                        "unfortunately no {} meets those criteria .",
                        "there is no such {} , would you like something else ?",
                    ],
                )
                .replace("{}", dw))
            };
            sim.emit(std::mem::take(&mut u), next.clone(), resp, spec.has_db && found, vec![])?;

            match pending.take() {
                None if found || !spec.has_db => break,
                None => return Err(CorpusError::Generation(format!("goal for {d} has no matching entity"))),
                Some(Perturbation::Change { slot, .. }) => {
                    let value = gd.constraints.get(&slot).cloned().expect("changed slot is a goal slot");
                    let pat = pick(
                        rng,
                        &["actually , i would prefer it {}", "sorry , can you make it {} instead", "let us change that to {}"],
                    );
                    let (before, after) = pat.split_once("{}").expect("hole");
                    u.words(before);
                    push_slot_phrase(&mut u, rng, d, &slot, &value);
                    u.words(after);
                    next.set(d, &slot, &value);
                }
                Some(Perturbation::Extra { slot, .. }) => {
                    u.words(
                        &pick(rng, &["actually , any {} is fine", "i changed my mind , the {} does not matter", "forget about the {}"])
                            .replace("{}", slot_word(&slot)),
                    );
                    next.remove(d, &slot);
                }
            }
        }

        if !gd.requests.is_empty() {
            let reqs: Vec<&str> = gd.requests.iter().map(|r| slot_word(r)).collect();
            u.words(&pick(rng, &["can i get the {} ?", "what is the {} ?", "could you tell me the {} ?", "please give me the {}"])
                .replace("{}", &reqs.join(" and ")));
            let answer: Vec<String> =
                gd.requests.iter().map(|r| format!("the {} is {}", slot_word(r), placeholder(d, r))).collect();
            let resp = words(&pick(rng, &["{} .", "sure , {} .", "of course , {} .", "{} . anything else ?"])
                .replace("{}", &answer.join(" and ")));
            let provided = gd.requests.iter().map(|r| SlotRef { domain: d.into(), slot: r.clone() }).collect();
            sim.emit(u, next, resp, false, provided)?;
        } else if !u.tokens.is_empty() {
            return Err(CorpusError::Generation("dangling user utterance".into()));
        }
        Ok(())
    }

    fn sample_perturbation(&self, spec: &DomainSpec, goal: &[(String, String)], rng: &mut StreamRng) -> Option<Perturbation> {
        let lexicon = |slot: &str| match spec.informable.iter().find(|s| s.name == slot).map(|s| &s.values) {
            Some(SlotValues::Lexicon(vs)) => vs.clone(),
            _ => vec![],
        };
        let extras: Vec<&str> = spec
            .informable
            .iter()
            .filter(|s| matches!(s.values, SlotValues::Lexicon(_)) && !goal.iter().any(|(g, _)| *g == s.name))
            .map(|s| s.name.as_str())
            .collect();
        if !extras.is_empty() && rng.gen_bool(0.5) {
            let slot = pick(rng, &extras);
            let value = lexicon(slot).choose(rng)?.clone();
            return Some(Perturbation::Extra { slot: slot.into(), value });
        }
        let (slot, right) = goal.choose(rng)?;
        let wrong: Vec<String> = lexicon(slot).into_iter().filter(|v| v != right).collect();
        let wrong = wrong.choose(rng)?.clone();
        Some(Perturbation::Change { slot: slot.clone(), wrong })
    }
}
