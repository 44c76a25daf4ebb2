use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{normalize_value, DialogError, DialogState, Schema, SlotValues};
use crate::rng::RngStreams;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub domain: String,
    pub attributes: BTreeMap<String, String>,
}

impl Entity {
    pub fn name(&self) -> Option<&str> {
        self.attributes.get("name").map(String::as_str)
    }
}

/// Entities of all database-backed domains, kept in entity-id order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Database {
    entities: Vec<Entity>,
}

impl Database {
    pub fn new(mut entities: Vec<Entity>) -> Self {
        for e in &mut entities {
            for v in e.attributes.values_mut() {
                *v = normalize_value(v);
            }
        }
        entities.sort_by(|a, b| a.id.cmp(&b.id));
        Self { entities }
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn in_domain<'a>(&'a self, domain: &'a str) -> impl Iterator<Item = &'a Entity> + 'a {
        self.entities.iter().filter(move |e| e.domain == domain)
    }

    pub fn get(&self, id: &str) -> Option<&Entity> {
        self.entities.iter().find(|e| e.id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entities).expect("entities serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, DialogError> {
        let entities: Vec<Entity> = serde_json::from_str(text).map_err(|e| DialogError::InvalidDb(e.to_string()))?;
        Ok(Self::new(entities))
    }

    /// Synthetic entities for every database-backed domain. Each entity gets a
    /// unique name, a random value for every lexicon slot, and generated
    /// requestable attributes.
    pub fn generate(schema: &Schema, per_domain: usize, seed: u64) -> Self {
        const FIRST: [&str; 16] = [
            "astor", "bridge", "cherry", "golden", "royal", "river", "garden", "old", "silver", "oak", "king",
            "maple", "harbour", "stone", "lucky", "green",
        ];
        const SECOND: [&str; 12] =
            ["arms", "house", "lodge", "inn", "palace", "court", "view", "place", "corner", "hall", "table", "kitchen"];
        const STREETS: [&str; 8] = ["station", "mill", "park", "church", "high", "market", "bridge", "castle"];

        let mut entities = Vec::new();
        for (di, d) in schema.domains().iter().enumerate().filter(|(_, d)| d.has_db) {
            let mut rng = RngStreams::new(seed).indexed("db", di as u64);
            let mut names: Vec<String> =
                FIRST.iter().flat_map(|a| SECOND.iter().map(move |b| format!("{a} {b}"))).collect();
            names.shuffle(&mut rng);
            for i in 0..per_domain {
                let mut attributes = BTreeMap::new();
                let name = names.get(i).cloned().unwrap_or_else(|| format!("{} {i}", d.name));
                attributes.insert("name".to_string(), name);
                for slot in &d.informable {
                    if let SlotValues::Lexicon(values) = &slot.values {
                        if let Some(v) = values.choose(&mut rng) {
                            attributes.insert(slot.name.clone(), v.clone());
                        }
                    }
                }
                for r in &d.requestable {
                    let v = match r.as_str() {
                        "phone" => format!("01223{:06}", rng.gen_range(0..1_000_000)),
                        "address" => format!(
                            "{} {} road",
                            rng.gen_range(1..200),
                            STREETS.choose(&mut rng).expect("non-empty")
                        ),
                        "postcode" => format!("cb{}{}", rng.gen_range(1..5), rng.gen_range(1..10)),
                        _ => format!("{r}{i}"),
                    };
                    attributes.insert(r.clone(), v);
                }
                entities.push(Entity { id: format!("{}-{:04}", d.name, i), domain: d.name.clone(), attributes });
            }
        }
        Self::new(entities)
    }
}

/// Outcome of querying one domain with the current dialog state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DbResult {
    pub domain: String,
    pub match_count: usize,
    pub bookable: bool,
    pub matched_entities: Vec<String>,
}

impl DbResult {
    pub fn first_match<'a>(&self, db: &'a Database) -> Option<&'a Entity> {
        self.matched_entities.first().and_then(|id| db.get(id))
    }
}

/// Bucketed (match count, bookable) identifier, in `0..10`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DbStateId(u8);

impl DbStateId {
    pub const COUNT: usize = 10;

    pub fn new(id: usize) -> Result<Self, DialogError> {
        if id < Self::COUNT {
            Ok(Self(id as u8))
        } else {
            Err(DialogError::DbStateOutOfRange(id))
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Match-count bucket: 0, 1, 2–3, 4–9, ≥10.
pub fn match_bucket(match_count: usize) -> usize {
    match match_count {
        0 => 0,
        1 => 1,
        2..=3 => 2,
        4..=9 => 3,
        _ => 4,
    }
}

pub fn db_state_id(result: &DbResult) -> DbStateId {
    DbStateId((match_bucket(result.match_count) * 2 + usize::from(result.bookable)) as u8)
}

/// Entities of `domain` satisfying every informable constraint the state
/// holds for that domain. Domains without a database are always bookable.
pub fn query_db(schema: &Schema, db: &Database, state: &DialogState, domain: &str) -> DbResult {
    let spec = schema.domain(domain);
    let has_db = spec.is_some_and(|d| d.has_db);
    let constraints: Vec<(&str, &str)> = state
        .domain(domain)
        .map(|slots| {
            slots
                .iter()
                .filter(|(s, _)| spec.is_some_and(|d| d.is_informable(s)))
                .map(|(s, v)| (s.as_str(), v.as_str()))
                .collect()
        })
        .unwrap_or_default();
    let matched_entities: Vec<String> = db
        .in_domain(domain)
        .filter(|e| constraints.iter().all(|(s, v)| e.attributes.get(*s).map(String::as_str) == Some(*v)))
        .map(|e| e.id.clone())
        .collect();
    let match_count = matched_entities.len();
    DbResult {
        domain: domain.to_string(),
        match_count,
        bookable: if has_db { match_count >= 1 } else { true },
        matched_entities,
    }
}
