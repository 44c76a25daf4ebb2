use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use super::DialogError;

/// Value space of an informable slot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SlotValues {
    /// Open vocabulary (e.g. a taxi destination).
    Free,
    /// Closed lexicon of normalized values.
    Lexicon(Vec<String>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InformableSlot {
    pub name: String,
    pub values: SlotValues,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DomainSpec {
    pub name: String,
    pub informable: Vec<InformableSlot>,
    pub requestable: Vec<String>,
    pub has_db: bool,
}

impl DomainSpec {
    pub fn informable_index(&self, slot: &str) -> Option<usize> {
        self.informable.iter().position(|s| s.name == slot)
    }

    pub fn is_informable(&self, slot: &str) -> bool {
        self.informable_index(slot).is_some()
    }

    pub fn is_requestable(&self, slot: &str) -> bool {
        self.requestable.iter().any(|s| s == slot)
    }

    pub fn tag(&self) -> String {
        format!("[{}]", self.name)
    }

    pub fn placeholder(&self, slot: &str) -> String {
        placeholder(&self.name, slot)
    }
}

/// `[<domain>_<slot>]`
pub fn placeholder(domain: &str, slot: &str) -> String {
    format!("[{domain}_{slot}]")
}

/// Ordered set of domains. The order of domains and of slots within each
/// domain defines the canonical serialization order of dialog states.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schema {
    domains: Vec<DomainSpec>,
}

impl Schema {
    pub fn new(domains: Vec<DomainSpec>) -> Result<Self, DialogError> {
        for (i, d) in domains.iter().enumerate() {
            if d.name.is_empty() || d.name.contains(char::is_whitespace) {
                return Err(DialogError::InvalidSchema(format!("bad domain name {:?}", d.name)));
            }
            if domains[..i].iter().any(|o| o.name == d.name) {
                return Err(DialogError::InvalidSchema(format!("duplicate domain {}", d.name)));
            }
            let mut names: Vec<&str> = d.informable.iter().map(|s| s.name.as_str()).collect();
            names.extend(d.requestable.iter().map(String::as_str));
            for (j, n) in names.iter().enumerate() {
                if n.is_empty() || n.contains(char::is_whitespace) {
                    return Err(DialogError::InvalidSchema(format!("bad slot name {n:?} in {}", d.name)));
                }
                if names[..j].contains(n) {
                    return Err(DialogError::InvalidSchema(format!("duplicate slot {} in {}", n, d.name)));
                }
            }
        }
        Ok(Self { domains })
    }

    /// The default synthetic schema: hotel and restaurant backed by a
    /// database, taxi with free-text slots and no database.
    pub fn default_synthetic() -> Self {
        fn lex(name: &str, values: &[&str]) -> InformableSlot {
            InformableSlot {
                name: name.into(),
                values: SlotValues::Lexicon(values.iter().map(|v| v.to_string()).collect()),
            }
        }
        fn free(name: &str) -> InformableSlot {
            InformableSlot { name: name.into(), values: SlotValues::Free }
        }
        let areas = ["north", "south", "east", "west", "centre"];
        let prices = ["cheap", "moderate", "expensive"];
        Self::new(vec![
            DomainSpec {
                name: "hotel".into(),
                informable: vec![
                    lex("area", &areas),
                    lex("stars", &["1", "2", "3", "4", "5"]),
                    lex("pricerange", &prices),
                ],
                requestable: vec!["phone".into(), "address".into()],
                has_db: true,
            },
            DomainSpec {
                name: "restaurant".into(),
                informable: vec![
                    lex("area", &areas),
                    lex("food", &["italian", "chinese", "indian", "british"]),
                    lex("pricerange", &prices),
                ],
                requestable: vec!["phone".into(), "address".into()],
                has_db: true,
            },
            DomainSpec {
                name: "taxi".into(),
                informable: vec![free("destination"), free("leaveat")],
                requestable: vec![],
                has_db: false,
            },
        ])
        .expect("default schema is valid")
    }

    pub fn domains(&self) -> &[DomainSpec] {
        &self.domains
    }

    pub fn domain(&self, name: &str) -> Option<&DomainSpec> {
        self.domains.iter().find(|d| d.name == name)
    }

    pub fn domain_index(&self, name: &str) -> Option<usize> {
        self.domains.iter().position(|d| d.name == name)
    }

    /// Sort key of a (domain, slot) pair in canonical order.
    pub fn order_key(&self, domain: &str, slot: &str) -> Option<(usize, usize)> {
        let di = self.domain_index(domain)?;
        let si = self.domains[di].informable_index(slot)?;
        Some((di, si))
    }

    /// Domain whose tag is `token`, if any.
    pub fn domain_for_tag(&self, token: &str) -> Option<&DomainSpec> {
        let inner = token.strip_prefix('[')?.strip_suffix(']')?;
        self.domain(inner)
    }

    /// Splits a placeholder token `[domain_slot]` into its parts.
    pub fn split_placeholder<'a>(&'a self, token: &'a str) -> Option<(&'a DomainSpec, &'a str)> {
        let inner = token.strip_prefix('[')?.strip_suffix(']')?;
        self.domains.iter().find_map(|d| {
            inner
                .strip_prefix(d.name.as_str())
                .and_then(|rest| rest.strip_prefix('_'))
                .filter(|slot| !slot.is_empty())
                .map(|slot| (d, slot))
        })
    }

    pub fn has_informable_slots(&self) -> bool {
        self.domains.iter().any(|d| !d.informable.is_empty())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, DialogError> {
        serde_json::from_str(text).map_err(|e| DialogError::InvalidSchema(e.to_string()))
    }

    /// Hex SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let compact = serde_json::to_string(self).expect("schema serializes");
        hex::encode(Sha256::digest(compact.as_bytes()))
    }
}

#[derive(Serialize, Deserialize)]
struct DomainJson {
    name: String,
    informable: serde_json::Map<String, serde_json::Value>,
    #[serde(default)]
    requestable: Vec<String>,
    has_db: bool,
}

#[derive(Serialize, Deserialize)]
struct SchemaJson {
    domains: Vec<DomainJson>,
}

impl Serialize for Schema {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let domains = self
            .domains
            .iter()
            .map(|d| DomainJson {
                name: d.name.clone(),
                informable: d
                    .informable
                    .iter()
                    .map(|s| {
                        let v = match &s.values {
                            SlotValues::Free => serde_json::Value::String("free".into()),
                            SlotValues::Lexicon(vs) => serde_json::Value::from(vs.clone()),
                        };
                        (s.name.clone(), v)
                    })
                    .collect(),
                requestable: d.requestable.clone(),
                has_db: d.has_db,
            })
            .collect();
        SchemaJson { domains }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Schema {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = SchemaJson::deserialize(deserializer)?;
        let mut domains = Vec::with_capacity(raw.domains.len());
        for d in raw.domains {
            let mut informable = Vec::new();
            for (name, v) in d.informable {
                let values = match v {
                    serde_json::Value::String(s) if s == "free" => SlotValues::Free,
                    serde_json::Value::Array(items) => SlotValues::Lexicon(
                        items
                            .into_iter()
                            .map(|i| match i {
                                serde_json::Value::String(s) => Ok(super::normalize_value(&s)),
                                other => Err(D::Error::custom(format!("non-string value {other}"))),
                            })
                            .collect::<Result<_, _>>()?,
                    ),
                    other => {
                        return Err(D::Error::custom(format!(
                            "slot {name}: expected value list or \"free\", got {other}"
                        )))
                    }
                };
                informable.push(InformableSlot { name, values });
            }
            domains.push(DomainSpec { name: d.name, informable, requestable: d.requestable, has_db: d.has_db });
        }
        Schema::new(domains).map_err(D::Error::custom)
    }
}
