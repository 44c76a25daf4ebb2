//! Synthetic dialog corpus: data types, JSON Lines IO, validation, split
//! manipulation and the noise operator used by denoising reconstruction.

mod generate;
mod noise;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use generate::{generate_corpus, MAX_TURNS};
pub use noise::{corrupt_tokens, denoise_state_target, mask_tokens, Corruption, CorruptionMask};

use crate::dialog::{delexicalize, merge_state, DialogError, DialogState, LevenshteinState, Schema, Span};
use crate::rng::RngStreams;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error(transparent)]
    Dialog(#[from] DialogError),
    #[error("split counts must all be at least 1, got {0:?}")]
    InvalidCounts(SplitCounts),
    #[error("schema has no informable slots")]
    NoInformableSlots,
    #[error("generation failed: {0}")]
    Generation(String),
    #[error("corruption mask covers {got} tokens, serialized state has {expected}")]
    MaskAlignment { expected: usize, got: usize },
    #[error("fraction must be in (0, 1], got {0}")]
    InvalidFraction(f64),
    #[error("unknown domain {0}")]
    UnknownDomain(String),
    #[error("session {session}: {reason}")]
    Invalid { session: String, reason: String },
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("bad corpus file {path}: {reason}")]
    Format { path: String, reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

impl Default for SplitCounts {
    fn default() -> Self {
        Self { train: 400, dev: 100, test: 100 }
    }
}

/// A requestable (or informable) slot reference.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SlotRef {
    pub domain: String,
    pub slot: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalDomain {
    pub domain: String,
    pub constraints: BTreeMap<String, String>,
    pub requests: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Goal {
    pub domains: Vec<GoalDomain>,
}

impl Goal {
    pub fn domain(&self, name: &str) -> Option<&GoalDomain> {
        self.domains.iter().find(|g| g.domain == name)
    }

    pub fn touches(&self, domain: &str) -> bool {
        self.domain(domain).is_some()
    }

    pub fn requested(&self) -> BTreeSet<SlotRef> {
        self.domains
            .iter()
            .flat_map(|g| g.requests.iter().map(|r| SlotRef { domain: g.domain.clone(), slot: r.clone() }))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub user_lex: Vec<String>,
    pub user_spans: Vec<Span>,
    pub user_delex: Vec<String>,
    pub resp_delex: Vec<String>,
    pub resp_lex: Vec<String>,
    pub gold_state: DialogState,
    pub gold_delta: LevenshteinState,
    pub offered_entity: Option<String>,
    pub provided_requestables: Vec<SlotRef>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub goal: Goal,
    pub turns: Vec<Turn>,
    pub domains: Vec<String>,
}

impl Session {
    /// Checks the turn and session invariants.
    pub fn validate(&self, schema: &Schema) -> Result<(), CorpusError> {
        let bad = |reason: String| CorpusError::Invalid { session: self.id.clone(), reason };
        if self.turns.is_empty() || self.turns.len() > MAX_TURNS {
            return Err(bad(format!("{} turns", self.turns.len())));
        }
        let mut prev = DialogState::new();
        let mut mentioned = BTreeSet::new();
        for (t, turn) in self.turns.iter().enumerate() {
            turn.gold_state.validate(schema).map_err(|e| bad(format!("turn {t}: {e}")))?;
            if merge_state(&turn.gold_delta, &prev) != turn.gold_state {
                return Err(bad(format!("turn {t}: gold_state != merge(gold_delta, previous)")));
            }
            let delex = delexicalize(&turn.user_lex, &turn.user_spans).map_err(|e| bad(format!("turn {t}: {e}")))?;
            if delex != turn.user_delex {
                return Err(bad(format!("turn {t}: user_delex does not match spans")));
            }
            mentioned.extend(turn.gold_state.domain_names().map(str::to_string));
            prev = turn.gold_state.clone();
        }
        let goal: BTreeSet<String> = self.goal.domains.iter().map(|g| g.domain.clone()).collect();
        let listed: BTreeSet<String> = self.domains.iter().cloned().collect();
        if goal.is_empty() || goal != mentioned || goal != listed {
            return Err(bad(format!("goal domains {goal:?}, state domains {mentioned:?}, listed {listed:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusMeta {
    pub seed: u64,
    pub schema_hash: String,
    pub counts: SplitCounts,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other} (train|dev|test)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    pub seed: u64,
    pub schema_hash: String,
    pub train: Vec<Session>,
    pub dev: Vec<Session>,
    pub test: Vec<Session>,
}

impl Corpus {
    pub fn split(&self, split: Split) -> &[Session] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    pub fn counts(&self) -> SplitCounts {
        SplitCounts { train: self.train.len(), dev: self.dev.len(), test: self.test.len() }
    }

    pub fn meta(&self) -> CorpusMeta {
        CorpusMeta { seed: self.seed, schema_hash: self.schema_hash.clone(), counts: self.counts() }
    }

    /// Validates every session and checks that split ids are disjoint.
    pub fn validate(&self, schema: &Schema) -> Result<(), CorpusError> {
        let mut ids = BTreeSet::new();
        for s in self.train.iter().chain(&self.dev).chain(&self.test) {
            if !ids.insert(s.id.as_str()) {
                return Err(CorpusError::Invalid { session: s.id.clone(), reason: "duplicate id".into() });
            }
            s.validate(schema)?;
        }
        Ok(())
    }

    /// Writes `train.jsonl`, `dev.jsonl`, `test.jsonl` and `meta.json`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), CorpusError> {
        fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
            move |source| CorpusError::Io { path: path.display().to_string(), source }
        }
        fs::create_dir_all(dir).map_err(io(dir))?;
        for (name, sessions) in [("train", &self.train), ("dev", &self.dev), ("test", &self.test)] {
            let path = dir.join(format!("{name}.jsonl"));
            let mut text = String::new();
            for s in sessions {
                text.push_str(&serde_json::to_string(s).expect("session serializes"));
                text.push('\n');
            }
            fs::write(&path, text).map_err(io(&path))?;
        }
        let path = dir.join("meta.json");
        let meta = serde_json::to_string_pretty(&self.meta()).expect("meta serializes");
        fs::write(&path, meta + "\n").map_err(io(&path))?;
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self, CorpusError> {
        let read = |name: &str| -> Result<String, CorpusError> {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|source| CorpusError::Io { path: path.display().to_string(), source })
        };
        let meta: CorpusMeta = serde_json::from_str(&read("meta.json")?)
            .map_err(|e| CorpusError::Format { path: "meta.json".into(), reason: e.to_string() })?;
        let mut splits = Vec::new();
        for name in ["train.jsonl", "dev.jsonl", "test.jsonl"] {
            let text = read(name)?;
            let sessions = text
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(i, l)| {
                    serde_json::from_str::<Session>(l)
                        .map_err(|e| CorpusError::Format { path: format!("{name}:{}", i + 1), reason: e.to_string() })
                })
                .collect::<Result<Vec<_>, _>>()?;
            splits.push(sessions);
        }
        let test = splits.pop().expect("three splits");
        let dev = splits.pop().expect("three splits");
        let train = splits.pop().expect("three splits");
        Ok(Self { seed: meta.seed, schema_hash: meta.schema_hash, train, dev, test })
    }

    /// Keeps `⌈fraction·|train|⌉` train sessions sampled without replacement,
    /// in their original order. Dev and test are untouched.
    pub fn subset_low_resource(&self, fraction: f64, seed: u64) -> Result<Corpus, CorpusError> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(CorpusError::InvalidFraction(fraction));
        }
        let n = self.train.len();
        let keep = ((fraction * n as f64).ceil() as usize).min(n);
        let mut rng = RngStreams::new(seed).stream("subset");
        let mut idx = sample(&mut rng, n, keep).into_vec();
        idx.sort_unstable();
        Ok(Corpus { train: idx.into_iter().map(|i| self.train[i].clone()).collect(), ..self.clone() })
    }

    /// Zero-shot split: train loses every session touching `domain`; dev and
    /// test keep only sessions that touch it.
    pub fn exclude_domain(&self, schema: &Schema, domain: &str) -> Result<Corpus, CorpusError> {
        if schema.domain(domain).is_none() {
            return Err(CorpusError::UnknownDomain(domain.to_string()));
        }
        let touching = |s: &&Session| s.goal.touches(domain);
        let in_domain = |v: &[Session]| v.iter().filter(touching).cloned().collect::<Vec<_>>();
        Ok(Corpus {
            seed: self.seed,
            schema_hash: self.schema_hash.clone(),
            train: self.train.iter().filter(|s| !s.goal.touches(domain)).cloned().collect(),
            dev: in_domain(&self.dev),
            test: in_domain(&self.test),
        })
    }
}

/// Summary statistics of one split.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorpusStats {
    pub sessions: usize,
    pub turns: usize,
    pub mean_turns: f64,
    /// Number of gold edits per `domain.slot`.
    pub slot_edits: BTreeMap<String, usize>,
    /// Sessions per number of goal domains.
    pub domains_per_session: BTreeMap<usize, usize>,
}

pub fn corpus_stats(sessions: &[Session]) -> CorpusStats {
    let turns: usize = sessions.iter().map(|s| s.turns.len()).sum();
    let mut slot_edits = BTreeMap::new();
    let mut domains_per_session = BTreeMap::new();
    for s in sessions {
        *domains_per_session.entry(s.goal.domains.len()).or_insert(0) += 1;
        for t in &s.turns {
            for e in &t.gold_delta.edits {
                *slot_edits.entry(format!("{}.{}", e.domain, e.slot)).or_insert(0) += 1;
            }
        }
    }
    CorpusStats {
        sessions: sessions.len(),
        turns,
        mean_turns: if sessions.is_empty() { 0.0 } else { turns as f64 / sessions.len() as f64 },
        slot_edits,
        domains_per_session,
    }
}
