//! Inform, Success, BLEU, Combined, joint goal accuracy and Success F1, the
//! report format and the noise-sweep curve.

mod bleu;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use bleu::{corpus_bleu, BleuStats};

use crate::corpus::{Session, SlotRef};
use crate::dialog::{placeholder, query_db, Database, Schema};
use crate::inference::SessionRun;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("run has {run} sessions, corpus has {corpus}")]
    SessionCount { run: usize, corpus: usize },
    #[error("session {index}: run id {run:?} does not match corpus id {corpus:?}")]
    SessionMismatch { index: usize, run: String, corpus: String },
    #[error("session {0}: turn count differs from the corpus")]
    TurnCount(String),
}

/// `0.5 · (inform + success) + bleu`
pub fn combined(inform: f64, success: f64, bleu: f64) -> f64 {
    0.5 * (inform + success) + bleu
}

/// Rounds to one decimal for display.
pub fn round1(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DomainScores {
    pub inform: f64,
    pub success: f64,
    pub sessions: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub sessions: usize,
    pub turns: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub inform: f64,
    pub success: f64,
    pub bleu: f64,
    pub combined: f64,
    pub joint_goal_accuracy: f64,
    pub success_f1: f64,
    pub per_domain: BTreeMap<String, DomainScores>,
    pub counts: Counts,
}

fn check_aligned(run: &[SessionRun], corpus: &[Session]) -> Result<(), EvalError> {
    if run.len() != corpus.len() {
        return Err(EvalError::SessionCount { run: run.len(), corpus: corpus.len() });
    }
    for (i, (r, c)) in run.iter().zip(corpus).enumerate() {
        if r.session_id != c.id {
            return Err(EvalError::SessionMismatch { index: i, run: r.session_id.clone(), corpus: c.id.clone() });
        }
        if r.turns.len() != c.turns.len() {
            return Err(EvalError::TurnCount(c.id.clone()));
        }
    }
    Ok(())
}

fn pct(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// Per-session goal outcome.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SessionOutcome {
    pub informed: BTreeMap<String, bool>,
    pub succeeded: BTreeMap<String, bool>,
}

impl SessionOutcome {
    pub fn informed(&self) -> bool {
        self.informed.values().all(|v| *v)
    }

    pub fn succeeded(&self) -> bool {
        self.informed() && self.succeeded.values().all(|v| *v)
    }
}

/// Inform and success per goal domain of one session.
pub fn session_outcome(schema: &Schema, db: &Database, run: &SessionRun, session: &Session) -> SessionOutcome {
    let mut informed = BTreeMap::new();
    let mut succeeded = BTreeMap::new();
    let mentioned: BTreeSet<&str> = run.turns.iter().flat_map(|t| t.resp_delex.iter().map(String::as_str)).collect();
    for goal in &session.goal.domains {
        let d = goal.domain.as_str();
        let spec = schema.domain(d);
        let ok = if spec.is_some_and(|s| s.has_db) {
            let name = placeholder(d, "name");
            run.turns.iter().any(|t| {
                if !t.resp_delex.iter().any(|w| *w == name) {
                    return false;
                }
                let result = query_db(schema, db, &t.pred_state, d);
                result.first_match(db).is_some_and(|e| {
                    goal.constraints.iter().all(|(slot, v)| e.attributes.get(slot).is_some_and(|ev| ev == v))
                })
            })
        } else {
            let prefix = format!("[{d}_");
            mentioned.iter().any(|w| w.starts_with(&prefix))
        };
        let answered = goal.requests.iter().all(|r| mentioned.contains(placeholder(d, r).as_str()));
        informed.insert(d.to_string(), ok);
        succeeded.insert(d.to_string(), ok && answered);
    }
    SessionOutcome { informed, succeeded }
}

/// Requestable-slot placeholders that appear in a session's responses.
fn provided_slots(schema: &Schema, run: &SessionRun) -> BTreeSet<SlotRef> {
    let mut out = BTreeSet::new();
    for t in &run.turns {
        for w in &t.resp_delex {
            if let Some((d, slot)) = schema.split_placeholder(w) {
                if d.is_requestable(slot) {
                    out.insert(SlotRef { domain: d.name.clone(), slot: slot.to_string() });
                }
            }
        }
    }
    out
}

/// Micro-averaged Success F1 over pooled counts. Sessions with nothing
/// requested and nothing provided are skipped.
pub fn success_f1(schema: &Schema, run: &[SessionRun], corpus: &[Session]) -> f64 {
    let (mut tp, mut provided_n, mut requested_n) = (0usize, 0usize, 0usize);
    for (r, s) in run.iter().zip(corpus) {
        let provided = provided_slots(schema, r);
        let requested = s.goal.requested();
        if provided.is_empty() && requested.is_empty() {
            continue;
        }
        tp += provided.intersection(&requested).count();
        provided_n += provided.len();
        requested_n += requested.len();
    }
    f1_from_counts(tp, provided_n, requested_n)
}

pub fn f1_from_counts(tp: usize, provided: usize, requested: usize) -> f64 {
    if tp == 0 || provided == 0 || requested == 0 {
        return 0.0;
    }
    let p = tp as f64 / provided as f64;
    let r = tp as f64 / requested as f64;
    200.0 * p * r / (p + r)
}

pub fn joint_goal_accuracy(run: &[SessionRun], corpus: &[Session]) -> f64 {
    let mut hit = 0;
    let mut total = 0;
    for (r, s) in run.iter().zip(corpus) {
        for (p, g) in r.turns.iter().zip(&s.turns) {
            total += 1;
            if p.pred_state == g.gold_state {
                hit += 1;
            }
        }
    }
    pct(hit, total)
}

pub fn bleu(run: &[SessionRun], corpus: &[Session]) -> f64 {
    let mut stats = BleuStats::default();
    for (r, s) in run.iter().zip(corpus) {
        for (p, g) in r.turns.iter().zip(&s.turns) {
            stats.add(&p.resp_delex, &g.resp_delex);
        }
    }
    stats.score()
}

/// Full metric report of a run against its corpus split.
pub fn evaluate(schema: &Schema, db: &Database, run: &[SessionRun], corpus: &[Session]) -> Result<EvalReport, EvalError> {
    check_aligned(run, corpus)?;
    let mut informed = 0;
    let mut succeeded = 0;
    let mut per: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
    for (r, s) in run.iter().zip(corpus) {
        let o = session_outcome(schema, db, r, s);
        informed += usize::from(o.informed());
        succeeded += usize::from(o.succeeded());
        for (d, ok) in &o.informed {
            let e = per.entry(d.clone()).or_default();
            e.0 += 1;
            e.1 += usize::from(*ok);
            e.2 += usize::from(o.succeeded[d]);
        }
    }
    let n = corpus.len();
    let inform = pct(informed, n);
    let success = pct(succeeded, n);
    let bleu = bleu(run, corpus);
    Ok(EvalReport {
        inform,
        success,
        bleu,
        combined: combined(inform, success, bleu),
        joint_goal_accuracy: joint_goal_accuracy(run, corpus),
        success_f1: success_f1(schema, run, corpus),
        per_domain: per
            .into_iter()
            .map(|(d, (total, i, s))| (d, DomainScores { inform: pct(i, total), success: pct(s, total), sessions: total }))
            .collect(),
        counts: Counts { sessions: n, turns: corpus.iter().map(|s| s.turns.len()).sum() },
    })
}

impl EvalReport {
    /// Fixed-width table, percentages to one decimal.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<22}{:>8}", "metric", "value");
        for (k, v) in [
            ("inform", self.inform),
            ("success", self.success),
            ("bleu", self.bleu),
            ("combined", self.combined),
            ("joint_goal_accuracy", self.joint_goal_accuracy),
            ("success_f1", self.success_f1),
        ] {
            let _ = writeln!(out, "{k:<22}{:>8.1}", v);
        }
        if !self.per_domain.is_empty() {
            let _ = writeln!(out, "\n{:<14}{:>8}{:>9}{:>10}", "domain", "inform", "success", "sessions");
            for (d, s) in &self.per_domain {
                let _ = writeln!(out, "{d:<14}{:>8.1}{:>9.1}{:>10}", s.inform, s.success, s.sessions);
            }
        }
        let _ = writeln!(out, "\nsessions {}  turns {}", self.counts.sessions, self.counts.turns);
        out
    }
}

/// Combined score as a function of the state-noise proportion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSweep {
    pub model: String,
    pub points: Vec<(f64, f64)>,
}

pub const DEFAULT_PROPORTIONS: [f64; 5] = [0.0, 0.05, 0.1, 0.15, 0.2];

impl NoiseSweep {
    pub fn new(model: &str, points: Vec<(f64, f64)>) -> Result<Self, String> {
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err("noise proportions must be strictly increasing".into());
        }
        Ok(Self { model: model.into(), points })
    }
}

/// CSV `model,p,combined`, one row per point.
pub fn sweep_csv(sweeps: &[NoiseSweep]) -> String {
    let mut out = String::from("model,p,combined\n");
    for s in sweeps {
        for (p, c) in &s.points {
            let _ = writeln!(out, "{},{},{}", s.model, p, c);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combined_formula() {
        assert!((combined(93.8, 85.8, 18.5) - 108.3).abs() < 1e-9);
        assert_eq!(combined(0.0, 0.0, 0.0), 0.0);
        assert_eq!(round1(combined(96.1, 88.8, 19.0)), 111.5);
    }

    #[test]
    fn pooled_f1() {
        assert!((f1_from_counts(2, 3, 4) - 400.0 / 7.0).abs() < 1e-9);
        assert_eq!(f1_from_counts(0, 3, 4), 0.0);
        assert_eq!(f1_from_counts(3, 3, 3), 100.0);
    }

    #[test]
    fn sweep_rejects_unsorted() {
        assert!(NoiseSweep::new("m", vec![(0.0, 1.0), (0.0, 2.0)]).is_err());
        let s = NoiseSweep::new("bort", vec![(0.0, 10.0), (0.1, 9.5)]).unwrap();
        assert_eq!(sweep_csv(&[s]), "model,p,combined\nbort,0,10\nbort,0.1,9.5\n");
    }
}
