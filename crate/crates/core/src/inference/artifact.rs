use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Mode, PredictedTurn};

#[derive(Debug, thiserror::Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("noise proportion {p:?} inconsistent with mode {mode}")]
    Inconsistent { mode: Mode, p: Option<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub checkpoint_hash: String,
    pub corpus_hash: String,
    pub mode: Mode,
    /// Noise proportion; present exactly in policy-optimization runs.
    pub p: Option<f64>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionRun {
    pub session_id: String,
    pub turns: Vec<PredictedTurn>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunArtifact {
    pub meta: RunMeta,
    pub sessions: Vec<SessionRun>,
}

impl RunArtifact {
    pub fn new(meta: RunMeta, sessions: Vec<SessionRun>) -> Result<Self, ArtifactError> {
        let a = Self { meta, sessions };
        a.check()?;
        Ok(a)
    }

    fn check(&self) -> Result<(), ArtifactError> {
        let ok = match self.meta.mode {
            Mode::EndToEnd => self.meta.p.is_none(),
            Mode::PolicyOpt => self.meta.p.is_some_and(|p| (0.0..=1.0).contains(&p)),
        };
        if ok {
            Ok(())
        } else {
            Err(ArtifactError::Inconsistent { mode: self.meta.mode, p: self.meta.p })
        }
    }

    /// Meta line followed by one line per session.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.meta).expect("meta serializes");
        out.push('\n');
        for s in &self.sessions {
            out.push_str(&serde_json::to_string(s).expect("session serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl<R: BufRead>(reader: R) -> Result<Self, ArtifactError> {
        let mut lines = reader.lines().enumerate();
        let io = |source| ArtifactError::Io { path: "<reader>".into(), source };
        let (_, first) = lines.next().ok_or(ArtifactError::Format { line: 1, reason: "empty artifact".into() })?;
        let meta: RunMeta =
            serde_json::from_str(&first.map_err(io)?).map_err(|e| ArtifactError::Format { line: 1, reason: e.to_string() })?;
        let mut sessions = Vec::new();
        for (i, line) in lines {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            sessions.push(serde_json::from_str(&line).map_err(|e| ArtifactError::Format { line: i + 1, reason: e.to_string() })?);
        }
        Self::new(meta, sessions)
    }

    pub fn write(&self, path: &Path) -> Result<(), ArtifactError> {
        let io = |source| ArtifactError::Io { path: path.display().to_string(), source };
        let mut f = std::fs::File::create(path).map_err(io)?;
        f.write_all(self.to_jsonl().as_bytes()).map_err(io)
    }

    pub fn read(path: &Path) -> Result<Self, ArtifactError> {
        let f = std::fs::File::open(path).map_err(|source| ArtifactError::Io { path: path.display().to_string(), source })?;
        Self::from_jsonl(std::io::BufReader::new(f))
    }
}
