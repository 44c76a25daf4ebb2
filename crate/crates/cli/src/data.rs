//! Loading corpora, schemas, databases and trained models from disk.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use bort_core::corpus::{Corpus, Session};
use bort_core::dialog::{Database, Schema};
use bort_core::model::checkpoint::load_params;
use bort_core::model::Vocab;
use bort_core::ModelParamsF32;
use sha2::{Digest, Sha256};

pub const SCHEMA_FILE: &str = "schema.json";
pub const DB_FILE: &str = "db.json";
pub const VOCAB_FILE: &str = "vocab.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";

/// Entities per domain and seed of the default database.
pub const DEFAULT_DB_ENTITIES: usize = 40;
pub const DEFAULT_DB_SEED: u64 = 17;

/// A generated data directory.
pub struct DataDir {
    pub schema: Schema,
    pub db: Database,
    pub corpus: Corpus,
}

impl DataDir {
    pub fn load(dir: &Path) -> Result<Self> {
        let schema = load_schema(Some(&dir.join(SCHEMA_FILE)))?;
        let db = load_db(Some(&dir.join(DB_FILE)), &schema)?;
        let corpus = Corpus::read_dir(dir).with_context(|| format!("reading corpus from {}", dir.display()))?;
        corpus.validate(&schema).context("corpus does not match its schema")?;
        Ok(Self { schema, db, corpus })
    }
}

pub fn load_schema(path: Option<&Path>) -> Result<Schema> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Schema::from_json(&text).with_context(|| format!("parsing {}", p.display()))
        }
        None => Ok(Schema::default_synthetic()),
    }
}

pub fn load_db(path: Option<&Path>, schema: &Schema) -> Result<Database> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Database::from_json(&text).with_context(|| format!("parsing {}", p.display()))
        }
        None => Ok(Database::generate(schema, DEFAULT_DB_ENTITIES, DEFAULT_DB_SEED)),
    }
}

/// SHA-256 over the JSON lines of a split.
pub fn sessions_hash(sessions: &[Session]) -> String {
    let mut h = Sha256::new();
    for s in sessions {
        h.update(serde_json::to_vec(s).expect("session serializes"));
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

/// A checkpoint with the vocabulary stored next to it.
pub struct LoadedModel {
    pub params: ModelParamsF32,
    pub vocab: Vocab,
}

/// Accepts either a checkpoint file or a training output directory.
pub fn checkpoint_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(CHECKPOINT_FILE)
    } else {
        path.to_path_buf()
    }
}

pub fn load_model(path: &Path) -> Result<LoadedModel> {
    let ckpt = checkpoint_path(path);
    let params = load_params::<f32>(&ckpt).with_context(|| format!("loading checkpoint {}", ckpt.display()))?;
    let vocab_path = ckpt.parent().unwrap_or(Path::new(".")).join(VOCAB_FILE);
    let text = fs::read_to_string(&vocab_path).with_context(|| format!("reading {}", vocab_path.display()))?;
    let vocab = Vocab::from_json(&text).with_context(|| format!("parsing {}", vocab_path.display()))?;
    anyhow::ensure!(
        vocab.len() == params.config.vocab_size,
        "vocabulary has {} tokens but the checkpoint expects {}",
        vocab.len(),
        params.config.vocab_size
    );
    Ok(LoadedModel { params, vocab })
}
