use std::path::Path;

use serde::{Deserialize, Serialize};

use super::loss::ActiveTerms;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("bad value {value:?} for {key}")]
    BadValue { key: String, value: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub alpha: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub lr_decay: f64,
    pub clip_norm: f64,
    pub seed: u64,
    pub use_br: bool,
    pub use_dr: bool,
    pub use_user_delex: bool,
    pub br_enc_only: bool,
    pub br_dec_only: bool,
    pub dr_state_only: bool,
    pub dr_resp_only: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.05,
            lambda2: 0.03,
            alpha: 0.15,
            learning_rate: 0.005,
            weight_decay: 0.01,
            batch_size: 128,
            max_epochs: 30,
            patience: 5,
            lr_decay: 0.8,
            clip_norm: 5.0,
            seed: 0,
            use_br: true,
            use_dr: true,
            use_user_delex: true,
            br_enc_only: false,
            br_dec_only: false,
            dr_state_only: false,
            dr_resp_only: false,
        }
    }
}

fn parse<V: std::str::FromStr>(key: &str, value: &str) -> Result<V, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue { key: key.into(), value: value.into() })
}

impl TrainConfig {
    /// The configuration without any reconstruction objective.
    pub fn baseline() -> Self {
        Self { use_br: false, use_dr: false, use_user_delex: false, ..Self::default() }
    }

    /// Sets one field by name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "lambda1" => self.lambda1 = parse(key, value)?,
            "lambda2" => self.lambda2 = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "max_epochs" => self.max_epochs = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "lr_decay" => self.lr_decay = parse(key, value)?,
            "clip_norm" => self.clip_norm = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "use_br" => self.use_br = parse(key, value)?,
            "use_dr" => self.use_dr = parse(key, value)?,
            "use_user_delex" => self.use_user_delex = parse(key, value)?,
            "br_enc_only" => self.br_enc_only = parse(key, value)?,
            "br_dec_only" => self.br_dec_only = parse(key, value)?,
            "dr_state_only" => self.dr_state_only = parse(key, value)?,
            "dr_resp_only" => self.dr_resp_only = parse(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// Applies a flat `key = value` file; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), reason: e.to_string() })?;
        let mut c = Self::default();
        c.apply_text(&text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.into()));
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return bad("lambda1 and lambda2 must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1]");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be non-negative");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be positive");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr_decay must lie in (0, 1]");
        }
        if !(self.clip_norm > 0.0) {
            return bad("clip_norm must be positive");
        }
        if self.br_enc_only && self.br_dec_only {
            return bad("br_enc_only and br_dec_only are exclusive");
        }
        if self.dr_state_only && self.dr_resp_only {
            return bad("dr_state_only and dr_resp_only are exclusive");
        }
        Ok(())
    }

    /// Auxiliary terms that contribute; a zero weight disables a term.
    pub fn active_terms(&self) -> ActiveTerms {
        let br = self.use_br && self.lambda1 > 0.0;
        let dr = self.use_dr && self.lambda2 > 0.0;
        ActiveTerms {
            br_enc: br && !self.br_dec_only,
            br_dec: br && !self.br_enc_only,
            dr_state: dr && !self.dr_resp_only,
            dr_resp: dr && !self.dr_state_only,
        }
    }

    /// `key = value` lines for every field.
    pub fn to_text(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        let mut out = String::new();
        if let serde_json::Value::Object(map) = v {
            for (k, v) in map {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = TrainConfig::default();
        assert_eq!((c.lambda1, c.lambda2, c.alpha, c.learning_rate), (0.05, 0.03, 0.15, 0.005));
        assert_eq!((c.batch_size, c.patience), (128, 5));
        c.validate().unwrap();
    }

    #[test]
    fn text_roundtrip() {
        let mut c = TrainConfig::default();
        c.apply_text("# comment\nlambda1 = 0.1\nuse_dr=false\n\nseed = 9 # trailing\n").unwrap();
        assert_eq!((c.lambda1, c.use_dr, c.seed), (0.1, false, 9));
        let mut d = TrainConfig::default();
        d.apply_text(&c.to_text()).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn rejects_bad_input() {
        let mut c = TrainConfig::default();
        assert_eq!(c.apply_text("nope = 1"), Err(ConfigError::UnknownKey("nope".into())));
        assert!(matches!(c.apply_text("alpha"), Err(ConfigError::Syntax { line: 1 })));
        assert!(matches!(c.set("alpha", "x"), Err(ConfigError::BadValue { .. })));
        c.alpha = 1.5;
        assert!(c.validate().is_err());
        let c = TrainConfig { patience: 0, ..TrainConfig::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_lambda_disables_terms() {
        let c = TrainConfig { lambda1: 0.0, ..TrainConfig::default() };
        let t = c.active_terms();
        assert!(!t.br_enc && !t.br_dec && t.dr_state && t.dr_resp);
        assert!(!TrainConfig::baseline().active_terms().any());
        let c = TrainConfig { br_enc_only: true, dr_resp_only: true, ..TrainConfig::default() };
        let t = c.active_terms();
        assert!(t.br_enc && !t.br_dec && !t.dr_state && t.dr_resp);
    }
}
