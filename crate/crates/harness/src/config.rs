//! Run configuration: JSON with defaults for every omitted key.
//!
//! Loading merges the file over the default document. Before the merge every
//! key of the file is checked against the default document so that all
//! unknown keys are reported together, not just the first one.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use tactile_door::domain_rand::{RandConfig, TransferDomain};
use tactile_door::env::EnvConfig;
use tactile_door::reward::RewardWeights;
use tactile_door::tactile::TactileConfig;
use tactile_door::td3::Td3Config;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown configuration keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),
    #[error("configuration is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot read configuration {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Training condition: policy observes the tactile bits or not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Tactile,
    Plain,
}

impl Condition {
    pub fn tactile(self) -> bool {
        self == Condition::Tactile
    }

    pub fn label(self) -> &'static str {
        match self {
            Condition::Tactile => "w/ tactile",
            Condition::Plain => "w/o tactile",
        }
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "tactile" => Ok(Condition::Tactile),
            "plain" => Ok(Condition::Plain),
            other => Err(format!("unknown condition {other:?} (tactile, plain)")),
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::Tactile => "tactile",
            Condition::Plain => "plain",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSettings {
    pub episodes: usize,
    /// Door angle that counts as opened for the steps column (degrees).
    pub open_threshold_deg: f64,
    pub seed: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            episodes: 10,
            open_threshold_deg: 10.0,
            seed: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub environment: EnvConfig,
    pub reward: RewardWeights,
    pub td3: Td3Config,
    pub randomization: RandConfig,
    /// `enabled` is overridden per condition.
    pub tactile: TactileConfig,
    pub transfer: TransferDomain,
    pub conditions: Vec<Condition>,
    pub seeds: Vec<u64>,
    pub episodes: usize,
    pub workers: usize,
    pub checkpoint_every: usize,
    pub eval: EvalSettings,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            environment: EnvConfig::default(),
            reward: RewardWeights::default(),
            td3: Td3Config::default(),
            randomization: RandConfig::default(),
            tactile: TactileConfig::default(),
            transfer: TransferDomain::default(),
            conditions: vec![Condition::Tactile, Condition::Plain],
            seeds: vec![0, 1, 2],
            episodes: 2000,
            workers: 2,
            checkpoint_every: 100,
            eval: EvalSettings::default(),
            output_dir: PathBuf::from("runs"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let user: Value = serde_json::from_str(text)?;
        let mut doc = serde_json::to_value(RunConfig::default())?;
        let mut unknown = Vec::new();
        unknown_keys(&user, &doc, "", &mut unknown);
        if !unknown.is_empty() {
            return Err(ConfigError::UnknownKeys(unknown));
        }
        merge(&mut doc, user);
        let cfg: RunConfig = serde_json::from_value(doc)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        self.environment.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.reward.validate().map_err(ConfigError::Invalid)?;
        self.td3.validate().map_err(ConfigError::Invalid)?;
        self.randomization.validate().map_err(ConfigError::Invalid)?;
        self.tactile.validate().map_err(ConfigError::Invalid)?;
        if self.conditions.is_empty() {
            return bad("conditions must not be empty".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if !(self.transfer.contact_stiffness_scale > 0.0) {
            return bad("transfer.contact_stiffness_scale must be positive".into());
        }
        if !(self.eval.open_threshold_deg >= 0.0 && self.eval.open_threshold_deg <= 90.0) {
            return bad("eval.open_threshold_deg must lie in [0, 90]".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(&canonical))
    }

    /// Copy of this configuration specialised to one condition.
    pub fn for_condition(&self, condition: Condition) -> RunConfig {
        let mut cfg = self.clone();
        cfg.tactile.enabled = condition.tactile();
        cfg
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects dotted paths of keys in `user` that the schema document lacks.
/// Arrays are checked element-wise against the first schema element.
fn unknown_keys(user: &Value, schema: &Value, path: &str, out: &mut Vec<String>) {
    match (user, schema) {
        (Value::Object(u), Value::Object(s)) => {
            for (k, v) in u {
                let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match s.get(k) {
                    Some(sv) => unknown_keys(v, sv, &p, out),
                    None => out.push(p),
                }
            }
        }
        (Value::Array(u), Value::Array(s)) => {
            if let Some(first) = s.first() {
                for (i, v) in u.iter().enumerate() {
                    unknown_keys(v, first, &format!("{path}[{i}]"), out);
                }
            }
        }
        _ => {}
    }
}

/// Objects merge key by key; any other value replaces the default.
fn merge(base: &mut Value, user: Value) {
    match (base, user) {
        (Value::Object(b), Value::Object(u)) => {
            for (k, v) in u {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Default configuration as pretty JSON, the published schema.
pub fn default_document() -> String {
    let value = serde_json::to_value(RunConfig::default()).expect("config serializes");
    let mut text = serde_json::to_string_pretty(&value).expect("value serializes");
    text.push('\n');
    text
}

/// Every key path in the default document.
pub fn schema_paths() -> Vec<String> {
    fn walk(v: &Value, path: String, out: &mut Vec<String>) {
        if let Value::Object(m) = v {
            walk_map(m, &path, out);
        }
    }
    fn walk_map(m: &Map<String, Value>, path: &str, out: &mut Vec<String>) {
        for (k, v) in m {
            let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
            out.push(p.clone());
            walk(v, p, out);
        }
    }
    let mut out = Vec::new();
    walk(&serde_json::to_value(RunConfig::default()).expect("config serializes"), String::new(), &mut out);
    out
}
