//! Run configuration: flat JSON with dotted keys, overridable from the command line.
//!
//! ```json
//! { "preset": "desk", "seed": 3, "model.gru_hidden": 64, "train.learning_rate": 0.001 }
//! ```

use std::path::Path;

use cbnr::{ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: String,
    /// Root seed; model initialization and shuffling derive their own seeds from it.
    pub seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

/// Derives an independent seed for one subsystem (splitmix64 finalizer).
pub fn derive_seed(root: u64, stream: u64) -> u64 {
    let mut z = root.wrapping_add(stream.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub const INIT_STREAM: u64 = 1;
pub const SHUFFLE_STREAM: u64 = 2;

fn preset(name: &str, vocab: usize, answers: usize) -> Result<ModelConfig, CliError> {
    match name {
        "desk" => Ok(ModelConfig::desk(vocab, answers)),
        "paper" => Ok(ModelConfig::paper(vocab, answers)),
        "tiny" => Ok(ModelConfig::tiny(vocab, answers)),
        other => Err(CliError::usage(format!("unknown preset {other:?} (expected desk, paper or tiny)"))),
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Map<String, Value>) {
    match v {
        Value::Object(m) => {
            for (k, v) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        other => {
            out.insert(prefix.to_string(), other.clone());
        }
    }
}

fn unflatten(flat: &Map<String, Value>) -> Value {
    let mut root = Map::new();
    for (key, v) in flat {
        let mut node = &mut root;
        let parts: Vec<&str> = key.split('.').collect();
        for p in &parts[..parts.len() - 1] {
            node = node.entry(p.to_string()).or_insert_with(|| Value::Object(Map::new())).as_object_mut().expect("object");
        }
        node.insert(parts[parts.len() - 1].to_string(), v.clone());
    }
    Value::Object(root)
}

/// Parses a `key=value` override; the value is read as JSON when possible,
/// otherwise as a string.
pub fn parse_override(s: &str) -> Result<(String, Value), CliError> {
    let (k, v) = s.split_once('=').ok_or_else(|| CliError::usage(format!("override {s:?} is not key=value")))?;
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}

pub fn read_file(path: &Path) -> Result<Map<String, Value>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    match serde_json::from_str::<Value>(&text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(CliError::usage(format!("{}: config must be a JSON object", path.display()))),
        Err(e) => Err(CliError::usage(format!("{}: {e}", path.display()))),
    }
}

/// Merges defaults, the config file and command-line overrides (in that order).
/// Model fields fixed by the dataset (`vocab_size`, `n_answers`,
/// `image_size`) are always taken from it.
pub fn resolve(
    file: Map<String, Value>,
    overrides: &[(String, Value)],
    vocab: usize,
    answers: usize,
    image_size: usize,
) -> Result<RunConfig, CliError> {
    let mut given = file;
    for (k, v) in overrides {
        given.insert(k.clone(), v.clone());
    }
    let preset_name = match given.get("preset") {
        None => "desk".to_string(),
        Some(Value::String(s)) => s.clone(),
        Some(other) => return Err(CliError::usage(format!("preset must be a string, got {other}"))),
    };
    let defaults = RunConfig {
        preset: preset_name.clone(),
        seed: 0,
        model: preset(&preset_name, vocab, answers)?,
        train: TrainConfig::default(),
    };
    let mut flat = Map::new();
    flatten("", &serde_json::to_value(&defaults).expect("config serializes"), &mut flat);
    for (k, v) in &given {
        if !flat.contains_key(k) {
            return Err(CliError::usage(format!("unknown config key {k:?}")));
        }
        flat.insert(k.clone(), v.clone());
    }
    let root: u64 = serde_json::from_value(flat["seed"].clone()).map_err(|e| CliError::usage(format!("seed: {e}")))?;
    if !given.contains_key("model.seed") {
        flat.insert("model.seed".into(), derive_seed(root, INIT_STREAM).into());
    }
    if !given.contains_key("train.seed") {
        flat.insert("train.seed".into(), derive_seed(root, SHUFFLE_STREAM).into());
    }
    flat.insert("model.vocab_size".into(), vocab.into());
    flat.insert("model.n_answers".into(), answers.into());
    flat.insert("model.image_size".into(), image_size.into());
    let cfg: RunConfig = serde_json::from_value(unflatten(&flat)).map_err(|e| CliError::usage(format!("config: {e}")))?;
    cfg.model.validate().map_err(|e| CliError::usage(e.to_string()))?;
    cfg.train.validate().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(cfg)
}

impl RunConfig {
    /// Flat dotted-key form, the same layout accepted by [`resolve`].
    pub fn to_flat_json(&self) -> String {
        let mut flat = Map::new();
        flatten("", &serde_json::to_value(self).expect("config serializes"), &mut flat);
        let mut s = serde_json::to_string_pretty(&Value::Object(flat)).expect("json");
        s.push('\n');
        s
    }
}
