//! Layered configuration: defaults, then a TOML file, then command-line
//! overrides, then `ENERCURATE__SECTION__KEY` environment variables.

use std::path::Path;
use std::time::Duration;

use enercurate_core::distiller::DedupConfig;
use enercurate_core::gateway::RetryPolicy;
use enercurate_core::ingest::FilterPolicy;
use enercurate_core::litref::RefineConfig;
use enercurate_core::model::Source;
use enercurate_core::quality::LoopConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

pub const ENV_PREFIX: &str = "ENERCURATE__";

/// Keys accepted although their default is unset.
const OPTIONAL_KEYS: &[&str] = &["refine.target_size"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub seed: u64,
    pub run: RunConfig,
    pub ingest: IngestConfig,
    pub dedup: DedupConfig,
    pub embedder: EmbedderConfig,
    pub refine: RefineConfig,
    pub quality: LoopConfig,
    pub rlhf: RlhfConfig,
    pub eval: EvalConfig,
    pub agents: AgentsConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 42,
            run: RunConfig::default(),
            ingest: IngestConfig::default(),
            dedup: DedupConfig::default(),
            embedder: EmbedderConfig::default(),
            refine: RefineConfig::default(),
            quality: LoopConfig::default(),
            rlhf: RlhfConfig::default(),
            eval: EvalConfig::default(),
            agents: AgentsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Append agent transcripts next to each stage output.
    pub transcripts: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { transcripts: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    pub source: Source,
    pub subdomain: String,
    pub filter: FilterPolicy,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            source: Source::Oap,
            subdomain: "general".into(),
            filter: FilterPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    /// Local feature hashing; no network.
    Hash,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedderConfig {
    pub kind: EmbedderKind,
    pub dimension: usize,
    pub hash_seed: u64,
    pub base_url: String,
    pub model: String,
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub batch_size: usize,
    pub retry: RetryPolicy,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            kind: EmbedderKind::Hash,
            dimension: 256,
            hash_seed: 0,
            base_url: String::new(),
            model: String::new(),
            api_key_env: "ENERCURATE_API_KEY".into(),
            timeout_secs: 60,
            batch_size: 32,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    /// Use the scores already present in the candidate file.
    Provided,
    /// Ask the judge agent.
    Judge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RlhfConfig {
    pub k: usize,
    pub scorer: ScorerKind,
}

impl Default for RlhfConfig {
    fn default() -> Self {
        Self {
            k: 1,
            scorer: ScorerKind::Judge,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Judge subjective items.
    pub judge: bool,
    pub max_in_flight: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            judge: false,
            max_in_flight: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentMode {
    /// Always the configured `reply`.
    Fixed,
    /// Deterministic role-shaped replies from the run seed.
    Seeded,
    /// Replies looked up in a recorded transcript file.
    Replay,
    /// A chat-completion server at `base_url`.
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub mode: AgentMode,
    pub model: String,
    pub reply: String,
    pub replay_path: String,
    pub base_url: String,
    pub api_key_env: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            mode: AgentMode::Seeded,
            model: "stub".into(),
            reply: String::new(),
            replay_path: String::new(),
            base_url: String::new(),
            api_key_env: "ENERCURATE_API_KEY".into(),
            temperature: 0.0,
            max_tokens: 1024,
            timeout_secs: 60,
            retry: RetryPolicy::default(),
        }
    }
}

impl AgentConfig {
    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }

    fn validate(&self, role: &str) -> Result<(), String> {
        match self.mode {
            AgentMode::Fixed if self.reply.is_empty() => {
                Err(format!("agents.{role}: fixed mode needs `reply`"))
            }
            AgentMode::Replay if self.replay_path.is_empty() => {
                Err(format!("agents.{role}: replay mode needs `replay_path`"))
            }
            AgentMode::Http if self.base_url.is_empty() => {
                Err(format!("agents.{role}: http mode needs `base_url`"))
            }
            _ => self
                .retry
                .validate()
                .map_err(|e| format!("agents.{role}.retry: {e}")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentsConfig {
    pub parsing: AgentConfig,
    pub expert: AgentConfig,
    pub check: AgentConfig,
    pub optimize: AgentConfig,
    pub write_like_human: AgentConfig,
    pub judge: AgentConfig,
}

impl Config {
    pub fn validate(&self) -> Result<(), CliError> {
        let err = |m: String| Err(CliError::Config(m));
        if let Err(e) = self.dedup.validate() {
            return err(e);
        }
        if let Err(e) = self.refine.validate() {
            return err(e.to_string());
        }
        if let Err(e) = self.quality.validate() {
            return err(format!("quality: {e}"));
        }
        if let Err(e) = self.ingest.filter.compile() {
            return err(format!("ingest.filter: {e}"));
        }
        if self.ingest.subdomain.trim().is_empty() {
            return err("ingest.subdomain must not be empty".into());
        }
        if self.embedder.dimension == 0 || self.embedder.batch_size == 0 {
            return err("embedder dimension and batch_size must be positive".into());
        }
        if self.embedder.kind == EmbedderKind::Http && self.embedder.base_url.is_empty() {
            return err("embedder: http kind needs `base_url`".into());
        }
        if self.rlhf.k == 0 {
            return err("rlhf.k must be >= 1".into());
        }
        if self.eval.max_in_flight == 0 {
            return err("eval.max_in_flight must be >= 1".into());
        }
        let a = &self.agents;
        for (role, c) in [
            ("parsing", &a.parsing),
            ("expert", &a.expert),
            ("check", &a.check),
            ("optimize", &a.optimize),
            ("write_like_human", &a.write_like_human),
            ("judge", &a.judge),
        ] {
            if let Err(e) = c.validate(role) {
                return err(e);
            }
        }
        Ok(())
    }

    /// The config sections that determine a stage's output.
    pub fn snapshot(&self, sections: &[&str]) -> Value {
        let full = serde_json::to_value(self).expect("config serializes");
        let mut out = serde_json::Map::new();
        for s in sections {
            let mut cur = &full;
            for part in s.split('.') {
                cur = &cur[part];
            }
            out.insert((*s).to_string(), cur.clone());
        }
        Value::Object(out)
    }
}

/// Parse an override value as a TOML literal, falling back to a bare string.
pub fn parse_value(raw: &str) -> Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => {
            serde_json::to_value(t.remove("v").expect("parsed key")).expect("toml value converts")
        }
        Err(_) => Value::String(raw.to_string()),
    }
}

fn set_path(root: &mut Value, path: &[String], value: Value) -> Result<(), CliError> {
    let mut cur = root;
    for (i, key) in path.iter().enumerate() {
        let obj = cur.as_object_mut().ok_or_else(|| {
            CliError::Config(format!("`{}` is not a section", path[..i].join(".")))
        })?;
        if i + 1 == path.len() {
            obj.insert(key.clone(), value);
            return Ok(());
        }
        cur = obj
            .entry(key.clone())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Err(CliError::Config("empty config key".into()))
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(existing) if existing.is_object() && v.is_object() => merge(existing, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

fn unknown_keys(defaults: &Value, merged: &Value, prefix: &str, out: &mut Vec<String>) {
    let (Value::Object(d), Value::Object(m)) = (defaults, merged) else {
        return;
    };
    for (k, v) in m {
        let path = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match d.get(k) {
            Some(dv) => unknown_keys(dv, v, &path, out),
            None if OPTIONAL_KEYS.contains(&path.as_str()) => {}
            None => out.push(path),
        }
    }
}

/// Resolve the effective configuration. `overrides` are `dotted.key = value`
/// pairs from the command line; `env` is scanned for `ENERCURATE__` variables.
pub fn load_config(
    file: Option<&Path>,
    overrides: &[(String, String)],
    env: impl IntoIterator<Item = (String, String)>,
) -> Result<Config, CliError> {
    let defaults = serde_json::to_value(Config::default()).expect("config serializes");
    let mut merged = defaults.clone();
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let table: toml::Table = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        merge(
            &mut merged,
            serde_json::to_value(table).expect("toml value converts"),
        );
    }
    for (key, value) in overrides {
        let path: Vec<String> = key.split('.').map(|s| s.trim().to_string()).collect();
        set_path(&mut merged, &path, parse_value(value))?;
    }
    let mut env: Vec<(String, String)> = env
        .into_iter()
        .filter(|(k, _)| k.starts_with(ENV_PREFIX))
        .collect();
    env.sort();
    for (key, value) in env {
        let path: Vec<String> = key[ENV_PREFIX.len()..]
            .split("__")
            .map(str::to_ascii_lowercase)
            .collect();
        set_path(&mut merged, &path, parse_value(&value))?;
    }
    let mut unknown = Vec::new();
    unknown_keys(&defaults, &merged, "", &mut unknown);
    if !unknown.is_empty() {
        return Err(CliError::Config(format!(
            "unknown config key(s): {}",
            unknown.join(", ")
        )));
    }
    let cfg: Config =
        serde_json::from_value(merged).map_err(|e| CliError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = load_config(None, &[], Vec::new()).unwrap();
        assert_eq!(cfg, Config::default());
    }

    #[test]
    fn layers_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(
            &path,
            "seed = 7\n[quality]\nthreshold = 6.0\nmax_rounds = 4\n",
        )
        .unwrap();
        let flags = vec![
            ("quality.threshold".to_string(), "8".to_string()),
            ("dedup.k_clusters".into(), "auto".into()),
        ];
        let env = vec![
            (
                "ENERCURATE__QUALITY__MAX_ROUNDS".to_string(),
                "3".to_string(),
            ),
            ("HOME".into(), "/x".into()),
        ];
        let cfg = load_config(Some(&path), &flags, env).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.quality.threshold, 8.0);
        assert_eq!(cfg.quality.max_rounds, 3);
    }

    #[test]
    fn unknown_and_invalid_rejected() {
        let bad_key = load_config(None, &[("dedup.epsilonn".into(), "0.1".into())], Vec::new());
        assert!(matches!(bad_key, Err(CliError::Config(m)) if m.contains("dedup.epsilonn")));
        let bad_value = load_config(None, &[("dedup.epsilon".into(), "3".into())], Vec::new());
        assert!(matches!(bad_value, Err(CliError::Config(_))));
        let fixed = load_config(
            None,
            &[("agents.check.mode".into(), "fixed".into())],
            Vec::new(),
        );
        assert!(matches!(fixed, Err(CliError::Config(_))));
        assert!(load_config(
            None,
            &[("refine.target_size".into(), "300".into())],
            Vec::new()
        )
        .is_ok());
    }
}
