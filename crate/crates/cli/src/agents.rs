use std::path::Path;
use std::sync::Arc;

use enercurate_core::gateway::{
    AgentHandle, FixedReply, HttpTransport, Replay, Role, Sampling, SeededGenerator,
    TranscriptSink, Transport,
};

use crate::config::{AgentConfig, AgentMode, AgentsConfig};
use crate::error::CliError;

impl AgentsConfig {
    pub fn for_role(&self, role: Role) -> &AgentConfig {
        match role {
            Role::Parsing => &self.parsing,
            Role::Expert => &self.expert,
            Role::Check => &self.check,
            Role::Optimize => &self.optimize,
            Role::WriteLikeHuman => &self.write_like_human,
            Role::Judge => &self.judge,
        }
    }
}

/// Build the handle for `role`; seeded stubs and retry jitter derive from `seed`.
pub fn build_agent(
    role: Role,
    cfg: &AgentConfig,
    seed: u64,
    sink: Option<Arc<dyn TranscriptSink>>,
) -> Result<AgentHandle, CliError> {
    let transport: Arc<dyn Transport> = match cfg.mode {
        AgentMode::Fixed => Arc::new(FixedReply(cfg.reply.clone())),
        AgentMode::Seeded => Arc::new(SeededGenerator::new(role, seed)),
        AgentMode::Replay => Arc::new(
            Replay::load(Path::new(&cfg.replay_path))
                .map_err(|e| CliError::io(&cfg.replay_path, e))?,
        ),
        AgentMode::Http => {
            let key = std::env::var(&cfg.api_key_env)
                .ok()
                .filter(|k| !k.is_empty());
            Arc::new(HttpTransport::new(cfg.base_url.clone(), key, cfg.timeout()))
        }
    };
    let mut handle = AgentHandle::new(role, cfg.model.clone(), transport)
        .with_retry(cfg.retry.clone())
        .with_sampling(Sampling {
            temperature: cfg.temperature,
            max_tokens: cfg.max_tokens,
        })
        .with_jitter_seed(seed);
    if let Some(sink) = sink {
        handle = handle.with_sink(sink);
    }
    Ok(handle)
}
