//! Uniform client for every agent role.
//!
//! All network access in the crate goes through this module: chat agents via
//! [`AgentHandle`] and remote embeddings via [`HttpEmbeddingProvider`]. Each
//! dispatched call retries transient failures with exponential backoff and
//! produces exactly one [`Transcript`].

mod embedding;
mod retry;
mod stub;
mod template;
mod transcript;
mod transport;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use embedding::HttpEmbeddingProvider;
pub use retry::{RecordingSleeper, RetryPolicy, Sleeper, ThreadSleeper};
pub use stub::{FixedReply, FnTransport, Replay, Scripted, SeededGenerator};
pub use template::{builtin, slots, PromptTemplate, RenderedPrompt, Slots, TemplateError};
pub use transcript::{JsonlSink, MemorySink, Transcript, TranscriptSink};
pub use transport::{
    ChatMessage, ChatRequest, ChatResponse, HttpTransport, Transport, TransportError, Usage,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Parsing,
    Expert,
    Check,
    Optimize,
    WriteLikeHuman,
    Judge,
}

impl Role {
    pub const ALL: [Role; 6] = [
        Role::Parsing,
        Role::Expert,
        Role::Check,
        Role::Optimize,
        Role::WriteLikeHuman,
        Role::Judge,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Parsing => "parsing",
            Role::Expert => "expert",
            Role::Check => "check",
            Role::Optimize => "optimize",
            Role::WriteLikeHuman => "write_like_human",
            Role::Judge => "judge",
        }
    }

    /// Shipped templates for the role; the first is the default.
    pub fn builtin_templates(self) -> Vec<PromptTemplate> {
        use builtin::*;
        let pairs: &[(&str, &str)] = match self {
            Role::Parsing => &[("parsing", PARSING)],
            Role::Expert => &[("expert", EXPERT)],
            Role::Check => &[("check", CHECK)],
            Role::Optimize => &[("optimize", OPTIMIZE)],
            Role::WriteLikeHuman => &[("write_like_human", WRITE_LIKE_HUMAN)],
            Role::Judge => &[
                ("judge_reference", JUDGE_REFERENCE),
                ("judge_independent", JUDGE_INDEPENDENT),
            ],
        };
        pairs.iter().map(|(n, t)| load(n, t)).collect()
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Sampling settings sent with every request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for Sampling {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_tokens: 1024,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DispatchError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("{role} agent failed after {attempts} attempt(s): {error}")]
    Failed {
        role: Role,
        error: TransportError,
        attempts: u32,
        transcript: Box<Transcript>,
    },
}

#[derive(Debug, Clone)]
pub struct Dispatched {
    pub text: String,
    pub transcript: Transcript,
}

/// A configured agent: role, model, templates, sampling, retry policy and transport.
#[derive(Clone)]
pub struct AgentHandle {
    pub role: Role,
    pub model_name: String,
    templates: BTreeMap<String, PromptTemplate>,
    default_template: String,
    pub sampling: Sampling,
    pub retry: RetryPolicy,
    transport: Arc<dyn Transport>,
    sleeper: Arc<dyn Sleeper>,
    sink: Option<Arc<dyn TranscriptSink>>,
    jitter_seed: u64,
}

impl fmt::Debug for AgentHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AgentHandle")
            .field("role", &self.role)
            .field("model_name", &self.model_name)
            .field("endpoint", &self.transport.endpoint())
            .finish_non_exhaustive()
    }
}

impl AgentHandle {
    /// Handle with the role's builtin templates, default sampling and retry policy.
    pub fn new(role: Role, model_name: impl Into<String>, transport: Arc<dyn Transport>) -> Self {
        let builtins = role.builtin_templates();
        let default_template = builtins[0].name.clone();
        Self {
            role,
            model_name: model_name.into(),
            templates: builtins.into_iter().map(|t| (t.name.clone(), t)).collect(),
            default_template,
            sampling: Sampling::default(),
            retry: RetryPolicy::default(),
            transport,
            sleeper: Arc::new(ThreadSleeper),
            sink: None,
            jitter_seed: 0,
        }
    }

    /// Offline handle answering with a fixed reply.
    pub fn fixed(role: Role, reply: impl Into<String>) -> Self {
        Self::new(role, "stub", Arc::new(FixedReply(reply.into())))
    }

    pub fn with_transport(mut self, transport: Arc<dyn Transport>) -> Self {
        self.transport = transport;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_sampling(mut self, sampling: Sampling) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn with_sleeper(mut self, sleeper: Arc<dyn Sleeper>) -> Self {
        self.sleeper = sleeper;
        self
    }

    pub fn with_sink(mut self, sink: Arc<dyn TranscriptSink>) -> Self {
        self.sink = Some(sink);
        self
    }

    pub fn with_jitter_seed(mut self, seed: u64) -> Self {
        self.jitter_seed = seed;
        self
    }

    /// Add or replace a template. The first template for a role stays the default
    /// unless `make_default` is set.
    pub fn with_template(mut self, template: PromptTemplate, make_default: bool) -> Self {
        if make_default {
            self.default_template = template.name.clone();
        }
        self.templates.insert(template.name.clone(), template);
        self
    }

    pub fn template(&self, name: &str) -> Option<&PromptTemplate> {
        self.templates.get(name)
    }

    pub fn endpoint(&self) -> String {
        self.transport.endpoint()
    }

    pub fn dispatch(&self, slots: &Slots) -> Result<Dispatched, DispatchError> {
        let name = self.default_template.clone();
        self.dispatch_named(&name, slots)
    }

    /// Render the named template and send it, retrying transient failures.
    pub fn dispatch_named(
        &self,
        template: &str,
        slots: &Slots,
    ) -> Result<Dispatched, DispatchError> {
        let tpl = self
            .templates
            .get(template)
            .ok_or_else(|| TemplateError::UnknownTemplate(template.into()))?;
        let prompt = tpl.render(slots)?;
        let mut messages = Vec::with_capacity(2);
        if !prompt.system.is_empty() {
            messages.push(ChatMessage {
                role: "system".into(),
                content: prompt.system,
            });
        }
        messages.push(ChatMessage {
            role: "user".into(),
            content: prompt.user,
        });
        let request = ChatRequest {
            model: self.model_name.clone(),
            messages,
            temperature: self.sampling.temperature,
            max_tokens: self.sampling.max_tokens,
        };

        let started_at = now();
        let mut rng = ChaCha8Rng::seed_from_u64(self.jitter_seed ^ fold_key(&request.key()));
        let delays = self.retry.delays(&mut rng);
        let (result, attempts) = run_with_retries(
            self.retry.max_attempts,
            &delays,
            self.sleeper.as_ref(),
            || self.transport.send(&request),
        );

        let mut transcript = Transcript {
            role: self.role,
            endpoint: self.transport.endpoint(),
            template: template.to_string(),
            request,
            content: None,
            error: None,
            started_at,
            finished_at: now(),
            attempts,
            retry_count: attempts.saturating_sub(1),
            usage: None,
        };
        match result {
            Ok(resp) => {
                transcript.content = Some(resp.content.clone());
                transcript.usage = resp.usage;
                self.record(&transcript);
                Ok(Dispatched {
                    text: resp.content,
                    transcript,
                })
            }
            Err(error) => {
                transcript.error = Some(error.clone());
                self.record(&transcript);
                Err(DispatchError::Failed {
                    role: self.role,
                    error,
                    attempts,
                    transcript: Box::new(transcript),
                })
            }
        }
    }

    fn record(&self, t: &Transcript) {
        if let Some(sink) = &self.sink {
            sink.record(t);
        }
    }

    /// Dispatch every slot map with at most `max_in_flight` concurrent calls.
    /// Results are aligned with the input; failures are reported in place.
    pub fn dispatch_batch(
        &self,
        batch: &[Slots],
        max_in_flight: usize,
    ) -> Vec<Result<Dispatched, DispatchError>> {
        bounded_map(batch, max_in_flight, |_, s| self.dispatch(s))
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn fold_key(hex_key: &str) -> u64 {
    u64::from_str_radix(&hex_key[..16.min(hex_key.len())], 16).unwrap_or(0)
}

/// Call `op` until it succeeds, fails permanently, or `max_attempts` is spent.
/// Returns the final result and the number of attempts made.
pub(crate) fn run_with_retries<T>(
    max_attempts: u32,
    delays: &[std::time::Duration],
    sleeper: &dyn Sleeper,
    mut op: impl FnMut() -> Result<T, TransportError>,
) -> (Result<T, TransportError>, u32) {
    let max_attempts = max_attempts.max(1);
    let mut attempt = 0;
    loop {
        attempt += 1;
        match op() {
            Ok(v) => return (Ok(v), attempt),
            Err(e) if e.is_retryable() && attempt < max_attempts => {
                let wait = delays
                    .get(attempt as usize - 1)
                    .copied()
                    .unwrap_or_default();
                log::debug!("attempt {attempt} failed ({e}); retrying in {wait:?}");
                sleeper.sleep(wait);
            }
            Err(e) => return (Err(e), attempt),
        }
    }
}

/// Map `f` over `items` on at most `max_in_flight` worker threads, preserving input order.
pub fn bounded_map<T, R, F>(items: &[T], max_in_flight: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let workers = max_in_flight.max(1).min(items.len());
    if workers <= 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    let done: Vec<Vec<(usize, R)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut local = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::SeqCst);
                        if i >= items.len() {
                            break;
                        }
                        local.push((i, f(i, &items[i])));
                    }
                    local
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    for (i, r) in done.into_iter().flatten() {
        slots[i] = Some(r);
    }
    slots
        .into_iter()
        .map(|r| r.expect("every index processed"))
        .collect()
}
