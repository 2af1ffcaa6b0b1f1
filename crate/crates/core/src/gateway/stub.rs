//! Offline transports: fixed reply, scripted schedule, seeded generator, closure and replay.

use std::collections::{BTreeMap, VecDeque};
use std::io::BufRead;
use std::path::Path;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::transcript::Transcript;
use super::transport::{ChatRequest, ChatResponse, Transport, TransportError};
use super::Role;

/// Always answers with the same text.
#[derive(Debug, Clone)]
pub struct FixedReply(pub String);

impl Transport for FixedReply {
    fn send(&self, _req: &ChatRequest) -> Result<ChatResponse, TransportError> {
        Ok(ChatResponse::text(self.0.clone()))
    }

    fn endpoint(&self) -> String {
        "stub:fixed".into()
    }
}

/// Plays back a fixed schedule of outcomes, one per attempt, then repeats the fallback.
pub struct Scripted {
    queue: Mutex<VecDeque<Result<String, TransportError>>>,
    fallback: Result<String, TransportError>,
    calls: Mutex<usize>,
}

impl Scripted {
    pub fn new(
        schedule: impl IntoIterator<Item = Result<String, TransportError>>,
        fallback: Result<String, TransportError>,
    ) -> Self {
        Self {
            queue: Mutex::new(schedule.into_iter().collect()),
            fallback,
            calls: Mutex::new(0),
        }
    }

    /// `failures` retryable errors, then `reply` forever.
    pub fn fail_then(failures: usize, error: TransportError, reply: impl Into<String>) -> Self {
        Self::new(std::iter::repeat_n(Err(error), failures), Ok(reply.into()))
    }

    pub fn calls(&self) -> usize {
        *self.calls.lock().unwrap()
    }
}

impl Transport for Scripted {
    fn send(&self, _req: &ChatRequest) -> Result<ChatResponse, TransportError> {
        *self.calls.lock().unwrap() += 1;
        let next = self
            .queue
            .lock()
            .unwrap()
            .pop_front()
            .unwrap_or_else(|| self.fallback.clone());
        next.map(ChatResponse::text)
    }

    fn endpoint(&self) -> String {
        "stub:scripted".into()
    }
}

type ReplyFn = dyn Fn(&ChatRequest) -> Result<String, TransportError> + Send + Sync;

/// Computes each reply from the request.
pub struct FnTransport {
    f: Box<ReplyFn>,
}

impl FnTransport {
    pub fn new(
        f: impl Fn(&ChatRequest) -> Result<String, TransportError> + Send + Sync + 'static,
    ) -> Self {
        Self { f: Box::new(f) }
    }
}

impl Transport for FnTransport {
    fn send(&self, req: &ChatRequest) -> Result<ChatResponse, TransportError> {
        (self.f)(req).map(ChatResponse::text)
    }

    fn endpoint(&self) -> String {
        "stub:fn".into()
    }
}

/// Deterministic role-shaped replies derived from `(seed, request)`.
///
/// Replies are well formed for the role's parser, so whole pipelines run offline.
#[derive(Debug, Clone)]
pub struct SeededGenerator {
    pub role: Role,
    pub seed: u64,
}

impl SeededGenerator {
    pub fn new(role: Role, seed: u64) -> Self {
        Self { role, seed }
    }

    fn rng_for(&self, req: &ChatRequest) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(req.key().as_bytes());
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest[..32]);
        ChaCha8Rng::from_seed(seed)
    }

    pub fn reply(&self, req: &ChatRequest) -> String {
        let mut rng = self.rng_for(req);
        let tag: u32 = rng.random();
        match self.role {
            Role::Check => {
                let mut obj = serde_json::Map::new();
                for dim in ["accuracy", "completeness", "relevance", "usefulness"] {
                    let score = rng.random_range(10u32..=20) as f64 / 2.0;
                    obj.insert(
                        dim.into(),
                        serde_json::json!({"score": score, "reason": format!("{dim} assessed ({tag:08x})")}),
                    );
                }
                serde_json::Value::Object(obj).to_string()
            }
            Role::Optimize => {
                let user = req.user_text();
                let output = between(user, "Output:\n", "\n\nReview:")
                    .unwrap_or("")
                    .trim();
                let revised = format!(
                    "{output} Additional detail {tag:08x}: the revision adds supporting analysis."
                );
                serde_json::json!({ "output": revised.trim() }).to_string()
            }
            Role::Judge => format!(
                "Score: {:.1}\nJustification {tag:08x}.",
                rng.random_range(0u32..=100) as f64 / 10.0
            ),
            Role::Parsing | Role::Expert | Role::WriteLikeHuman => {
                format!("Generated response {tag:08x} for the {:?} role.", self.role)
            }
        }
    }
}

fn between<'a>(text: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let s = text.find(start)? + start.len();
    let e = text[s..].find(end).map(|e| s + e).unwrap_or(text.len());
    Some(&text[s..e])
}

impl Transport for SeededGenerator {
    fn send(&self, req: &ChatRequest) -> Result<ChatResponse, TransportError> {
        Ok(ChatResponse::text(self.reply(req)))
    }

    fn endpoint(&self) -> String {
        format!("stub:seeded:{}", self.seed)
    }
}

/// Answers requests from a recorded transcript file, matched by request content.
#[derive(Debug, Default)]
pub struct Replay {
    recorded: Mutex<BTreeMap<String, VecDeque<String>>>,
}

impl Replay {
    pub fn from_transcripts(transcripts: impl IntoIterator<Item = Transcript>) -> Self {
        let mut map: BTreeMap<String, VecDeque<String>> = BTreeMap::new();
        for t in transcripts {
            if let Some(content) = t.content {
                map.entry(t.request.key()).or_default().push_back(content);
            }
        }
        Self {
            recorded: Mutex::new(map),
        }
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut all = Vec::new();
        for line in file.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let t: Transcript = serde_json::from_str(&line)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
            all.push(t);
        }
        Ok(Self::from_transcripts(all))
    }
}

impl Transport for Replay {
    fn send(&self, req: &ChatRequest) -> Result<ChatResponse, TransportError> {
        let key = req.key();
        let mut map = self.recorded.lock().unwrap();
        let queue = map.get_mut(&key).ok_or_else(|| {
            TransportError::Malformed(format!("no recorded reply for request {key}"))
        })?;
        // The last recorded reply keeps answering once the queue drains.
        let reply = if queue.len() > 1 {
            queue.pop_front()
        } else {
            queue.front().cloned()
        };
        reply
            .map(ChatResponse::text)
            .ok_or_else(|| TransportError::Malformed("empty recording".into()))
    }

    fn endpoint(&self) -> String {
        "stub:replay".into()
    }
}
