// SPDX-License-Identifier: Apache-2.0

//! Text-generation gateway with record/replay.
//!
//! Every stage that talks to a model goes through [`Session::complete`]. In
//! replay mode responses come from an append-only JSONL fixture store keyed by
//! [`hash_request`]; in record mode live responses are appended to it.

use std::collections::HashMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const DEFAULT_MODEL: &str = "gpt-4o";
pub const DEFAULT_MAX_TOKENS: u32 = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageTag {
    EntityTarget,
    EntityContext,
    Objective,
    Chain,
    Bridge,
    Sva,
}

impl StageTag {
    pub fn as_str(self) -> &'static str {
        match self {
            StageTag::EntityTarget => "entity_target",
            StageTag::EntityContext => "entity_context",
            StageTag::Objective => "objective",
            StageTag::Chain => "chain",
            StageTag::Bridge => "bridge",
            StageTag::Sva => "sva",
        }
    }
}

impl fmt::Display for StageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRequest {
    pub stage_tag: StageTag,
    pub system_text: String,
    pub user_text: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub model_id: String,
}

impl PromptRequest {
    pub fn new(stage_tag: StageTag, system_text: impl Into<String>, user_text: impl Into<String>) -> Self {
        PromptRequest {
            stage_tag,
            system_text: system_text.into(),
            user_text: user_text.into(),
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
            model_id: DEFAULT_MODEL.to_string(),
        }
    }

    pub fn with_model(mut self, model_id: impl Into<String>, temperature: f64) -> Self {
        self.model_id = model_id.into();
        self.temperature = temperature;
        self
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.user_text.is_empty() {
            return Err(LlmError::InvalidRequest("user_text is empty".into()));
        }
        if !(0.0..=1.0).contains(&self.temperature) {
            return Err(LlmError::InvalidRequest(format!(
                "temperature {} outside [0, 1]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::InvalidRequest("max_tokens is zero".into()));
        }
        Ok(())
    }
}

/// Model id and sampling settings applied to every prompt a stage builds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSettings {
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            model_id: DEFAULT_MODEL.to_string(),
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

impl ModelSettings {
    pub fn request(&self, stage: StageTag, system: &str, user: String) -> PromptRequest {
        let mut r = PromptRequest::new(stage, system, user).with_model(&self.model_id, self.temperature);
        r.max_tokens = self.max_tokens;
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Live,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LlmExchange {
    pub request: PromptRequest,
    pub response_text: String,
    pub request_digest: String,
    pub timestamp: DateTime<Utc>,
    pub backend_kind: BackendKind,
}

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("no fixture for {stage} request {digest}")]
    MissingFixture { digest: String, stage: StageTag },
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("backend returned an empty response")]
    EmptyResponse,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("cannot read fixture store {path}: {reason}")]
    FixtureUnreadable { path: PathBuf, reason: String },
    #[error("fixture store {path} line {line}: {reason}")]
    FixtureCorrupt {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("cannot append to fixture store {path}: {reason}")]
    FixtureWrite { path: PathBuf, reason: String },
}

/// SHA-256 over a length-prefixed serialization of the hashed fields, in the
/// fixed order model_id, system_text, user_text, temperature, max_tokens.
pub fn hash_request(req: &PromptRequest) -> String {
    let mut h = Sha256::new();
    let mut field = |name: &str, bytes: &[u8]| {
        h.update(name.as_bytes());
        h.update((bytes.len() as u64).to_be_bytes());
        h.update(bytes);
    };
    field("model_id", req.model_id.as_bytes());
    field("system_text", req.system_text.as_bytes());
    field("user_text", req.user_text.as_bytes());
    field("temperature", &req.temperature.to_bits().to_be_bytes());
    field("max_tokens", &req.max_tokens.to_be_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Live,
    Record,
    Replay,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "live" => Ok(Mode::Live),
            "record" => Ok(Mode::Record),
            "replay" => Ok(Mode::Replay),
            other => Err(format!("unknown llm mode '{other}' (live, record, replay)")),
        }
    }
}

/// A source of completions. Implementations must be callable from several
/// threads at once.
pub trait Backend: Send + Sync {
    fn complete(&self, req: &PromptRequest) -> Result<String, LlmError>;
}

/// OpenAI-compatible chat-completion endpoint.
pub struct HttpBackend {
    url: String,
    key: Option<String>,
    agent: ureq::Agent,
}

impl HttpBackend {
    /// Reads `ASSERTGEN_LLM_URL` and optionally `ASSERTGEN_LLM_KEY`.
    pub fn from_env() -> Result<HttpBackend, LlmError> {
        let url = std::env::var("ASSERTGEN_LLM_URL")
            .map_err(|_| LlmError::BackendUnavailable("ASSERTGEN_LLM_URL is not set".into()))?;
        let key = std::env::var("ASSERTGEN_LLM_KEY").ok();
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(300)))
            .build()
            .into();
        Ok(HttpBackend { url, key, agent })
    }
}

impl Backend for HttpBackend {
    fn complete(&self, req: &PromptRequest) -> Result<String, LlmError> {
        let mut messages = Vec::new();
        if !req.system_text.is_empty() {
            messages.push(serde_json::json!({"role": "system", "content": req.system_text}));
        }
        messages.push(serde_json::json!({"role": "user", "content": req.user_text}));
        let body = serde_json::json!({
            "model": req.model_id,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        let mut call = self.agent.post(&self.url);
        if let Some(k) = &self.key {
            call = call.header("Authorization", format!("Bearer {k}"));
        }
        let unavailable = |e: ureq::Error| LlmError::BackendUnavailable(e.to_string());
        let mut resp = call.send_json(&body).map_err(unavailable)?;
        let v: serde_json::Value = resp.body_mut().read_json().map_err(unavailable)?;
        v.pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .map(str::to_string)
            .ok_or_else(|| LlmError::BackendUnavailable("response has no choices[0].message.content".into()))
    }
}

/// Answers from a fixed rule list: the first rule whose stage matches and
/// whose `contains` text occurs in the user prompt wins.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct ScriptedBackend {
    #[serde(default, rename = "response")]
    pub rules: Vec<ScriptRule>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ScriptRule {
    pub stage: StageTag,
    pub contains: String,
    pub text: String,
}

impl ScriptedBackend {
    pub fn rule(mut self, stage: StageTag, contains: impl Into<String>, text: impl Into<String>) -> Self {
        self.rules.push(ScriptRule {
            stage,
            contains: contains.into(),
            text: text.into(),
        });
        self
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, req: &PromptRequest) -> Result<String, LlmError> {
        self.rules
            .iter()
            .find(|r| r.stage == req.stage_tag && req.user_text.contains(&r.contains))
            .map(|r| r.text.clone())
            .ok_or_else(|| {
                LlmError::BackendUnavailable(format!("no scripted {} response matches", req.stage_tag))
            })
    }
}

/// Wraps a closure as a backend.
pub struct FnBackend<F>(pub F);

impl<F> Backend for FnBackend<F>
where
    F: Fn(&PromptRequest) -> Result<String, LlmError> + Send + Sync,
{
    fn complete(&self, req: &PromptRequest) -> Result<String, LlmError> {
        (self.0)(req)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FixtureEntry {
    digest: String,
    request: PromptRequest,
    response_text: String,
}

struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        SemaphoreGuard(self)
    }
}

struct SemaphoreGuard<'a>(&'a Semaphore);

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

pub struct Session {
    mode: Mode,
    fixture_path: Option<PathBuf>,
    fixtures: Mutex<HashMap<String, String>>,
    backend: Option<Box<dyn Backend>>,
    limiter: Semaphore,
    retries: u32,
    backoff: Duration,
    calls: AtomicUsize,
}

impl fmt::Debug for Session {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Session")
            .field("mode", &self.mode)
            .field("fixture_path", &self.fixture_path)
            .field("has_backend", &self.backend.is_some())
            .finish()
    }
}

/// Opens a session using the HTTP backend for live and record modes.
pub fn open_session(mode: Mode, fixture_path: &Path) -> Result<Session, LlmError> {
    let backend: Option<Box<dyn Backend>> = match mode {
        Mode::Replay => None,
        Mode::Live | Mode::Record => Some(Box::new(HttpBackend::from_env()?)),
    };
    Session::open(mode, Some(fixture_path), backend)
}

impl Session {
    /// `fixture_path` is required for record and replay. A backend is required
    /// for live and record.
    pub fn open(
        mode: Mode,
        fixture_path: Option<&Path>,
        backend: Option<Box<dyn Backend>>,
    ) -> Result<Session, LlmError> {
        let fixtures = match (mode, fixture_path) {
            (Mode::Live, _) => HashMap::new(),
            (_, None) => {
                return Err(LlmError::FixtureUnreadable {
                    path: PathBuf::new(),
                    reason: "record and replay need a fixture path".into(),
                })
            }
            (Mode::Replay, Some(p)) => load_fixtures(p)?,
            (Mode::Record, Some(p)) if p.exists() => load_fixtures(p)?,
            (Mode::Record, Some(_)) => HashMap::new(),
        };
        if mode != Mode::Replay && backend.is_none() {
            return Err(LlmError::BackendUnavailable(format!("{mode:?} mode needs a backend")));
        }
        Ok(Session {
            mode,
            fixture_path: fixture_path.map(Path::to_path_buf),
            fixtures: Mutex::new(fixtures),
            backend,
            limiter: Semaphore {
                free: Mutex::new(4),
                cv: Condvar::new(),
            },
            retries: 3,
            backoff: Duration::from_secs(1),
            calls: AtomicUsize::new(0),
        })
    }

    /// In-memory replay session over the given responses.
    pub fn replay_from(entries: impl IntoIterator<Item = (PromptRequest, String)>) -> Session {
        let fixtures = entries
            .into_iter()
            .map(|(req, text)| (hash_request(&req), text))
            .collect();
        Session {
            mode: Mode::Replay,
            fixture_path: None,
            fixtures: Mutex::new(fixtures),
            backend: None,
            limiter: Semaphore {
                free: Mutex::new(1),
                cv: Condvar::new(),
            },
            retries: 0,
            backoff: Duration::ZERO,
            calls: AtomicUsize::new(0),
        }
    }

    /// Live session over an arbitrary backend with no fixture store.
    pub fn live(backend: impl Backend + 'static) -> Session {
        Session::open(Mode::Live, None, Some(Box::new(backend))).expect("live session with backend")
    }

    pub fn with_max_in_flight(self, n: usize) -> Self {
        *self.limiter.free.lock().unwrap() = n.max(1);
        self
    }

    pub fn with_retry(mut self, retries: u32, backoff: Duration) -> Self {
        self.retries = retries;
        self.backoff = backoff;
        self
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Number of successful completions served by this session.
    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn complete(&self, request: &PromptRequest) -> Result<LlmExchange, LlmError> {
        request.validate()?;
        let digest = hash_request(request);
        let (response_text, backend_kind) = match self.mode {
            Mode::Replay => {
                let text = self.fixtures.lock().unwrap().get(&digest).cloned();
                let text = text.ok_or_else(|| LlmError::MissingFixture {
                    digest: digest.clone(),
                    stage: request.stage_tag,
                })?;
                (text, BackendKind::Replay)
            }
            Mode::Live | Mode::Record => (self.call_backend(request)?, BackendKind::Live),
        };
        if response_text.trim().is_empty() {
            return Err(LlmError::EmptyResponse);
        }
        if self.mode == Mode::Record {
            self.append(&digest, request, &response_text)?;
        }
        self.calls.fetch_add(1, Ordering::Relaxed);
        Ok(LlmExchange {
            request: request.clone(),
            response_text,
            request_digest: digest,
            timestamp: Utc::now(),
            backend_kind,
        })
    }

    fn call_backend(&self, request: &PromptRequest) -> Result<String, LlmError> {
        let backend = self.backend.as_ref().expect("checked at open");
        let _permit = self.limiter.acquire();
        let mut delay = self.backoff;
        let mut attempt = 0;
        loop {
            match backend.complete(request) {
                Err(LlmError::BackendUnavailable(_)) if attempt < self.retries => {
                    std::thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    fn append(&self, digest: &str, request: &PromptRequest, response: &str) -> Result<(), LlmError> {
        let path = self.fixture_path.as_ref().expect("record mode has a path");
        let entry = FixtureEntry {
            digest: digest.to_string(),
            request: request.clone(),
            response_text: response.to_string(),
        };
        let line = serde_json::to_string(&entry).expect("fixture entry serializes");
        // the fixture map lock also serializes file appends
        let mut map = self.fixtures.lock().unwrap();
        let write_err = |e: std::io::Error| LlmError::FixtureWrite {
            path: path.clone(),
            reason: e.to_string(),
        };
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(write_err)?;
        writeln!(f, "{line}").map_err(write_err)?;
        map.insert(digest.to_string(), response.to_string());
        Ok(())
    }
}

/// Later entries for the same digest replace earlier ones.
fn load_fixtures(path: &Path) -> Result<HashMap<String, String>, LlmError> {
    let unreadable = |e: std::io::Error| LlmError::FixtureUnreadable {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let f = File::open(path).map_err(unreadable)?;
    let mut map = HashMap::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(unreadable)?;
        if line.trim().is_empty() {
            continue;
        }
        let corrupt = |reason: String| LlmError::FixtureCorrupt {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        let entry: FixtureEntry = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
        let recomputed = hash_request(&entry.request);
        if recomputed != entry.digest {
            return Err(corrupt(format!(
                "digest {} does not match request (expected {recomputed})",
                entry.digest
            )));
        }
        map.insert(entry.digest, entry.response_text);
    }
    Ok(map)
}
