//! Model backends: OpenAI-compatible chat/text endpoints and deterministic
//! mocks, with an on-disk response cache and bounded concurrency.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::{debug, warn};

use crate::guidelines::{guideline_gold, Guideline};
use crate::prompts::{ModelFamily, Payload};

/// Environment variable holding the bearer token for endpoint backends.
pub const API_KEY_ENV: &str = "GUIDELINE_PROBE_API_KEY";

/// Output of the refusing mock.
pub const REFUSAL_TEXT: &str =
    "None of the categories listed above are appropriate for classifying the given text.";

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("network failure after {attempts} attempts: {message}")]
    Network { attempts: u32, message: String },
    #[error("request timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response body: {0}")]
    MalformedResponse(String),
    #[error("{kind} backend cannot send a {payload} payload")]
    PayloadMismatch {
        kind: BackendKind,
        payload: &'static str,
    },
    #[error("invalid backend configuration: {0}")]
    Config(String),
    #[error("cache {path}: {source}")]
    Cache {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl BackendError {
    /// Short tag stored with failed tasks.
    pub fn tag(&self) -> &'static str {
        match self {
            BackendError::Network { .. } => "network",
            BackendError::Timeout { .. } => "timeout",
            BackendError::Status { .. } => "status",
            BackendError::MalformedResponse(_) => "malformed",
            BackendError::PayloadMismatch { .. } => "payload",
            BackendError::Config(_) => "config",
            BackendError::Cache { .. } => "cache",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub top_p: f64,
    pub presence_penalty: f64,
    pub frequency_penalty: f64,
    pub max_new_tokens: u32,
}

impl GenerationParams {
    /// Sampling used for open-weight models behind text endpoints.
    pub fn open_model() -> Self {
        GenerationParams {
            temperature: 0.8,
            top_p: 0.95,
            presence_penalty: 0.0,
            frequency_penalty: 0.0,
            max_new_tokens: 128,
        }
    }

    /// Chat-completions API defaults.
    pub fn chat_api() -> Self {
        GenerationParams {
            temperature: 1.0,
            top_p: 1.0,
            presence_penalty: 0.0,
            frequency_penalty: 0.0,
            max_new_tokens: 128,
        }
    }

    pub fn greedy(self) -> Self {
        GenerationParams {
            temperature: 0.0,
            ..self
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(0.0..=1.0).contains(&self.top_p) {
            return Err(BackendError::Config(format!(
                "top_p {} outside [0, 1]",
                self.top_p
            )));
        }
        if self.max_new_tokens < 1 {
            return Err(BackendError::Config("max_new_tokens must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    ChatEndpoint,
    TextEndpoint,
    Mock,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::ChatEndpoint => "chat-endpoint",
            BackendKind::TextEndpoint => "text-endpoint",
            BackendKind::Mock => "mock",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockPolicy {
    /// Answers the guideline-consistent label.
    GuidelineFollower,
    /// Answers the factual gold label, ignoring the guideline.
    PriorBiased,
    /// Always refuses.
    Refuser,
    /// Picks a display label uniformly, seeded per request.
    UniformRandom { seed: u64 },
}

impl FromStr for MockPolicy {
    type Err = String;

    /// Accepts `guideline_follower`, `prior_biased`, `refuser`,
    /// `uniform_random` and `uniform_random:<seed>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "guideline_follower" => Ok(MockPolicy::GuidelineFollower),
            "prior_biased" => Ok(MockPolicy::PriorBiased),
            "refuser" => Ok(MockPolicy::Refuser),
            "uniform_random" => Ok(MockPolicy::UniformRandom { seed: 0 }),
            other => other
                .strip_prefix("uniform_random:")
                .and_then(|seed| seed.parse().ok())
                .map(|seed| MockPolicy::UniformRandom { seed })
                .ok_or_else(|| format!("unknown mock policy {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            initial_backoff_ms: 1000,
        }
    }
}

impl RetryPolicy {
    fn backoff(&self, failed_attempt: u32) -> Duration {
        Duration::from_millis(self.initial_backoff_ms << (failed_attempt - 1).min(16))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub base_url: Option<String>,
    pub model_name: String,
    pub family: ModelFamily,
    pub params: GenerationParams,
    pub mock_policy: Option<MockPolicy>,
    pub parallelism: usize,
    pub retry: RetryPolicy,
    pub timeout_ms: u64,
}

impl BackendConfig {
    pub fn mock(policy: MockPolicy) -> Self {
        BackendConfig {
            kind: BackendKind::Mock,
            base_url: None,
            model_name: format!("mock-{}", mock_name(policy)),
            family: ModelFamily::ChatApi,
            params: GenerationParams::chat_api(),
            mock_policy: Some(policy),
            parallelism: 4,
            retry: RetryPolicy::default(),
            timeout_ms: 60_000,
        }
    }

    pub fn chat_endpoint(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        BackendConfig {
            kind: BackendKind::ChatEndpoint,
            base_url: Some(base_url.into()),
            model_name: model_name.into(),
            family: ModelFamily::ChatApi,
            params: GenerationParams::chat_api(),
            mock_policy: None,
            parallelism: 4,
            retry: RetryPolicy::default(),
            timeout_ms: 60_000,
        }
    }

    pub fn text_endpoint(
        base_url: impl Into<String>,
        model_name: impl Into<String>,
        family: ModelFamily,
    ) -> Self {
        BackendConfig {
            kind: BackendKind::TextEndpoint,
            base_url: Some(base_url.into()),
            model_name: model_name.into(),
            family,
            params: GenerationParams::open_model(),
            mock_policy: None,
            parallelism: 4,
            retry: RetryPolicy::default(),
            timeout_ms: 60_000,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        self.params.validate()?;
        if self.mock_policy.is_some() != (self.kind == BackendKind::Mock) {
            return Err(BackendError::Config(
                "mock_policy must be set exactly when kind is mock".into(),
            ));
        }
        if self.kind != BackendKind::Mock && self.base_url.is_none() {
            return Err(BackendError::Config(format!("{} needs a base_url", self.kind)));
        }
        match (self.kind, self.family) {
            (BackendKind::ChatEndpoint, f) if f != ModelFamily::ChatApi => Err(
                BackendError::Config(format!("chat-endpoint requires the chat-api family, got {f}")),
            ),
            (BackendKind::TextEndpoint, ModelFamily::ChatApi) => Err(BackendError::Config(
                "text-endpoint requires a text family (llama2-chat or falcon-chat)".into(),
            )),
            _ if self.parallelism == 0 => {
                Err(BackendError::Config("parallelism must be ≥ 1".into()))
            }
            _ if self.retry.max_attempts == 0 => {
                Err(BackendError::Config("retry needs at least one attempt".into()))
            }
            _ => Ok(()),
        }
    }
}

fn mock_name(policy: MockPolicy) -> String {
    match policy {
        MockPolicy::GuidelineFollower => "guideline_follower".into(),
        MockPolicy::PriorBiased => "prior_biased".into(),
        MockPolicy::Refuser => "refuser".into(),
        MockPolicy::UniformRandom { seed } => format!("uniform_random:{seed}"),
    }
}

/// Everything the cache key covers. Parallelism, retry and timeout settings
/// are excluded.
#[derive(Serialize)]
struct KeyMaterial<'a> {
    model_name: &'a str,
    family: ModelFamily,
    params: &'a GenerationParams,
    mock_policy: Option<MockPolicy>,
    payload: &'a Payload,
}

fn key_material<'a>(config: &'a BackendConfig, payload: &'a Payload) -> KeyMaterial<'a> {
    KeyMaterial {
        model_name: &config.model_name,
        family: config.family,
        params: &config.params,
        mock_policy: config.mock_policy,
        payload,
    }
}

pub fn cache_key(config: &BackendConfig, payload: &Payload) -> String {
    let bytes = serde_json::to_vec(&key_material(config, payload)).expect("key serializes");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelOutput {
    /// Generated text, verbatim.
    pub raw_text: String,
    pub request_hash: String,
    pub latency_ms: u64,
    pub from_cache: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    request: serde_json::Value,
    response: String,
    timestamp: u64,
}

/// One JSON file per key. Writes are serialized and published by rename;
/// reads see every completed write.
#[derive(Debug)]
pub struct ResponseCache {
    dir: PathBuf,
    memory: Mutex<HashMap<String, String>>,
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, BackendError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|source| BackendError::Cache {
            path: dir.display().to_string(),
            source,
        })?;
        Ok(ResponseCache {
            dir,
            memory: Mutex::new(HashMap::new()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let memory = self.memory.lock().expect("cache lock");
        if let Some(hit) = memory.get(key) {
            return Some(hit.clone());
        }
        let bytes = std::fs::read(self.path(key)).ok()?;
        match serde_json::from_slice::<CacheEntry>(&bytes) {
            Ok(entry) => Some(entry.response),
            Err(e) => {
                warn!(key, error = %e, "ignoring unreadable cache entry");
                None
            }
        }
    }

    pub fn put(&self, key: &str, request: serde_json::Value, response: &str) -> Result<(), BackendError> {
        let mut memory = self.memory.lock().expect("cache lock");
        let entry = CacheEntry {
            request,
            response: response.to_string(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        let path = self.path(key);
        let tmp = self.dir.join(format!(".{key}.tmp"));
        let io = |source| BackendError::Cache {
            path: path.display().to_string(),
            source,
        };
        std::fs::write(&tmp, serde_json::to_vec_pretty(&entry).expect("entry serializes"))
            .map_err(io)?;
        std::fs::rename(&tmp, &path).map_err(io)?;
        memory.insert(key.to_string(), response.to_string());
        Ok(())
    }
}

/// What a single completion needs: the wire payload, plus the guideline and
/// gold label that mocks answer from.
#[derive(Debug, Clone, Copy)]
pub struct CompletionRequest<'a> {
    pub payload: &'a Payload,
    pub guideline: &'a Guideline,
    pub factual_gold: &'a str,
}

pub struct Backend {
    config: BackendConfig,
    cache: Option<ResponseCache>,
    http: Option<reqwest::blocking::Client>,
    api_key: Option<String>,
}

impl fmt::Debug for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Backend")
            .field("config", &self.config)
            .field("cache", &self.cache.as_ref().map(|c| c.dir()))
            .finish()
    }
}

impl Backend {
    pub fn new(config: BackendConfig, cache: Option<ResponseCache>) -> Result<Self, BackendError> {
        config.validate()?;
        let http = match config.kind {
            BackendKind::Mock => None,
            _ => Some(
                reqwest::blocking::Client::builder()
                    .timeout(Duration::from_millis(config.timeout_ms))
                    .build()
                    .map_err(|e| BackendError::Config(e.to_string()))?,
            ),
        };
        let api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Ok(Backend {
            config,
            cache,
            http,
            api_key,
        })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    pub fn cache(&self) -> Option<&ResponseCache> {
        self.cache.as_ref()
    }

    /// Returns the cached response for identical (config, payload) or
    /// generates and caches a new one.
    pub fn complete(&self, req: CompletionRequest<'_>) -> Result<ModelOutput, BackendError> {
        let key = cache_key(&self.config, req.payload);
        let started = Instant::now();
        if let Some(raw) = self.cache.as_ref().and_then(|c| c.get(&key)) {
            return Ok(ModelOutput {
                raw_text: raw,
                request_hash: key,
                latency_ms: started.elapsed().as_millis() as u64,
                from_cache: true,
            });
        }
        let raw = match self.config.kind {
            BackendKind::Mock => self.mock_answer(&req, &key),
            BackendKind::ChatEndpoint | BackendKind::TextEndpoint => self.call_endpoint(req.payload)?,
        };
        if let Some(cache) = &self.cache {
            let request = serde_json::to_value(key_material(&self.config, req.payload))
                .expect("key serializes");
            cache.put(&key, request, &raw)?;
        }
        Ok(ModelOutput {
            raw_text: raw,
            request_hash: key,
            latency_ms: started.elapsed().as_millis() as u64,
            from_cache: false,
        })
    }

    /// Completes every request with up to `parallelism` in flight; results
    /// are returned in input order.
    pub fn complete_many(
        &self,
        reqs: &[CompletionRequest<'_>],
    ) -> Vec<Result<ModelOutput, BackendError>> {
        let mut out: Vec<Option<Result<ModelOutput, BackendError>>> =
            (0..reqs.len()).map(|_| None).collect();
        run_concurrent(
            reqs,
            self.config.parallelism,
            |r| self.complete(*r),
            |i, res| out[i] = Some(res),
        );
        out.into_iter()
            .map(|r| r.expect("every request completes"))
            .collect()
    }

    fn mock_answer(&self, req: &CompletionRequest<'_>, key: &str) -> String {
        let policy = self.config.mock_policy.expect("validated mock config");
        match policy {
            MockPolicy::GuidelineFollower => guideline_gold(req.guideline, req.factual_gold)
                .unwrap_or_else(|_| req.factual_gold.to_string()),
            MockPolicy::PriorBiased => req.factual_gold.to_string(),
            MockPolicy::Refuser => REFUSAL_TEXT.to_string(),
            MockPolicy::UniformRandom { seed } => {
                let digest = Sha256::digest(format!("{seed}:{key}").as_bytes());
                let mut bytes = [0u8; 32];
                bytes.copy_from_slice(&digest);
                let mut rng = ChaCha8Rng::from_seed(bytes);
                let labels = req.guideline.display_labels();
                labels[rng.random_range(0..labels.len())].clone()
            }
        }
    }

    fn call_endpoint(&self, payload: &Payload) -> Result<String, BackendError> {
        let base = self
            .config
            .base_url
            .as_deref()
            .expect("validated endpoint config")
            .trim_end_matches('/');
        let p = &self.config.params;
        let (url, body) = match (self.config.kind, payload) {
            (BackendKind::ChatEndpoint, Payload::Messages(messages)) => (
                format!("{base}/v1/chat/completions"),
                json!({
                    "model": self.config.model_name,
                    "messages": messages,
                    "temperature": p.temperature,
                    "top_p": p.top_p,
                    "presence_penalty": p.presence_penalty,
                    "frequency_penalty": p.frequency_penalty,
                    "max_tokens": p.max_new_tokens,
                }),
            ),
            (BackendKind::TextEndpoint, Payload::Text(prompt)) => (
                format!("{base}/v1/completions"),
                json!({
                    "model": self.config.model_name,
                    "prompt": prompt,
                    "temperature": p.temperature,
                    "top_p": p.top_p,
                    "presence_penalty": p.presence_penalty,
                    "frequency_penalty": p.frequency_penalty,
                    "max_tokens": p.max_new_tokens,
                }),
            ),
            (kind, payload) => {
                return Err(BackendError::PayloadMismatch {
                    kind,
                    payload: match payload {
                        Payload::Text(_) => "text",
                        Payload::Messages(_) => "messages",
                    },
                })
            }
        };
        let response = self.post_with_retry(&url, &body)?;
        extract_text(self.config.kind, &response)
    }

    fn post_with_retry(&self, url: &str, body: &serde_json::Value) -> Result<serde_json::Value, BackendError> {
        let client = self.http.as_ref().expect("endpoint backend has a client");
        let retry = self.config.retry;
        let mut attempt = 0;
        loop {
            attempt += 1;
            let mut request = client.post(url).json(body);
            if let Some(key) = &self.api_key {
                request = request.bearer_auth(key);
            }
            let outcome = match request.send() {
                Ok(resp) => {
                    let status = resp.status();
                    let text = resp.text().unwrap_or_default();
                    if status.is_success() {
                        return serde_json::from_str(&text)
                            .map_err(|e| BackendError::MalformedResponse(e.to_string()));
                    }
                    let err = BackendError::Status {
                        status: status.as_u16(),
                        body: text.chars().take(500).collect(),
                    };
                    if status.as_u16() == 429 || status.is_server_error() {
                        err
                    } else {
                        return Err(err);
                    }
                }
                Err(e) if e.is_timeout() => BackendError::Timeout { attempts: attempt },
                Err(e) => BackendError::Network {
                    attempts: attempt,
                    message: e.to_string(),
                },
            };
            if attempt >= retry.max_attempts {
                return Err(outcome);
            }
            let wait = retry.backoff(attempt);
            debug!(url, attempt, ?wait, error = %outcome, "retrying");
            std::thread::sleep(wait);
        }
    }
}

fn extract_text(kind: BackendKind, response: &serde_json::Value) -> Result<String, BackendError> {
    let choice = response
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| BackendError::MalformedResponse("missing choices[0]".into()))?;
    let text = match kind {
        BackendKind::ChatEndpoint => choice.get("message").and_then(|m| m.get("content")),
        _ => choice.get("text"),
    };
    text.and_then(|t| t.as_str())
        .map(str::to_string)
        .ok_or_else(|| BackendError::MalformedResponse("missing completion text".into()))
}

/// Runs `work` over `items` on up to `parallelism` scoped threads. `done`
/// is called on the calling thread, in completion order, with each item's
/// index.
pub fn run_concurrent<T, R, W, D>(items: &[T], parallelism: usize, work: W, mut done: D)
where
    T: Sync,
    R: Send,
    W: Fn(&T) -> R + Sync,
    D: FnMut(usize, R),
{
    let workers = parallelism.clamp(1, items.len().max(1));
    if workers == 1 {
        for (i, item) in items.iter().enumerate() {
            done(i, work(item));
        }
        return;
    }
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, work) = (&next, &work);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                if tx.send((i, work(&items[i]))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (i, r) in rx {
            done(i, r);
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets;
    use crate::guidelines::{counterfactual, factual};
    use crate::permutation::Permutation;
    use crate::prompts::wrap;

    fn swap_guideline() -> Guideline {
        counterfactual(
            &assets::scientific_scheme(),
            "model-generated",
            Permutation::swap(5, 3, 4),
        )
        .unwrap()
    }

    fn complete(policy: MockPolicy, g: &Guideline, gold: &str) -> String {
        let backend = Backend::new(BackendConfig::mock(policy), None).unwrap();
        let payload = wrap(ModelFamily::ChatApi, "G", gold);
        backend
            .complete(CompletionRequest {
                payload: &payload,
                guideline: g,
                factual_gold: gold,
            })
            .unwrap()
            .raw_text
    }

    #[test]
    fn mock_policies() {
        let g = swap_guideline();
        assert_eq!(complete(MockPolicy::GuidelineFollower, &g, "Result"), "Conclusion");
        assert_eq!(complete(MockPolicy::PriorBiased, &g, "Result"), "Result");
        assert_eq!(complete(MockPolicy::Refuser, &g, "Result"), REFUSAL_TEXT);
    }

    #[test]
    fn cache_keys() {
        let p = wrap(ModelFamily::ChatApi, "G", "T");
        let a = BackendConfig::chat_endpoint("http://x", "m");
        assert_eq!(cache_key(&a, &p), cache_key(&a.clone(), &p));
        let mut hot = a.clone();
        hot.params.temperature = 0.8;
        assert_ne!(cache_key(&a, &p), cache_key(&hot, &p));
        let mut retry = a.clone();
        retry.retry.max_attempts = 9;
        retry.parallelism = 32;
        assert_eq!(cache_key(&a, &p), cache_key(&retry, &p));
        assert_ne!(cache_key(&a, &p), cache_key(&a, &wrap(ModelFamily::ChatApi, "G", "U")));
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        let backend = Backend::new(
            BackendConfig::mock(MockPolicy::UniformRandom { seed: 3 }),
            Some(cache),
        )
        .unwrap();
        let g = factual(&assets::scientific_scheme(), "model-generated").unwrap();
        let payload = wrap(ModelFamily::ChatApi, "G", "T");
        let req = CompletionRequest {
            payload: &payload,
            guideline: &g,
            factual_gold: "Method",
        };
        let first = backend.complete(req).unwrap();
        let second = backend.complete(req).unwrap();
        assert!(!first.from_cache);
        assert!(second.from_cache);
        assert_eq!(first.raw_text, second.raw_text);
        assert_eq!(first.request_hash, second.request_hash);

        // a fresh process sees the file
        let reopened = ResponseCache::open(dir.path()).unwrap();
        assert_eq!(reopened.get(&first.request_hash), Some(first.raw_text.clone()));
        let body: serde_json::Value = serde_json::from_slice(
            &std::fs::read(dir.path().join(format!("{}.json", first.request_hash))).unwrap(),
        )
        .unwrap();
        assert!(body.get("request").is_some() && body.get("timestamp").is_some());
    }

    #[test]
    fn config_validation() {
        let mut c = BackendConfig::mock(MockPolicy::Refuser);
        c.mock_policy = None;
        assert!(c.validate().is_err());
        let mut c = BackendConfig::chat_endpoint("http://x", "m");
        c.params.top_p = 1.5;
        assert!(c.validate().is_err());
        let mut c = BackendConfig::chat_endpoint("http://x", "m");
        c.family = ModelFamily::Llama2Chat;
        assert!(c.validate().is_err());
        assert!(BackendConfig::text_endpoint("http://x", "m", ModelFamily::ChatApi)
            .validate()
            .is_err());
        assert!(BackendConfig::text_endpoint("http://x", "m", ModelFamily::FalconChat)
            .validate()
            .is_ok());
    }

    #[test]
    fn mock_policy_parsing() {
        assert_eq!("refuser".parse(), Ok(MockPolicy::Refuser));
        assert_eq!(
            "uniform_random:42".parse(),
            Ok(MockPolicy::UniformRandom { seed: 42 })
        );
        assert!("oracle".parse::<MockPolicy>().is_err());
    }

    #[test]
    fn default_params() {
        let open = GenerationParams::open_model();
        assert_eq!((open.temperature, open.top_p, open.max_new_tokens), (0.8, 0.95, 128));
        let chat = GenerationParams::chat_api();
        assert_eq!((chat.temperature, chat.top_p), (1.0, 1.0));
        assert_eq!(chat.greedy().temperature, 0.0);
    }

    #[test]
    fn concurrent_results_keep_input_order() {
        let items: Vec<u64> = (0..200).collect();
        let backend = Backend::new(BackendConfig::mock(MockPolicy::Refuser), None).unwrap();
        let mut seen = Vec::new();
        run_concurrent(&items, 8, |x| x * 2, |i, r| seen.push((i, r)));
        seen.sort();
        assert_eq!(seen, items.iter().map(|&x| (x as usize, x * 2)).collect::<Vec<_>>());

        let g = swap_guideline();
        let payloads: Vec<_> = (0..50).map(|i| wrap(ModelFamily::ChatApi, "G", &i.to_string())).collect();
        let reqs: Vec<_> = payloads
            .iter()
            .map(|p| CompletionRequest {
                payload: p,
                guideline: &g,
                factual_gold: "Result",
            })
            .collect();
        let out = backend.complete_many(&reqs);
        for (p, r) in payloads.iter().zip(&out) {
            assert_eq!(r.as_ref().unwrap().request_hash, cache_key(backend.config(), p));
        }
    }
}
