//! Slogan generation through pluggable backends.
//!
//! One request produces one slogan. Completed slogans are written to a
//! directory cache keyed by the request parameters, so an interrupted run
//! resumes without repeating finished requests. Live HTTP requests pass
//! through a sliding-window rate limiter.
//!
//! Only the user message is sent; no system prompt is used.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use chrono::{DateTime, TimeZone, Utc};
use indexmap::IndexMap;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{build_prompt, truncate_to_seconds, Corpus, PromptSpec, Slogan, TargetGroup, Taxonomy};
use crate::digest::{derive_seed, sha256_hex};
use crate::error::{Error, Result};
use crate::lexicon::{match_terms, normalize_text, Lexicon};

pub const DEFAULT_KEY_ENV: &str = "OPENAI_API_KEY";
pub const DEFAULT_CACHE_DIR: &str = ".slogan-cache";
pub const RATE_WINDOW: Duration = Duration::from_secs(60);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub n_per_group: usize,
    pub seed: Option<u64>,
    /// Requests per minute.
    pub rate_limit: u32,
    pub max_retries: u32,
}

impl GenerationParams {
    pub fn new(model: impl Into<String>) -> Self {
        GenerationParams {
            model: model.into(),
            temperature: 1.0,
            max_tokens: 500,
            n_per_group: 100,
            seed: None,
            rate_limit: 60,
            max_retries: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut issues = Vec::new();
        if self.model.trim().is_empty() {
            issues.push("model must be set");
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            issues.push("temperature must be >= 0");
        }
        if self.max_tokens < 1 {
            issues.push("max_tokens must be >= 1");
        }
        if self.n_per_group < 1 {
            issues.push("n_per_group must be >= 1");
        }
        if self.rate_limit < 1 {
            issues.push("rate_limit must be >= 1");
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::config(issues.join("; ")))
        }
    }
}

/// Number of insertions for one (group, category): fixed, or cycled by slogan
/// index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PlanCount {
    Fixed(u32),
    Cycle(Vec<u32>),
}

impl PlanCount {
    pub fn at(&self, index: usize) -> u32 {
        match self {
            PlanCount::Fixed(n) => *n,
            PlanCount::Cycle(v) => v[index % v.len()],
        }
    }
}

/// Dictionary-phrase insertions per slogan, by group then term category.
/// Missing cells mean zero insertions.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PlantedPlan {
    pub cells: IndexMap<String, IndexMap<String, PlanCount>>,
}

impl PlantedPlan {
    pub fn count(&self, group: &str, category: &str, index: usize) -> u32 {
        self.cells
            .get(group)
            .and_then(|g| g.get(category))
            .map_or(0, |c| c.at(index))
    }

    pub fn set(&mut self, group: &str, category: &str, count: PlanCount) {
        self.cells
            .entry(group.to_string())
            .or_default()
            .insert(category.to_string(), count);
    }

    pub fn validate(&self, taxonomy: &Taxonomy, lexicon: &Lexicon) -> Result<()> {
        let mut issues = Vec::new();
        for (g, cats) in &self.cells {
            if taxonomy.group(g).is_none() {
                issues.push(format!("planted plan refers to unknown group '{g}'"));
            }
            for (c, n) in cats {
                if lexicon.dictionary(c).is_none() {
                    issues.push(format!("planted plan refers to unknown term category '{c}'"));
                }
                if matches!(n, PlanCount::Cycle(v) if v.is_empty()) {
                    issues.push(format!("planted plan cell '{g}/{c}' has an empty cycle"));
                }
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation { issues })
        }
    }

    /// A varied plan for demos: every cell cycles through five counts in 0..=2.
    pub fn random(seed: u64, taxonomy: &Taxonomy, lexicon: &Lexicon) -> Self {
        let mut plan = PlantedPlan::default();
        for g in &taxonomy.groups {
            for c in lexicon.categories() {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["plan", &g.id, &c.id]));
                let cycle = (0..5).map(|_| rng.random_range(0..=2)).collect();
                plan.set(&g.id, &c.id, PlanCount::Cycle(cycle));
            }
        }
        plan
    }
}

/// Backend selection as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendKind {
    HttpApi {
        endpoint: String,
        #[serde(default = "default_key_env")]
        key_env: String,
    },
    Replay {
        corpus_path: PathBuf,
    },
    Synthetic {
        seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        plan: Option<PlantedPlan>,
    },
}

fn default_key_env() -> String {
    DEFAULT_KEY_ENV.to_string()
}

pub struct CompletionRequest<'a> {
    pub group: &'a TargetGroup,
    pub prompt: &'a str,
    pub index: usize,
    pub params: &'a GenerationParams,
}

/// A backend's answer. Optional fields override the generator's defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub model: Option<String>,
    pub prompt: Option<String>,
    pub created_at: Option<DateTime<Utc>>,
}

impl Completion {
    pub fn text(text: impl Into<String>) -> Self {
        Completion {
            text: text.into(),
            model: None,
            prompt: None,
            created_at: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendFailure {
    pub message: String,
    pub retryable: bool,
}

impl BackendFailure {
    pub fn retryable(message: impl Into<String>) -> Self {
        BackendFailure {
            message: message.into(),
            retryable: true,
        }
    }

    pub fn fatal(message: impl Into<String>) -> Self {
        BackendFailure {
            message: message.into(),
            retryable: false,
        }
    }
}

pub trait SloganBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion, BackendFailure>;

    /// Extra cache-key material; `None` disables caching for this backend.
    fn cache_salt(&self) -> Option<String>;

    /// Live backends are subject to rate limiting.
    fn is_live(&self) -> bool {
        false
    }

    /// Timestamp recorded on slogans the backend does not date itself.
    fn timestamp(&self) -> DateTime<Utc> {
        truncate_to_seconds(Utc::now())
    }
}

/// Strips surrounding quotes and a leading list number such as `1. ` or `2) `.
pub fn clean_slogan(raw: &str) -> String {
    let mut s = raw.trim();
    loop {
        let before = s;
        let digits = s.chars().take_while(char::is_ascii_digit).count();
        if digits > 0 {
            let rest = &s[digits..];
            if let Some(r) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
                s = r.trim_start();
            }
        }
        for (open, close) in [('"', '"'), ('\u{201c}', '\u{201d}'), ('\'', '\'')] {
            if s.len() >= 2 && s.starts_with(open) && s.ends_with(close) {
                s = s[open.len_utf8()..s.len() - close.len_utf8()].trim();
            }
        }
        if s == before {
            return s.to_string();
        }
    }
}

pub struct HttpBackend {
    endpoint: String,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("endpoint", &self.endpoint)
            .field("api_key", &"<redacted>")
            .finish()
    }
}

impl HttpBackend {
    /// Fails with a configuration error if `key_env` is unset or empty.
    pub fn new(endpoint: &str, key_env: &str) -> Result<Self> {
        let api_key = std::env::var(key_env)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| {
                Error::config(format!("environment variable {key_env} with the API key is not set"))
            })?;
        Self::with_key(endpoint, api_key)
    }

    pub fn with_key(endpoint: &str, api_key: String) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| Error::config(format!("cannot build HTTP client: {e}")))?;
        Ok(HttpBackend {
            endpoint: endpoint.to_string(),
            api_key,
            client,
        })
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
}

fn first_choice_text(body: &serde_json::Value) -> Option<&str> {
    let choice = body.get("choices")?.get(0)?;
    choice
        .get("message")
        .and_then(|m| m.get("content"))
        .or_else(|| choice.get("text"))
        .and_then(|v| v.as_str())
}

impl SloganBackend for HttpBackend {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion, BackendFailure> {
        let body = ChatRequest {
            model: &request.params.model,
            messages: vec![ChatMessage {
                role: "user",
                content: request.prompt,
            }],
            temperature: request.params.temperature,
            max_tokens: request.params.max_tokens,
        };
        let resp = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| BackendFailure::retryable(format!("request failed: {e}")))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(BackendFailure::retryable(format!("HTTP status {status}")));
        }
        let value: serde_json::Value = resp
            .json()
            .map_err(|e| BackendFailure::retryable(format!("unreadable response body: {e}")))?;
        let text = first_choice_text(&value)
            .ok_or_else(|| BackendFailure::retryable("response has no choices[0] text"))?;
        let text = clean_slogan(text);
        if text.is_empty() {
            return Err(BackendFailure::retryable("empty model response"));
        }
        Ok(Completion::text(text))
    }

    fn cache_salt(&self) -> Option<String> {
        Some(String::new())
    }

    fn is_live(&self) -> bool {
        true
    }
}

/// Serves slogans from a stored corpus, unchanged.
pub struct ReplayBackend {
    corpus: Corpus,
}

impl ReplayBackend {
    pub fn new(corpus: Corpus) -> Self {
        ReplayBackend { corpus }
    }
}

impl SloganBackend for ReplayBackend {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion, BackendFailure> {
        let s = self
            .corpus
            .group(&request.group.id)
            .find(|s| s.index == request.index)
            .ok_or_else(|| BackendFailure::fatal("slogan missing from the replayed corpus"))?;
        Ok(Completion {
            text: s.text.clone(),
            model: Some(s.model.clone()),
            prompt: Some(s.prompt.clone()),
            created_at: Some(s.created_at),
        })
    }

    fn cache_salt(&self) -> Option<String> {
        None
    }
}

const SYNTH_OPENERS: &[&str] = &[
    "Plan ahead",
    "Look forward",
    "Dream bigger",
    "Stay ready",
    "Move forward",
    "Smile more",
];
const SYNTH_CONNECTORS: &[&str] = &["and", "plus"];
const SYNTH_LINK: &str = "with";
const SYNTH_CLOSERS: &[&str] = &["today!", "every day.", "right now!", "all year."];

/// Deterministic slogans built from neutral filler plus planted dictionary
/// phrases. Only phrases that score exactly one hit, in their own category,
/// are planted, and filler words never occur in the lexicon, so the lexicon
/// counts of a synthetic slogan equal its planted counts.
pub struct SyntheticBackend {
    seed: u64,
    plan: PlantedPlan,
    categories: Vec<String>,
    pools: Vec<Vec<String>>,
    salt: String,
}

impl SyntheticBackend {
    pub fn new(seed: u64, plan: PlantedPlan, taxonomy: &Taxonomy, lexicon: &Lexicon) -> Result<Self> {
        plan.validate(taxonomy, lexicon)?;
        let vocab = lexicon.vocabulary();
        let filler = SYNTH_OPENERS
            .iter()
            .chain(SYNTH_CONNECTORS)
            .chain(SYNTH_CLOSERS)
            .chain(std::iter::once(&SYNTH_LINK));
        for f in filler {
            if let Some(t) = normalize_text(f).into_iter().find(|t| vocab.contains(t.as_str())) {
                return Err(Error::config(format!(
                    "synthetic filler token '{t}' occurs in the lexicon"
                )));
            }
        }

        let mut pools = Vec::new();
        for (ci, dict) in lexicon.dictionaries().iter().enumerate() {
            let pool: Vec<String> = dict
                .phrases()
                .iter()
                .zip(dict.phrase_tokens())
                .filter(|(_, toks)| {
                    let hits = match_terms(toks, lexicon);
                    hits.iter().enumerate().all(|(cj, h)| {
                        if cj == ci {
                            h.len() == 1 && h[0].token_len == toks.len()
                        } else {
                            h.is_empty()
                        }
                    })
                })
                .map(|(p, _)| p.clone())
                .collect();
            pools.push(pool);
        }

        let categories = lexicon.category_ids();
        for g in &taxonomy.groups {
            for (ci, c) in categories.iter().enumerate() {
                let wants = plan
                    .cells
                    .get(&g.id)
                    .and_then(|m| m.get(c))
                    .is_some_and(|n| match n {
                        PlanCount::Fixed(k) => *k > 0,
                        PlanCount::Cycle(v) => v.iter().any(|&k| k > 0),
                    });
                if wants && pools[ci].is_empty() {
                    return Err(Error::config(format!(
                        "term category '{c}' has no phrase that can be planted unambiguously"
                    )));
                }
            }
        }

        let salt = format!(
            "synthetic:{seed}:{}:{}",
            sha256_hex(serde_json::to_string(&plan).expect("plan serializes").as_bytes()),
            lexicon.digest()
        );
        Ok(SyntheticBackend {
            seed,
            plan,
            categories,
            pools,
            salt,
        })
    }

    pub fn plan(&self) -> &PlantedPlan {
        &self.plan
    }

    /// The phrases eligible for planting in each category.
    pub fn pools(&self) -> &[Vec<String>] {
        &self.pools
    }

    pub fn render(&self, group_id: &str, index: usize) -> String {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &["synthetic", group_id, &index.to_string()]));
        let opener = *SYNTH_OPENERS.choose(&mut rng).expect("non-empty");
        let closer = *SYNTH_CLOSERS.choose(&mut rng).expect("non-empty");
        let mut planted: Vec<&str> = Vec::new();
        for (ci, c) in self.categories.iter().enumerate() {
            for _ in 0..self.plan.count(group_id, c, index) {
                planted.push(self.pools[ci].choose(&mut rng).expect("pool checked non-empty"));
            }
        }
        planted.shuffle(&mut rng);

        let mut text = opener.to_string();
        for (i, phrase) in planted.iter().enumerate() {
            let joiner = if i == 0 {
                SYNTH_LINK
            } else {
                SYNTH_CONNECTORS.choose(&mut rng).expect("non-empty")
            };
            text.push(' ');
            text.push_str(joiner);
            text.push(' ');
            text.push_str(phrase);
        }
        text.push(' ');
        text.push_str(closer);
        text
    }
}

impl SloganBackend for SyntheticBackend {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion, BackendFailure> {
        Ok(Completion::text(self.render(&request.group.id, request.index)))
    }

    fn cache_salt(&self) -> Option<String> {
        Some(self.salt.clone())
    }

    fn timestamp(&self) -> DateTime<Utc> {
        Utc.timestamp_opt(0, 0).single().expect("epoch")
    }
}

/// Time source for rate limiting and retry back-off.
pub trait Clock: Send + Sync {
    /// Monotonic time since an arbitrary origin.
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock {
            origin: Instant::now(),
        }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// A clock that only moves when slept on.
#[derive(Default)]
pub struct FakeClock {
    now: Mutex<Duration>,
}

impl Clock for FakeClock {
    fn now(&self) -> Duration {
        *self.now.lock().expect("clock lock")
    }

    fn sleep(&self, d: Duration) {
        *self.now.lock().expect("clock lock") += d;
    }
}

/// Admits at most `limit` requests in any half-open window of length `window`.
pub struct RateLimiter {
    limit: usize,
    window: Duration,
    sent: VecDeque<Duration>,
}

impl RateLimiter {
    pub fn new(limit: u32, window: Duration) -> Self {
        RateLimiter {
            limit: limit.max(1) as usize,
            window,
            sent: VecDeque::new(),
        }
    }

    pub fn per_minute(limit: u32) -> Self {
        Self::new(limit, RATE_WINDOW)
    }

    /// Blocks (via `clock`) until a request may be sent, then records it.
    pub fn acquire(&mut self, clock: &dyn Clock) -> Duration {
        loop {
            let now = clock.now();
            while self.sent.front().is_some_and(|&t| t + self.window <= now) {
                self.sent.pop_front();
            }
            if self.sent.len() < self.limit {
                self.sent.push_back(now);
                return now;
            }
            let wait = self.sent[0] + self.window - now;
            clock.sleep(wait);
        }
    }
}

/// One file per cache key holding the slogan text.
#[derive(Debug, Clone)]
pub struct SloganCache {
    dir: PathBuf,
}

impl SloganCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(SloganCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Hash of (model, temperature, max_tokens, prompt, index), plus the
    /// backend salt when it is non-empty.
    pub fn key(params: &GenerationParams, prompt: &str, index: usize, salt: &str) -> String {
        let mut material = serde_json::json!([
            params.model,
            params.temperature,
            params.max_tokens,
            prompt,
            index
        ]);
        if !salt.is_empty() {
            material
                .as_array_mut()
                .expect("array literal")
                .push(serde_json::Value::String(salt.to_string()));
        }
        sha256_hex(material.to_string().as_bytes())
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.txt"))
    }

    pub fn get(&self, key: &str) -> Option<String> {
        std::fs::read_to_string(self.path(key)).ok()
    }

    pub fn put(&self, key: &str, text: &str) -> Result<()> {
        let tmp = self.dir.join(format!("{key}.{}.tmp", std::process::id()));
        std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        let dest = self.path(key);
        std::fs::rename(&tmp, &dest).map_err(|e| Error::io(&dest, e))
    }
}

pub struct Generator {
    backend: Box<dyn SloganBackend>,
    cache: Option<SloganCache>,
    clock: Arc<dyn Clock>,
    limiter: Mutex<Option<RateLimiter>>,
    retry_delay: Duration,
    max_in_flight: usize,
    requests: AtomicUsize,
}

impl Generator {
    pub fn new(backend: Box<dyn SloganBackend>) -> Self {
        Generator {
            backend,
            cache: None,
            clock: Arc::new(SystemClock::default()),
            limiter: Mutex::new(None),
            retry_delay: Duration::from_secs(1),
            max_in_flight: 1,
            requests: AtomicUsize::new(0),
        }
    }

    /// Builds the backend described by `kind`. HTTP backends read their key
    /// here, so a missing key fails before any request is made.
    pub fn from_kind(kind: &BackendKind, taxonomy: &Taxonomy, lexicon: &Lexicon) -> Result<Self> {
        let backend: Box<dyn SloganBackend> = match kind {
            BackendKind::HttpApi { endpoint, key_env } => Box::new(HttpBackend::new(endpoint, key_env)?),
            BackendKind::Replay { corpus_path } => Box::new(ReplayBackend::new(
                crate::corpus::load_corpus(corpus_path, taxonomy)?,
            )),
            BackendKind::Synthetic { seed, plan } => {
                let plan = plan
                    .clone()
                    .unwrap_or_else(|| PlantedPlan::random(*seed, taxonomy, lexicon));
                Box::new(SyntheticBackend::new(*seed, plan, taxonomy, lexicon)?)
            }
        };
        Ok(Generator::new(backend))
    }

    pub fn with_cache(mut self, cache: SloganCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_retry_delay(mut self, delay: Duration) -> Self {
        self.retry_delay = delay;
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    /// Backend calls issued so far (cache hits excluded).
    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    fn call_with_retries(&self, request: &CompletionRequest<'_>) -> Result<Completion> {
        let attempts = request.params.max_retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                self.clock.sleep(self.retry_delay * 2u32.saturating_pow(attempt - 1));
            }
            if self.backend.is_live() {
                let mut limiter = self.limiter.lock().expect("limiter lock");
                limiter
                    .get_or_insert_with(|| RateLimiter::per_minute(request.params.rate_limit))
                    .acquire(self.clock.as_ref());
            }
            self.requests.fetch_add(1, Ordering::SeqCst);
            match self.backend.complete(request) {
                Ok(c) if c.text.trim().is_empty() => last = "empty model response".to_string(),
                Ok(c) => return Ok(c),
                Err(f) if f.retryable => last = f.message,
                Err(f) => {
                    last = f.message;
                    break;
                }
            }
        }
        Err(Error::Generation {
            group: request.group.id.clone(),
            index: request.index,
            message: last,
        })
    }

    pub fn generate_group(
        &self,
        group: &TargetGroup,
        params: &GenerationParams,
        prompt_spec: &PromptSpec,
    ) -> Result<Vec<Slogan>> {
        params.validate()?;
        let prompt = build_prompt(group, prompt_spec)?;
        let salt = self.backend.cache_salt();
        let mut out = Vec::with_capacity(params.n_per_group);
        for index in 0..params.n_per_group {
            let key = match (&self.cache, &salt) {
                (Some(_), Some(salt)) => Some(SloganCache::key(params, &prompt, index, salt)),
                _ => None,
            };
            let cached = key
                .as_ref()
                .and_then(|k| self.cache.as_ref().and_then(|c| c.get(k)))
                .filter(|t| !t.trim().is_empty());
            let completion = match cached {
                Some(text) => Completion::text(text),
                None => {
                    let request = CompletionRequest {
                        group,
                        prompt: &prompt,
                        index,
                        params,
                    };
                    let c = self.call_with_retries(&request)?;
                    if let (Some(cache), Some(k)) = (&self.cache, &key) {
                        cache.put(k, &c.text)?;
                    }
                    c
                }
            };
            out.push(Slogan {
                group_id: group.id.clone(),
                index,
                prompt: completion.prompt.unwrap_or_else(|| prompt.clone()),
                text: completion.text,
                model: completion.model.unwrap_or_else(|| params.model.clone()),
                created_at: completion.created_at.unwrap_or_else(|| self.backend.timestamp()),
            });
        }
        Ok(out)
    }

    /// Generates every group of the taxonomy. `progress` is called once per
    /// finished group. After the first failure no new group is started.
    pub fn generate_all(
        &self,
        taxonomy: &Taxonomy,
        params: &GenerationParams,
        prompt_spec: &PromptSpec,
        progress: &(dyn Fn(&TargetGroup, usize) + Sync),
    ) -> Result<Corpus> {
        taxonomy.validate()?;
        params.validate()?;
        prompt_spec.validate()?;

        let n = taxonomy.groups.len();
        let next = AtomicUsize::new(0);
        let failed = AtomicBool::new(false);
        let results: Vec<Mutex<Option<Result<Vec<Slogan>>>>> = (0..n).map(|_| Mutex::new(None)).collect();

        std::thread::scope(|scope| {
            for _ in 0..self.max_in_flight.min(n.max(1)) {
                scope.spawn(|| loop {
                    if failed.load(Ordering::SeqCst) {
                        break;
                    }
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= n {
                        break;
                    }
                    let group = &taxonomy.groups[i];
                    let r = self.generate_group(group, params, prompt_spec);
                    match &r {
                        Ok(v) => progress(group, v.len()),
                        Err(_) => failed.store(true, Ordering::SeqCst),
                    }
                    *results[i].lock().expect("result slot") = Some(r);
                });
            }
        });

        let mut completed = Vec::new();
        let mut failed_groups = Vec::new();
        let mut first_error = None;
        let mut slogans = Vec::new();
        for (g, slot) in taxonomy.groups.iter().zip(results) {
            match slot.into_inner().expect("result slot") {
                Some(Ok(v)) => {
                    completed.push(g.id.clone());
                    slogans.extend(v);
                }
                Some(Err(e)) => {
                    failed_groups.push(g.id.clone());
                    first_error.get_or_insert(e);
                }
                None => {}
            }
        }
        if let Some(cause) = first_error {
            return Err(Error::GenerationAborted {
                completed,
                failed: failed_groups,
                cause: Box::new(cause),
            });
        }
        Corpus::new(slogans, taxonomy)
    }
}
