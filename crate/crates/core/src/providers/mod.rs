//! Remote AI capabilities behind one client layer.
//!
//! Every capability is served by a [`ProviderChain`]: a primary provider
//! plus an optional fallback chain. Each member gets `max_retries + 1`
//! attempts with exponential backoff on transient failures (timeouts,
//! connection errors, HTTP 429/5xx). Permanent failures stop the chain
//! immediately. Every hop is recorded in the returned [`ProviderOutcome`].

mod builtin;
mod http;
pub mod request;
mod stub;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;
use tokio::sync::Semaphore;

pub use builtin::BuiltinStub;
pub use http::HttpProvider;
pub use request::{Bytes, ProviderPayload, ProviderRequest};
pub use stub::{make_stub, StubCall, StubProvider, StubStep};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    VlmScript,
    TtsClone,
    TtsStandard,
    Asr,
    MllmAnalysis,
    LlmChat,
}

impl Capability {
    pub const ALL: [Capability; 6] = [
        Capability::VlmScript,
        Capability::TtsClone,
        Capability::TtsStandard,
        Capability::Asr,
        Capability::MllmAnalysis,
        Capability::LlmChat,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::VlmScript => "vlm_script",
            Self::TtsClone => "tts_clone",
            Self::TtsStandard => "tts_standard",
            Self::Asr => "asr",
            Self::MllmAnalysis => "mllm_analysis",
            Self::LlmChat => "llm_chat",
        }
    }
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Failure of a single call.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CallError {
    #[error("transient: {0}")]
    Transient(String),
    #[error("permanent: {0}")]
    Permanent(String),
    /// A scripted stub ran out of steps.
    #[error("stub script exhausted after {0} calls")]
    StubExhausted(usize),
}

impl CallError {
    pub fn is_transient(&self) -> bool {
        matches!(self, CallError::Transient(_))
    }
}

#[async_trait]
pub trait Provider: Send + Sync {
    fn model_name(&self) -> &str;
    fn capability(&self) -> Capability;
    /// Whether audio inputs may be sent (otherwise transcript only).
    fn accepts_audio(&self) -> bool {
        true
    }
    async fn call(&self, request: &ProviderRequest) -> Result<ProviderPayload, CallError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Backoff {
    pub initial_ms: u64,
    pub multiplier: f64,
}

impl Default for Backoff {
    fn default() -> Self {
        Self {
            initial_ms: 500,
            multiplier: 2.0,
        }
    }
}

impl Backoff {
    /// Delay before retry number `retry` (1-based).
    pub fn delay(&self, retry: u32) -> Duration {
        let ms = self.initial_ms as f64 * self.multiplier.powi(retry.saturating_sub(1) as i32);
        Duration::from_millis(ms.min(60_000.0) as u64)
    }
}

pub const MAX_CHAIN_LEN: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub capability: Capability,
    /// `http(s)://...` for a remote service, `stub://<behaviour>` for the
    /// built-in deterministic stand-ins.
    pub endpoint: String,
    pub model_name: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default)]
    pub backoff: Backoff,
    #[serde(default = "default_true")]
    pub accepts_audio: bool,
    /// Name of the environment variable holding the API key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<Box<ProviderConfig>>,
}

fn default_timeout_ms() -> u64 {
    60_000
}
fn default_max_retries() -> u32 {
    2
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid config at {field}: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ProviderConfig {
    pub fn stub(capability: Capability, model_name: &str) -> Self {
        Self {
            capability,
            endpoint: "stub://default".into(),
            model_name: model_name.into(),
            timeout_ms: 10_000,
            max_retries: 1,
            backoff: Backoff {
                initial_ms: 0,
                multiplier: 1.0,
            },
            accepts_audio: true,
            api_key_env: None,
            fallback: None,
        }
    }

    pub fn with_fallback(mut self, fallback: ProviderConfig) -> Self {
        self.fallback = Some(Box::new(fallback));
        self
    }

    /// Primary first, then each fallback in order.
    pub fn members(&self) -> Vec<&ProviderConfig> {
        let mut out = vec![self];
        let mut cur = self;
        while let Some(next) = cur.fallback.as_deref() {
            out.push(next);
            cur = next;
        }
        out
    }

    pub fn validate(&self, path: &str) -> Result<(), ConfigError> {
        let members = self.members();
        if members.len() > MAX_CHAIN_LEN {
            return Err(ConfigError {
                field: path.into(),
                message: format!("fallback chain longer than {MAX_CHAIN_LEN} members"),
            });
        }
        let mut field = path.to_string();
        for m in members {
            let err = |sub: &str, message: String| ConfigError {
                field: format!("{field}.{sub}"),
                message,
            };
            if m.timeout_ms == 0 {
                return Err(err("timeout_ms", "must be greater than 0".into()));
            }
            if m.model_name.trim().is_empty() {
                return Err(err("model_name", "must not be empty".into()));
            }
            if !(m.endpoint.starts_with("http://")
                || m.endpoint.starts_with("https://")
                || m.endpoint.starts_with("stub://"))
            {
                return Err(err(
                    "endpoint",
                    format!("unsupported scheme in {:?}", m.endpoint),
                ));
            }
            if !(m.backoff.multiplier >= 1.0) {
                return Err(err("backoff.multiplier", "must be at least 1.0".into()));
            }
            field.push_str(".fallback");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub model: String,
    pub attempt: u32,
    /// `None` on success.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderOutcome<T = ProviderPayload> {
    pub payload: T,
    pub provider_used: String,
    pub attempts: u32,
    /// True iff a fallback member produced the payload.
    pub degraded: bool,
    pub log: Vec<AttemptRecord>,
}

impl<T> ProviderOutcome<T> {
    pub fn map<U>(self, f: impl FnOnce(T) -> U) -> ProviderOutcome<U> {
        ProviderOutcome {
            payload: f(self.payload),
            provider_used: self.provider_used,
            attempts: self.attempts,
            degraded: self.degraded,
            log: self.log,
        }
    }

    /// Audit view without the payload.
    pub fn audit(&self, capability: Capability) -> OutcomeAudit {
        OutcomeAudit {
            capability,
            provider_used: self.provider_used.clone(),
            attempts: self.attempts,
            degraded: self.degraded,
            log: self.log.clone(),
            raw_response: None,
        }
    }
}

/// Record of one provider invocation kept alongside produced artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeAudit {
    pub capability: Capability,
    pub provider_used: String,
    pub attempts: u32,
    pub degraded: bool,
    pub log: Vec<AttemptRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_response: Option<String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProviderError {
    #[error("invalid {capability} request: {message}")]
    InvalidRequest {
        capability: Capability,
        message: String,
    },
    #[error("{capability} failed permanently at {model}: {message}")]
    Permanent {
        capability: Capability,
        model: String,
        message: String,
        log: Vec<AttemptRecord>,
    },
    #[error("all {capability} providers failed: {}", summarize(.log))]
    Exhausted {
        capability: Capability,
        log: Vec<AttemptRecord>,
    },
    #[error("{capability} returned {got} where {expected} was expected")]
    UnexpectedPayload {
        capability: Capability,
        expected: &'static str,
        got: &'static str,
    },
}

impl ProviderError {
    pub fn log(&self) -> &[AttemptRecord] {
        match self {
            ProviderError::Permanent { log, .. } | ProviderError::Exhausted { log, .. } => log,
            _ => &[],
        }
    }
}

fn summarize(log: &[AttemptRecord]) -> String {
    log.iter()
        .map(|a| {
            format!(
                "{}#{}: {}",
                a.model,
                a.attempt,
                a.error.as_deref().unwrap_or("ok")
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Clone)]
pub struct ChainMember {
    pub provider: Arc<dyn Provider>,
    pub max_retries: u32,
    pub timeout: Duration,
    pub backoff: Backoff,
}

impl ChainMember {
    pub fn new(provider: Arc<dyn Provider>, max_retries: u32) -> Self {
        Self {
            provider,
            max_retries,
            timeout: Duration::from_secs(60),
            backoff: Backoff {
                initial_ms: 0,
                multiplier: 1.0,
            },
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_backoff(mut self, backoff: Backoff) -> Self {
        self.backoff = backoff;
        self
    }
}

pub const DEFAULT_CONCURRENCY: usize = 4;

/// Primary provider plus ordered fallbacks for one capability.
#[derive(Clone)]
pub struct ProviderChain {
    capability: Capability,
    members: Vec<ChainMember>,
    limiter: Arc<Semaphore>,
}

impl fmt::Debug for ProviderChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProviderChain")
            .field("capability", &self.capability)
            .field(
                "members",
                &self
                    .members
                    .iter()
                    .map(|m| m.provider.model_name().to_string())
                    .collect::<Vec<_>>(),
            )
            .finish()
    }
}

impl ProviderChain {
    pub fn new(capability: Capability, members: Vec<ChainMember>) -> Self {
        assert!(!members.is_empty(), "a provider chain needs a primary");
        Self {
            capability,
            members,
            limiter: Arc::new(Semaphore::new(DEFAULT_CONCURRENCY)),
        }
    }

    pub fn single(provider: Arc<dyn Provider>, max_retries: u32) -> Self {
        let cap = provider.capability();
        Self::new(cap, vec![ChainMember::new(provider, max_retries)])
    }

    pub fn with_concurrency(mut self, limit: usize) -> Self {
        self.limiter = Arc::new(Semaphore::new(limit.max(1)));
        self
    }

    pub fn from_config(config: &ProviderConfig) -> Result<Self, ConfigError> {
        config.validate(config.capability.as_str())?;
        let mut members = Vec::new();
        for m in config.members() {
            let provider: Arc<dyn Provider> =
                if let Some(behaviour) = m.endpoint.strip_prefix("stub://") {
                    Arc::new(
                        BuiltinStub::parse(m.capability, &m.model_name, behaviour).map_err(
                            |message| ConfigError {
                                field: format!("{}.endpoint", config.capability),
                                message,
                            },
                        )?,
                    )
                } else {
                    Arc::new(HttpProvider::from_config(m))
                };
            members.push(ChainMember {
                provider,
                max_retries: m.max_retries,
                timeout: Duration::from_millis(m.timeout_ms),
                backoff: m.backoff,
            });
        }
        Ok(Self::new(config.capability, members))
    }

    pub fn capability(&self) -> Capability {
        self.capability
    }

    pub fn primary_model(&self) -> &str {
        self.members[0].provider.model_name()
    }

    pub fn members(&self) -> &[ChainMember] {
        &self.members
    }

    pub fn primary_accepts_audio(&self) -> bool {
        self.members[0].provider.accepts_audio()
    }

    /// Upper bound on calls one invocation can make.
    pub fn attempt_ceiling(&self) -> u32 {
        self.members.iter().map(|m| m.max_retries + 1).sum()
    }

    pub async fn invoke(
        &self,
        request: &ProviderRequest,
    ) -> Result<ProviderOutcome, ProviderError> {
        self.invoke_filtered(request, |_| true).await
    }

    /// Runs the chain over members accepted by `keep`, in order. Used to
    /// bypass voice cloning when no usable voice sample exists.
    pub async fn invoke_filtered(
        &self,
        request: &ProviderRequest,
        keep: impl Fn(&ChainMember) -> bool,
    ) -> Result<ProviderOutcome, ProviderError> {
        let _permit = self.limiter.acquire().await.expect("limiter closed");
        let primary = self.primary_model().to_string();
        let mut log = Vec::new();
        let mut any_member = false;
        for member in self.members.iter().filter(|m| keep(m)) {
            any_member = true;
            let cap = member.provider.capability();
            if let Err(message) = request.validate_for(cap) {
                if log.is_empty() && member.provider.model_name() == primary {
                    return Err(ProviderError::InvalidRequest {
                        capability: cap,
                        message,
                    });
                }
                log.push(AttemptRecord {
                    model: member.provider.model_name().to_string(),
                    attempt: 0,
                    error: Some(format!("skipped: {message}")),
                });
                continue;
            }
            let model = member.provider.model_name().to_string();
            for attempt in 1..=member.max_retries + 1 {
                if attempt > 1 {
                    let delay = member.backoff.delay(attempt - 1);
                    if !delay.is_zero() {
                        tokio::time::sleep(delay).await;
                    }
                }
                let result =
                    match tokio::time::timeout(member.timeout, member.provider.call(request)).await
                    {
                        Ok(r) => r,
                        Err(_) => Err(CallError::Transient(format!(
                            "timed out after {} ms",
                            member.timeout.as_millis()
                        ))),
                    };
                match result {
                    Ok(payload) => {
                        log.push(AttemptRecord {
                            model: model.clone(),
                            attempt,
                            error: None,
                        });
                        let degraded = model != primary;
                        if degraded {
                            tracing::warn!(capability = %self.capability, provider = %model, "served by fallback provider");
                        }
                        return Ok(ProviderOutcome {
                            payload,
                            provider_used: model,
                            attempts: log.iter().filter(|a| a.attempt > 0).count() as u32,
                            degraded,
                            log,
                        });
                    }
                    Err(e) => {
                        tracing::debug!(capability = %self.capability, provider = %model, attempt, error = %e, "provider call failed");
                        let transient = e.is_transient();
                        log.push(AttemptRecord {
                            model: model.clone(),
                            attempt,
                            error: Some(e.to_string()),
                        });
                        if !transient {
                            return Err(ProviderError::Permanent {
                                capability: self.capability,
                                model,
                                message: e.to_string(),
                                log,
                            });
                        }
                    }
                }
            }
        }
        if !any_member {
            return Err(ProviderError::InvalidRequest {
                capability: self.capability,
                message: "no provider in the chain can serve this request".into(),
            });
        }
        Err(ProviderError::Exhausted {
            capability: self.capability,
            log,
        })
    }
}

/// Provider chains for every capability used by the pipelines. Speech
/// synthesis uses the `tts_clone` chain, whose fallbacks are standard TTS.
#[derive(Clone, Debug)]
pub struct Providers {
    pub vlm_script: ProviderChain,
    pub tts: ProviderChain,
    pub asr: ProviderChain,
    pub mllm_analysis: ProviderChain,
    pub llm_chat: ProviderChain,
}

/// Provider config file: capability name → chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProvidersConfig {
    pub vlm_script: ProviderConfig,
    pub tts_clone: ProviderConfig,
    pub asr: ProviderConfig,
    pub mllm_analysis: ProviderConfig,
    pub llm_chat: ProviderConfig,
}

impl ProvidersConfig {
    /// Built-in deterministic stubs for every capability; cloning falls
    /// back to standard TTS.
    pub fn offline() -> Self {
        Self {
            vlm_script: ProviderConfig::stub(Capability::VlmScript, "stub-vlm"),
            tts_clone: ProviderConfig::stub(Capability::TtsClone, "stub-voice-clone")
                .with_fallback(ProviderConfig::stub(Capability::TtsStandard, "stub-tts")),
            asr: ProviderConfig::stub(Capability::Asr, "stub-asr"),
            mllm_analysis: ProviderConfig::stub(Capability::MllmAnalysis, "stub-mllm"),
            llm_chat: ProviderConfig::stub(Capability::LlmChat, "stub-llm"),
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            field: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|e| ConfigError {
            field: path.display().to_string(),
            message: e.to_string(),
        })?;
        cfg.apply_env(|k| std::env::var(k).ok());
        cfg.validate()?;
        Ok(cfg)
    }

    fn entries_mut(&mut self) -> [(&'static str, &mut ProviderConfig); 5] {
        [
            ("vlm_script", &mut self.vlm_script),
            ("tts_clone", &mut self.tts_clone),
            ("asr", &mut self.asr),
            ("mllm_analysis", &mut self.mllm_analysis),
            ("llm_chat", &mut self.llm_chat),
        ]
    }

    /// `PRESOCOACH_<CAPABILITY>_ENDPOINT` replaces the primary endpoint.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) {
        for (name, cfg) in self.entries_mut() {
            let key = format!("PRESOCOACH_{}_ENDPOINT", name.to_ascii_uppercase());
            if let Some(ep) = lookup(&key) {
                cfg.endpoint = ep;
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let expected: BTreeMap<&str, (Capability, &ProviderConfig)> = [
            ("vlm_script", (Capability::VlmScript, &self.vlm_script)),
            ("tts_clone", (Capability::TtsClone, &self.tts_clone)),
            ("asr", (Capability::Asr, &self.asr)),
            (
                "mllm_analysis",
                (Capability::MllmAnalysis, &self.mllm_analysis),
            ),
            ("llm_chat", (Capability::LlmChat, &self.llm_chat)),
        ]
        .into_iter()
        .collect();
        for (name, (cap, cfg)) in expected {
            if cfg.capability != cap {
                return Err(ConfigError {
                    field: format!("{name}.capability"),
                    message: format!("expected {cap}, found {}", cfg.capability),
                });
            }
            cfg.validate(name)?;
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Providers, ConfigError> {
        self.validate()?;
        Ok(Providers {
            vlm_script: ProviderChain::from_config(&self.vlm_script)?,
            tts: ProviderChain::from_config(&self.tts_clone)?,
            asr: ProviderChain::from_config(&self.asr)?,
            mllm_analysis: ProviderChain::from_config(&self.mllm_analysis)?,
            llm_chat: ProviderChain::from_config(&self.llm_chat)?,
        })
    }
}

impl Default for ProvidersConfig {
    fn default() -> Self {
        Self::offline()
    }
}

impl Providers {
    pub fn offline() -> Self {
        ProvidersConfig::offline()
            .build()
            .expect("built-in stub config is valid")
    }
}
