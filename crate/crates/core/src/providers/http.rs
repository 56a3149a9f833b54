//! JSON-over-HTTP provider client.
//!
//! The request body is the serialized [`ProviderRequest`] plus a `model`
//! field. When the body exceeds [`MULTIPART_THRESHOLD`] it is sent as
//! `multipart/form-data`: a `request` JSON part whose `{"b64": ..}` objects
//! are replaced by `{"part": i}` placeholders, plus binary parts `part<i>`.
//! The response is a [`ProviderPayload`] JSON object.

use async_trait::async_trait;
use base64::Engine as _;
use serde_json::Value;

use super::{CallError, Capability, Provider, ProviderConfig, ProviderPayload, ProviderRequest};

pub const MULTIPART_THRESHOLD: usize = 10 * 1024 * 1024;

pub struct HttpProvider {
    client: reqwest::Client,
    endpoint: String,
    model: String,
    capability: Capability,
    accepts_audio: bool,
    api_key: Option<String>,
}

impl HttpProvider {
    pub fn from_config(cfg: &ProviderConfig) -> Self {
        let env_key = format!(
            "PRESOCOACH_{}_API_KEY",
            cfg.capability.as_str().to_ascii_uppercase()
        );
        let api_key = cfg
            .api_key_env
            .as_deref()
            .and_then(|k| std::env::var(k).ok())
            .or_else(|| std::env::var(env_key).ok());
        Self {
            client: reqwest::Client::new(),
            endpoint: cfg.endpoint.clone(),
            model: cfg.model_name.clone(),
            capability: cfg.capability,
            accepts_audio: cfg.accepts_audio,
            api_key,
        }
    }
}

/// Moves every `{"b64": ..}` object out of `v` into a list of binary parts.
pub fn extract_binary_parts(v: &mut Value, parts: &mut Vec<Vec<u8>>) -> Result<(), String> {
    match v {
        Value::Object(map) => {
            if map.len() == 1 {
                if let Some(Value::String(s)) = map.get("b64") {
                    let bytes = base64::engine::general_purpose::STANDARD
                        .decode(s)
                        .map_err(|e| e.to_string())?;
                    *v = serde_json::json!({ "part": parts.len() });
                    parts.push(bytes);
                    return Ok(());
                }
            }
            for child in map.values_mut() {
                extract_binary_parts(child, parts)?;
            }
        }
        Value::Array(items) => {
            for child in items {
                extract_binary_parts(child, parts)?;
            }
        }
        _ => {}
    }
    Ok(())
}

fn classify(status: reqwest::StatusCode, body: String) -> CallError {
    let msg = format!(
        "HTTP {}: {}",
        status.as_u16(),
        body.chars().take(500).collect::<String>()
    );
    if status.as_u16() == 429 || status.is_server_error() {
        CallError::Transient(msg)
    } else {
        CallError::Permanent(msg)
    }
}

#[async_trait]
impl Provider for HttpProvider {
    fn model_name(&self) -> &str {
        &self.model
    }

    fn capability(&self) -> Capability {
        self.capability
    }

    fn accepts_audio(&self) -> bool {
        self.accepts_audio
    }

    async fn call(&self, request: &ProviderRequest) -> Result<ProviderPayload, CallError> {
        let mut body =
            serde_json::to_value(request).map_err(|e| CallError::Permanent(e.to_string()))?;
        body["model"] = Value::String(self.model.clone());
        body["capability"] = Value::String(self.capability.to_string());
        let encoded = serde_json::to_vec(&body).map_err(|e| CallError::Permanent(e.to_string()))?;

        let mut req = self.client.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        req = if encoded.len() > MULTIPART_THRESHOLD {
            let mut parts = Vec::new();
            extract_binary_parts(&mut body, &mut parts).map_err(CallError::Permanent)?;
            let mut form = reqwest::multipart::Form::new().part(
                "request",
                reqwest::multipart::Part::text(body.to_string())
                    .mime_str("application/json")
                    .expect("static mime"),
            );
            for (i, bytes) in parts.into_iter().enumerate() {
                form = form.part(
                    format!("part{i}"),
                    reqwest::multipart::Part::bytes(bytes).file_name(format!("part{i}")),
                );
            }
            req.multipart(form)
        } else {
            req.header(reqwest::header::CONTENT_TYPE, "application/json")
                .body(encoded)
        };

        let resp = req.send().await.map_err(|e| {
            if e.is_timeout() || e.is_connect() || e.is_request() {
                CallError::Transient(e.to_string())
            } else {
                CallError::Permanent(e.to_string())
            }
        })?;
        let status = resp.status();
        let text = resp
            .text()
            .await
            .map_err(|e| CallError::Transient(e.to_string()))?;
        if !status.is_success() {
            return Err(classify(status, text));
        }
        serde_json::from_str(&text)
            .map_err(|e| CallError::Permanent(format!("unreadable response: {e}")))
    }
}
