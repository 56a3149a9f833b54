use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::chat::ChatError;
use crate::coach::AnalysisError;
use crate::deck::DeckError;
use crate::store::StoreError;
use crate::voice::VoiceError;

/// Body of every error response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub detail: Option<Value>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                code: code.into(),
                message: message.into(),
                detail: None,
            },
        }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.body.detail = Some(detail);
        self
    }

    pub fn not_found(what: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", what)
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_request", message)
    }

    pub fn too_large(size: u64, max: u64) -> Self {
        Self::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "too_large",
            format!("upload is {size} bytes, above the {max} byte limit"),
        )
        .with_detail(serde_json::json!({ "size": size, "max": max }))
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let msg = e.to_string();
        match e {
            StoreError::NotFound(_) => Self::not_found(msg),
            StoreError::IllegalTransition { .. } | StoreError::WrongStage { .. } => {
                Self::new(StatusCode::CONFLICT, "wrong_stage", msg)
            }
            StoreError::Precondition(_) => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "precondition_failed", msg)
            }
            StoreError::Invalid(_) => Self::bad_request(msg),
            StoreError::HashMismatch { .. } | StoreError::Io(_) | StoreError::Serde(_) => {
                Self::internal(msg)
            }
        }
    }
}

impl From<DeckError> for ApiError {
    fn from(e: DeckError) -> Self {
        let msg = e.to_string();
        match e {
            DeckError::Oversize { size, max } => Self::too_large(size, max),
            DeckError::NotZip
            | DeckError::LegacyPpt
            | DeckError::MissingPart(_)
            | DeckError::ZeroSlides
            | DeckError::Malformed(_) => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_deck", msg)
            }
            DeckError::Renderer { .. }
            | DeckError::Integrity { .. }
            | DeckError::Resolution { .. }
            | DeckError::BadImage { .. } => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "render_failed", msg)
            }
            DeckError::Io(_) => Self::internal(msg),
            DeckError::Store(s) => s.into(),
        }
    }
}

impl From<VoiceError> for ApiError {
    fn from(e: VoiceError) -> Self {
        let msg = e.to_string();
        match e {
            VoiceError::Unsupported(_) | VoiceError::Wav(_) | VoiceError::Conversion(_) => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "unsupported_audio", msg)
            }
            VoiceError::ToolchainUnavailable => {
                Self::new(StatusCode::SERVICE_UNAVAILABLE, "media_unavailable", msg)
            }
            VoiceError::Io(_) => Self::internal(msg),
            VoiceError::Store(s) => s.into(),
        }
    }
}

impl From<ChatError> for ApiError {
    fn from(e: ChatError) -> Self {
        let msg = e.to_string();
        match e {
            ChatError::Empty => Self::bad_request(msg),
            ChatError::WrongStage(_) => Self::new(StatusCode::CONFLICT, "wrong_stage", msg),
            ChatError::Busy => Self::new(StatusCode::CONFLICT, "chat_busy", msg),
            ChatError::Delivery { message, .. } => {
                Self::new(StatusCode::BAD_GATEWAY, "provider_failed", msg)
                    .with_detail(serde_json::to_value(message).unwrap_or_default())
            }
            ChatError::Store(s) => s.into(),
        }
    }
}

impl From<AnalysisError> for ApiError {
    fn from(e: AnalysisError) -> Self {
        let msg = e.to_string();
        match e {
            AnalysisError::MissingSource(_) | AnalysisError::Invalid(_) => Self::bad_request(msg),
            AnalysisError::WrongStage(_) => Self::new(StatusCode::CONFLICT, "wrong_stage", msg),
            AnalysisError::Provider(_) => {
                Self::new(StatusCode::BAD_GATEWAY, "provider_failed", msg)
            }
            AnalysisError::Store(s) => s.into(),
        }
    }
}

impl From<axum::extract::multipart::MultipartError> for ApiError {
    fn from(e: axum::extract::multipart::MultipartError) -> Self {
        let status = e.status();
        if status == StatusCode::PAYLOAD_TOO_LARGE {
            Self::new(status, "too_large", e.body_text())
        } else {
            Self::bad_request(e.body_text())
        }
    }
}
