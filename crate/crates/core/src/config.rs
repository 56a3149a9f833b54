//! Server and pipeline configuration, loaded from a JSON file. Unknown
//! fields are rejected and errors name the offending field path.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::chat::DEFAULT_BUDGET_CHARS;
use crate::coach::CoachSettings;
use crate::deck::{CommandRenderer, ExternalRenderer, TestRenderer, DEFAULT_MAX_DECK_BYTES};
use crate::pipeline::jobs::DEFAULT_WORKERS;
use crate::pipeline::PipelineSettings;
use crate::providers::{ConfigError, ProvidersConfig};

pub const DEFAULT_MAX_AUDIO_BYTES: u64 = 100 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RendererConfig {
    /// Solid-colour numbered slides; no office suite needed.
    Test {
        #[serde(default = "default_width")]
        width: u32,
        #[serde(default = "default_height")]
        height: u32,
    },
    /// External converter, see [`CommandRenderer`].
    Command {
        program: String,
        #[serde(default)]
        args: Vec<String>,
    },
}

fn default_width() -> u32 {
    1920
}

fn default_height() -> u32 {
    1080
}

impl Default for RendererConfig {
    fn default() -> Self {
        RendererConfig::Test {
            width: default_width(),
            height: default_height(),
        }
    }
}

impl RendererConfig {
    pub fn build(&self) -> Arc<dyn ExternalRenderer> {
        match self {
            RendererConfig::Test { width, height } => Arc::new(TestRenderer {
                width: *width,
                height: *height,
                fail: false,
            }),
            RendererConfig::Command { program, args } => Arc::new(CommandRenderer {
                program: program.clone(),
                args: args.clone(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Limits {
    pub max_deck_bytes: u64,
    pub max_audio_bytes: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_deck_bytes: DEFAULT_MAX_DECK_BYTES,
            max_audio_bytes: DEFAULT_MAX_AUDIO_BYTES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub data_dir: PathBuf,
    pub providers: ProvidersConfig,
    /// Explicit ffmpeg binary; otherwise discovered.
    pub ffmpeg: Option<PathBuf>,
    pub renderer: RendererConfig,
    pub limits: Limits,
    pub pipeline: PipelineSettings,
    pub coach: CoachSettings,
    pub chat_budget_chars: usize,
    pub workers: usize,
    /// Built web client to serve at `/`.
    pub webapp_dir: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data"),
            providers: ProvidersConfig::offline(),
            ffmpeg: None,
            renderer: RendererConfig::default(),
            limits: Limits::default(),
            pipeline: PipelineSettings::default(),
            coach: CoachSettings::default(),
            chat_budget_chars: DEFAULT_BUDGET_CHARS,
            workers: DEFAULT_WORKERS,
            webapp_dir: None,
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut cfg: Config = serde_path_to_error::deserialize(de).map_err(|e| ConfigError {
            field: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.providers.apply_env(|k| std::env::var(k).ok());
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            field: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |field: &str, message: &str| ConfigError {
            field: field.into(),
            message: message.into(),
        };
        self.providers.validate()?;
        if self.workers == 0 {
            return Err(err("workers", "must be at least 1"));
        }
        if self.limits.max_deck_bytes == 0 {
            return Err(err("limits.max_deck_bytes", "must be positive"));
        }
        if self.limits.max_audio_bytes == 0 {
            return Err(err("limits.max_audio_bytes", "must be positive"));
        }
        let p = &self.coach.pause;
        if p.frame_ms == 0 || p.hop_ms == 0 {
            return Err(err("coach.pause", "frame_ms and hop_ms must be positive"));
        }
        if p.silence_threshold_dbfs >= 0.0 {
            return Err(err(
                "coach.pause.silence_threshold_dbfs",
                "must be below 0 dBFS",
            ));
        }
        if self.pipeline.synthesis_parallelism == 0 {
            return Err(err("pipeline.synthesis_parallelism", "must be at least 1"));
        }
        if self.pipeline.assembly.parallelism == 0 {
            return Err(err("pipeline.assembly.parallelism", "must be at least 1"));
        }
        if let RendererConfig::Command { program, .. } = &self.renderer {
            if program.trim().is_empty() {
                return Err(err("renderer.program", "is empty"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        assert_eq!(Config::parse("{}").unwrap(), Config::default());
    }

    #[test]
    fn unknown_field_is_named() {
        let e = Config::parse(r#"{"limits": {"max_deck_bytez": 1}}"#).unwrap_err();
        assert_eq!(e.field, "limits.max_deck_bytez");
        assert!(e.message.contains("max_deck_bytez"), "{}", e.message);
        let e = Config::parse(r#"{"coach": {"pause": {"min_pause_ms": "long"}}}"#).unwrap_err();
        assert_eq!(e.field, "coach.pause.min_pause_ms");
    }

    #[test]
    fn invalid_values_are_named() {
        let e = Config::parse(r#"{"workers": 0}"#).unwrap_err();
        assert_eq!(e.field, "workers");
        let e =
            Config::parse(r#"{"coach": {"pause": {"silence_threshold_dbfs": 3.0}}}"#).unwrap_err();
        assert_eq!(e.field, "coach.pause.silence_threshold_dbfs");
    }

    #[test]
    fn renderer_variants() {
        let c = Config::parse(
            r#"{"renderer": {"kind": "command", "program": "soffice", "args": ["{input}"]}}"#,
        )
        .unwrap();
        assert_eq!(c.renderer.build().name(), "soffice");
        let c = Config::parse(r#"{"renderer": {"kind": "test", "width": 640}}"#).unwrap();
        assert_eq!(
            c.renderer,
            RendererConfig::Test {
                width: 640,
                height: 1080
            }
        );
    }
}
