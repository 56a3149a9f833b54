//! Slide rendering through an external converter.
//!
//! Contract: the renderer receives the deck at `input` and must write one
//! PNG per slide into `out_dir`, named `slide-<n>.png` with `n` 1-based in
//! presentation order. Anything else in `out_dir` is ignored.

use image::{ImageFormat, Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use tokio::sync::Semaphore;

use super::{validate_deck, DeckError};
use crate::store::{BlobRef, BlobStore, MediaKind};

pub trait ExternalRenderer: Send + Sync {
    fn name(&self) -> &str;
    fn render(&self, input: &Path, out_dir: &Path) -> Result<(), DeckError>;
}

/// Runs a command line. `{input}` and `{outdir}` in `args` are substituted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CommandRenderer {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
}

impl ExternalRenderer for CommandRenderer {
    fn name(&self) -> &str {
        &self.program
    }

    fn render(&self, input: &Path, out_dir: &Path) -> Result<(), DeckError> {
        let args: Vec<String> = self
            .args
            .iter()
            .map(|a| {
                a.replace("{input}", &input.display().to_string())
                    .replace("{outdir}", &out_dir.display().to_string())
            })
            .collect();
        let out = Command::new(&self.program)
            .args(&args)
            .output()
            .map_err(|e| DeckError::Renderer {
                stderr: format!("could not start {}: {e}", self.program),
            })?;
        if !out.status.success() {
            return Err(DeckError::Renderer {
                stderr: String::from_utf8_lossy(&out.stderr).trim().to_string(),
            });
        }
        Ok(())
    }
}

/// Offline renderer: one solid-colour PNG per slide with the slide number
/// stamped in the corner. Lets the whole pipeline run without an office
/// suite installed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestRenderer {
    pub width: u32,
    pub height: u32,
    /// Exit as if the converter crashed.
    #[serde(default)]
    pub fail: bool,
}

impl Default for TestRenderer {
    fn default() -> Self {
        Self {
            width: 1920,
            height: 1080,
            fail: false,
        }
    }
}

const DIGITS: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111],
    [0b010, 0b110, 0b010, 0b010, 0b111],
    [0b111, 0b001, 0b111, 0b100, 0b111],
    [0b111, 0b001, 0b111, 0b001, 0b111],
    [0b101, 0b101, 0b111, 0b001, 0b001],
    [0b111, 0b100, 0b111, 0b001, 0b111],
    [0b111, 0b100, 0b111, 0b101, 0b111],
    [0b111, 0b001, 0b010, 0b010, 0b010],
    [0b111, 0b101, 0b111, 0b101, 0b111],
    [0b111, 0b101, 0b111, 0b001, 0b111],
];

impl TestRenderer {
    pub fn slide_image(&self, index: usize) -> RgbImage {
        let hue = (index as u32 * 67) % 360;
        let bg = hue_to_rgb(hue);
        let mut img = RgbImage::from_pixel(self.width, self.height, Rgb(bg));
        let cell = (self.height / 40).max(2);
        let mut x0 = cell * 2;
        for ch in index.to_string().bytes() {
            let glyph = DIGITS[(ch - b'0') as usize];
            for (row, bits) in glyph.iter().enumerate() {
                for col in 0..3u32 {
                    if bits & (0b100 >> col) != 0 {
                        for dy in 0..cell {
                            for dx in 0..cell {
                                let x = x0 + col * cell + dx;
                                let y = cell * 2 + row as u32 * cell + dy;
                                if x < self.width && y < self.height {
                                    img.put_pixel(x, y, Rgb([255, 255, 255]));
                                }
                            }
                        }
                    }
                }
            }
            x0 += cell * 4;
        }
        img
    }
}

fn hue_to_rgb(hue: u32) -> [u8; 3] {
    let h = hue as f32 / 60.0;
    let x = (1.0 - (h % 2.0 - 1.0).abs()) * 160.0;
    let c = 160.0;
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    [r as u8 + 40, g as u8 + 40, b as u8 + 40]
}

impl ExternalRenderer for TestRenderer {
    fn name(&self) -> &str {
        "test-renderer"
    }

    fn render(&self, input: &Path, out_dir: &Path) -> Result<(), DeckError> {
        if self.fail {
            return Err(DeckError::Renderer {
                stderr: "test renderer configured to fail".into(),
            });
        }
        let bytes = std::fs::read(input)?;
        let info = validate_deck(&bytes, u64::MAX)?;
        for i in 1..=info.slide_count {
            self.slide_image(i)
                .save_with_format(out_dir.join(format!("slide-{i}.png")), ImageFormat::Png)
                .map_err(|e| DeckError::Renderer {
                    stderr: e.to_string(),
                })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UndersizePolicy {
    #[default]
    Error,
    Warn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderOptions {
    pub min_width: u32,
    pub min_height: u32,
    #[serde(default)]
    pub undersize: UndersizePolicy,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            min_width: 1920,
            min_height: 1080,
            undersize: UndersizePolicy::Error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedSlide {
    pub index: usize,
    pub image: BlobRef,
    pub width: u32,
    pub height: u32,
    pub undersized: bool,
}

fn is_slide_png(name: &str) -> bool {
    name.strip_prefix("slide-")
        .and_then(|r| r.strip_suffix(".png"))
        .is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()))
}

/// Renders every slide and stores the PNGs. Blocking; see [`RenderPool`]
/// for use from async code.
pub fn render_slides(
    deck: &[u8],
    renderer: &dyn ExternalRenderer,
    opts: RenderOptions,
    blobs: &BlobStore,
) -> Result<Vec<RenderedSlide>, DeckError> {
    let info = validate_deck(deck, u64::MAX)?;
    let work = tempfile::Builder::new().prefix("render-").tempdir()?;
    let input = work.path().join("deck.pptx");
    let out_dir = work.path().join("out");
    std::fs::create_dir_all(&out_dir)?;
    std::fs::write(&input, deck)?;
    renderer.render(&input, &out_dir)?;

    let produced = std::fs::read_dir(&out_dir)?
        .filter_map(|e| e.ok())
        .filter(|e| is_slide_png(&e.file_name().to_string_lossy()))
        .count();
    if produced != info.slide_count {
        return Err(DeckError::Integrity {
            expected: info.slide_count,
            got: produced,
        });
    }

    let mut out = Vec::with_capacity(info.slide_count);
    for index in 1..=info.slide_count {
        let path = out_dir.join(format!("slide-{index}.png"));
        let bytes = std::fs::read(&path).map_err(|_| DeckError::Integrity {
            expected: info.slide_count,
            got: index - 1,
        })?;
        let img = image::load_from_memory_with_format(&bytes, ImageFormat::Png).map_err(|e| {
            DeckError::BadImage {
                index,
                reason: e.to_string(),
            }
        })?;
        let (width, height) = (img.width(), img.height());
        let undersized = width < opts.min_width || height < opts.min_height;
        if undersized {
            match opts.undersize {
                UndersizePolicy::Error => {
                    return Err(DeckError::Resolution {
                        index,
                        width,
                        height,
                        min_width: opts.min_width,
                        min_height: opts.min_height,
                    })
                }
                UndersizePolicy::Warn => {
                    tracing::warn!(
                        index,
                        width,
                        height,
                        "slide rendered below minimum resolution"
                    )
                }
            }
        }
        out.push(RenderedSlide {
            index,
            image: blobs.put(&bytes, MediaKind::Png)?,
            width,
            height,
            undersized,
        });
    }
    Ok(out)
}

/// Bounds the number of concurrent renderer subprocesses.
#[derive(Clone)]
pub struct RenderPool {
    permits: Arc<Semaphore>,
}

impl RenderPool {
    pub fn new(size: usize) -> Self {
        Self {
            permits: Arc::new(Semaphore::new(size.max(1))),
        }
    }

    pub async fn render(
        &self,
        deck: Vec<u8>,
        renderer: Arc<dyn ExternalRenderer>,
        opts: RenderOptions,
        blobs: BlobStore,
    ) -> Result<Vec<RenderedSlide>, DeckError> {
        let _permit = self.permits.acquire().await.expect("semaphore closed");
        tokio::task::spawn_blocking(move || render_slides(&deck, renderer.as_ref(), opts, &blobs))
            .await
            .map_err(|e| DeckError::Renderer {
                stderr: format!("render task panicked: {e}"),
            })?
    }
}
