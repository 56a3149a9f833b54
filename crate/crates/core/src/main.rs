use clap::{Parser, Subcommand};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use presocoach::api::{serve, AppState};
use presocoach::coach::{SlideRange, ANALYSIS_STEPS};
use presocoach::config::Config;
use presocoach::headless::{analyze_recording, run_pipeline};
use presocoach::pipeline::EXEMPLAR_STEPS;
use presocoach::progress::PrintProgress;
use presocoach::providers::ProvidersConfig;

#[derive(Parser)]
#[command(
    name = "presocoach",
    version,
    about = "Narrated exemplar videos and rehearsal coaching"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP API.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Headless exemplar generation.
    Pipeline {
        #[command(subcommand)]
        action: PipelineAction,
    },
    /// Analyse a practice recording against a generated exemplar.
    Analyze {
        /// Output directory of `pipeline run`.
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        practice: PathBuf,
        #[arg(long)]
        from_slide: Option<usize>,
        #[arg(long)]
        to_slide: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        providers: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum PipelineAction {
    Run {
        #[arg(long)]
        deck: PathBuf,
        #[arg(long)]
        voice: PathBuf,
        #[arg(long, default_value = "")]
        prompt: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Provider chains JSON; defaults to the built-in offline stubs.
        #[arg(long)]
        providers: Option<PathBuf>,
    },
}

fn load_config(config: Option<&Path>, providers: Option<&Path>) -> Result<Config, String> {
    let mut cfg = match config {
        Some(p) => Config::load(p).map_err(|e| e.to_string())?,
        None => Config::default(),
    };
    if let Some(p) = providers {
        cfg.providers = ProvidersConfig::load(p).map_err(|e| e.to_string())?;
    }
    Ok(cfg)
}

async fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Serve { config, port, host } => {
            let cfg = load_config(config.as_deref(), None)?;
            let (state, recovered) = AppState::open(&cfg).map_err(|e| e.to_string())?;
            if !recovered.failed_jobs.is_empty() {
                tracing::warn!(jobs = ?recovered.failed_jobs, sessions = ?recovered.reverted_sessions, "recovered interrupted jobs");
            }
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .map_err(|e| format!("bad address: {e}"))?;
            serve(state, addr, cfg.webapp_dir.clone())
                .await
                .map_err(|e| e.to_string())
        }
        Command::Pipeline {
            action:
                PipelineAction::Run {
                    deck,
                    voice,
                    prompt,
                    out,
                    config,
                    providers,
                },
        } => {
            let cfg = load_config(config.as_deref(), providers.as_deref())?;
            let progress = PrintProgress {
                names: EXEMPLAR_STEPS.to_vec(),
            };
            let a = run_pipeline(&cfg, &deck, &voice, &prompt, &out, &progress)
                .await
                .map_err(|e| e.to_string())?;
            for w in &a.warnings {
                println!("warning: {w}");
            }
            println!(
                "exemplar: {} ({} slides, {:.1} s)",
                out.join("exemplar.mp4").display(),
                a.deck.slide_count,
                a.video.total_duration_ms as f64 / 1000.0
            );
            Ok(())
        }
        Command::Analyze {
            session,
            practice,
            from_slide,
            to_slide,
            config,
            providers,
        } => {
            let cfg = load_config(config.as_deref(), providers.as_deref())?;
            let range = match (from_slide, to_slide) {
                (None, None) => None,
                (f, t) => Some(SlideRange {
                    from_index: f.unwrap_or(1),
                    to_index: t.unwrap_or(usize::MAX),
                }),
            };
            let progress = PrintProgress {
                names: ANALYSIS_STEPS.to_vec(),
            };
            let (report, path) = analyze_recording(&cfg, &session, &practice, range, &progress)
                .await
                .map_err(|e| e.to_string())?;
            if let Some(m) = &report.metrics {
                println!("metrics: {}", m.summary_line());
            }
            for w in &report.warnings {
                println!("warning: {w}");
            }
            if let Some(fb) = &report.feedback {
                println!(
                    "\n{}\n\nObservation: {}\nImpact: {}\nSuggestion: {}",
                    fb.encouragement(),
                    fb.observation(),
                    fb.impact(),
                    fb.suggestion()
                );
            }
            println!("\nreport: {}", path.display());
            match &report.failure {
                Some(f) => Err(format!("{} failed: {}", f.stage, f.message)),
                None => Ok(()),
            }
        }
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| "presocoach=info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
