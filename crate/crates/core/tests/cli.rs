mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{practice_wav, voice_wav};
use presocoach::coach::AnalysisReport;
use presocoach::headless::{ManifestFile, SessionPointer};
use presocoach::providers::ProvidersConfig;
use presocoach::testing::pptx::three_slide_deck;

fn bin(args: &[&str], extra: &[&Path]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_presocoach"));
    cmd.args(args);
    for p in extra {
        cmd.arg(p);
    }
    cmd.output().unwrap()
}

fn pipeline(dir: &Path, providers: Option<&Path>) -> Output {
    let deck = dir.join("deck.pptx");
    let voice = dir.join("voice.wav");
    std::fs::write(&deck, three_slide_deck()).unwrap();
    std::fs::write(&voice, voice_wav(5000)).unwrap();
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_presocoach"));
    cmd.args(["pipeline", "run", "--prompt", "new hires"])
        .arg("--deck")
        .arg(&deck)
        .arg("--voice")
        .arg(&voice)
        .arg("--out")
        .arg(dir.join("out"));
    if let Some(p) = providers {
        cmd.arg("--providers").arg(p);
    }
    cmd.output().unwrap()
}

#[test]
fn help_lists_subcommands() {
    let out = bin(&["--help"], &[]);
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["serve", "pipeline", "analyze"] {
        assert!(text.contains(sub), "{text}");
    }
}

#[test]
fn missing_deck_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let voice = dir.path().join("voice.wav");
    std::fs::write(&voice, voice_wav(5000)).unwrap();
    let out = bin(
        &["pipeline", "run", "--deck", "/nonexistent.pptx", "--voice"],
        &[&voice, Path::new("--out"), dir.path()],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
}

#[test]
fn pipeline_then_analyze() {
    if !common::ffmpeg_available() {
        eprintln!("ffmpeg not available; skipping");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let out = pipeline(dir.path(), None);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let session = dir.path().join("out");
    let pointer: SessionPointer =
        serde_json::from_slice(&std::fs::read(session.join("session.json")).unwrap()).unwrap();
    assert!(session.join(&pointer.store).is_dir());
    let manifest: ManifestFile =
        serde_json::from_slice(&std::fs::read(session.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.segments.len(), 3);
    assert!(std::fs::read_to_string(session.join("script.txt"))
        .unwrap()
        .contains("On slide 1 of 3"));

    let practice = dir.path().join("practice.wav");
    std::fs::write(&practice, practice_wav()).unwrap();
    let out = bin(
        &[
            "analyze",
            "--from-slide",
            "2",
            "--to-slide",
            "9",
            "--session",
        ],
        &[&session, Path::new("--practice"), &practice],
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        out.status.success(),
        "{stdout}\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout.contains("Observation:"), "{stdout}");
    let reports: Vec<_> = std::fs::read_dir(session.join("reports"))
        .unwrap()
        .collect();
    assert_eq!(reports.len(), 1);
    let report: AnalysisReport =
        serde_json::from_slice(&std::fs::read(reports[0].as_ref().unwrap().path()).unwrap())
            .unwrap();
    let range = report.inputs.slide_range();
    assert_eq!((range.from_index, range.to_index), (2, 3));
    assert_eq!(report.metrics.unwrap().pause_count, 2);
}

#[test]
fn providers_file_selects_fallback_voice() {
    if !common::ffmpeg_available() {
        eprintln!("ffmpeg not available; skipping");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let mut providers = ProvidersConfig::offline();
    providers.tts_clone = common::clone_failing_on("1,3");
    let path = dir.path().join("providers.json");
    std::fs::write(&path, serde_json::to_vec(&providers).unwrap()).unwrap();
    let out = pipeline(dir.path(), Some(&path));
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let manifest: ManifestFile =
        serde_json::from_slice(&std::fs::read(dir.path().join("out/manifest.json")).unwrap())
            .unwrap();
    let modes: Vec<_> = manifest
        .segments
        .iter()
        .map(|s| serde_json::to_value(s.synthesis_mode).unwrap())
        .collect();
    assert_eq!(modes, ["fallback_tts", "cloned", "fallback_tts"]);
    let fallback: Vec<_> = manifest
        .warnings
        .iter()
        .filter(|w| w.contains("standard TTS"))
        .collect();
    assert_eq!(fallback.len(), 2, "{:?}", manifest.warnings);
    assert!(fallback[0].starts_with("slide 1 ") && fallback[1].starts_with("slide 3 "));
}

#[test]
fn analyze_rejects_non_pipeline_directory() {
    let dir = tempfile::tempdir().unwrap();
    let practice = dir.path().join("p.wav");
    std::fs::write(&practice, practice_wav()).unwrap();
    let out = bin(
        &["analyze", "--session"],
        &[dir.path(), Path::new("--practice"), &practice],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("not a pipeline output"));
}

#[test]
fn invalid_providers_file_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("providers.json");
    std::fs::write(
        &path,
        r#"{"asr": {"capability": "asr", "endpoint": "ftp://x", "model_name": "m"}}"#,
    )
    .unwrap();
    let out = pipeline(dir.path(), Some(&path));
    assert!(!out.status.success());
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("asr"),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}
