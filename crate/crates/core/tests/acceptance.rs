//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Tolerances are fixed constants below.

mod common;

use std::future::Future;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::pin::Pin;
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use common::{clone_failing_on, offline_config, voice_wav, TestServer};
use presocoach::audio::measure_duration;
use presocoach::audio::synth::{frames_for_ms, tone_silence_wav};
use presocoach::audio::wav::{decode_mono, encode_i16};
use presocoach::coach::{
    compose_feedback, compute_delivery_metrics, detect_pauses, validate_ois, DeliveryMetrics,
    FillerLexicon, FourSourceBundle, MissingSource, OisCandidate, OisFeedback, Pause, PauseParams,
    Transcript,
};
use presocoach::deck::{Slide, SlideDeck};
use presocoach::headless::ManifestFile;
use presocoach::media::MediaToolchain;
use presocoach::pipeline::{Overall, PipelineJob, ProgressEvent, StepStatus, EXEMPLAR_STEPS};
use presocoach::progress::NoProgress;
use presocoach::providers::request::{AnalyzeDelivery, ScriptExcerpt};
use presocoach::providers::{
    make_stub, Bytes, Capability, ProviderChain, ProviderPayload, StubStep,
};
use presocoach::script::{generate_script, LengthFlag, DEFAULT_REGENERATIONS};
use presocoach::store::{BlobStore, MediaKind};
use presocoach::testing::pptx::{numbered_deck, three_slide_deck};

/// Probed video length against the manifest total.
const PROBE_TOLERANCE_MS: u64 = 300;
/// Headless stub run wall clock.
const E2E_BUDGET: Duration = Duration::from_secs(60);
/// Detected pause edges against the constructed silences.
const PAUSE_EDGE_TOLERANCE_MS: u64 = 10;
const PAUSE_FIXTURES: usize = 50;
const OIS_FUZZ_CASES: usize = 1000;
const SCRIPT_CASES: u32 = 256;
const SSE_EVENTS: usize = 20;
const DURABILITY_RUNS: usize = 20;
const WAV_CASES: usize = 1000;

type Check = Pin<Box<dyn Future<Output = Result<String, String>> + Send>>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn main() -> std::process::ExitCode {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .unwrap();
    let checks: Vec<(&str, fn() -> Check)> = vec![
        ("end-to-end stub pipeline run", || Box::pin(e2e_stub_run())),
        ("clone failure falls back per slide", || {
            Box::pin(clone_fallback())
        }),
        ("script length flags and bounded regeneration", || {
            Box::pin(script_length())
        }),
        ("OIS gate", || Box::pin(ois_gate())),
        ("pause detection and delivery metrics oracle", || {
            Box::pin(pause_metrics_oracle())
        }),
        ("four analysis sources are mandatory", || {
            Box::pin(four_sources())
        }),
        ("SSE replay after disconnect", || Box::pin(sse_replay())),
        ("durability across kill -9 during synthesis", || {
            Box::pin(durability())
        }),
        ("WAV duration arithmetic", || Box::pin(wav_arithmetic())),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.into_iter().enumerate() {
        let outcome = rt.block_on(async { tokio::spawn(check()).await });
        let line = match outcome {
            Ok(Ok(detail)) => format!("PASS [{}] {name}: {detail}", i + 1),
            Ok(Err(e)) => {
                failed += 1;
                format!("FAIL [{}] {name}: {e}", i + 1)
            }
            Err(panic) => {
                failed += 1;
                format!("FAIL [{}] {name}: panicked: {panic}", i + 1)
            }
        };
        println!("{line}");
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed == 0 {
        std::process::ExitCode::SUCCESS
    } else {
        std::process::ExitCode::FAILURE
    }
}

// 1

async fn e2e_stub_run() -> Result<String, String> {
    let dir = tempfile::tempdir().unwrap();
    let deck = dir.path().join("deck.pptx");
    let voice = dir.path().join("voice.wav");
    let out = dir.path().join("out");
    std::fs::write(&deck, three_slide_deck()).unwrap();
    std::fs::write(&voice, voice_wav(5000)).unwrap();

    let started = Instant::now();
    let output = Command::new(env!("CARGO_BIN_EXE_presocoach"))
        .args([
            "pipeline",
            "run",
            "--prompt",
            "Quarterly update for the whole team",
        ])
        .arg("--deck")
        .arg(&deck)
        .arg("--voice")
        .arg(&voice)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    let elapsed = started.elapsed();
    let stdout = String::from_utf8_lossy(&output.stdout);
    ensure(
        output.status.success(),
        format!(
            "exit {}: {}",
            output.status,
            String::from_utf8_lossy(&output.stderr)
        ),
    )?;
    ensure(elapsed < E2E_BUDGET, format!("took {elapsed:?}"))?;

    // Each step starts after the previous one is done.
    let lines: Vec<&str> = stdout.lines().collect();
    let pos = |needle: String| lines.iter().position(|l| l.starts_with(&needle));
    let mut last = None;
    for (i, name) in EXEMPLAR_STEPS.iter().enumerate() {
        let run = pos(format!("[{}/4] {name} ... running", i + 1))
            .ok_or(format!("step {} never ran", i + 1))?;
        let done = pos(format!("[{}/4] {name} ... done", i + 1))
            .ok_or(format!("step {} never finished", i + 1))?;
        ensure(
            last.is_none_or(|l| l < run) && run < done,
            format!("step {} out of order", i + 1),
        )?;
        last = Some(done);
    }

    for f in ["exemplar.mp4", "manifest.json", "script.json"] {
        ensure(out.join(f).is_file(), format!("{f} missing"))?;
    }
    let manifest: ManifestFile =
        serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    let script: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("script.json")).unwrap()).unwrap();
    let segments = script["segments"]
        .as_array()
        .ok_or("script has no segments")?;
    ensure(segments.len() == 3, "script is not three segments")?;

    // Stub TTS lasts 1000 ms plus 25 ms per whitespace-separated word.
    let mut start = 0;
    for (i, seg) in segments.iter().enumerate() {
        let words = seg["text"].as_str().unwrap().split_whitespace().count() as u64;
        let end = start + 1000 + 25 * words;
        let e = &manifest.entries[i];
        ensure(
            (e.slide_index, e.start_ms, e.end_ms) == (i + 1, start, end),
            format!("entry {} is {e:?}, expected {start}..{end}", i + 1),
        )?;
        start = end;
    }
    ensure(
        manifest.total_duration_ms == start,
        "total differs from the prefix sum",
    )?;
    let media = MediaToolchain::discover(None).map_err(|e| e.to_string())?;
    let probed = media
        .probe(&out.join("exemplar.mp4"))
        .await
        .map_err(|e| e.to_string())?
        .duration_ms;
    ensure(
        probed.abs_diff(start) <= PROBE_TOLERANCE_MS,
        format!("probed {probed} ms vs manifest {start} ms"),
    )?;
    Ok(format!(
        "manifest {start} ms, probed {probed} ms (tolerance {PROBE_TOLERANCE_MS} ms), {:.1} s wall clock",
        elapsed.as_secs_f64()
    ))
}

// 2

async fn clone_fallback() -> Result<String, String> {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = offline_config(dir.path());
    cfg.providers.tts_clone = clone_failing_on("2");
    let server = TestServer::with_config(cfg).await;
    let session = server.prepared_session(three_slide_deck(), 5000).await;
    let job = server.start_generation(&session).await;
    let job = server.wait_job(&job).await;
    ensure(
        job.overall == Overall::Succeeded,
        format!("job failed: {:?}", job.error),
    )?;

    let artifacts: serde_json::Value = server
        .client
        .get(server.url(&format!("/api/sessions/{session}/exemplar/artifacts")))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    let modes: Vec<&str> = artifacts["audio"]
        .as_array()
        .ok_or("no audio segments")?
        .iter()
        .map(|a| a["synthesis_mode"].as_str().unwrap())
        .collect();
    ensure(
        modes == ["cloned", "fallback_tts", "cloned"],
        format!("modes {modes:?}"),
    )?;
    let degraded: Vec<&ProgressEvent> = job
        .events
        .iter()
        .filter(|e| e.step_name == EXEMPLAR_STEPS[2])
        .filter(|e| {
            e.detail
                .as_deref()
                .is_some_and(|d| d.contains("degraded synthesis"))
        })
        .collect();
    ensure(
        degraded.len() == 1,
        format!("{} degraded-synthesis events on step 3", degraded.len()),
    )?;
    let detail = degraded[0].detail.clone().unwrap();
    ensure(
        detail.starts_with("slide 2/3"),
        format!("detail {detail:?}"),
    )?;
    Ok(format!("modes {modes:?}; step 3 event {detail:?}"))
}

// 3

fn words(n: usize) -> String {
    (0..n)
        .map(|i| format!("w{i}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn one_slide_deck(blobs: &BlobStore) -> SlideDeck {
    let src = blobs.put(b"deck", MediaKind::Pptx).unwrap();
    let slide = Slide {
        index: 1,
        title: Some("Results".into()),
        body_texts: vec!["growth".into()],
        notes: None,
        image_ref: Some(blobs.put(b"png", MediaKind::Png).unwrap()),
        image_width: Some(1920),
        image_height: Some(1080),
        parse_error: None,
    };
    SlideDeck::new("deck".into(), src, vec![slide]).unwrap()
}

async fn script_length() -> Result<String, String> {
    use proptest::prelude::*;
    use proptest::test_runner::{Config, TestCaseError, TestRunner};

    let dir = tempfile::tempdir().unwrap();
    let blobs = BlobStore::open(dir.path()).unwrap();
    let deck = one_slide_deck(&blobs);
    let r = DEFAULT_REGENERATIONS as usize;
    let in_range = |n: usize| (60..=100).contains(&n);

    let mut runner = TestRunner::new(Config {
        cases: SCRIPT_CASES,
        failure_persistence: None,
        ..Config::default()
    });
    let handle = tokio::runtime::Handle::current();
    let result = tokio::task::block_in_place(|| {
        runner.run(&proptest::collection::vec(30usize..=130, r + 1), |drafts| {
            let stub = make_stub(
                Capability::VlmScript,
                "vlm",
                drafts
                    .iter()
                    .map(|&n| StubStep::Reply(ProviderPayload::Text(words(n))))
                    .collect(),
            );
            let chain = ProviderChain::single(stub.clone(), 0);
            let run = handle
                .block_on(generate_script(
                    &deck,
                    "",
                    &chain,
                    &blobs,
                    DEFAULT_REGENERATIONS,
                    &NoProgress,
                    1,
                ))
                .map_err(|e| TestCaseError::fail(e.to_string()))?;
            let seg = &run.script.segments[0];
            let expected_calls = drafts
                .iter()
                .position(|&n| in_range(n))
                .map_or(r + 1, |p| p + 1);
            let kept = drafts[expected_calls - 1];
            prop_assert_eq!(stub.calls().len(), expected_calls);
            prop_assert!(stub.calls().len() <= r + 1);
            prop_assert_eq!(seg.word_count, kept);
            prop_assert_eq!(seg.revision as usize, expected_calls);
            prop_assert_eq!(seg.length_flag == LengthFlag::Ok, in_range(kept));
            let expected = if kept < 60 {
                LengthFlag::Short
            } else if kept > 100 {
                LengthFlag::Long
            } else {
                LengthFlag::Ok
            };
            prop_assert_eq!(seg.length_flag, expected);
            Ok(())
        })
    });
    result.map_err(|e| e.to_string())?;
    Ok(format!("{SCRIPT_CASES} cases over 30..=130 words, R = {r}"))
}

// 4

fn ois_words(n: usize) -> String {
    vec!["word"; n].join(" ")
}

fn ois_reply(c: &OisCandidate) -> StubStep {
    StubStep::Reply(ProviderPayload::Text(serde_json::to_string(c).unwrap()))
}

/// Independent acceptance rule: four non-blank fields and at most 150
/// words across observation, impact and suggestion.
fn ois_oracle(c: &OisCandidate) -> bool {
    let fields = [&c.encouragement, &c.observation, &c.impact, &c.suggestion];
    let present = fields
        .iter()
        .all(|f| f.as_deref().is_some_and(|s| !s.trim().is_empty()));
    let total: usize = [&c.observation, &c.impact, &c.suggestion]
        .iter()
        .map(|f| f.as_deref().map_or(0, |s| s.split_whitespace().count()))
        .sum();
    present && total <= 150
}

fn random_field(rng: &mut StdRng) -> Option<String> {
    match rng.gen_range(0..10) {
        0 => None,
        1 => Some(String::new()),
        2 => Some(" \t ".into()),
        _ => Some(ois_words(rng.gen_range(1..=75))),
    }
}

fn random_reply(rng: &mut StdRng) -> (StubStep, bool) {
    if rng.gen_ratio(1, 20) {
        return (
            StubStep::Reply(ProviderPayload::Text("I think the talk went well.".into())),
            false,
        );
    }
    let c = OisCandidate {
        encouragement: random_field(rng),
        observation: random_field(rng),
        impact: random_field(rng),
        suggestion: random_field(rng),
    };
    let ok = ois_oracle(&c);
    (ois_reply(&c), ok)
}

async fn ois_gate() -> Result<String, String> {
    let cand = |o, i, s| {
        OisCandidate::new(
            "Clear opening.",
            &ois_words(o),
            &ois_words(i),
            &ois_words(s),
        )
    };
    ensure(
        validate_ois(&cand(50, 50, 50)).is_ok(),
        "150 words rejected",
    )?;
    ensure(
        validate_ois(&cand(50, 50, 51)).is_err(),
        "151 words accepted",
    )?;
    ensure(
        OisFeedback::new(cand(50, 50, 51)).is_err(),
        "151 words constructible",
    )?;
    for field in 0..4 {
        let mut c = cand(5, 5, 5);
        *[
            &mut c.encouragement,
            &mut c.observation,
            &mut c.impact,
            &mut c.suggestion,
        ][field] = Some(String::new());
        ensure(
            validate_ois(&c).is_err(),
            format!("empty field {field} accepted"),
        )?;
    }

    let stub = make_stub(
        Capability::LlmChat,
        "llm",
        vec![ois_reply(&cand(60, 60, 60)), ois_reply(&cand(40, 40, 40))],
    );
    let chain = ProviderChain::single(stub.clone(), 0);
    let (fb, audits) = compose_feedback(&chain, "analysis", None, &[])
        .await
        .map_err(|e| e.to_string())?;
    ensure(
        audits.len() == 2 && stub.calls().len() == 2,
        "not accepted on the second attempt",
    )?;
    ensure(fb.ois_word_count() == 120, "wrong feedback kept")?;

    let mut rng = StdRng::seed_from_u64(0x015);
    let (mut accepted, mut rejected) = (0, 0);
    for case in 0..OIS_FUZZ_CASES {
        let (first, ok1) = random_reply(&mut rng);
        let (second, ok2) = random_reply(&mut rng);
        let chain = ProviderChain::single(
            make_stub(Capability::LlmChat, "llm", vec![first, second]),
            0,
        );
        match compose_feedback(&chain, "analysis", None, &[]).await {
            Ok((fb, _)) => {
                ensure(
                    ok1 || ok2,
                    format!("case {case}: invalid feedback accepted"),
                )?;
                ensure(
                    ois_oracle(&fb.to_candidate()),
                    format!("case {case}: kept feedback is invalid"),
                )?;
                let stored = serde_json::to_string(&fb).unwrap();
                let back: OisFeedback =
                    serde_json::from_str(&stored).map_err(|e| format!("case {case}: {e}"))?;
                ensure(
                    back == fb,
                    format!("case {case}: round trip changed feedback"),
                )?;
                accepted += 1;
            }
            Err(_) => {
                ensure(
                    !ok1 && !ok2,
                    format!("case {case}: valid feedback rejected"),
                )?;
                rejected += 1;
            }
        }
    }
    Ok(format!(
        "150/151 boundary and empty fields enforced; retry succeeds; fuzz {accepted} accepted, {rejected} rejected, 0 invalid persisted"
    ))
}

// 5

/// Maximal runs of samples quieter than the threshold, at least
/// `min_pause_ms` long after rounding to milliseconds.
fn brute_force_pauses(samples: &[f32], rate: u32, params: &PauseParams) -> Vec<Pause> {
    let threshold = 10f64.powf(params.silence_threshold_dbfs / 20.0);
    let ms = |s: usize| (s as u64 * 1000 + rate as u64 / 2) / rate as u64;
    let mut out = Vec::new();
    let mut i = 0;
    while i < samples.len() {
        if (samples[i] as f64).abs() >= threshold {
            i += 1;
            continue;
        }
        let start = i;
        while i < samples.len() && (samples[i] as f64).abs() < threshold {
            i += 1;
        }
        let p = Pause {
            start_ms: ms(start),
            end_ms: ms(i),
        };
        if p.end_ms - p.start_ms >= params.min_pause_ms {
            out.push(p);
        }
    }
    out
}

async fn pause_metrics_oracle() -> Result<String, String> {
    let params = PauseParams::default();
    let lexicon = FillerLexicon::default();
    let rate = 16_000;
    let mut rng = StdRng::seed_from_u64(0x5e55);
    let mut worst = 0;
    for case in 0..PAUSE_FIXTURES {
        // Alternate tone and silence; every silence is at least 300 ms.
        let mut spans = Vec::new();
        let mut tone = rng.gen_bool(0.5);
        for _ in 0..rng.gen_range(3..10) {
            let ms = if tone {
                rng.gen_range(100..1500)
            } else {
                rng.gen_range(300..2000)
            };
            spans.push((tone, ms));
            tone = !tone;
        }
        let wav = tone_silence_wav(&spans, rate);
        let mut constructed = Vec::new();
        let mut at = 0;
        for &(tone, ms) in &spans {
            let frames = frames_for_ms(ms, rate) as u64;
            if !tone {
                constructed.push((at * 1000 / rate as u64, (at + frames) * 1000 / rate as u64));
            }
            at += frames;
        }

        let detected = detect_pauses(&wav, &params).map_err(|e| e.to_string())?;
        ensure(
            detected.len() == constructed.len(),
            format!(
                "case {case}: {} pauses detected, {} constructed",
                detected.len(),
                constructed.len()
            ),
        )?;
        for (p, &(s, e)) in detected.iter().zip(&constructed) {
            let err = p.start_ms.abs_diff(s).max(p.end_ms.abs_diff(e));
            worst = worst.max(err);
            ensure(
                err <= PAUSE_EDGE_TOLERANCE_MS,
                format!("case {case}: {p:?} vs constructed {s}..{e}"),
            )?;
        }

        let (_, samples) = decode_mono(&wav).unwrap();
        let oracle = brute_force_pauses(&samples, rate, &params);
        let n_words = rng.gen_range(0..120);
        let vocabulary = [
            "we", "um", "shipped", "like", "the", "uh", "release", "you", "know", "early",
        ];
        let text: Vec<&str> = (0..n_words)
            .map(|_| vocabulary[rng.gen_range(0..vocabulary.len())])
            .collect();
        let duration_ms = (samples.len() as u64 * 1000 + rate as u64 / 2) / rate as u64;
        let transcript = Transcript::evenly_spaced(&text.join(" "), duration_ms);
        let ideal = rng.gen_bool(0.7).then(|| rng.gen_range(1000..60_000));
        let got = compute_delivery_metrics(&transcript, &wav, &lexicon, &params, ideal)
            .map_err(|e| e.to_string())?;

        let words = text.len() as u64;
        let mut fillers = 0u64;
        let mut i = 0;
        while i < text.len() {
            if text[i] == "you" && text.get(i + 1) == Some(&"know") {
                fillers += 1;
                i += 2;
            } else {
                fillers += u64::from(matches!(text[i], "um" | "uh" | "like"));
                i += 1;
            }
        }
        let total: u64 = oracle.iter().map(|p| p.end_ms - p.start_ms).sum();
        let expected = DeliveryMetrics {
            word_count: words,
            words_per_minute: words as f64 * 60_000.0 / duration_ms as f64,
            filler_count: fillers,
            filler_rate: if words == 0 {
                0.0
            } else {
                fillers as f64 * 100.0 / words as f64
            },
            pause_count: oracle.len() as u64,
            total_pause_ms: total,
            longest_pause_ms: oracle
                .iter()
                .map(|p| p.end_ms - p.start_ms)
                .max()
                .unwrap_or(0),
            speech_ms: duration_ms - total,
            duration_ms,
            ideal_duration_ms: ideal,
            duration_ratio: ideal.map(|d| duration_ms as f64 / d as f64),
            pauses: oracle,
        };
        let same_bits = got.words_per_minute.to_bits() == expected.words_per_minute.to_bits()
            && got.filler_rate.to_bits() == expected.filler_rate.to_bits()
            && got.duration_ratio.map(f64::to_bits) == expected.duration_ratio.map(f64::to_bits);
        ensure(
            got == expected && same_bits,
            format!("case {case}: metrics differ\n got {got:?}\nwant {expected:?}"),
        )?;
    }
    Ok(format!(
        "{PAUSE_FIXTURES} fixtures, worst edge error {worst} ms (tolerance {PAUSE_EDGE_TOLERANCE_MS} ms), metrics bit-identical"
    ))
}

// 6

async fn four_sources() -> Result<String, String> {
    let dir = tempfile::tempdir().unwrap();
    let blobs = BlobStore::open(dir.path()).unwrap();
    let image = blobs.put(b"png", MediaKind::Png).unwrap();
    let ideal = blobs.put(b"ideal", MediaKind::Wav).unwrap();
    let user = blobs.put(b"user", MediaKind::Wav).unwrap();
    let excerpt = ScriptExcerpt {
        slide_index: 1,
        text: "Here is the plan.".into(),
    };

    let full = || {
        FourSourceBundle::builder()
            .slide_images(vec![image.clone()])
            .ideal_script(vec![excerpt.clone()])
            .ideal_audio(vec![ideal.clone()])
            .user_audio(user.clone())
    };
    let bundle = full().build().map_err(|e| e.to_string())?;

    let omitted = [
        (
            FourSourceBundle::builder()
                .ideal_script(vec![excerpt.clone()])
                .ideal_audio(vec![ideal.clone()])
                .user_audio(user.clone()),
            MissingSource::SlideImage,
        ),
        (
            FourSourceBundle::builder()
                .slide_images(vec![image.clone()])
                .ideal_audio(vec![ideal.clone()])
                .user_audio(user.clone()),
            MissingSource::IdealScript,
        ),
        (
            FourSourceBundle::builder()
                .slide_images(vec![image.clone()])
                .ideal_script(vec![excerpt.clone()])
                .user_audio(user.clone()),
            MissingSource::IdealAudio,
        ),
        (
            FourSourceBundle::builder()
                .slide_images(vec![image.clone()])
                .ideal_script(vec![excerpt.clone()])
                .ideal_audio(vec![ideal.clone()]),
            MissingSource::UserAudio,
        ),
    ];
    for (builder, missing) in omitted {
        ensure(
            builder.build() == Err(missing),
            format!("builder without {missing} succeeded"),
        )?;
    }
    let blank = full()
        .ideal_script(vec![ScriptExcerpt {
            slide_index: 1,
            text: "  ".into(),
        }])
        .build();
    ensure(
        blank == Err(MissingSource::IdealScript),
        "blank script accepted",
    )?;

    // Deserialization goes through the same checks.
    let json = serde_json::to_value(&bundle).unwrap();
    for key in [
        "slide_image_refs",
        "ideal_script",
        "ideal_audio_refs",
        "user_audio_ref",
    ] {
        let mut v = json.clone();
        v.as_object_mut().unwrap().remove(key);
        ensure(
            serde_json::from_value::<FourSourceBundle>(v).is_err(),
            format!("bundle without {key} deserialized"),
        )?;
    }

    // The provider request cannot be built or decoded with a source absent.
    let b = |v: &[u8]| Bytes(v.to_vec());
    let req = |imgs: Vec<Bytes>, script: Vec<ScriptExcerpt>, ideal: Vec<Bytes>, user: Bytes| {
        AnalyzeDelivery::new(imgs, script, ideal, user, String::new())
    };
    let ok = req(vec![b(b"i")], vec![excerpt.clone()], vec![b(b"a")], b(b"u"))
        .map_err(|e| e.to_string())?;
    let cases = [
        (
            req(vec![], vec![excerpt.clone()], vec![b(b"a")], b(b"u")),
            MissingSource::SlideImage,
        ),
        (
            req(vec![b(b"i")], vec![], vec![b(b"a")], b(b"u")),
            MissingSource::IdealScript,
        ),
        (
            req(vec![b(b"i")], vec![excerpt.clone()], vec![], b(b"u")),
            MissingSource::IdealAudio,
        ),
        (
            req(vec![b(b"i")], vec![excerpt.clone()], vec![b(b"a")], b(b"")),
            MissingSource::UserAudio,
        ),
    ];
    for (r, missing) in cases {
        ensure(
            r.err() == Some(missing),
            format!("request without {missing} built"),
        )?;
    }
    let json = serde_json::to_value(&ok).unwrap();
    for key in ["slide_images", "ideal_script", "ideal_audio", "user_audio"] {
        let mut v = json.clone();
        v.as_object_mut().unwrap().remove(key);
        ensure(
            serde_json::from_value::<AnalyzeDelivery>(v).is_err(),
            format!("request without {key} deserialized"),
        )?;
    }
    Ok("builder, bundle JSON and provider request each reject all four omissions".into())
}

// 7

async fn sse_replay() -> Result<String, String> {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = offline_config(dir.path());
    cfg.providers.tts_clone.endpoint = "stub://default?delay_ms=400".into();
    let server = TestServer::with_config(cfg).await;

    // Four slides give 4 + 4·2 + 4·2 = 20 events.
    let session = server.prepared_session(numbered_deck(4), 5000).await;
    let job = server.start_generation(&session).await;

    let check = |events: &[ProgressEvent]| -> Result<(), String> {
        let seqs: Vec<u64> = events.iter().map(|e| e.sequence).collect();
        let want: Vec<u64> = (0..SSE_EVENTS as u64).collect();
        ensure(seqs == want, format!("sequence {seqs:?}"))
    };

    // Severed after every event while the job runs: each connection
    // delivers one event and is dropped, then resumes from the last id.
    let mut live = 0;
    let mut got: Vec<ProgressEvent> = Vec::new();
    while got.len() < SSE_EVENTS {
        if !server.job(&job).await.overall.is_terminal() {
            live += 1;
        }
        let next = server
            .events(&job, got.last().map(|e| e.sequence), Some(1))
            .await;
        ensure(
            next.len() == 1,
            format!("stream ended after {} events", got.len()),
        )?;
        got.extend(next);
    }
    check(&got).map_err(|e| format!("live cuts: {e}"))?;
    let done = server.wait_job(&job).await;
    ensure(
        done.overall == Overall::Succeeded,
        format!("job failed: {:?}", done.error),
    )?;
    ensure(
        done.events.len() == SSE_EVENTS,
        format!("job has {} events", done.events.len()),
    )?;
    check(&done.events)?;

    // Severed after completion, at every index, with both resume forms.
    for k in 0..SSE_EVENTS {
        let mut got = server.events(&job, None, Some(k.max(1))).await;
        got.truncate(k);
        let resp = server
            .client
            .get(server.url(&format!("/api/jobs/{job}/events?from={}", k)))
            .send()
            .await
            .unwrap();
        got.extend(common::read_sse(resp, None).await);
        check(&got).map_err(|e| format!("replay cut at {k}: {e}"))?;
    }
    Ok(format!("{SSE_EVENTS}-event job cut after every event ({live} cuts while running), then at every index after completion; no gaps"))
}

// 8

struct Server {
    child: Child,
    base: String,
}

fn free_port() -> u16 {
    std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port()
}

async fn start_server(config: &Path) -> Result<Server, String> {
    let port = free_port();
    let mut child = Command::new(env!("CARGO_BIN_EXE_presocoach"))
        .arg("serve")
        .arg("--config")
        .arg(config)
        .args(["--port", &port.to_string()])
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| e.to_string())?;
    let stderr = child.stderr.take().unwrap();
    std::thread::spawn(move || for _ in BufReader::new(stderr).lines() {});
    let base = format!("http://127.0.0.1:{port}");
    let client = reqwest::Client::new();
    for _ in 0..500 {
        if client
            .get(format!("{base}/api/health"))
            .send()
            .await
            .is_ok()
        {
            return Ok(Server { child, base });
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    let _ = child.kill();
    Err("server did not come up".into())
}

fn json_files(dir: &Path, out: &mut Vec<std::path::PathBuf>) {
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            json_files(&p, out);
        } else if p.extension().is_some_and(|e| e == "json") {
            out.push(p);
        }
    }
}

async fn durability() -> Result<String, String> {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let mut cfg = offline_config(&data);
    cfg.providers.tts_clone.endpoint = "stub://default?delay_ms=1500".into();
    let cfg_path = dir.path().join("config.json");
    std::fs::write(&cfg_path, serde_json::to_vec_pretty(&cfg).unwrap()).unwrap();
    let client = reqwest::Client::new();
    let mut checked_files = 0;

    for run in 0..DURABILITY_RUNS {
        let mut server = start_server(&cfg_path).await?;
        let base = server.base.clone();
        let session: serde_json::Value = client
            .post(format!("{base}/api/sessions"))
            .json(&serde_json::json!({ "user_prompt": "status update" }))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        let sid = session["id"].as_str().unwrap().to_string();
        for (path, bytes, name) in [
            ("deck", three_slide_deck(), "deck.pptx"),
            ("voice", voice_wav(5000), "voice.wav"),
        ] {
            let form = reqwest::multipart::Form::new().part(
                "file",
                reqwest::multipart::Part::bytes(bytes).file_name(name),
            );
            let r = client
                .post(format!("{base}/api/sessions/{sid}/{path}"))
                .multipart(form)
                .send()
                .await
                .unwrap();
            ensure(
                r.status() == 200,
                format!("run {run}: {path} upload {}", r.status()),
            )?;
        }
        let accepted: serde_json::Value = client
            .post(format!("{base}/api/sessions/{sid}/generate"))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        let jid = accepted["job_id"]
            .as_str()
            .ok_or(format!("run {run}: generate refused"))?
            .to_string();

        let mut in_step3 = false;
        for _ in 0..1000 {
            let job: PipelineJob = client
                .get(format!("{base}/api/jobs/{jid}"))
                .send()
                .await
                .unwrap()
                .json()
                .await
                .unwrap();
            if job.steps[2].status == StepStatus::Running {
                in_step3 = true;
                break;
            }
            ensure(
                !job.overall.is_terminal(),
                format!("run {run}: job ended before step 3"),
            )?;
            tokio::time::sleep(Duration::from_millis(10)).await;
        }
        ensure(in_step3, format!("run {run}: step 3 never started"))?;
        tokio::time::sleep(Duration::from_millis(rng_delay(run))).await;
        server.child.kill().unwrap();
        server.child.wait().unwrap();

        let mut files = Vec::new();
        json_files(&data, &mut files);
        for f in &files {
            serde_json::from_slice::<serde_json::Value>(&std::fs::read(f).unwrap())
                .map_err(|e| format!("run {run}: {} is corrupt: {e}", f.display()))?;
        }
        checked_files += files.len();

        let mut server = start_server(&cfg_path).await?;
        let base = server.base.clone();
        let session: serde_json::Value = client
            .get(format!("{base}/api/sessions/{sid}"))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        let job: PipelineJob = client
            .get(format!("{base}/api/jobs/{jid}"))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        let _ = server.child.kill();
        let _ = server.child.wait();
        ensure(
            session["session"]["stage"] == "setup",
            format!(
                "run {run}: stage {} after restart",
                session["session"]["stage"]
            ),
        )?;
        ensure(
            job.overall == Overall::Failed,
            format!("run {run}: job is {:?}", job.overall),
        )?;
    }
    Ok(format!(
        "{DURABILITY_RUNS} kills during step 3, {checked_files} JSON files parsed"
    ))
}

/// Spreads the kill point over the 1.5 s synthesis window.
fn rng_delay(run: usize) -> u64 {
    (run as u64 * 73) % 1200
}

// 9

async fn wav_arithmetic() -> Result<String, String> {
    let mut rng = StdRng::seed_from_u64(9);
    let rates = [8_000u32, 16_000, 44_100];
    for case in 0..WAV_CASES {
        let rate = rates[case % rates.len()];
        let frames: usize = if case < 6 {
            [1, 1_000_000][case % 2]
        } else {
            rng.gen_range(1..=1_000_000)
        };
        let wav = encode_i16(rate, 1, &vec![0i16; frames]);
        let got = measure_duration(&wav).map_err(|e| e.to_string())?;
        let want = (frames as f64 * 1000.0 / rate as f64).round() as u64;
        ensure(
            got == want,
            format!("{frames} frames at {rate} Hz: {got} ms, expected {want} ms"),
        )?;
    }
    Ok(format!(
        "{WAV_CASES} fixtures at 8/16/44.1 kHz, frames 1..=10^6, exact to the millisecond"
    ))
}
