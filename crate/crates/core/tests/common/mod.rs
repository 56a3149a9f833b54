#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use presocoach::api::{router, AppState};
use presocoach::audio::synth::tone_silence_wav;
use presocoach::config::{Config, RendererConfig};
use presocoach::media::MediaToolchain;
use presocoach::pipeline::{PipelineJob, ProgressEvent};
use presocoach::providers::{Capability, ProviderConfig};

pub fn ffmpeg_available() -> bool {
    MediaToolchain::discover(None).is_ok()
}

/// Offline config: test renderer and built-in stub providers.
pub fn offline_config(data_dir: &Path) -> Config {
    Config {
        data_dir: data_dir.to_path_buf(),
        renderer: RendererConfig::Test {
            width: 1920,
            height: 1080,
        },
        ..Config::default()
    }
}

/// Clone TTS failing transiently on `slides`, falling back to the standard
/// stub.
pub fn clone_failing_on(slides: &str) -> ProviderConfig {
    let mut clone = ProviderConfig::stub(Capability::TtsClone, "stub-voice-clone");
    clone.endpoint = format!("stub://default?fail_slides={slides}");
    clone.with_fallback(ProviderConfig::stub(Capability::TtsStandard, "stub-tts"))
}

pub fn voice_wav(ms: u64) -> Vec<u8> {
    tone_silence_wav(&[(true, ms)], 16_000)
}

/// Speech-like recording with two long pauses.
pub fn practice_wav() -> Vec<u8> {
    tone_silence_wav(
        &[
            (true, 3000),
            (false, 800),
            (true, 4000),
            (false, 500),
            (true, 2500),
        ],
        16_000,
    )
}

pub struct TestServer {
    pub base: String,
    pub state: Arc<AppState>,
    pub client: reqwest::Client,
    _dir: Option<tempfile::TempDir>,
}

impl TestServer {
    pub async fn start() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let cfg = offline_config(dir.path());
        let mut s = Self::with_config(cfg).await;
        s._dir = Some(dir);
        s
    }

    pub async fn with_config(cfg: Config) -> Self {
        let (state, _) = AppState::open(&cfg).unwrap();
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        let app = router(state.clone(), cfg.webapp_dir.clone());
        tokio::spawn(async move {
            axum::serve(listener, app).await.unwrap();
        });
        Self {
            base: format!("http://{addr}"),
            state,
            client: reqwest::Client::new(),
            _dir: None,
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    pub async fn create_session(&self, prompt: &str) -> String {
        let v: serde_json::Value = self
            .client
            .post(self.url("/api/sessions"))
            .json(&serde_json::json!({ "user_prompt": prompt }))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        v["id"].as_str().unwrap().to_string()
    }

    pub async fn upload(
        &self,
        path: &str,
        bytes: Vec<u8>,
        filename: &str,
        fields: &[(&str, &str)],
    ) -> reqwest::Response {
        let mut form = reqwest::multipart::Form::new().part(
            "file",
            reqwest::multipart::Part::bytes(bytes).file_name(filename.to_string()),
        );
        for (k, v) in fields {
            form = form.text(k.to_string(), v.to_string());
        }
        self.client
            .post(self.url(path))
            .multipart(form)
            .send()
            .await
            .unwrap()
    }

    /// Session with deck and voice uploaded, still in setup.
    pub async fn prepared_session(&self, deck: Vec<u8>, voice_ms: u64) -> String {
        let id = self
            .create_session("Project update for a non-specialist audience")
            .await;
        let r = self
            .upload(&format!("/api/sessions/{id}/deck"), deck, "deck.pptx", &[])
            .await;
        assert_eq!(r.status(), 200, "{}", r.text().await.unwrap());
        let r = self
            .upload(
                &format!("/api/sessions/{id}/voice"),
                voice_wav(voice_ms),
                "voice.wav",
                &[],
            )
            .await;
        assert_eq!(r.status(), 200, "{}", r.text().await.unwrap());
        id
    }

    pub async fn start_generation(&self, session: &str) -> String {
        let r = self
            .client
            .post(self.url(&format!("/api/sessions/{session}/generate")))
            .send()
            .await
            .unwrap();
        assert_eq!(r.status(), 202, "{}", r.text().await.unwrap());
        let v: serde_json::Value = r.json().await.unwrap();
        v["job_id"].as_str().unwrap().to_string()
    }

    pub async fn job(&self, id: &str) -> PipelineJob {
        self.client
            .get(self.url(&format!("/api/jobs/{id}")))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap()
    }

    pub async fn wait_job(&self, id: &str) -> PipelineJob {
        for _ in 0..6000 {
            let job = self.job(id).await;
            if job.overall.is_terminal() {
                return job;
            }
            tokio::time::sleep(Duration::from_millis(10)).await;
        }
        panic!("job {id} did not finish");
    }

    /// Session in coaching with a generated exemplar.
    pub async fn coaching_session(&self) -> String {
        let id = self
            .prepared_session(presocoach::testing::pptx::three_slide_deck(), 5000)
            .await;
        let job = self.start_generation(&id).await;
        let job = self.wait_job(&job).await;
        assert_eq!(
            job.overall,
            presocoach::pipeline::Overall::Succeeded,
            "{:?}",
            job.error
        );
        id
    }

    /// Reads SSE events until the stream ends or `limit` events arrived.
    pub async fn events(
        &self,
        job: &str,
        last_event_id: Option<u64>,
        limit: Option<usize>,
    ) -> Vec<ProgressEvent> {
        let mut req = self
            .client
            .get(self.url(&format!("/api/jobs/{job}/events")));
        if let Some(k) = last_event_id {
            req = req.header("Last-Event-ID", k.to_string());
        }
        let resp = req.send().await.unwrap();
        assert_eq!(resp.status(), 200);
        read_sse(resp, limit).await
    }
}

/// Parses `data:` lines of an SSE response. Dropping the response severs
/// the connection.
pub async fn read_sse(mut resp: reqwest::Response, limit: Option<usize>) -> Vec<ProgressEvent> {
    let mut buf = String::new();
    let mut out = Vec::new();
    while let Some(chunk) = resp.chunk().await.unwrap() {
        buf.push_str(&String::from_utf8_lossy(&chunk));
        while let Some(end) = buf.find("\n\n") {
            let block: String = buf.drain(..end + 2).collect();
            let mut id = None;
            for line in block.lines() {
                if let Some(v) = line.strip_prefix("id:") {
                    id = Some(v.trim().parse::<u64>().unwrap());
                }
                if let Some(data) = line.strip_prefix("data:") {
                    let e: ProgressEvent = serde_json::from_str(data.trim()).unwrap();
                    assert_eq!(Some(e.sequence), id, "SSE id must equal the sequence");
                    out.push(e);
                }
            }
            if limit.is_some_and(|l| out.len() >= l) {
                return out;
            }
        }
    }
    out
}
