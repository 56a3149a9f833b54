//! Runs the HTTP API in-process, starts an exemplar job and follows it over
//! server-sent events, then replays the stream from the middle.
//!
//! cargo run --example job_server

use presocoach::api::{router, AppState};
use presocoach::audio::synth::tone_silence_wav;
use presocoach::config::Config;
use presocoach::testing::pptx::three_slide_deck;
use reqwest::multipart::{Form, Part};

async fn print_events(
    client: &reqwest::Client,
    url: &str,
    last_event_id: Option<u64>,
) -> Result<u64, reqwest::Error> {
    let mut req = client.get(url);
    if let Some(k) = last_event_id {
        req = req.header("Last-Event-ID", k.to_string());
    }
    let mut resp = req.send().await?;
    let mut buf = String::new();
    let mut count = 0;
    while let Some(chunk) = resp.chunk().await? {
        buf.push_str(&String::from_utf8_lossy(&chunk));
        while let Some(end) = buf.find("\n\n") {
            let block: String = buf.drain(..end + 2).collect();
            if let Some(data) = block.lines().find_map(|l| l.strip_prefix("data:")) {
                let e: serde_json::Value = serde_json::from_str(data.trim()).unwrap();
                println!(
                    "  #{:<2} {:<28} {:<8} {}",
                    e["sequence"],
                    e["step_name"].as_str().unwrap(),
                    e["status"].as_str().unwrap(),
                    e["detail"].as_str().unwrap_or("")
                );
                count += 1;
            }
        }
    }
    Ok(count)
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let config = Config {
        data_dir: dir.path().to_path_buf(),
        ..Config::default()
    };
    let (state, _) = AppState::open(&config)?;
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let base = format!("http://{}", listener.local_addr()?);
    tokio::spawn(async move { axum::serve(listener, router(state, None)).await });

    let client = reqwest::Client::new();
    let session: serde_json::Value = client
        .post(format!("{base}/api/sessions"))
        .json(&serde_json::json!({ "user_prompt": "customers" }))
        .send()
        .await?
        .json()
        .await?;
    let id = session["id"].as_str().unwrap();
    for (kind, bytes, name) in [
        ("deck", three_slide_deck(), "deck.pptx"),
        (
            "voice",
            tone_silence_wav(&[(true, 6000)], 16_000),
            "voice.wav",
        ),
    ] {
        let form = Form::new().part("file", Part::bytes(bytes).file_name(name));
        client
            .post(format!("{base}/api/sessions/{id}/{kind}"))
            .multipart(form)
            .send()
            .await?
            .error_for_status()?;
    }
    let job: serde_json::Value = client
        .post(format!("{base}/api/sessions/{id}/generate"))
        .send()
        .await?
        .json()
        .await?;
    let events = format!("{base}/api/jobs/{}/events", job["job_id"].as_str().unwrap());

    println!("live:");
    let n = print_events(&client, &events, None).await?;
    println!("replay after event 9:");
    print_events(&client, &events, Some(9)).await?;
    let status: serde_json::Value = client
        .get(format!(
            "{base}/api/jobs/{}",
            job["job_id"].as_str().unwrap()
        ))
        .send()
        .await?
        .json()
        .await?;
    println!("{n} events; job {}", status["overall"]);
    Ok(())
}
