//! Minimal blocking clients for the telemetry endpoints.

use std::io::{BufRead, BufReader};
use std::net::SocketAddr;
use std::sync::mpsc::{self, Receiver};
use std::time::Duration;

use plateau_core::TelemetryEvent;

pub fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(10)))
        .build()
        .new_agent()
}

pub fn get_json(addr: SocketAddr, path: &str) -> serde_json::Value {
    let body = agent()
        .get(&format!("http://{addr}{path}"))
        .call()
        .unwrap()
        .into_body()
        .read_to_string()
        .unwrap();
    serde_json::from_str(&body).unwrap()
}

/// Status code and body of `POST path`.
pub fn post(addr: SocketAddr, path: &str, body: &str) -> (u16, String) {
    let resp = agent()
        .post(&format!("http://{addr}{path}"))
        .header("content-type", "application/json")
        .send(body)
        .unwrap();
    let status = resp.status().as_u16();
    (status, resp.into_body().read_to_string().unwrap_or_default())
}

#[derive(Debug, Clone, PartialEq)]
pub enum SseMessage {
    Event(TelemetryEvent),
    Gap(usize),
}

/// Opens `GET /events` and forwards parsed messages on a channel.
pub fn subscribe(addr: SocketAddr) -> Receiver<SseMessage> {
    let (tx, rx) = mpsc::channel();
    let url = format!("http://{addr}/events");
    let (ready_tx, ready_rx) = mpsc::channel();
    std::thread::spawn(move || {
        let agent = ureq::Agent::config_builder().build().new_agent();
        let resp = agent.get(&url).call().unwrap();
        let _ = ready_tx.send(());
        let reader = BufReader::new(resp.into_body().into_reader());
        let mut event_name: Option<String> = None;
        for line in reader.lines() {
            let Ok(line) = line else { break };
            if let Some(name) = line.strip_prefix("event:") {
                event_name = Some(name.trim().to_string());
            } else if let Some(data) = line.strip_prefix("data:") {
                let data = data.trim();
                let msg = match event_name.as_deref() {
                    Some("gap") => {
                        let v: serde_json::Value = serde_json::from_str(data).unwrap();
                        SseMessage::Gap(v["dropped"].as_u64().unwrap() as usize)
                    }
                    _ => SseMessage::Event(TelemetryEvent::from_json_line(data).unwrap()),
                };
                if tx.send(msg).is_err() {
                    break;
                }
            } else if line.is_empty() {
                event_name = None;
            }
        }
    });
    ready_rx.recv_timeout(Duration::from_secs(10)).expect("event stream opened");
    rx
}

/// Collects `n` events or fails after `timeout`.
pub fn take_events(rx: &Receiver<SseMessage>, n: usize, timeout: Duration) -> Vec<TelemetryEvent> {
    let deadline = std::time::Instant::now() + timeout;
    let mut out = Vec::new();
    while out.len() < n {
        let left = deadline.saturating_duration_since(std::time::Instant::now());
        match rx.recv_timeout(left) {
            Ok(SseMessage::Event(e)) => out.push(e),
            Ok(SseMessage::Gap(_)) => {}
            Err(_) => panic!("timed out with {} of {n} events", out.len()),
        }
    }
    out
}
