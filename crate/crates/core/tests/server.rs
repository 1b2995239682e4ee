mod common;

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpStream};
use std::sync::{mpsc, Arc};
use std::time::{Duration, Instant};

use common::http;
use plateau_core::server::{EngineCommand, EngineControl, TelemetryServer};
use plateau_core::telemetry::{Emitter, Recorder, StreamHub};
use plateau_core::{Tag, TelemetryEvent};

fn local() -> SocketAddr {
    "127.0.0.1:0".parse().unwrap()
}

fn start(capacity: usize) -> (Arc<StreamHub>, Arc<EngineControl>, TelemetryServer) {
    let hub = StreamHub::new(capacity);
    let control = EngineControl::new("test-run", 1e-5);
    let server = TelemetryServer::start(local(), Arc::clone(&hub), Arc::clone(&control)).unwrap();
    (hub, control, server)
}

#[test]
fn status_reports_run_state() {
    let (hub, control, server) = start(8);
    control.set_progress(3, 2e-4);
    let _sub = hub.subscribe();
    let v = http::get_json(server.local_addr(), "/status");
    assert_eq!(v["run_id"], "test-run");
    assert_eq!(v["epoch"], 3);
    assert_eq!(v["threshold"], 2e-4);
    assert_eq!(v["connected_consumers"], 1);
}

#[test]
fn command_validation_and_routing() {
    let (_hub, control, server) = start(8);
    let addr = server.local_addr();
    // No run attached yet.
    assert_eq!(http::post(addr, "/command", r#"{"set_threshold": 0.001}"#).0, 409);

    let (tx, rx) = mpsc::channel();
    control.attach_commands(tx);
    let (code, body) = http::post(addr, "/command", r#"{"set_threshold": 0.001}"#);
    assert_eq!(code, 200);
    let v: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["threshold"], 0.001);
    assert_eq!(rx.try_recv().unwrap(), EngineCommand::SetThreshold(0.001));

    for bad in [
        r#"{"set_threshold": -1}"#,
        r#"{"set_threshold": 0}"#,
        r#"{"set_threshold": "x"}"#,
        r#"{"threshold": 1}"#,
        "not json",
    ] {
        assert_eq!(http::post(addr, "/command", bad).0, 400, "{bad}");
    }
    assert!(rx.try_recv().is_err());
}

#[test]
fn live_latency_under_half_a_second() {
    let (hub, _control, server) = start(8);
    let emitter = Emitter::spawn(Arc::clone(&hub), Duration::from_millis(100));
    let rx = http::subscribe(server.local_addr());
    let mut rec = Recorder::in_memory().with_hub(&hub);
    let mut worst = Duration::ZERO;
    for step in 0..5 {
        let sent = Instant::now();
        rec.record(TelemetryEvent::scalar(Tag::TrainLoss, step, 0.5)).unwrap();
        let got = http::take_events(&rx, 1, Duration::from_secs(5));
        assert_eq!(got[0].step, step);
        worst = worst.max(sent.elapsed());
    }
    emitter.stop();
    assert!(worst < Duration::from_millis(500), "worst latency {worst:?}");
}

#[test]
fn gap_marker_for_stalled_http_consumer() {
    let (hub, _control, server) = start(2);
    // A raw consumer that stops reading until its socket buffers are full.
    let mut conn = TcpStream::connect(server.local_addr()).unwrap();
    write!(conn, "GET /events HTTP/1.1\r\nHost: x\r\nAccept: text/event-stream\r\n\r\n").unwrap();
    let deadline = Instant::now() + Duration::from_secs(5);
    while hub.connected_consumers() == 0 {
        assert!(Instant::now() < deadline, "consumer never attached");
        std::thread::sleep(Duration::from_millis(5));
    }

    let mut rec = Recorder::in_memory().with_hub(&hub);
    let batches = 400u64;
    let per_batch = 200u64;
    for b in 0..batches {
        for i in 0..per_batch {
            let step = b * per_batch + i;
            rec.record(TelemetryEvent::text(Tag::ModelFeedback, step, "x".repeat(64))).unwrap();
        }
        hub.flush_stream();
    }
    let last = batches * per_batch - 1;

    conn.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
    let mut saw_gap = false;
    let mut saw_last = false;
    for line in BufReader::new(conn).lines() {
        let Ok(line) = line else { break };
        if line.trim_end() == "event: gap" {
            saw_gap = true;
        }
        if line.contains(&format!("\"step\":{last},")) {
            saw_last = true;
            break;
        }
    }
    assert!(saw_gap, "no gap marker on the wire");
    assert!(saw_last, "stream did not catch up to the newest batch");
}

#[test]
fn closing_the_hub_ends_event_streams() {
    let (hub, _control, server) = start(8);
    let rx = http::subscribe(server.local_addr());
    hub.close();
    let deadline = Instant::now() + Duration::from_secs(5);
    loop {
        match rx.recv_timeout(Duration::from_millis(100)) {
            Err(mpsc::RecvTimeoutError::Disconnected) => break,
            _ if Instant::now() > deadline => panic!("stream did not end"),
            _ => {}
        }
    }
}
