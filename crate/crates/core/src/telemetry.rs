//! Run telemetry: scalar and text events, a write-through JSON Lines run log,
//! and a fan-out hub that streams batches to live consumers.
//!
//! The recorder only ever pushes onto an unbounded channel, so it never waits
//! on consumers. A timer-driven emitter drains the channel, appends to the
//! replay history and hands each consumer the batch through its own bounded
//! queue. A full queue drops its oldest batch and the consumer sees a gap
//! marker in its place.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::circuit::RotationKind;
use crate::error::{Error, Result};

pub const DEFAULT_STREAM_INTERVAL: Duration = Duration::from_secs(30);
pub const DEFAULT_QUEUE_CAPACITY: usize = 64;
pub const RUN_LOG_FILE: &str = "events.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Scalar,
    Text,
}

/// Stream names. Serialized as `train_loss`, `bp_variance.RX`,
/// `bp_variance.param.3` and so on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    TrainLoss,
    TestAccuracy,
    BpVariance(RotationKind),
    BpVarianceParam(usize),
    ModelFeedback,
    Threshold,
}

impl Tag {
    pub fn expected_kind(&self) -> EventKind {
        match self {
            Tag::ModelFeedback => EventKind::Text,
            _ => EventKind::Scalar,
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::TrainLoss => f.write_str("train_loss"),
            Tag::TestAccuracy => f.write_str("test_accuracy"),
            Tag::BpVariance(kind) => write!(f, "bp_variance.{kind}"),
            Tag::BpVarianceParam(k) => write!(f, "bp_variance.param.{k}"),
            Tag::ModelFeedback => f.write_str("model_feedback"),
            Tag::Threshold => f.write_str("threshold"),
        }
    }
}

impl FromStr for Tag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let tag = match s {
            "train_loss" => Tag::TrainLoss,
            "test_accuracy" => Tag::TestAccuracy,
            "model_feedback" => Tag::ModelFeedback,
            "threshold" => Tag::Threshold,
            "bp_variance.RX" => Tag::BpVariance(RotationKind::Rx),
            "bp_variance.RY" => Tag::BpVariance(RotationKind::Ry),
            "bp_variance.RZ" => Tag::BpVariance(RotationKind::Rz),
            other => {
                let k = other
                    .strip_prefix("bp_variance.param.")
                    .filter(|k| !k.is_empty() && k.bytes().all(|b| b.is_ascii_digit()))
                    .and_then(|k| k.parse().ok())
                    .ok_or_else(|| Error::InvalidEvent(format!("unknown tag {other:?}")))?;
                Tag::BpVarianceParam(k)
            }
        };
        Ok(tag)
    }
}

impl Serialize for Tag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Tag {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EventValue {
    Scalar(f64),
    Text(String),
}

/// One telemetry record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEvent")]
pub struct TelemetryEvent {
    pub kind: EventKind,
    pub tag: Tag,
    pub step: u64,
    pub value: EventValue,
    pub wall_time: f64,
}

#[derive(Deserialize)]
struct RawEvent {
    kind: EventKind,
    tag: Tag,
    step: u64,
    value: EventValue,
    wall_time: f64,
}

impl TryFrom<RawEvent> for TelemetryEvent {
    type Error = Error;

    fn try_from(raw: RawEvent) -> Result<Self> {
        let event = TelemetryEvent {
            kind: raw.kind,
            tag: raw.tag,
            step: raw.step,
            value: raw.value,
            wall_time: raw.wall_time,
        };
        event.validate()?;
        Ok(event)
    }
}

pub fn now_seconds() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

impl TelemetryEvent {
    pub fn scalar(tag: Tag, step: u64, value: f64) -> Self {
        Self {
            kind: EventKind::Scalar,
            tag,
            step,
            value: EventValue::Scalar(value),
            wall_time: now_seconds(),
        }
    }

    pub fn text(tag: Tag, step: u64, value: impl Into<String>) -> Self {
        Self {
            kind: EventKind::Text,
            tag,
            step,
            value: EventValue::Text(value.into()),
            wall_time: now_seconds(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let value_kind = match &self.value {
            EventValue::Scalar(v) => {
                if !v.is_finite() {
                    return Err(Error::InvalidEvent(format!(
                        "{}: scalar value {v} is not finite",
                        self.tag
                    )));
                }
                EventKind::Scalar
            }
            EventValue::Text(_) => EventKind::Text,
        };
        if value_kind != self.kind || self.kind != self.tag.expected_kind() {
            return Err(Error::InvalidEvent(format!(
                "{}: kind {:?} does not match its value or tag",
                self.tag, self.kind
            )));
        }
        if !self.wall_time.is_finite() {
            return Err(Error::InvalidEvent("wall_time is not finite".into()));
        }
        Ok(())
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match self.value {
            EventValue::Scalar(v) => Some(v),
            EventValue::Text(_) => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match &self.value {
            EventValue::Text(s) => Some(s),
            EventValue::Scalar(_) => None,
        }
    }

    /// Single-line JSON form used by the run log and the live stream.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("telemetry events always serialize")
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        serde_json::from_str(line).map_err(|e| Error::InvalidEvent(e.to_string()))
    }
}

/// Handle the recorder uses to feed a [`StreamHub`].
#[derive(Clone)]
pub struct HubSender(Sender<TelemetryEvent>);

/// Appends events to the run log and forwards them to the stream hub.
///
/// Only the training thread records. Every event reaches the file before
/// `record` returns.
pub struct Recorder {
    path: Option<PathBuf>,
    file: Option<File>,
    hub: Option<HubSender>,
    last_step: HashMap<Tag, u64>,
    count: usize,
}

impl Recorder {
    /// Creates (truncating) the run log at `path`.
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            path: Some(path),
            file: Some(file),
            hub: None,
            last_step: HashMap::new(),
            count: 0,
        })
    }

    /// A recorder with no run log, only live streaming.
    pub fn in_memory() -> Self {
        Self {
            path: None,
            file: None,
            hub: None,
            last_step: HashMap::new(),
            count: 0,
        }
    }

    pub fn with_hub(mut self, hub: &StreamHub) -> Self {
        self.hub = Some(hub.sender());
        self
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Records `event`, returning its position in the run.
    ///
    /// Invalid events are rejected without side effects. A failed file write
    /// still forwards the event to live consumers and then reports the error.
    pub fn record(&mut self, event: TelemetryEvent) -> Result<usize> {
        event.validate()?;
        if let Some(&last) = self.last_step.get(&event.tag) {
            if event.step < last {
                return Err(Error::InvalidEvent(format!(
                    "{}: step {} precedes step {last}",
                    event.tag, event.step
                )));
            }
        }
        self.last_step.insert(event.tag, event.step);

        let write_result = match (&mut self.file, &self.path) {
            (Some(file), Some(path)) => {
                let mut line = event.to_json_line();
                line.push('\n');
                file.write_all(line.as_bytes())
                    .and_then(|_| file.flush())
                    .map_err(|e| Error::io(path, e))
            }
            _ => Ok(()),
        };
        if let Some(hub) = &self.hub {
            // A closed hub only means nobody is listening any more.
            let _ = hub.0.send(event);
        }
        let position = self.count;
        self.count += 1;
        write_result.map(|_| position)
    }
}

/// Outcome of reading a run log.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub events: Vec<TelemetryEvent>,
    pub skipped: usize,
}

/// Reads a JSON Lines run log, skipping (and counting) malformed lines.
pub fn read_run_log(path: impl AsRef<Path>) -> Result<RunLog> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut events = Vec::new();
    let mut skipped = 0;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match TelemetryEvent::from_json_line(&line) {
            Ok(ev) => events.push(ev),
            Err(_) => skipped += 1,
        }
    }
    Ok(RunLog { events, skipped })
}

/// What a live consumer receives.
#[derive(Debug, Clone, PartialEq)]
pub enum StreamItem {
    Events(Arc<[TelemetryEvent]>),
    /// Events dropped because the consumer fell behind.
    Gap { dropped: usize },
}

#[derive(Default)]
struct QueueState {
    items: VecDeque<Arc<[TelemetryEvent]>>,
    dropped: usize,
    finished: bool,
}

struct ConsumerQueue {
    state: Mutex<QueueState>,
    ready: Condvar,
    notify: tokio::sync::Notify,
    capacity: usize,
    detached: AtomicBool,
}

impl ConsumerQueue {
    fn push(&self, batch: Arc<[TelemetryEvent]>) {
        {
            let mut st = self.state.lock().unwrap();
            if st.items.len() >= self.capacity {
                if let Some(old) = st.items.pop_front() {
                    st.dropped += old.len();
                }
            }
            st.items.push_back(batch);
        }
        self.wake();
    }

    fn finish(&self) {
        self.state.lock().unwrap().finished = true;
        self.wake();
    }

    fn wake(&self) {
        self.ready.notify_all();
        self.notify.notify_one();
    }

    fn pop(st: &mut QueueState) -> Option<StreamItem> {
        if st.dropped > 0 {
            let dropped = std::mem::take(&mut st.dropped);
            return Some(StreamItem::Gap { dropped });
        }
        st.items.pop_front().map(StreamItem::Events)
    }
}

/// A live consumer's end of the stream. History comes first, then live batches.
pub struct Subscription {
    queue: Arc<ConsumerQueue>,
}

impl Subscription {
    pub fn try_next(&self) -> Option<StreamItem> {
        ConsumerQueue::pop(&mut self.queue.state.lock().unwrap())
    }

    /// Blocks up to `timeout` for the next item.
    pub fn next_timeout(&self, timeout: Duration) -> Option<StreamItem> {
        let mut st = self.queue.state.lock().unwrap();
        let deadline = std::time::Instant::now() + timeout;
        loop {
            if let Some(item) = ConsumerQueue::pop(&mut st) {
                return Some(item);
            }
            if st.finished {
                return None;
            }
            let left = deadline.saturating_duration_since(std::time::Instant::now());
            if left.is_zero() {
                return None;
            }
            st = self.queue.ready.wait_timeout(st, left).unwrap().0;
        }
    }

    /// Waits for the next item; `None` once the hub has closed and the queue is drained.
    pub async fn next(&self) -> Option<StreamItem> {
        loop {
            {
                let mut st = self.queue.state.lock().unwrap();
                if let Some(item) = ConsumerQueue::pop(&mut st) {
                    return Some(item);
                }
                if st.finished {
                    return None;
                }
            }
            self.queue.notify.notified().await;
        }
    }
}

impl Drop for Subscription {
    fn drop(&mut self) {
        self.queue.detached.store(true, Ordering::Release);
    }
}

struct HubInner {
    incoming: Receiver<TelemetryEvent>,
    history: Vec<TelemetryEvent>,
    consumers: Vec<Arc<ConsumerQueue>>,
    closed: bool,
}

/// Replay-then-tail fan-out of recorded events.
pub struct StreamHub {
    sender: Sender<TelemetryEvent>,
    inner: Mutex<HubInner>,
    queue_capacity: usize,
}

impl StreamHub {
    pub fn new(queue_capacity: usize) -> Arc<Self> {
        let (sender, incoming) = mpsc::channel();
        Arc::new(Self {
            sender,
            inner: Mutex::new(HubInner {
                incoming,
                history: Vec::new(),
                consumers: Vec::new(),
                closed: false,
            }),
            queue_capacity: queue_capacity.max(1),
        })
    }

    pub fn sender(&self) -> HubSender {
        HubSender(self.sender.clone())
    }

    /// Seeds the history directly, as when serving a finished run log.
    pub fn preload(&self, events: Vec<TelemetryEvent>) {
        self.inner.lock().unwrap().history.extend(events);
    }

    /// Delivers everything recorded since the last flush to every consumer and
    /// returns that batch. An empty batch sends nothing.
    pub fn flush_stream(&self) -> Vec<TelemetryEvent> {
        let mut inner = self.inner.lock().unwrap();
        let batch: Vec<TelemetryEvent> = inner.incoming.try_iter().collect();
        inner.consumers.retain(|c| !c.detached.load(Ordering::Acquire));
        if batch.is_empty() {
            return batch;
        }
        inner.history.extend(batch.iter().cloned());
        let shared: Arc<[TelemetryEvent]> = batch.clone().into();
        for consumer in &inner.consumers {
            consumer.push(Arc::clone(&shared));
        }
        batch
    }

    /// Registers a consumer; it first receives the full history flushed so far.
    pub fn subscribe(&self) -> Subscription {
        let queue = Arc::new(ConsumerQueue {
            state: Mutex::new(QueueState::default()),
            ready: Condvar::new(),
            notify: tokio::sync::Notify::new(),
            capacity: self.queue_capacity,
            detached: AtomicBool::new(false),
        });
        let mut inner = self.inner.lock().unwrap();
        if !inner.history.is_empty() {
            queue
                .state
                .lock()
                .unwrap()
                .items
                .push_back(inner.history.clone().into());
        }
        if inner.closed {
            queue.state.lock().unwrap().finished = true;
        } else {
            inner.consumers.push(Arc::clone(&queue));
        }
        Subscription { queue }
    }

    pub fn connected_consumers(&self) -> usize {
        let inner = self.inner.lock().unwrap();
        inner
            .consumers
            .iter()
            .filter(|c| !c.detached.load(Ordering::Acquire))
            .count()
    }

    /// Queued batches per live consumer; a consumer at the queue capacity is
    /// not keeping up and is shedding its oldest batches.
    pub fn consumer_backlog(&self) -> Vec<usize> {
        let inner = self.inner.lock().unwrap();
        inner
            .consumers
            .iter()
            .filter(|c| !c.detached.load(Ordering::Acquire))
            .map(|c| c.state.lock().unwrap().items.len())
            .collect()
    }

    pub fn queue_capacity(&self) -> usize {
        self.queue_capacity
    }

    pub fn history_len(&self) -> usize {
        self.inner.lock().unwrap().history.len()
    }

    /// Flushes once more, then ends every consumer stream.
    pub fn close(&self) {
        self.flush_stream();
        let mut inner = self.inner.lock().unwrap();
        inner.closed = true;
        for c in inner.consumers.drain(..) {
            c.finish();
        }
    }
}

/// Timer thread that calls [`StreamHub::flush_stream`] every interval.
pub struct Emitter {
    stop: Option<Sender<()>>,
    handle: Option<JoinHandle<()>>,
}

impl Emitter {
    pub fn spawn(hub: Arc<StreamHub>, interval: Duration) -> Self {
        let (stop, stopped) = mpsc::channel::<()>();
        let handle = std::thread::Builder::new()
            .name("telemetry-emitter".into())
            .spawn(move || loop {
                match stopped.recv_timeout(interval) {
                    Err(mpsc::RecvTimeoutError::Timeout) => {
                        hub.flush_stream();
                    }
                    _ => {
                        hub.flush_stream();
                        break;
                    }
                }
            })
            .expect("spawn emitter thread");
        Self {
            stop: Some(stop),
            handle: Some(handle),
        }
    }

    /// Stops the timer after a final flush.
    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        self.stop.take();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for Emitter {
    fn drop(&mut self) {
        self.shutdown();
    }
}
