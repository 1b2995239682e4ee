//! Training loop: synthetic two-blob dataset, minibatch gradient descent on
//! the circuit, and per-epoch variance analysis and telemetry.

use std::f64::consts::{PI, TAU};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::Receiver;
use std::time::Duration;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::circuit::{forward_wire, random_layers, CircuitSpec, ParameterVector};
use crate::error::{Error, Result};
use crate::gradients::{decision_wire, loss_gradient, Sample};
use crate::monitor::{detect, Monitor, PlateauEvent, VarianceReport, DEFAULT_THRESHOLD};
use crate::rng::{stream_rng, Stream};
use crate::server::{EngineCommand, EngineControl};
use crate::telemetry::{Recorder, Tag, TelemetryEvent, DEFAULT_STREAM_INTERVAL};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub n_wires: usize,
    pub n_layers: usize,
    pub rotations_per_layer: usize,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Plateau threshold; `0.0` turns detection off.
    pub threshold: f64,
    pub dataset_size: usize,
    pub stream_interval: Duration,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_wires: 4,
            n_layers: 2,
            rotations_per_layer: 4,
            seed: 7,
            epochs: 40,
            batch_size: 16,
            learning_rate: 0.1,
            threshold: DEFAULT_THRESHOLD,
            dataset_size: 100,
            stream_interval: DEFAULT_STREAM_INTERVAL,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("wires", self.n_wires),
            ("layers", self.n_layers),
            ("rotations", self.rotations_per_layer),
            ("epochs", self.epochs),
            ("batch", self.batch_size),
            ("dataset", self.dataset_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.n_wires > crate::statevector::MAX_WIRES {
            return Err(Error::Config(format!(
                "wires must be at most {}",
                crate::statevector::MAX_WIRES
            )));
        }
        if !self.dataset_size.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "dataset size must be even, got {}",
                self.dataset_size
            )));
        }
        if self.batch_size > self.dataset_size {
            return Err(Error::Config(format!(
                "batch size {} exceeds dataset size {}",
                self.batch_size, self.dataset_size
            )));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be finite and nonnegative, got {}",
                self.learning_rate
            )));
        }
        if !(self.threshold >= 0.0 && self.threshold.is_finite()) {
            return Err(Error::Config(format!(
                "threshold must be finite and nonnegative, got {}",
                self.threshold
            )));
        }
        if self.stream_interval.is_zero() {
            return Err(Error::Config("stream interval must be positive".into()));
        }
        Ok(())
    }
}

/// Labelled samples split by index into train and test parts.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

/// Two Gaussian blobs with per-coordinate means π/4 (label -1) and 3π/4
/// (label +1), standard deviation π/10, clipped to [0, π].
///
/// Classes alternate by index so both halves of the 80/20 split are balanced.
pub fn make_dataset(n_wires: usize, dataset_size: usize, seed: u64) -> Result<Dataset> {
    if !dataset_size.is_multiple_of(2) || dataset_size == 0 {
        return Err(Error::Config(format!(
            "dataset size must be even and positive, got {dataset_size}"
        )));
    }
    if n_wires == 0 {
        return Err(Error::Config("dataset needs at least one feature".into()));
    }
    let mut rng = stream_rng(seed, Stream::Dataset);
    let noise = Normal::new(0.0, 0.1 * PI).expect("valid normal");
    let mut samples = Vec::with_capacity(dataset_size);
    for i in 0..dataset_size {
        let (mean, label) = if i % 2 == 0 { (0.25 * PI, -1.0) } else { (0.75 * PI, 1.0) };
        let features = (0..n_wires)
            .map(|_| (mean + noise.sample(&mut rng)).clamp(0.0, PI))
            .collect();
        samples.push(Sample::new(features, label));
    }
    let n_train = dataset_size * 4 / 5;
    let test = samples.split_off(n_train);
    Ok(Dataset {
        train: samples,
        test,
    })
}

/// Angles drawn uniformly from [0, 2π).
pub fn init_params(n_params: usize, seed: u64) -> ParameterVector {
    let mut rng = stream_rng(seed, Stream::Params);
    ParameterVector::new((0..n_params).map(|_| rng.random_range(0.0..TAU)).collect())
}

/// Fraction of samples whose readout sign matches the label; a zero readout counts as +1.
pub fn accuracy(spec: &CircuitSpec, params: &ParameterVector, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let wire = decision_wire(spec);
    let mut correct = 0usize;
    for s in samples {
        let z = forward_wire(spec, params, &s.features, wire)?;
        let predicted = if z >= 0.0 { 1.0 } else { -1.0 };
        if predicted == s.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochResult {
    pub epoch: usize,
    /// Training-set loss after the epoch's updates.
    pub train_loss: f64,
    pub test_accuracy: f64,
    pub report: VarianceReport,
    pub event: Option<PlateauEvent>,
    pub params_after: ParameterVector,
}

/// Owns parameters, data and monitor state for one run.
pub struct Trainer {
    config: TrainConfig,
    spec: CircuitSpec,
    params: ParameterVector,
    data: Dataset,
    monitor: Monitor,
    next_epoch: usize,
}

impl Trainer {
    /// Builds the run. A supplied circuit replaces the generated random layers
    /// and must match the configured wire count.
    pub fn new(config: TrainConfig, circuit: Option<CircuitSpec>) -> Result<Self> {
        config.validate()?;
        let spec = match circuit {
            Some(spec) => {
                if spec.n_wires() != config.n_wires {
                    return Err(Error::Config(format!(
                        "circuit has {} wires but the run is configured for {}",
                        spec.n_wires(),
                        config.n_wires
                    )));
                }
                spec
            }
            None => random_layers(
                config.n_wires,
                config.n_layers,
                config.rotations_per_layer,
                config.seed,
            )?,
        };
        let params = init_params(spec.n_params(), config.seed);
        let data = make_dataset(config.n_wires, config.dataset_size, config.seed)?;
        let monitor = Monitor::new(config.threshold)?;
        Ok(Self {
            config,
            spec,
            params,
            data,
            monitor,
            next_epoch: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn spec(&self) -> &CircuitSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParameterVector {
        &self.params
    }

    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    pub fn monitor(&self) -> &Monitor {
        &self.monitor
    }

    pub fn monitor_mut(&mut self) -> &mut Monitor {
        &mut self.monitor
    }

    pub fn next_epoch(&self) -> usize {
        self.next_epoch
    }

    /// Threshold the next epoch will use.
    pub fn upcoming_threshold(&self) -> f64 {
        self.monitor.pending().unwrap_or(self.monitor.threshold())
    }

    /// One pass of minibatch descent in fixed order, then a full-dataset
    /// gradient pass for the loss and the variance report.
    pub fn train_epoch(&mut self) -> Result<EpochResult> {
        let epoch = self.next_epoch;
        self.monitor.begin_epoch();
        let lr = self.config.learning_rate;

        for batch in self.data.train.chunks(self.config.batch_size) {
            let lg = loss_gradient(&self.spec, &self.params, batch, epoch)?;
            for (theta, g) in self.params.values_mut().iter_mut().zip(&lg.mean_grads) {
                *theta -= lr * g;
            }
        }
        if self.params.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::Input(format!("parameters diverged at epoch {epoch}")));
        }

        let full = loss_gradient(&self.spec, &self.params, &self.data.train, epoch)?;
        let report = self.monitor.report(epoch, &full.per_sample, &self.spec)?;
        let event = detect(&report);
        let test_accuracy = accuracy(&self.spec, &self.params, &self.data.test)?;
        self.next_epoch += 1;

        Ok(EpochResult {
            epoch,
            train_loss: full.loss,
            test_accuracy,
            report,
            event,
            params_after: self.params.clone(),
        })
    }
}

/// Scalar and text events describing one epoch.
pub fn epoch_events(result: &EpochResult) -> Vec<TelemetryEvent> {
    let step = result.epoch as u64;
    let mut out = vec![
        TelemetryEvent::scalar(Tag::TrainLoss, step, result.train_loss),
        TelemetryEvent::scalar(Tag::TestAccuracy, step, result.test_accuracy),
        TelemetryEvent::scalar(Tag::Threshold, step, result.report.threshold),
    ];
    for (kind, v) in &result.report.per_kind {
        out.push(TelemetryEvent::scalar(Tag::BpVariance(*kind), step, *v));
    }
    for p in &result.report.per_param {
        out.push(TelemetryEvent::scalar(
            Tag::BpVarianceParam(p.param_index),
            step,
            p.variance,
        ));
    }
    if let Some(ev) = &result.event {
        out.push(TelemetryEvent::text(Tag::ModelFeedback, step, ev.message.clone()));
    }
    out
}

/// Optional attachments for [`run`].
#[derive(Default)]
pub struct RunHooks<'a> {
    pub recorder: Option<&'a mut Recorder>,
    pub commands: Option<&'a Receiver<EngineCommand>>,
    pub control: Option<&'a EngineControl>,
    /// Checked at each epoch boundary; set to end the run early.
    pub stop: Option<&'a AtomicBool>,
}

/// Runs every configured epoch, applying operator commands at epoch boundaries.
pub fn run(
    config: TrainConfig,
    circuit: Option<CircuitSpec>,
    hooks: RunHooks<'_>,
) -> Result<Vec<EpochResult>> {
    let RunHooks {
        mut recorder,
        commands,
        control,
        stop,
    } = hooks;
    let mut trainer = Trainer::new(config, circuit)?;
    let mut results = Vec::with_capacity(trainer.config.epochs);

    for _ in 0..trainer.config.epochs {
        if stop.is_some_and(|s| s.load(Ordering::Relaxed)) {
            log::info!("stop requested; ending run after {} epochs", results.len());
            break;
        }
        if let Some(rx) = commands {
            for command in rx.try_iter() {
                match command {
                    EngineCommand::SetThreshold(t) => match trainer.monitor.set_threshold(t) {
                        Ok(t) => log::info!(
                            "threshold {t:e} staged for epoch {}",
                            trainer.next_epoch
                        ),
                        Err(e) => log::warn!("rejected threshold command: {e}"),
                    },
                }
            }
        }
        if let Some(control) = control {
            control.set_progress(trainer.next_epoch, trainer.upcoming_threshold());
        }

        let result = trainer.train_epoch()?;

        if let Some(rec) = recorder.as_deref_mut() {
            for event in epoch_events(&result) {
                if let Err(e) = rec.record(event) {
                    log::warn!("telemetry: {e}");
                }
            }
        }
        results.push(result);
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> TrainConfig {
        TrainConfig {
            n_wires: 3,
            n_layers: 1,
            rotations_per_layer: 3,
            epochs: 3,
            batch_size: 8,
            dataset_size: 20,
            ..Default::default()
        }
    }

    #[test]
    fn dataset_shape() {
        let d = make_dataset(4, 100, 7).unwrap();
        assert_eq!(d.train.len(), 80);
        assert_eq!(d.test.len(), 20);
        let all: Vec<_> = d.train.iter().chain(&d.test).collect();
        assert_eq!(all.iter().filter(|s| s.label < 0.0).count(), 50);
        assert_eq!(d.test.iter().filter(|s| s.label < 0.0).count(), 10);
        assert!(all.iter().all(|s| s.features.iter().all(|x| (0.0..=PI).contains(x))));
        assert_eq!(d, make_dataset(4, 100, 7).unwrap());
        assert_ne!(d, make_dataset(4, 100, 8).unwrap());
        assert!(matches!(make_dataset(4, 99, 7), Err(Error::Config(_))));
    }

    #[test]
    fn blob_means_are_separated() {
        let d = make_dataset(4, 100, 7).unwrap();
        for coord in 0..4 {
            let mean = |label: f64| {
                let xs: Vec<f64> = d
                    .train
                    .iter()
                    .chain(&d.test)
                    .filter(|s| s.label == label)
                    .map(|s| s.features[coord])
                    .collect();
                xs.iter().sum::<f64>() / xs.len() as f64
            };
            assert!(mean(1.0) - mean(-1.0) >= 0.4 * PI, "coordinate {coord}");
        }
    }

    #[test]
    fn init_params_examples() {
        assert!(init_params(0, 1).is_empty());
        assert_eq!(init_params(12, 3), init_params(12, 3));
        let big = init_params(10_000, 7);
        assert!(big.values().iter().all(|v| (0.0..TAU).contains(v)));
        let mean = big.values().iter().sum::<f64>() / 10_000.0;
        assert!((mean - PI).abs() < 0.1, "mean {mean}");
    }

    #[test]
    fn config_validation() {
        let ok = TrainConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            TrainConfig { n_wires: 0, ..ok.clone() },
            TrainConfig { epochs: 0, ..ok.clone() },
            TrainConfig { dataset_size: 101, ..ok.clone() },
            TrainConfig { batch_size: 200, ..ok.clone() },
            TrainConfig { learning_rate: -0.1, ..ok.clone() },
            TrainConfig { threshold: f64::NAN, ..ok.clone() },
            TrainConfig { stream_interval: Duration::ZERO, ..ok.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))), "{bad:?}");
        }
    }

    #[test]
    fn zero_learning_rate_freezes_params() {
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..small_config()
        };
        let mut t = Trainer::new(cfg, None).unwrap();
        let before = t.params().clone();
        let a = t.train_epoch().unwrap();
        let b = t.train_epoch().unwrap();
        assert_eq!(a.params_after, before);
        assert_eq!(b.params_after, before);
        assert!((a.train_loss - b.train_loss).abs() < 1e-12);
    }

    #[test]
    fn epoch_is_reproducible() {
        let a = Trainer::new(small_config(), None).unwrap().train_epoch().unwrap();
        let b = Trainer::new(small_config(), None).unwrap().train_epoch().unwrap();
        assert_eq!(a, b);
        assert!(a.train_loss.is_finite() && a.train_loss >= 0.0);
        assert!((0.0..=1.0).contains(&a.test_accuracy));
    }

    #[test]
    fn wrong_circuit_width_rejected() {
        let spec = random_layers(2, 1, 2, 1).unwrap();
        assert!(matches!(Trainer::new(small_config(), Some(spec)), Err(Error::Config(_))));
    }

    #[test]
    fn high_threshold_fires_every_epoch() {
        let cfg = TrainConfig {
            threshold: 1e3,
            ..small_config()
        };
        let results = run(cfg, None, RunHooks::default()).unwrap();
        assert_eq!(results.len(), 3);
        assert!(results.iter().all(|r| r.event.is_some()));
    }

    #[test]
    fn monitoring_does_not_change_training() {
        let watched = run(TrainConfig { threshold: 1e3, ..small_config() }, None, RunHooks::default()).unwrap();
        let blind = run(TrainConfig { threshold: 0.0, ..small_config() }, None, RunHooks::default()).unwrap();
        for (a, b) in watched.iter().zip(&blind) {
            assert_eq!(a.train_loss.to_bits(), b.train_loss.to_bits());
            assert_eq!(a.test_accuracy.to_bits(), b.test_accuracy.to_bits());
            assert!(b.event.is_none());
        }
    }

    #[test]
    fn one_epoch_emits_one_event_per_tag() {
        let mut rec = Recorder::in_memory();
        let cfg = TrainConfig { epochs: 1, ..small_config() };
        let results = run(cfg, None, RunHooks { recorder: Some(&mut rec), ..Default::default() }).unwrap();
        assert_eq!(results.len(), 1);
        let events = epoch_events(&results[0]);
        let mut tags: Vec<_> = events.iter().map(|e| e.tag).collect();
        let n = tags.len();
        tags.sort();
        tags.dedup();
        assert_eq!(tags.len(), n);
        assert_eq!(rec.len(), n);
    }
}
