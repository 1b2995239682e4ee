//! Variational quantum classifier training with barren-plateau monitoring.
//!
//! The crate simulates small qubit registers exactly, trains a randomly
//! layered variational circuit on a synthetic two-class task, and after every
//! epoch measures the spread of per-sample gradients for each trainable
//! rotation. Parameters whose gradient variance falls under an operator
//! threshold are reported as stuck on a plateau, and all of it is streamed to
//! a JSON Lines run log and a live server-sent-events endpoint.

pub mod circuit;
pub mod error;
pub mod gradients;
pub mod monitor;
pub mod rng;
pub mod server;
pub mod statevector;
pub mod sweep;
pub mod telemetry;
pub mod trainer;

pub use circuit::{
    encode, forward, parse_circuit_file, random_layers, serialize_circuit, CircuitSpec,
    EncoderSpec, ParameterVector, PqcGateSlot, RotationKind,
};
pub use error::{Error, Result};
pub use gradients::{expectation_gradient, loss_gradient, GradientSample, LossGradient, Sample};
pub use monitor::{build_report, detect, variance, Monitor, PlateauEvent, VarianceReport};
pub use statevector::{apply_gate, expectation_pauli_z, zero_state, Gate, StateVector};
pub use sweep::{fit_decay, sweep_variance, DecayFit, SweepResult, SweepRow};
pub use telemetry::{read_run_log, Recorder, StreamHub, Tag, TelemetryEvent};
pub use trainer::{make_dataset, init_params, run, EpochResult, RunHooks, TrainConfig, Trainer};
