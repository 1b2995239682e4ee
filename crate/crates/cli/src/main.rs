//! `plateau`: train a variational classifier with plateau monitoring, run the
//! variance-scaling sweep, replay a run log, or validate a circuit file.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use plateau_core::server::{EngineControl, TelemetryServer};
use plateau_core::sweep::{fit_decay, sweep_variance, write_csv};
use plateau_core::telemetry::{
    read_run_log, Emitter, Recorder, StreamHub, Tag, DEFAULT_QUEUE_CAPACITY, RUN_LOG_FILE,
};
use plateau_core::trainer::{run, RunHooks, TrainConfig};
use plateau_core::{parse_circuit_file, CircuitSpec, Error};
use serde_json::json;

const RUN_DIR_ENV: &str = "PLATEAU_RUN_DIR";

#[derive(Parser)]
#[command(name = "plateau", version, about = "Variational circuit trainer with barren-plateau monitoring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the classifier with the live telemetry server running.
    Train(TrainArgs),
    /// Measure gradient variance against qubit count and fit the decay.
    Sweep(SweepArgs),
    /// Serve a finished run log over the live stream endpoint.
    Replay(ReplayArgs),
    /// Check a circuit file and print its gate census.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct ServerArgs {
    /// Listen address for the live stream.
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    /// Listen port (0 picks a free port).
    #[arg(long, default_value_t = 8321)]
    port: u16,
}

#[derive(Args)]
struct TrainArgs {
    /// Qubit count; defaults to 4, or to the circuit file's width.
    #[arg(long)]
    wires: Option<usize>,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    /// Rotations per random layer.
    #[arg(long, default_value_t = 4)]
    rotations: usize,
    #[arg(long, default_value_t = 40)]
    epochs: usize,
    #[arg(long, default_value_t = 16)]
    batch: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    /// Gradient-variance threshold for plateau detection.
    #[arg(long, default_value_t = 1e-5)]
    threshold: f64,
    /// Number of samples (even); 80% train, 20% test.
    #[arg(long, default_value_t = 100)]
    dataset: usize,
    /// Seconds between live stream batches.
    #[arg(long, default_value_t = 30.0)]
    interval: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Circuit file replacing the generated random layers.
    #[arg(long)]
    circuit: Option<PathBuf>,
    /// Directory for events.jsonl.
    #[arg(long, env = RUN_DIR_ENV)]
    run_dir: Option<PathBuf>,
    /// Keep serving this many seconds after training ends.
    #[arg(long, default_value_t = 0.0)]
    linger: f64,
    #[command(flatten)]
    server: ServerArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated qubit counts.
    #[arg(long, value_delimiter = ',', default_value = "2,4,6,8,10")]
    wires: Vec<usize>,
    #[arg(long, default_value_t = 8)]
    layers: usize,
    /// Random parameter draws per qubit count.
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// CSV output path.
    #[arg(long, default_value = "sweep.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    /// Run log to serve.
    log: PathBuf,
    /// Stop after this many seconds instead of waiting for Ctrl-C.
    #[arg(long)]
    duration: Option<f64>,
    #[command(flatten)]
    server: ServerArgs,
}

#[derive(Args)]
struct ValidateArgs {
    circuit: PathBuf,
    /// Print the census as JSON.
    #[arg(long)]
    json: bool,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_usage() {
            Failure::usage(e.to_string())
        } else {
            Failure::runtime(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();

    let stop = Arc::new(AtomicBool::new(false));
    {
        let stop = Arc::clone(&stop);
        if let Err(e) = ctrlc::set_handler(move || stop.store(true, Ordering::SeqCst)) {
            log::warn!("could not install interrupt handler: {e}");
        }
    }

    let outcome = match cli.command {
        Command::Train(args) => cmd_train(args, &stop),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Replay(args) => cmd_replay(args, &stop),
        Command::Validate(args) => cmd_validate(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_circuit(path: &Path) -> Result<CircuitSpec, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
    parse_circuit_file(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn seconds(value: f64, name: &str) -> Result<Duration, Failure> {
    Duration::try_from_secs_f64(value)
        .map_err(|_| Failure::usage(format!("{name} must be a nonnegative number of seconds")))
}

fn cmd_train(args: TrainArgs, stop: &AtomicBool) -> Result<(), Failure> {
    let circuit = args.circuit.as_deref().map(load_circuit).transpose()?;
    let n_wires = args
        .wires
        .or(circuit.as_ref().map(|c| c.n_wires()))
        .unwrap_or(4);
    let interval = seconds(args.interval, "--interval")?;
    let linger = seconds(args.linger, "--linger")?;
    if !(args.threshold > 0.0 && args.threshold.is_finite()) {
        return Err(Failure::usage(format!(
            "--threshold must be positive, got {}",
            args.threshold
        )));
    }
    let config = TrainConfig {
        n_wires,
        n_layers: args.layers,
        rotations_per_layer: args.rotations,
        seed: args.seed,
        epochs: args.epochs,
        batch_size: args.batch,
        learning_rate: args.lr,
        threshold: args.threshold,
        dataset_size: args.dataset,
        stream_interval: interval,
    };
    config.validate()?;
    if let Some(c) = &circuit {
        if c.n_wires() != n_wires {
            return Err(Failure::usage(format!(
                "circuit has {} wires but --wires is {n_wires}",
                c.n_wires()
            )));
        }
    }

    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0);
    let run_id = format!("run-{started}");
    let run_dir = args
        .run_dir
        .unwrap_or_else(|| PathBuf::from("runs").join(&run_id));
    let log_path = run_dir.join(RUN_LOG_FILE);

    let hub = StreamHub::new(DEFAULT_QUEUE_CAPACITY);
    let control = EngineControl::new(run_id.clone(), config.threshold);
    let (tx, rx) = mpsc::channel();
    control.attach_commands(tx);
    let server = TelemetryServer::start(
        SocketAddr::new(args.server.host, args.server.port),
        Arc::clone(&hub),
        Arc::clone(&control),
    )
    .map_err(|e| Failure::runtime(e.to_string()))?;
    println!("run {run_id}: live stream at http://{}/events", server.local_addr());
    println!("run log: {}", log_path.display());

    let mut recorder = Recorder::create(&log_path)
        .map_err(|e| Failure::runtime(e.to_string()))?
        .with_hub(&hub);
    let emitter = Emitter::spawn(Arc::clone(&hub), interval);

    let t0 = Instant::now();
    let outcome = run(
        config,
        circuit,
        RunHooks {
            recorder: Some(&mut recorder),
            commands: Some(&rx),
            control: Some(&control),
            stop: Some(stop),
        },
    );
    control.detach_commands();
    emitter.stop();

    let deadline = Instant::now() + linger;
    while Instant::now() < deadline && !stop.load(Ordering::SeqCst) {
        std::thread::sleep(Duration::from_millis(50));
    }
    hub.close();
    server.shutdown();

    let results = outcome?;
    let events = results.iter().filter(|r| r.event.is_some()).count();
    match results.last() {
        Some(last) => println!(
            "final epoch={} train_loss={:.6} test_accuracy={:.4} plateau_events={events} elapsed={:.2}s",
            last.epoch,
            last.train_loss,
            last.test_accuracy,
            t0.elapsed().as_secs_f64()
        ),
        None => println!("no epochs completed"),
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Failure> {
    let result = sweep_variance(&args.wires, args.layers, args.samples, args.seed)?;
    let file = std::fs::File::create(&args.out)
        .map_err(|e| Failure::runtime(format!("cannot create {}: {e}", args.out.display())))?;
    write_csv(&result, std::io::BufWriter::new(file))
        .map_err(|e| Failure::runtime(format!("cannot write {}: {e}", args.out.display())))?;
    for r in &result.rows {
        println!("n_wires={} variance={:e}", r.n_wires, r.variance);
    }
    println!("wrote {} rows to {}", result.rows.len(), args.out.display());
    let fit = fit_decay(&result).map_err(|e| Failure::runtime(e.to_string()))?;
    println!(
        "slope={:.6} intercept={:.6} r_squared={:.6} rows_used={}",
        fit.slope, fit.intercept, fit.r_squared, fit.rows_used
    );
    Ok(())
}

fn cmd_replay(args: ReplayArgs, stop: &AtomicBool) -> Result<(), Failure> {
    if !args.log.is_file() {
        return Err(Failure::usage(format!("no run log at {}", args.log.display())));
    }
    let duration = args.duration.map(|d| seconds(d, "--duration")).transpose()?;
    let log = read_run_log(&args.log)?;
    if log.skipped > 0 {
        println!("skipped {} malformed lines", log.skipped);
    }
    let last_epoch = log.events.iter().map(|e| e.step as usize).max().unwrap_or(0);
    let threshold = log
        .events
        .iter()
        .rev()
        .find(|e| e.tag == Tag::Threshold)
        .and_then(|e| e.as_scalar())
        .unwrap_or(0.0);
    let n_events = log.events.len();

    let hub = StreamHub::new(DEFAULT_QUEUE_CAPACITY);
    hub.preload(log.events);
    let control = EngineControl::new(format!("replay:{}", args.log.display()), threshold);
    control.set_progress(last_epoch, threshold);
    let server = TelemetryServer::start(
        SocketAddr::new(args.server.host, args.server.port),
        Arc::clone(&hub),
        control,
    )
    .map_err(|e| Failure::runtime(e.to_string()))?;
    println!(
        "serving {n_events} events at http://{}/events",
        server.local_addr()
    );

    let started = Instant::now();
    while !stop.load(Ordering::SeqCst) && duration.is_none_or(|d| started.elapsed() < d) {
        std::thread::sleep(Duration::from_millis(50));
    }
    hub.close();
    server.shutdown();
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<(), Failure> {
    let spec = load_circuit(&args.circuit)?;
    let census = spec.census();
    if args.json {
        let kinds: serde_json::Map<String, serde_json::Value> = census
            .iter()
            .map(|(k, n)| (k.to_string(), json!(n)))
            .collect();
        let out = json!({
            "valid": true,
            "wires": spec.n_wires(),
            "params": spec.n_params(),
            "cnots": spec.n_cnots(),
            "rotations": kinds,
            "measured_wires": spec.measured_wires(),
            "feature_scale": spec.encoder().feature_scale,
        });
        println!("{out}");
    } else {
        println!("wires: {}", spec.n_wires());
        println!("params: {}", spec.n_params());
        println!("cnots: {}", spec.n_cnots());
        for (kind, n) in &census {
            println!("{kind}: {n}");
        }
        let measured: Vec<String> = spec.measured_wires().iter().map(|w| w.to_string()).collect();
        println!("measured: {}", measured.join(" "));
    }
    Ok(())
}
