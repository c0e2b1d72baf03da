//! `qdss` command-line front end.
//!
//! Exit status: 0 on success, 1 on usage or validation errors, 2 when a
//! computation fails (including a failed gradient check). Results go to the
//! `--out` path or stdout as JSON, JSONL or CSV; progress goes to stderr.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qdss::autodiff::grad_check;
use qdss::datagen::{
    gen_entropy_dataset, gen_sorted_dataset, write_dataset, DatasetManifest, GENERATOR_VERSION,
};
use qdss::par::Execution;
use qdss::pauli::ORDERING_TAG;
use qdss::qdseq::{associativity_defect, commutativity_defect, ChannelSpec, DilationChannel};
use qdss::train::{
    config_datasets, evaluate, generate_examples, load_examples, sweep, train, write_metrics_csv,
    Checkpoint, DatasetKind, Example, Model, ModelKind, ModelSpec, RunOptions, TrainConfig,
};
use qdss::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "qdss",
    version,
    about = "Quantum deep sets and sequences, simulated classically"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset as JSON Lines plus a manifest sidecar.
    GenData {
        #[arg(value_enum)]
        kind: DataArg,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model; metrics CSV to --out, checkpoint next to it.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Defaults to `<out>.checkpoint.json`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a JSONL dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Inferred from the model when omitted.
        #[arg(long, value_enum)]
        dataset: Option<DataArg>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One fresh model per training-set size; one CSV row per size.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Ascending comma-separated training-set sizes.
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
    },
    /// Commutativity and associativity defects of a random channel.
    ChannelProbe {
        #[arg(long, default_value_t = 1)]
        qubits: usize,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long)]
        seed: u64,
        /// Standard deviation of the random block angles.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Identity blocks instead of random ones.
        #[arg(long, default_value_t = false, action = clap::ArgAction::Set)]
        freeze_channel: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Central-difference check of the model gradient on one generated example.
    GradCheck {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
        #[arg(long, default_value_t = 1e-4)]
        rtol: f64,
        /// Include every coordinate in the report.
        #[arg(long)]
        verbose: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parameter count and layout of a configured model.
    CountParams {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DataArg {
    Entropy,
    Sorted,
}

impl From<DataArg> for DatasetKind {
    fn from(d: DataArg) -> Self {
        match d {
            DataArg::Entropy => DatasetKind::Entropy,
            DataArg::Sorted => DatasetKind::Sorted,
        }
    }
}

/// Config file plus overrides shared by every model-building subcommand.
#[derive(Args, Debug, Clone)]
struct ModelArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// qds, classical-ds, qdseq or lstm.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    qubits: Option<usize>,
    #[arg(long, value_enum)]
    dataset: Option<DataArg>,
    #[arg(long, action = clap::ArgAction::Set)]
    freeze_channel: Option<bool>,
    /// Any config field, e.g. `--set learning_rate=0.003`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    seed: u64,
    /// Number of training examples generated when the config has no path.
    #[arg(long)]
    count: Option<usize>,
    /// Metrics CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record wall-clock seconds; turn off for byte-reproducible metrics.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    record_time: bool,
    /// Force single-threaded execution.
    #[arg(long)]
    sequential: bool,
}

impl RunArgs {
    fn options(&self) -> RunOptions {
        RunOptions {
            execution: if self.sequential {
                Execution::Sequential
            } else {
                Execution::from_env()
            },
            record_time: self.record_time,
        }
    }
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> CliResult<ExitCode> {
    match command {
        Command::GenData {
            kind,
            count,
            seed,
            out,
        } => gen_data(kind.into(), count, seed, &out)?,
        Command::Train { run, checkpoint } => train_cmd(&run, checkpoint)?,
        Command::Eval {
            checkpoint,
            data,
            dataset,
            out,
        } => eval_cmd(&checkpoint, &data, dataset.map(Into::into), out.as_deref())?,
        Command::Sweep { run, sizes } => sweep_cmd(&run, &sizes)?,
        Command::ChannelProbe {
            qubits,
            samples,
            seed,
            scale,
            freeze_channel,
            out,
        } => channel_probe(qubits, samples, seed, scale, freeze_channel, out.as_deref())?,
        Command::GradCheck {
            model,
            seed,
            step,
            rtol,
            verbose,
            out,
        } => return grad_check_cmd(&model, seed, step, rtol, verbose, out.as_deref()),
        Command::CountParams { model, out } => count_params(&model, out.as_deref())?,
    }
    Ok(ExitCode::SUCCESS)
}

/// Writer for `out`, or stdout.
fn sink(out: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> CliResult<()> {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(Error::from)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn gen_data(kind: DatasetKind, count: usize, seed: u64, out: &Path) -> CliResult<()> {
    if count == 0 {
        return Err(Failure::Validation("--count must be positive".into()));
    }
    let manifest = DatasetManifest {
        generator: kind.name().into(),
        version: GENERATOR_VERSION,
        count,
        seed,
    };
    match kind {
        DatasetKind::Entropy => write_dataset(out, &gen_entropy_dataset(count, seed)?, &manifest)?,
        DatasetKind::Sorted => write_dataset(out, &gen_sorted_dataset(count, seed), &manifest)?,
    }
    eprintln!("wrote {count} {} samples to {}", kind.name(), out.display());
    Ok(())
}

/// Config from file and flags, later flags winning over the file.
fn build_config(args: &ModelArgs) -> CliResult<TrainConfig> {
    let mut config = match &args.config {
        Some(p) => TrainConfig::from_path(p)?,
        None => TrainConfig::default(),
    };
    if let Some(name) = &args.model {
        config.model = ModelKind::parse(name).ok_or_else(|| {
            Failure::Validation(format!(
                "unknown model {name:?}; expected qds, classical-ds, qdseq or lstm"
            ))
        })?;
    }
    if let Some(q) = args.qubits {
        config.n_qubits = q;
    }
    if let Some(d) = args.dataset {
        config.dataset = Some(d.into());
    }
    if let Some(f) = args.freeze_channel {
        config.freeze_channel = f;
    }
    if !args.overrides.is_empty() {
        let mut value = serde_json::to_value(&config).map_err(Error::from)?;
        let fields = value
            .as_object_mut()
            .expect("config serializes to an object");
        for kv in &args.overrides {
            let (key, raw) = kv.split_once('=').ok_or_else(|| {
                Failure::Validation(format!("--set expects KEY=VALUE, got {kv:?}"))
            })?;
            if !fields.contains_key(key) {
                return Err(Failure::Validation(format!("unknown config field {key:?}")));
            }
            // bare words are strings; everything else is parsed as JSON
            let parsed =
                serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.into()));
            fields.insert(key.into(), parsed);
        }
        config = serde_json::from_value(value)
            .map_err(|e| Failure::Validation(format!("bad override: {e}")))?;
    }
    config.validate()?;
    Ok(config)
}

fn run_config(run: &RunArgs) -> CliResult<TrainConfig> {
    let mut config = build_config(&run.model)?;
    config.seed = run.seed;
    if let Some(c) = run.count {
        config.train_count = c;
    }
    config.validate()?;
    Ok(config)
}

fn train_cmd(run: &RunArgs, checkpoint: Option<PathBuf>) -> CliResult<()> {
    let config = run_config(run)?;
    let (train_set, test_set) = config_datasets(&config)?;
    let outcome = train(&config, &train_set, &test_set, run.options())?;
    let mut w = sink(run.out.as_deref())?;
    write_metrics_csv(&mut w, &outcome.rows)?;
    w.flush()?;
    let ckpt_path = checkpoint.or_else(|| run.out.as_ref().map(|p| sibling(p, ".checkpoint.json")));
    if let Some(p) = ckpt_path {
        Checkpoint::from_model(&outcome.model, config.seed).save(&p)?;
        eprintln!("checkpoint written to {}", p.display());
    }
    let e = &outcome.final_eval;
    match e.accuracy {
        Some(acc) => eprintln!("final test loss {:.6}, accuracy {acc:.4}", e.loss),
        None => eprintln!("final test loss {:.6}", e.loss),
    }
    Ok(())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn eval_cmd(
    checkpoint: &Path,
    data: &Path,
    dataset: Option<DatasetKind>,
    out: Option<&Path>,
) -> CliResult<()> {
    let model = Checkpoint::load(checkpoint)?.into_model()?;
    let kind = dataset.unwrap_or(match model.spec() {
        ModelSpec::Qdseq(_) | ModelSpec::Lstm(_) => DatasetKind::Sorted,
        _ => DatasetKind::Entropy,
    });
    let examples = load_examples(kind, data)?;
    let eval = evaluate(&model, &examples, kind.task(), Execution::from_env())?;
    emit_json(&eval, out)
}

#[derive(Serialize)]
struct SweepSummary {
    size: usize,
    test_metric: f64,
    test_accuracy: Option<f64>,
    param_count: usize,
}

fn sweep_cmd(run: &RunArgs, sizes: &[usize]) -> CliResult<()> {
    let mut config = run_config(run)?;
    let largest = *sizes.iter().max().expect("clap requires at least one size");
    if config.train_path.is_none() {
        config.train_count = config.train_count.max(largest);
    }
    let (pool, test_set) = config_datasets(&config)?;
    let points = sweep(&config, sizes, &pool, &test_set, run.options())?;
    let rows: Vec<_> = points.iter().map(|p| p.row.clone()).collect();
    let mut w = sink(run.out.as_deref())?;
    write_metrics_csv(&mut w, &rows)?;
    w.flush()?;
    drop(w);
    if run.out.is_some() {
        let summary: Vec<SweepSummary> = points
            .iter()
            .map(|p| SweepSummary {
                size: p.row.size,
                test_metric: p.row.test_metric,
                test_accuracy: p.test_accuracy,
                param_count: p.row.param_count,
            })
            .collect();
        emit_json(&summary, None)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ProbeReport {
    n_qubits: usize,
    samples: usize,
    seed: u64,
    scale: f64,
    frozen: bool,
    unitarity_defect: f64,
    commutativity_defect: f64,
    associativity_defect: f64,
}

fn channel_probe(
    qubits: usize,
    samples: usize,
    seed: u64,
    scale: f64,
    frozen: bool,
    out: Option<&Path>,
) -> CliResult<()> {
    if !(1..=3).contains(&qubits) {
        return Err(Failure::Validation(format!(
            "--qubits {qubits} outside 1..=3"
        )));
    }
    if samples == 0 {
        return Err(Failure::Validation("--samples must be positive".into()));
    }
    let spec = if frozen {
        ChannelSpec::identity(qubits)
    } else {
        ChannelSpec::random(qubits, scale, &mut ChaCha8Rng::seed_from_u64(seed))
    };
    let channel = DilationChannel::from_spec(&spec)?;
    // state samples come from a separate stream so they do not depend on the block draw
    let state_seed = seed ^ 0x9e37_79b9_7f4a_7c15;
    let report = ProbeReport {
        n_qubits: qubits,
        samples,
        seed,
        scale,
        frozen,
        unitarity_defect: channel.unitary().unitarity_defect(),
        commutativity_defect: commutativity_defect(&channel, samples, state_seed)?,
        associativity_defect: associativity_defect(&channel, samples, state_seed)?,
    };
    emit_json(&report, out)
}

#[derive(Serialize)]
struct GradCheckOutput {
    model: &'static str,
    n_qubits: usize,
    seed: u64,
    param_count: usize,
    #[serde(flatten)]
    report: serde_json::Value,
}

fn grad_check_cmd(
    args: &ModelArgs,
    seed: u64,
    step: f64,
    rtol: f64,
    verbose: bool,
    out: Option<&Path>,
) -> CliResult<ExitCode> {
    let config = build_config(args)?;
    let spec = config.model_spec()?;
    let mut model = Model::new(&spec, seed)?;
    // block angles start at zero; move them off the identity so their
    // gradient is exercised at a generic point
    if let Some(r) = model.params().layout().get("b_angles") {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        for v in &mut model.params_mut()[r] {
            *v = rng.random_range(-0.5..0.5);
        }
    }
    let example: Example = generate_examples(config.dataset(), 1, seed)?.remove(0);
    let task = config.task();
    let params = model.params().values().to_vec();
    let report = grad_check(
        |tape| model.loss_tape(tape, &example, task),
        &params,
        step,
        rtol,
    )?;
    let passed = report.passed;
    let mut value = serde_json::to_value(&report).map_err(Error::from)?;
    if !verbose {
        value
            .as_object_mut()
            .expect("report is an object")
            .remove("coordinates");
    }
    let output = GradCheckOutput {
        model: config.model.name(),
        n_qubits: config.n_qubits,
        seed,
        param_count: params.len(),
        report: value,
    };
    emit_json(&output, out)?;
    eprintln!("grad-check {}", if passed { "passed" } else { "FAILED" });
    Ok(if passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

#[derive(Serialize)]
struct SliceCount {
    name: String,
    len: usize,
}

#[derive(Serialize)]
struct ParamCount {
    model: &'static str,
    n_qubits: usize,
    dataset: &'static str,
    param_count: usize,
    basis_ordering: &'static str,
    slices: Vec<SliceCount>,
}

fn count_params(args: &ModelArgs, out: Option<&Path>) -> CliResult<()> {
    let config = build_config(args)?;
    let spec = config.model_spec()?;
    let layout = spec.layout();
    emit_json(
        &ParamCount {
            model: config.model.name(),
            n_qubits: config.n_qubits,
            dataset: config.dataset().name(),
            param_count: spec.param_count(),
            basis_ordering: ORDERING_TAG,
            slices: layout
                .slices()
                .iter()
                .map(|s| SliceCount {
                    name: s.name.clone(),
                    len: s.range.len(),
                })
                .collect(),
        },
        out,
    )
}
