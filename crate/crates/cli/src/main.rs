use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ferex::config::RunConfig;
use ferex::dataset::{synth_generate_total, write_synth_dataset, LabeledExample};
use ferex::imaging::{preprocess, PreprocessConfig};
use ferex::metrics::{evaluate, predict, predict_proba, render_report, ConfusionMatrix};
use ferex::nn::init_params;
use ferex::report::{emit_curve_svg, emit_heatmap_svg};
use ferex::training::{fit_with_progress, load_checkpoint, parse_history_csv, save_checkpoint};
use ferex::Error;

/// Three-way facial expression classifier: train, evaluate, predict.
#[derive(Parser)]
#[command(name = "ferex", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write its checkpoint and per-epoch history.
    Train(TrainArgs),
    /// Score a checkpoint on labelled data and write the confusion matrix.
    Eval(EvalArgs),
    /// Classify individual images.
    Predict(PredictArgs),
    /// Write a synthetic labelled dataset to disk.
    Synth(SynthArgs),
    /// Render a history or confusion CSV as SVG.
    Plot(PlotArgs),
}

/// Data selection shared by `train` and `eval`.
#[derive(Args)]
struct DataArgs {
    /// Key = value settings file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset root with negative/, neutral/ and positive/ subdirectories.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Use generated faces instead of --data, holding out N of them for testing.
    #[arg(long, value_name = "N")]
    synth: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Fraction of images used for training.
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Keep all images of one subject (file name prefix before '_' or '-') on one side.
    #[arg(long)]
    split_by_subject: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Checkpoint path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-epoch accuracy CSV.
    #[arg(long)]
    history: Option<PathBuf>,
    /// Also draw the accuracy curve as SVG.
    #[arg(long)]
    curve: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f32>,
    #[arg(long)]
    momentum: Option<f32>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Compute accuracies every K epochs (always after the last).
    #[arg(long, value_name = "K")]
    eval_every: Option<usize>,
    /// Side length of the network input.
    #[arg(long)]
    input_size: Option<usize>,
    /// Suppress per-epoch progress on stderr.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Side {
    All,
    Train,
    Test,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Which part of the split to score. Defaults to `test` with --synth, `all` otherwise.
    #[arg(long, value_enum)]
    split: Option<Side>,
    /// Confusion matrix CSV path.
    #[arg(long, default_value = "confusion.csv")]
    out: PathBuf,
    /// Also draw the confusion heatmap as SVG.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Images to classify; may repeat.
    #[arg(long = "image", value_name = "PATH")]
    images: Vec<PathBuf>,
    /// More images.
    #[arg(value_name = "IMAGES")]
    rest: Vec<PathBuf>,
    /// Fraction of the shorter side kept by the center crop.
    #[arg(long, default_value_t = PreprocessConfig::default().crop_fraction)]
    crop_fraction: f64,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Total images; labels cycle negative, neutral, positive.
    #[arg(long, default_value_t = 320)]
    count: usize,
    #[arg(long, default_value_t = ferex::config::DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = PreprocessConfig::default().input_size)]
    size: usize,
}

#[derive(Args)]
struct PlotArgs {
    /// History CSV from `train`.
    #[arg(long, conflicts_with = "confusion", required_unless_present = "confusion")]
    history: Option<PathBuf>,
    /// Confusion CSV from `eval`.
    #[arg(long)]
    confusion: Option<PathBuf>,
    /// SVG path.
    #[arg(long)]
    out: PathBuf,
}

/// Failure split by exit code: bad invocation (2) or runtime failure (1).
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn run_config(args: &DataArgs) -> Result<RunConfig, Failure> {
    let mut c = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(d) = &args.data {
        c.data = Some(d.clone());
    }
    if let Some(n) = args.synth {
        c.set("synth", &n.to_string())?;
    }
    if let Some(s) = args.seed {
        c.set("seed", &s.to_string())?;
    }
    if let Some(f) = args.train_fraction {
        c.train_fraction = f;
    }
    if args.split_by_subject {
        c.split_by_subject = true;
    }
    Ok(c)
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn report_on(
    config: &ferex::nn::ModelConfig,
    params: &ferex::nn::Parameters,
    examples: &[LabeledExample],
) -> Result<ferex::metrics::EvalReport, Failure> {
    let predicted = predict(config, params, examples.iter().map(|e| &e.image))?;
    let labels: Vec<_> = examples.iter().map(|e| e.label).collect();
    Ok(evaluate(&predicted, &labels)?)
}

fn cmd_train(args: TrainArgs) -> CmdResult {
    let mut c = run_config(&args.data)?;
    if let Some(v) = args.epochs {
        c.train.epochs = v;
    }
    if let Some(v) = args.learning_rate {
        c.train.sgd.learning_rate = v;
    }
    if let Some(v) = args.momentum {
        c.train.sgd.momentum = v;
    }
    if let Some(v) = args.batch_size {
        c.train.sgd.batch_size = v;
    }
    if let Some(v) = args.eval_every {
        c.train.eval_every = v;
    }
    if let Some(v) = args.input_size {
        c.set("input_size", &v.to_string())?;
    }
    if let Some(p) = args.out {
        c.out = p;
    }
    if let Some(p) = args.history {
        c.history = p;
    }
    if args.curve.is_some() {
        c.curve = args.curve;
    }
    c.validate()?;

    let split = c.load_split()?;
    if !args.quiet {
        eprintln!("train {} / test {} images, {} epochs", split.train.len(), split.test.len(), c.train.epochs);
    }
    let params = init_params(&c.model, c.seed)?;
    let quiet = args.quiet;
    let (params, history) = fit_with_progress(&c.model, params, &split, &c.train, |r| {
        if quiet {
            return;
        }
        let pct = |a: Option<f64>| a.map(|v| format!("{:5.1}%", v * 100.0)).unwrap_or_else(|| "    -".into());
        eprintln!(
            "epoch {:>4}  loss {:.4}  train {}  test {}",
            r.epoch,
            r.mean_loss,
            pct(r.train_accuracy),
            pct(r.test_accuracy)
        );
    })?;

    save_checkpoint(&params, &c.model, &c.out)?;
    write_file(&c.history, history.to_csv().as_bytes())?;
    if let Some(curve) = &c.curve {
        emit_curve_svg(&history.records, curve)?;
    }
    let report = report_on(&c.model, &params, &split.test)?;
    println!("test set");
    print!("{}", render_report(&report));
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> CmdResult {
    let (params, model) = load_checkpoint(&args.model)?;
    let mut c = run_config(&args.data)?;
    c.model = model;
    c.preprocess.input_size = c.model.input_size;
    c.validate()?;

    let side = args.split.unwrap_or(if c.synth.is_some() { Side::Test } else { Side::All });
    let examples = match side {
        Side::All => c.load_examples()?,
        Side::Train => c.load_split()?.train,
        Side::Test => c.load_split()?.test,
    };
    let report = report_on(&c.model, &params, &examples)?;
    write_file(&args.out, report.confusion.to_csv().as_bytes())?;
    if let Some(svg) = &args.svg {
        emit_heatmap_svg(&report.confusion, svg)?;
    }
    print!("{}", render_report(&report));
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> CmdResult {
    let (params, model) = load_checkpoint(&args.model)?;
    let paths: Vec<PathBuf> = args.images.into_iter().chain(args.rest).collect();
    if paths.is_empty() {
        return Err(Failure::Usage("no images given".into()));
    }
    let pre = PreprocessConfig { crop_fraction: args.crop_fraction, input_size: model.input_size };
    pre.validate()?;
    let mut failed = 0;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for path in &paths {
        let result = preprocess(path, &pre).and_then(|img| predict_proba(&model, &params, [&img]));
        match result {
            Ok(probs) => {
                let p = probs[0];
                let label = ferex::metrics::argmax_label(&p);
                let _ = writeln!(out, "{}\t{label}\t{:.4},{:.4},{:.4}", path.display(), p[0], p[1], p[2]);
            }
            Err(e) => {
                failed += 1;
                eprintln!("error: {e}");
            }
        }
    }
    if failed > 0 {
        return Err(Failure::Runtime(format!("{failed} of {} images failed", paths.len())));
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> CmdResult {
    let examples = synth_generate_total(args.count, args.size, args.seed)?;
    write_synth_dataset(&args.out, &examples, args.seed)?;
    eprintln!("wrote {} images to {}", examples.len(), args.out.display());
    Ok(())
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn cmd_plot(args: PlotArgs) -> CmdResult {
    if let Some(h) = &args.history {
        let records = parse_history_csv(&read_text(h)?)?;
        emit_curve_svg(&records, &args.out)?;
    } else if let Some(cm) = &args.confusion {
        let matrix = ConfusionMatrix::from_csv(&read_text(cm)?)?;
        emit_heatmap_svg(&matrix, &args.out)?;
    }
    Ok(())
}

/// Training allocates and frees multi-megabyte activation buffers every batch.
/// glibc's defaults serve those with fresh mmaps and trim the heap eagerly, so
/// about a third of the run went to zeroing new pages. Keep them on the heap.
#[cfg(all(target_os = "linux", target_env = "gnu"))]
fn tune_allocator() {
    // SAFETY: plain configuration calls made before any other thread exists.
    unsafe {
        libc::mallopt(libc::M_MMAP_THRESHOLD, 32 << 20);
        libc::mallopt(libc::M_TRIM_THRESHOLD, 512 << 20);
    }
}

#[cfg(not(all(target_os = "linux", target_env = "gnu")))]
fn tune_allocator() {}

fn main() -> ExitCode {
    tune_allocator();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Plot(a) => cmd_plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
