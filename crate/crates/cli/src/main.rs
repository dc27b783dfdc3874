use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use texclass_core::dataset::{Dataset, TRAIN_SPLIT};
use texclass_core::experiment::{write_sweep_csv, HistogramSet, SWEEP_TIMING_COLUMNS};
use texclass_core::features::write_feature_csv;
use texclass_core::imaging::load_image;
use texclass_core::plcsim::{labelled_files, run_batch};
use texclass_core::{
    presets, recommend_for_dataset, run_sweep, train_on_dataset, DatasetManifest, Error,
    FeatureExtractor, FeatureMethod, ScanRuntime, SweepConfig, TrainConfig, TrainSpec,
    WeightBlock, DEFAULT_STRIDE,
};

const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_NOT_CONVERGED: u8 = 4;

#[derive(Parser)]
#[command(name = "texclass", version, about = "Histogram / DCT / DWT texture classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic train/test dataset
    Gen(GenArgs),
    /// Write the feature vectors of a dataset split as CSV
    Features(FeaturesArgs),
    /// Train a network and write its weight block
    Train(TrainArgs),
    /// Classify one image or a directory of images
    Classify(ClassifyArgs),
    /// Train and evaluate every (method, hidden, mse) cell
    Sweep(SweepArgs),
    /// Class histogram correlations and the suggested feature set
    Recommend(RecommendArgs),
    /// Per-stage scan-cycle timings over a set of images
    Scan(ScanArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Manifest file (TOML or JSON)
    manifest: Option<PathBuf>,
    /// Built-in manifest instead of a file: hard or easy
    #[arg(long, conflicts_with = "manifest")]
    preset: Option<String>,
    /// Overrides the manifest seed; required with --preset
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    train_per_class: Option<usize>,
    #[arg(long)]
    test_per_class: Option<usize>,
    /// Also write the effective manifest here
    #[arg(long)]
    save_manifest: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FeaturesArgs {
    dataset: PathBuf,
    #[arg(long)]
    method: FeatureMethod,
    #[arg(long, default_value_t = DEFAULT_STRIDE)]
    stride: usize,
    #[arg(long, default_value = TRAIN_SPLIT)]
    split: String,
    /// Defaults to stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    dataset: PathBuf,
    #[arg(long)]
    method: FeatureMethod,
    #[arg(long)]
    hidden: usize,
    /// Target training MSE
    #[arg(long)]
    mse: f64,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_STRIDE)]
    stride: usize,
    #[arg(long, default_value_t = 2000)]
    max_epochs: usize,
    /// Weight block output path
    #[arg(long)]
    out: PathBuf,
    /// Optional per-epoch MSE trace CSV
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct ClassifyArgs {
    block: PathBuf,
    /// Image file or directory
    input: PathBuf,
    /// Per-sample manifest CSV for directory input (a summary file is written next to it)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    dataset: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "hist,dct,dwt")]
    method: Vec<FeatureMethod>,
    #[arg(long, value_delimiter = ',', required = true)]
    hidden: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    mse: Vec<f64>,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_STRIDE)]
    stride: usize,
    #[arg(long, default_value_t = 2000)]
    max_epochs: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RecommendArgs {
    dataset: PathBuf,
    #[arg(long, default_value_t = texclass_core::transforms::DEFAULT_THRESHOLD)]
    threshold: f64,
}

#[derive(Args)]
struct ScanArgs {
    block: PathBuf,
    /// Image file or directory
    input: PathBuf,
    /// Run cyclically with this period instead of back to back
    #[arg(long)]
    period_ms: Option<f64>,
    /// Defaults to stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io { .. } | Error::Format(_) | Error::Version { .. } | Error::EmptyDataset => EXIT_IO,
            Error::NonFinite { .. } => EXIT_NOT_CONVERGED,
            _ => EXIT_CONFIG,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    fn io(path: &Path, e: io::Error) -> Self {
        Failure {
            code: EXIT_IO,
            message: format!("{}: {e}", path.display()),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Features(a) => cmd_features(a),
        Command::Train(a) => cmd_train(a),
        Command::Classify(a) => cmd_classify(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Recommend(a) => cmd_recommend(a),
        Command::Scan(a) => cmd_scan(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    match path {
        Some(p) => Ok(Box::new(io::BufWriter::new(
            fs::File::create(p).map_err(|e| Failure::io(p, e))?,
        ))),
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn cmd_gen(a: GenArgs) -> CmdResult {
    let mut manifest = match (&a.manifest, &a.preset) {
        (Some(path), None) => {
            // an unreadable manifest is a configuration problem, not an output one
            DatasetManifest::load(path).map_err(|e| Failure::config(e.to_string()))?
        }
        (None, Some(name)) => {
            let seed = a.seed.ok_or_else(|| Failure::config("--preset needs an explicit --seed"))?;
            presets::by_name(name, seed)
                .ok_or_else(|| Failure::config(format!("unknown preset {name:?} (hard or easy)")))?
        }
        _ => return Err(Failure::config("give a manifest path or --preset")),
    };
    if let Some(seed) = a.seed {
        manifest.seed = seed;
    }
    if let Some(n) = a.train_per_class {
        manifest.train_per_class = n;
    }
    if let Some(n) = a.test_per_class {
        manifest.test_per_class = n;
    }
    manifest.validate()?;
    if let Some(p) = &a.save_manifest {
        fs::write(p, manifest.to_toml()).map_err(|e| Failure::io(p, e))?;
    }
    let n = texclass_core::generate_dataset(&manifest, &a.out)?;
    println!("wrote {n} images to {}", a.out.display());
    Ok(())
}

fn cmd_features(a: FeaturesArgs) -> CmdResult {
    let extractor = FeatureExtractor::new(a.method, a.stride)?;
    let set = HistogramSet::load(&a.dataset, &a.split)?;
    let rows = set
        .items
        .iter()
        .map(|(h, c)| Ok((extractor.extract(h)?, *c)))
        .collect::<Result<Vec<_>, Error>>()?;
    let path = a.out.as_deref();
    let mut out = output(path)?;
    write_feature_csv(&mut out, &rows)
        .and_then(|_| out.flush())
        .map_err(|e| Failure::io(path.unwrap_or(Path::new("<stdout>")), e))
}

fn cmd_train(a: TrainArgs) -> CmdResult {
    if a.hidden == 0 {
        return Err(Failure::config("--hidden must be >= 1"));
    }
    let spec = TrainSpec {
        method: a.method,
        hidden: a.hidden,
        stride: a.stride,
        config: TrainConfig {
            learning_rate: a.lr,
            target_mse: a.mse,
            max_iterations: a.max_epochs,
            seed: a.seed,
            ..TrainConfig::default()
        },
    };
    let (block, report) = train_on_dataset(&a.dataset, &spec)?;
    block.save(&a.out)?;
    if let Some(p) = &a.trace {
        let mut f = output(Some(p))?;
        report.write_trace_csv(&mut f).and_then(|_| f.flush()).map_err(|e| Failure::io(p, e))?;
    }
    println!(
        "method={} topology={} epochs={} final_mse={:.6} converged={}",
        block.method,
        block.topology(),
        report.iterations_run,
        report.final_mse,
        report.converged
    );
    if report.converged {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_NOT_CONVERGED,
            message: format!(
                "target MSE {} not reached after {} epochs (final {:.6}); block written to {} anyway",
                a.mse,
                report.iterations_run,
                report.final_mse,
                a.out.display()
            ),
        })
    }
}

fn image_inputs(input: &Path) -> Result<Vec<PathBuf>, Failure> {
    if input.is_dir() {
        Ok(labelled_files(input)?.into_iter().map(|(p, _)| p).collect())
    } else {
        Ok(vec![input.to_path_buf()])
    }
}

fn cmd_classify(a: ClassifyArgs) -> CmdResult {
    let block = WeightBlock::load(&a.block)?;
    if let Some(out) = &a.out {
        if !a.input.is_dir() {
            return Err(Failure::config("--out needs a directory input"));
        }
        let s = run_batch(&block, &a.input, out, f64::NAN)?;
        println!("{}/{} correct ({:.4}), max {:.3} ms", s.correct, s.total, s.accuracy(), s.max_ms);
        return Ok(());
    }
    let runtime = ScanRuntime::new(block)?;
    let mut stdout = io::stdout().lock();
    writeln!(stdout, "file,winner,class_name,margin").ok();
    for path in image_inputs(&a.input)? {
        let r = runtime.scan_file(&path)?;
        writeln!(
            stdout,
            "{},{},{},{:.6}",
            path.display(),
            r.result.winner,
            r.result.class_name,
            r.result.margin
        )
        .ok();
    }
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> CmdResult {
    let config = SweepConfig {
        methods: a.method,
        hidden: a.hidden,
        mse: a.mse,
        learning_rate: a.lr,
        max_epochs: a.max_epochs,
        seed: a.seed,
        stride: a.stride,
    };
    let cells = run_sweep(&a.dataset, &config)?;
    let mut out = output(Some(&a.out))?;
    write_sweep_csv(&mut out, &cells)
        .and_then(|_| out.flush())
        .map_err(|e| Failure::io(&a.out, e))?;
    for c in &cells {
        println!(
            "{} hidden={} mse={} -> {}/{} ({})",
            c.method,
            c.hidden,
            c.mse,
            c.correct,
            c.total,
            c.status.label()
        );
    }
    log::info!("last {SWEEP_TIMING_COLUMNS} columns are wall-clock timings");
    Ok(())
}

fn cmd_recommend(a: RecommendArgs) -> CmdResult {
    let classes = Dataset::open_split(&a.dataset, TRAIN_SPLIT)?.classes().len();
    if classes < 2 {
        return Err(Failure::config(format!("need at least 2 classes, found {classes}")));
    }
    let (matrix, verdict) = recommend_for_dataset(&a.dataset, a.threshold)?;
    print!("{}", matrix.render());
    println!(
        "max_correlation={:.4} threshold={}",
        matrix.max_off_diagonal().unwrap_or(f64::NAN),
        a.threshold
    );
    println!("{verdict}");
    Ok(())
}

fn cmd_scan(a: ScanArgs) -> CmdResult {
    let runtime = ScanRuntime::new(WeightBlock::load(&a.block)?)?;
    let paths = image_inputs(&a.input)?;
    let reports = match a.period_ms {
        Some(ms) if ms > 0.0 && ms.is_finite() => {
            let images = paths
                .iter()
                .map(load_image)
                .collect::<Result<Vec<_>, Error>>()?;
            let run = runtime.run_cyclic(&images, Duration::from_secs_f64(ms / 1e3))?;
            if !run.overruns.is_empty() {
                eprintln!("{} of {} cycles overran {ms} ms", run.overruns.len(), images.len());
            }
            run.reports
        }
        Some(ms) => return Err(Failure::config(format!("bad --period-ms {ms}"))),
        None => paths
            .iter()
            .map(|p| runtime.scan_file(p))
            .collect::<Result<Vec<_>, Error>>()?,
    };
    let path = a.out.as_deref();
    let mut out = output(path)?;
    let write = |out: &mut dyn Write| -> io::Result<()> {
        writeln!(out, "file,acquire_us,histogram_us,transform_us,forward_us,decide_us,total_ms,winner")?;
        for (p, r) in paths.iter().zip(&reports) {
            writeln!(
                out,
                "{},{:.1},{:.1},{:.1},{:.1},{:.1},{:.4},{}",
                p.display(),
                r.acquire_us,
                r.histogram_us,
                r.transform_us,
                r.forward_us,
                r.decide_us,
                r.total_ms,
                r.result.class_name
            )?;
        }
        out.flush()
    };
    write(&mut out).map_err(|e| Failure::io(path.unwrap_or(Path::new("<stdout>")), e))
}
