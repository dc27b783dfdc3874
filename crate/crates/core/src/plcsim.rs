//! Soft-PLC emulation: weight-block persistence and a timed scan cycle
//! (acquire, histogram, transform, forward, decide) run on demand or
//! cyclically.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use crate::dataset::{read_dir_sorted, Dataset, TEST_SPLIT};
use crate::decision::{write_results_csv, ClassificationResult, DecisionLogic, ResultRow};
use crate::error::{Error, Result};
use crate::features::{fmt_real, FeatureExtractor, FeatureMethod};
use crate::imaging::{decode_pgm, histogram, GrayImage};
use crate::mlp::{Layer, MlpNetwork, Topology};

pub const WEIGHT_BLOCK_MAGIC: &str = "AMPCS-WB";
pub const WEIGHT_BLOCK_VERSION: u32 = 1;

/// A trained network together with the metadata needed to run it.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightBlock {
    pub format_version: u32,
    pub method: FeatureMethod,
    pub class_names: Vec<String>,
    pub network: MlpNetwork,
}

impl WeightBlock {
    pub fn new(network: MlpNetwork, method: FeatureMethod, class_names: Vec<String>) -> Result<Self> {
        if class_names.len() != network.output_size() {
            return Err(Error::LengthMismatch {
                outputs: network.output_size(),
                names: class_names.len(),
            });
        }
        if let Some(bad) = class_names.iter().find(|n| n.is_empty() || n.chars().any(char::is_whitespace)) {
            return Err(Error::Format(format!("class name {bad:?} is empty or contains whitespace")));
        }
        FeatureExtractor::for_input_width(method, network.input_size())?;
        Ok(Self {
            format_version: WEIGHT_BLOCK_VERSION,
            method,
            class_names,
            network,
        })
    }

    pub fn topology(&self) -> &Topology {
        self.network.topology()
    }

    /// Feature extractor matching the network's input width.
    pub fn extractor(&self) -> Result<FeatureExtractor> {
        FeatureExtractor::for_input_width(self.method, self.network.input_size())
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{WEIGHT_BLOCK_MAGIC} v{}\n", self.format_version);
        let _ = writeln!(s, "method {}", self.method);
        let sizes: Vec<String> = self.topology().sizes().iter().map(usize::to_string).collect();
        let _ = writeln!(s, "topology {}", sizes.join(" "));
        let _ = writeln!(s, "classes {}", self.class_names.join(" "));
        for (i, layer) in self.network.layers().iter().enumerate() {
            for (kind, values) in [("weights", layer.weights()), ("biases", layer.biases())] {
                let _ = write!(s, "layer {i} {kind}");
                for v in values {
                    s.push(' ');
                    s.push_str(&fmt_real(*v));
                }
                s.push('\n');
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::Format(format!("truncated weight block: missing {what}")))
        };

        let header = next("header")?;
        let version = header
            .strip_prefix(WEIGHT_BLOCK_MAGIC)
            .and_then(|r| r.strip_prefix(" v"))
            .ok_or_else(|| Error::Format(format!("bad header {header:?}")))?;
        let version: u32 = version
            .parse()
            .map_err(|_| Error::Format(format!("bad version in header {header:?}")))?;
        if version != WEIGHT_BLOCK_VERSION {
            return Err(Error::Version {
                found: version,
                expected: WEIGHT_BLOCK_VERSION,
            });
        }

        let method: FeatureMethod = keyed(next("method")?, "method")?
            .parse()
            .map_err(|_| Error::Format("unknown method".into()))?;

        let sizes: Vec<usize> = keyed(next("topology")?, "topology")?
            .split(' ')
            .map(|t| t.parse().map_err(|_| Error::Format(format!("bad topology entry {t:?}"))))
            .collect::<Result<_>>()?;
        if sizes.len() < 2 {
            return Err(Error::Format("topology needs at least input and output sizes".into()));
        }
        let topology = Topology::new(
            sizes[0],
            sizes[1..sizes.len() - 1].to_vec(),
            sizes[sizes.len() - 1],
        )
        .map_err(|e| Error::Format(e.to_string()))?;

        let class_names: Vec<String> = keyed(next("classes")?, "classes")?
            .split(' ')
            .map(str::to_string)
            .collect();

        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for (i, w) in sizes.windows(2).enumerate() {
            let weights = layer_values(next("layer weights")?, i, "weights", w[0] * w[1])?;
            let biases = layer_values(next("layer biases")?, i, "biases", w[1])?;
            layers.push(Layer::new(w[0], w[1], weights, biases)?);
        }
        if let Some(extra) = lines.find(|l| !l.trim().is_empty()) {
            return Err(Error::Format(format!("unexpected trailing line {extra:?}")));
        }
        let network = MlpNetwork::from_layers(topology, layers)?;
        Self::new(network, method, class_names).map_err(|e| match e {
            Error::Format(_) => e,
            other => Error::Format(other.to_string()),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

fn keyed<'a>(line: &'a str, key: &str) -> Result<&'a str> {
    line.strip_prefix(key)
        .and_then(|r| r.strip_prefix(' '))
        .filter(|r| !r.is_empty())
        .ok_or_else(|| Error::Format(format!("expected `{key} ...`, got {line:?}")))
}

fn layer_values(line: &str, index: usize, kind: &str, count: usize) -> Result<Vec<f64>> {
    let body = keyed(line, &format!("layer {index} {kind}"))?;
    let values: Vec<f64> = body
        .split(' ')
        .map(|t| match t.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(Error::Format(format!("bad real {t:?} in layer {index} {kind}"))),
        })
        .collect::<Result<_>>()?;
    if values.len() != count {
        return Err(Error::Format(format!(
            "layer {index} {kind}: expected {count} values, found {}",
            values.len()
        )));
    }
    Ok(values)
}

pub fn save_weight_block(
    net: &MlpNetwork,
    method: FeatureMethod,
    class_names: &[String],
    path: impl AsRef<Path>,
) -> Result<()> {
    WeightBlock::new(net.clone(), method, class_names.to_vec())?.save(path)
}

pub fn load_weight_block(path: impl AsRef<Path>) -> Result<(MlpNetwork, FeatureMethod, Vec<String>)> {
    let b = WeightBlock::load(path)?;
    Ok((b.network, b.method, b.class_names))
}

/// Stage timings of one scan; stages in microseconds, total in milliseconds.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanCycleReport {
    pub acquire_us: f64,
    pub histogram_us: f64,
    pub transform_us: f64,
    pub forward_us: f64,
    pub decide_us: f64,
    pub total_ms: f64,
    pub result: ClassificationResult,
}

impl ScanCycleReport {
    pub fn stages_us(&self) -> [f64; 5] {
        [
            self.acquire_us,
            self.histogram_us,
            self.transform_us,
            self.forward_us,
            self.decide_us,
        ]
    }

    pub fn winner(&self) -> usize {
        self.result.winner
    }
}

fn us(d: Duration) -> f64 {
    d.as_secs_f64() * 1e6
}

/// Image source for the acquire stage.
pub enum Acquire<'a> {
    Memory(&'a GrayImage),
    File(&'a Path),
}

/// A loaded block ready to scan; the block is not modified while scanning.
#[derive(Debug, Clone)]
pub struct ScanRuntime {
    block: WeightBlock,
    extractor: FeatureExtractor,
    logic: DecisionLogic,
}

impl ScanRuntime {
    pub fn new(block: WeightBlock) -> Result<Self> {
        let extractor = block.extractor()?;
        Ok(Self {
            block,
            extractor,
            logic: DecisionLogic::default(),
        })
    }

    pub fn with_logic(mut self, logic: DecisionLogic) -> Self {
        self.logic = logic;
        self
    }

    pub fn block(&self) -> &WeightBlock {
        &self.block
    }

    pub fn scan(&self, source: Acquire<'_>) -> Result<ScanCycleReport> {
        let start = Instant::now();

        let t = Instant::now();
        let owned;
        let img = match source {
            Acquire::Memory(img) => {
                owned = img.clone();
                &owned
            }
            Acquire::File(path) => {
                let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
                owned = decode_pgm(&bytes)?;
                &owned
            }
        };
        let acquire = t.elapsed();

        let t = Instant::now();
        let hist = histogram(img).normalize()?;
        let histogram_d = t.elapsed();

        let t = Instant::now();
        let features = self.extractor.extract(&hist)?;
        let transform = t.elapsed();

        let t = Instant::now();
        let outputs = self.block.network.forward(features.components())?;
        let forward = t.elapsed();

        let t = Instant::now();
        let result = self.logic.evaluate(&outputs, &self.block.class_names)?;
        let decide = t.elapsed();

        Ok(ScanCycleReport {
            acquire_us: us(acquire),
            histogram_us: us(histogram_d),
            transform_us: us(transform),
            forward_us: us(forward),
            decide_us: us(decide),
            total_ms: start.elapsed().as_secs_f64() * 1e3,
            result,
        })
    }

    pub fn run_scan_cycle(&self, img: &GrayImage) -> Result<ScanCycleReport> {
        self.scan(Acquire::Memory(img))
    }

    pub fn scan_file(&self, path: impl AsRef<Path>) -> Result<ScanCycleReport> {
        self.scan(Acquire::File(path.as_ref()))
    }

    /// Time-controlled execution: one scan per `period`. A cycle longer than
    /// the period is logged and the next one starts immediately.
    pub fn run_cyclic<'a, I>(&self, images: I, period: Duration) -> Result<CyclicRun>
    where
        I: IntoIterator<Item = &'a GrayImage>,
    {
        let mut run = CyclicRun::default();
        let mut deadline = Instant::now();
        for (cycle, img) in images.into_iter().enumerate() {
            let now = Instant::now();
            if now < deadline {
                thread::sleep(deadline - now);
            }
            let began = Instant::now();
            let report = self.run_scan_cycle(img)?;
            let elapsed = began.elapsed();
            if elapsed > period {
                log::warn!(
                    "scan cycle {cycle} overran its period: {:.3} ms > {:.3} ms",
                    elapsed.as_secs_f64() * 1e3,
                    period.as_secs_f64() * 1e3
                );
                run.overruns.push(cycle);
                deadline = Instant::now();
            } else {
                deadline = began + period;
            }
            run.reports.push(report);
        }
        Ok(run)
    }
}

pub fn run_scan_cycle(block: &WeightBlock, img: &GrayImage) -> Result<ScanCycleReport> {
    ScanRuntime::new(block.clone())?.run_scan_cycle(img)
}

#[derive(Debug, Clone, Default)]
pub struct CyclicRun {
    pub reports: Vec<ScanCycleReport>,
    /// Indices of cycles that exceeded the period.
    pub overruns: Vec<usize>,
}

/// Aggregate row of a batch run.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchSummary {
    pub method: FeatureMethod,
    pub hidden: String,
    pub mse: f64,
    pub correct: usize,
    pub total: usize,
    pub max_ms: f64,
    pub mean_ms: f64,
}

impl BatchSummary {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }

    pub const HEADER: &'static str = "method,hidden,mse,correct,total,accuracy,max_ms";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{:.4},{:.3}",
            self.method,
            self.hidden,
            self.mse,
            self.correct,
            self.total,
            self.accuracy(),
            self.max_ms
        )
    }
}

#[derive(Debug, Clone)]
pub struct BatchRun {
    pub summary: BatchSummary,
    pub rows: Vec<ResultRow>,
    pub reports: Vec<ScanCycleReport>,
}

/// Labelled sample files under `dir`: either `.pgm` files directly inside it
/// (labelled by the directory name) or a class-per-directory tree, preferring
/// its test split.
pub fn labelled_files(dir: &Path) -> Result<Vec<(PathBuf, String)>> {
    let direct: Vec<PathBuf> = read_dir_sorted(dir)?
        .into_iter()
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "pgm"))
        .collect();
    if !direct.is_empty() {
        let class = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        return Ok(direct.into_iter().map(|p| (p, class.clone())).collect());
    }
    let ds = Dataset::open_split(dir, TEST_SPLIT)?;
    Ok(ds
        .samples()
        .iter()
        .map(|s| (s.path.clone(), ds.classes()[s.class].clone()))
        .collect())
}

fn sample_id(path: &Path) -> String {
    let file = path.file_name().map(|f| f.to_string_lossy()).unwrap_or_default();
    match path.parent().and_then(Path::file_name) {
        Some(parent) => format!("{}/{file}", parent.to_string_lossy()),
        None => file.into_owned(),
    }
}

/// Scan every sample under `dir` (true class = its directory name).
pub fn evaluate_dir(runtime: &ScanRuntime, dir: impl AsRef<Path>, mse: f64) -> Result<BatchRun> {
    let block = runtime.block();
    let files = labelled_files(dir.as_ref())?;
    let mut rows = Vec::with_capacity(files.len());
    let mut reports = Vec::with_capacity(files.len());
    for (path, class) in files {
        let true_class = block
            .class_names
            .iter()
            .position(|c| *c == class)
            .ok_or_else(|| Error::Format(format!("class {class:?} is not in the weight block")))?;
        let report = runtime.scan_file(&path)?;
        rows.push(ResultRow {
            sample_id: sample_id(&path),
            true_class,
            winner: report.winner(),
            margin: report.result.margin,
        });
        reports.push(report);
    }
    let total = rows.len();
    let max_ms = reports.iter().map(|r| r.total_ms).fold(0.0, f64::max);
    let mean_ms = reports.iter().map(|r| r.total_ms).sum::<f64>() / total as f64;
    let hidden: Vec<String> = block.topology().hidden().iter().map(usize::to_string).collect();
    let summary = BatchSummary {
        method: block.method,
        hidden: hidden.join("-"),
        mse,
        correct: rows.iter().filter(|r| r.correct()).count(),
        total,
        max_ms,
        mean_ms,
    };
    Ok(BatchRun {
        summary,
        rows,
        reports,
    })
}

/// Path of the aggregate file written next to a manifest: `<stem>_summary.csv`.
pub fn summary_path(manifest: &Path) -> PathBuf {
    let stem = manifest.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    manifest.with_file_name(format!("{stem}_summary.csv"))
}

/// Evaluate a directory and write the per-sample manifest plus its summary row.
pub fn run_batch(
    block: &WeightBlock,
    dir: impl AsRef<Path>,
    manifest_out: impl AsRef<Path>,
    mse: f64,
) -> Result<BatchSummary> {
    let runtime = ScanRuntime::new(block.clone())?;
    let run = evaluate_dir(&runtime, dir, mse)?;
    let out = manifest_out.as_ref();
    let mut buf = Vec::new();
    write_results_csv(&mut buf, &run.rows).expect("writing to memory");
    fs::write(out, buf).map_err(|e| Error::io(out, e))?;
    let summary = summary_path(out);
    let mut f = fs::File::create(&summary).map_err(|e| Error::io(&summary, e))?;
    writeln!(f, "{}\n{}", BatchSummary::HEADER, run.summary.csv_row()).map_err(|e| Error::io(&summary, e))?;
    Ok(run.summary)
}
