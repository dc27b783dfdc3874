//! Training on a dataset directory and the hidden-size / method / target-MSE
//! sweep.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::datagen::{correlation_matrix, CorrelationMatrix};
use crate::dataset::{Dataset, TRAIN_SPLIT};
use crate::error::{Error, Result};
use crate::features::{FeatureExtractor, FeatureMethod, DEFAULT_STRIDE};
use crate::imaging::{histogram, load_image, NormalizedHistogram};
use crate::mlp::{init_network, train, Sample, Topology, TrainConfig, TrainReport};
use crate::plcsim::{evaluate_dir, ScanRuntime, WeightBlock};
use crate::transforms::{recommend_from_correlation, MethodRecommendation};

/// Normalized histograms of a split, loaded once and shared by every method.
#[derive(Debug, Clone)]
pub struct HistogramSet {
    pub classes: Vec<String>,
    pub items: Vec<(NormalizedHistogram, usize)>,
}

impl HistogramSet {
    pub fn load(dataset_dir: impl AsRef<Path>, split: &str) -> Result<Self> {
        let ds = Dataset::open_split(dataset_dir, split)?;
        let items = ds
            .samples()
            .par_iter()
            .map(|s| Ok((histogram(&load_image(&s.path)?).normalize()?, s.class)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            classes: ds.classes().to_vec(),
            items,
        })
    }

    pub fn samples(&self, extractor: &FeatureExtractor) -> Result<Vec<Sample>> {
        let k = self.classes.len();
        self.items
            .iter()
            .map(|(h, c)| Ok(Sample::labelled(extractor.extract(h)?.into_components(), *c, k)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSpec {
    pub method: FeatureMethod,
    pub hidden: usize,
    pub stride: usize,
    pub config: TrainConfig,
}

impl TrainSpec {
    pub fn new(method: FeatureMethod, hidden: usize, config: TrainConfig) -> Self {
        Self {
            method,
            hidden,
            stride: DEFAULT_STRIDE,
            config,
        }
    }
}

/// Fresh network, seeded from `spec.config.seed`, trained on `set`.
pub fn train_on_histograms(set: &HistogramSet, spec: &TrainSpec) -> Result<(WeightBlock, TrainReport)> {
    let extractor = FeatureExtractor::new(spec.method, spec.stride)?;
    let samples = set.samples(&extractor)?;
    let topology = Topology::three_layer(extractor.width(), spec.hidden, set.classes.len())?;
    let mut net = init_network(&topology, spec.config.seed)?;
    let report = train(&mut net, &samples, &spec.config)?;
    let block = WeightBlock::new(net, spec.method, set.classes.clone())?;
    Ok((block, report))
}

pub fn train_on_dataset(dataset_dir: impl AsRef<Path>, spec: &TrainSpec) -> Result<(WeightBlock, TrainReport)> {
    train_on_histograms(&HistogramSet::load(dataset_dir, TRAIN_SPLIT)?, spec)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub methods: Vec<FeatureMethod>,
    pub hidden: Vec<usize>,
    pub mse: Vec<f64>,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub seed: u64,
    pub stride: usize,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() || self.hidden.is_empty() || self.mse.is_empty() {
            return Err(Error::Config("sweep needs at least one method, hidden size and target MSE".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden sizes must be >= 1".into()));
        }
        Ok(())
    }

    /// Cells in output order: method, then hidden size, then target MSE.
    pub fn cells(&self) -> Vec<(FeatureMethod, usize, f64)> {
        let mut cells = Vec::new();
        for &m in &self.methods {
            for &h in &self.hidden {
                for &e in &self.mse {
                    cells.push((m, h, e));
                }
            }
        }
        cells
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CellStatus {
    Converged,
    NotConverged,
    Failed(String),
}

impl CellStatus {
    pub fn label(&self) -> String {
        match self {
            CellStatus::Converged => "converged".into(),
            CellStatus::NotConverged => "not_converged".into(),
            CellStatus::Failed(msg) => format!("failed: {}", msg.replace([',', '\n'], ";")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepCell {
    pub method: FeatureMethod,
    pub hidden: usize,
    pub mse: f64,
    pub correct: usize,
    pub total: usize,
    pub train_mse: f64,
    pub epochs: usize,
    pub status: CellStatus,
    pub max_ms: f64,
    pub mean_ms: f64,
    pub block: Option<WeightBlock>,
}

impl SweepCell {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    pub fn converged(&self) -> bool {
        self.status == CellStatus::Converged
    }
}

pub const SWEEP_HEADER: &str =
    "method,hidden,mse,correct,total,accuracy,train_mse,epochs,converged,status,max_ms,mean_ms";

/// Number of trailing wall-clock columns in a sweep row.
pub const SWEEP_TIMING_COLUMNS: usize = 2;

pub fn write_sweep_csv<W: Write>(mut out: W, cells: &[SweepCell]) -> std::io::Result<()> {
    writeln!(out, "{SWEEP_HEADER}")?;
    for c in cells {
        writeln!(
            out,
            "{},{},{},{},{},{:.4},{:.6},{},{},{},{:.3},{:.3}",
            c.method,
            c.hidden,
            c.mse,
            c.correct,
            c.total,
            c.accuracy(),
            c.train_mse,
            c.epochs,
            u8::from(c.converged()),
            c.status.label(),
            c.max_ms,
            c.mean_ms
        )?;
    }
    Ok(())
}

fn run_cell(
    set: &HistogramSet,
    test_dir: &Path,
    config: &SweepConfig,
    (method, hidden, mse): (FeatureMethod, usize, f64),
) -> SweepCell {
    let mut cell = SweepCell {
        method,
        hidden,
        mse,
        correct: 0,
        total: 0,
        train_mse: f64::NAN,
        epochs: 0,
        status: CellStatus::NotConverged,
        max_ms: 0.0,
        mean_ms: 0.0,
        block: None,
    };
    let spec = TrainSpec {
        method,
        hidden,
        stride: config.stride,
        config: TrainConfig {
            learning_rate: config.learning_rate,
            target_mse: mse,
            max_iterations: config.max_epochs,
            seed: config.seed,
            ..TrainConfig::default()
        },
    };
    let outcome = train_on_histograms(set, &spec).and_then(|(block, report)| {
        let run = evaluate_dir(&ScanRuntime::new(block.clone())?, test_dir, mse)?;
        Ok((block, report, run))
    });
    match outcome {
        Ok((block, report, run)) => {
            cell.correct = run.summary.correct;
            cell.total = run.summary.total;
            cell.train_mse = report.final_mse;
            cell.epochs = report.iterations_run;
            cell.status = if report.converged {
                CellStatus::Converged
            } else {
                CellStatus::NotConverged
            };
            cell.max_ms = run.summary.max_ms;
            cell.mean_ms = run.summary.mean_ms;
            cell.block = Some(block);
        }
        Err(e) => cell.status = CellStatus::Failed(e.to_string()),
    }
    cell
}

/// Train and evaluate every cell; rows come back in [`SweepConfig::cells`] order.
pub fn run_sweep(dataset_dir: impl AsRef<Path>, config: &SweepConfig) -> Result<Vec<SweepCell>> {
    config.validate()?;
    let dir = dataset_dir.as_ref();
    let set = HistogramSet::load(dir, TRAIN_SPLIT)?;
    let test_dir = dir.join(crate::dataset::TEST_SPLIT);
    if !test_dir.is_dir() {
        return Err(Error::Config(format!("{} has no test split", dir.display())));
    }
    Ok(config
        .cells()
        .into_par_iter()
        .map(|cell| run_cell(&set, &test_dir, config, cell))
        .collect())
}

pub fn recommend_for_dataset(
    dataset_dir: impl AsRef<Path>,
    threshold: f64,
) -> Result<(CorrelationMatrix, MethodRecommendation)> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Config(format!("threshold {threshold} outside (0, 1)")));
    }
    let m = correlation_matrix(dataset_dir)?;
    let max = m.max_off_diagonal().ok_or(Error::TooFewHistograms(m.classes.len()))?;
    Ok((m.clone(), recommend_from_correlation(max, threshold)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_dataset, DatasetManifest, IntensityMode, SyntheticClassSpec};

    fn tiny(dir: &Path) {
        let class = |name: &str, mean: f64| SyntheticClassSpec {
            name: name.into(),
            modes: vec![IntensityMode::new(mean, 6.0, 1.0)],
            spatial_grain: None,
        };
        let m = DatasetManifest {
            seed: 3,
            width: 32,
            height: 32,
            spatial_grain: 4,
            train_per_class: 8,
            test_per_class: 4,
            blur_extent: 9,
            brightness_band: 0.1,
            brightness_prob: 0.5,
            classes: vec![class("dark", 50.0), class("light", 190.0)],
        };
        generate_dataset(&m, dir).unwrap();
    }

    fn config() -> SweepConfig {
        SweepConfig {
            methods: FeatureMethod::ALL.to_vec(),
            hidden: vec![3],
            mse: vec![0.05],
            learning_rate: 0.05,
            max_epochs: 500,
            seed: 1,
            stride: DEFAULT_STRIDE,
        }
    }

    #[test]
    fn sweep_on_separable_data() {
        let dir = tempfile::tempdir().unwrap();
        tiny(dir.path());
        let cells = run_sweep(dir.path(), &config()).unwrap();
        assert_eq!(cells.len(), 3);
        for c in &cells {
            assert_eq!(c.total, 8);
            assert_eq!(c.correct, 8, "{:?} {:?}", c.method, c.status);
        }
        let mut a = Vec::new();
        write_sweep_csv(&mut a, &cells).unwrap();
        let text = String::from_utf8(a).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().nth(1).unwrap().starts_with("HIST,3,0.05,8,8,1.0000,"));
    }

    #[test]
    fn failing_cells_are_recorded() {
        let dir = tempfile::tempdir().unwrap();
        tiny(dir.path());
        let mut cfg = config();
        cfg.methods = vec![FeatureMethod::Hist];
        cfg.learning_rate = 1e6;
        let cells = run_sweep(dir.path(), &cfg).unwrap();
        assert!(matches!(cells[0].status, CellStatus::Failed(_)));
        assert!(!cells[0].status.label().contains(','));
    }

    #[test]
    fn empty_lists_rejected() {
        let mut cfg = config();
        cfg.hidden.clear();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn recommendation_on_separated_classes() {
        let dir = tempfile::tempdir().unwrap();
        tiny(dir.path());
        let (m, rec) = recommend_for_dataset(dir.path(), 0.65).unwrap();
        assert_eq!(m.values.len(), 2);
        assert_eq!(rec, MethodRecommendation::HistOrDct);
        assert!(recommend_for_dataset(dir.path(), 1.5).is_err());
    }
}
