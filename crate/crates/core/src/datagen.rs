//! Synthetic grayscale texture classes.
//!
//! A class is a Gaussian intensity mixture laid out in square cells of side
//! `spatial_grain`: each cell draws one mode, and per-pixel Gaussian noise is
//! box-smoothed at the same scale and rescaled back to unit variance, so the
//! marginal histogram of a cell follows its mode while neighbouring pixels
//! stay correlated. Datasets apply the acquisition augmentations (motion
//! blur on every image, brightness gain on a configured fraction).

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, TEST_SPLIT, TRAIN_SPLIT};
use crate::error::{Error, Result};
use crate::imaging::{
    brightness_shift, encode_pgm, histogram, motion_blur, quantize, BlurAxis, GrayImage,
    NormalizedHistogram,
};
use crate::transforms::cross_correlation;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityMode {
    pub mean: f64,
    pub stddev: f64,
    pub weight: f64,
}

impl IntensityMode {
    pub fn new(mean: f64, stddev: f64, weight: f64) -> Self {
        Self {
            mean,
            stddev,
            weight,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticClassSpec {
    pub name: String,
    pub modes: Vec<IntensityMode>,
    /// Overrides the manifest-wide grain when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spatial_grain: Option<usize>,
}

impl SyntheticClassSpec {
    pub fn validate(&self, grain: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::BadSpec(format!("class {:?}: {msg}", self.name)));
        if self.name.is_empty() || self.name.chars().any(|c| c.is_whitespace() || c == '/') {
            return bad("name must be a non-empty token without whitespace or '/'".into());
        }
        if self.modes.is_empty() {
            return bad("no intensity modes".into());
        }
        for m in &self.modes {
            if !(0.0..=255.0).contains(&m.mean) {
                return bad(format!("mode mean {} outside [0, 255]", m.mean));
            }
            if !(m.stddev >= 0.0 && m.stddev.is_finite()) {
                return bad(format!("mode stddev {} must be finite and >= 0", m.stddev));
            }
            if !(m.weight > 0.0) {
                return bad(format!("mode weight {} must be positive", m.weight));
            }
        }
        let total: f64 = self.modes.iter().map(|m| m.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("mode weights sum to {total}, not 1"));
        }
        if grain == 0 {
            return bad("spatial grain must be >= 1".into());
        }
        Ok(())
    }
}

fn default_width() -> usize {
    128
}
fn default_grain() -> usize {
    8
}
fn default_train() -> usize {
    300
}
fn default_test() -> usize {
    40
}
fn default_blur() -> usize {
    9
}
fn default_band() -> f64 {
    0.10
}
fn default_prob() -> f64 {
    0.5
}

/// Generation recipe for a full train/test dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    #[serde(default = "default_width")]
    pub width: usize,
    #[serde(default = "default_width")]
    pub height: usize,
    #[serde(default = "default_grain")]
    pub spatial_grain: usize,
    #[serde(default = "default_train")]
    pub train_per_class: usize,
    #[serde(default = "default_test")]
    pub test_per_class: usize,
    #[serde(default = "default_blur")]
    pub blur_extent: usize,
    #[serde(default = "default_band")]
    pub brightness_band: f64,
    #[serde(default = "default_prob")]
    pub brightness_prob: f64,
    pub classes: Vec<SyntheticClassSpec>,
}

impl DatasetManifest {
    pub fn grain_of(&self, class: &SyntheticClassSpec) -> usize {
        class.spatial_grain.unwrap_or(self.spatial_grain)
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::Config("manifest lists no classes".into()));
        }
        let mut names: Vec<&str> = self.classes.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("duplicate class names".into()));
        }
        for c in &self.classes {
            let g = self.grain_of(c);
            c.validate(g)?;
            if self.width < g || self.height < g {
                return Err(Error::BadSpec(format!(
                    "image {}x{} smaller than grain {g}",
                    self.width, self.height
                )));
            }
        }
        if self.blur_extent == 0 || self.blur_extent > self.width {
            return Err(Error::Config(format!(
                "blur extent {} outside 1..={}",
                self.blur_extent, self.width
            )));
        }
        if !(0.0..=1.0).contains(&self.brightness_band) {
            return Err(Error::Config(format!(
                "brightness band {} outside [0, 1]",
                self.brightness_band
            )));
        }
        if !(0.0..=1.0).contains(&self.brightness_prob) {
            return Err(Error::Config(format!(
                "brightness probability {} outside [0, 1]",
                self.brightness_prob
            )));
        }
        Ok(())
    }

    /// Parse TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self> {
        let m: Self = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        };
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest is always representable in TOML")
    }
}

/// Draw one texture image. Deterministic in `(spec, size, seed)`.
pub fn generate_image(
    spec: &SyntheticClassSpec,
    grain: usize,
    (width, height): (usize, usize),
    seed: u64,
) -> Result<GrayImage> {
    spec.validate(grain)?;
    if width < grain || height < grain {
        return Err(Error::BadSpec(format!(
            "image {width}x{height} smaller than grain {grain}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let cells_x = width.div_ceil(grain);
    let cells_y = height.div_ceil(grain);
    let labels: Vec<usize> = (0..cells_x * cells_y)
        .map(|_| pick_mode(&spec.modes, rng.random::<f64>()))
        .collect();

    let noisy = spec.modes.iter().any(|m| m.stddev > 0.0);
    let noise = if noisy {
        let raw: Vec<f64> = (0..width * height)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        smooth_unit_variance(&raw, width, height, grain)
    } else {
        vec![0.0; width * height]
    };

    let mut pixels = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let mode = &spec.modes[labels[(y / grain) * cells_x + x / grain]];
            pixels.push(quantize(mode.mean + mode.stddev * noise[y * width + x]));
        }
    }
    GrayImage::new(width, height, pixels)
}

fn pick_mode(modes: &[IntensityMode], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, m) in modes.iter().enumerate() {
        acc += m.weight;
        if u < acc {
            return i;
        }
    }
    modes.len() - 1
}

// Separable box mean of width `grain` (clamped borders), scaled by `grain` so
// interior values of iid unit-variance input keep unit variance.
fn smooth_unit_variance(raw: &[f64], width: usize, height: usize, grain: usize) -> Vec<f64> {
    if grain == 1 {
        return raw.to_vec();
    }
    let before = (grain - 1) / 2;
    let box_line = |get: &dyn Fn(usize) -> f64, len: usize, out: &mut dyn FnMut(usize, f64)| {
        for i in 0..len {
            let mut s = 0.0;
            for k in 0..grain {
                let j = (i + k).saturating_sub(before).min(len - 1);
                s += get(j);
            }
            out(i, s / grain as f64);
        }
    };
    let mut horiz = vec![0.0; width * height];
    for y in 0..height {
        let row = &raw[y * width..(y + 1) * width];
        box_line(&|j| row[j], width, &mut |i, v| horiz[y * width + i] = v);
    }
    let mut out = vec![0.0; width * height];
    for x in 0..width {
        box_line(
            &|j| horiz[j * width + x],
            height,
            &mut |i, v| out[i * width + x] = v * grain as f64,
        );
    }
    out
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one generated sample; train and test draw from disjoint streams.
pub fn sample_seed(seed: u64, split: &str, class: usize, index: usize) -> u64 {
    let split_tag = match split {
        TRAIN_SPLIT => 1,
        TEST_SPLIT => 2,
        _ => 3,
    };
    let mut s = splitmix(seed);
    for part in [split_tag, class as u64, index as u64] {
        s = splitmix(s ^ part);
    }
    s
}

/// Generate, then blur and (with the manifest's probability) brighten.
pub fn generate_sample(manifest: &DatasetManifest, class: usize, seed: u64) -> Result<GrayImage> {
    let spec = &manifest.classes[class];
    let img = generate_image(
        spec,
        manifest.grain_of(spec),
        (manifest.width, manifest.height),
        seed,
    )?;
    let mut aug = ChaCha8Rng::seed_from_u64(splitmix(seed ^ 0xA5A5_A5A5_A5A5_A5A5));
    let mut img = motion_blur(&img, manifest.blur_extent, BlurAxis::Horizontal)?;
    if manifest.brightness_band > 0.0 && aug.random::<f64>() < manifest.brightness_prob {
        let band = manifest.brightness_band;
        let factor = aug.random_range(-band..=band);
        img = brightness_shift(&img, factor)?;
    }
    Ok(img)
}

/// File name of sample `index` of a class.
pub fn sample_path(out: &Path, split: &str, class: &str, index: usize) -> PathBuf {
    out.join(split).join(class).join(format!("{class}_{index:04}.pgm"))
}

/// Number of files written.
pub fn generate_dataset(manifest: &DatasetManifest, out: impl AsRef<Path>) -> Result<usize> {
    manifest.validate()?;
    let out = out.as_ref();
    let mut jobs = Vec::new();
    for (split, per_class) in [
        (TRAIN_SPLIT, manifest.train_per_class),
        (TEST_SPLIT, manifest.test_per_class),
    ] {
        for (c, spec) in manifest.classes.iter().enumerate() {
            let dir = out.join(split).join(&spec.name);
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            jobs.extend((0..per_class).map(|i| (split, c, i)));
        }
    }
    jobs.par_iter().try_for_each(|&(split, c, i)| -> Result<()> {
        let img = generate_sample(manifest, c, sample_seed(manifest.seed, split, c, i))?;
        let path = sample_path(out, split, &manifest.classes[c].name, i);
        fs::write(&path, encode_pgm(&img)).map_err(|e| Error::io(&path, e))
    })?;
    Ok(jobs.len())
}

/// Pairwise Pearson correlations of the per-class mean normalized histograms.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub classes: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl CorrelationMatrix {
    pub fn from_histograms(classes: Vec<String>, means: &[NormalizedHistogram]) -> Result<Self> {
        let k = means.len();
        let mut values = vec![vec![1.0; k]; k];
        for i in 0..k {
            for j in i + 1..k {
                let r = cross_correlation(&means[i], &means[j])?;
                values[i][j] = r;
                values[j][i] = r;
            }
        }
        Ok(Self { classes, values })
    }

    fn off_diagonal(&self) -> impl Iterator<Item = f64> + '_ {
        let k = self.values.len();
        (0..k).flat_map(move |i| (0..k).filter(move |&j| j != i).map(move |j| self.values[i][j]))
    }

    pub fn max_off_diagonal(&self) -> Option<f64> {
        self.off_diagonal().reduce(f64::max)
    }

    pub fn min_off_diagonal(&self) -> Option<f64> {
        self.off_diagonal().reduce(f64::min)
    }

    /// Plain-text table, one row per class.
    pub fn render(&self) -> String {
        let mut s = String::from("class");
        for c in &self.classes {
            s.push(',');
            s.push_str(c);
        }
        s.push('\n');
        for (c, row) in self.classes.iter().zip(&self.values) {
            s.push_str(c);
            for v in row {
                s.push_str(&format!(",{v:.4}"));
            }
            s.push('\n');
        }
        s
    }
}

/// Mean normalized histogram of every class in a dataset directory (the
/// training split when the directory holds `train/` and `test/`).
pub fn class_mean_histograms(dataset_dir: impl AsRef<Path>) -> Result<(Vec<String>, Vec<NormalizedHistogram>)> {
    let ds = Dataset::open_split(dataset_dir, TRAIN_SPLIT)?;
    let per_sample: Vec<(usize, NormalizedHistogram)> = ds
        .samples()
        .par_iter()
        .map(|s| {
            let img = crate::imaging::load_image(&s.path)?;
            Ok((s.class, histogram(&img).normalize()?))
        })
        .collect::<Result<_>>()?;
    let mut means = Vec::with_capacity(ds.classes().len());
    for c in 0..ds.classes().len() {
        let mean = NormalizedHistogram::mean_of(
            per_sample.iter().filter(|(k, _)| *k == c).map(|(_, h)| h),
        )
        .ok_or_else(|| Error::Config(format!("class {} has no samples", ds.classes()[c])))?;
        means.push(mean);
    }
    Ok((ds.classes().to_vec(), means))
}

pub fn correlation_matrix(dataset_dir: impl AsRef<Path>) -> Result<CorrelationMatrix> {
    let (classes, means) = class_mean_histograms(dataset_dir)?;
    CorrelationMatrix::from_histograms(classes, &means)
}

/// Built-in manifests.
pub mod presets {
    use super::*;

    /// Class names in lexicographic order; the index is the class index.
    pub const CLASS_NAMES: [&str; 10] = [
        "azul_bahia",
        "balmoral_red",
        "bianco_sardo",
        "emerald_pearl",
        "gris_mondaris",
        "imperial_red",
        "kashmir_white",
        "rosa_porrino",
        "santa_cecilia_dourado",
        "tan_brown",
    ];

    /// Ten strongly correlated classes: a shared broad mode plus one narrow
    /// minor mode whose mean is the only thing that changes between classes.
    pub fn hard(seed: u64) -> DatasetManifest {
        let classes = CLASS_NAMES
            .iter()
            .enumerate()
            .map(|(k, name)| SyntheticClassSpec {
                name: name.to_string(),
                modes: vec![
                    IntensityMode::new(120.0, 30.0, 0.88),
                    IntensityMode::new(HARD_MINOR_BASE * HARD_MINOR_RATIO.powi(k as i32), 1.0, 0.12),
                ],
                spatial_grain: None,
            })
            .collect();
        DatasetManifest {
            seed,
            width: 192,
            height: 192,
            spatial_grain: 16,
            train_per_class: 300,
            test_per_class: 40,
            blur_extent: 9,
            brightness_band: 0.10,
            brightness_prob: 0.5,
            classes,
        }
    }

    pub const HARD_MINOR_BASE: f64 = 25.0;
    pub const HARD_MINOR_RATIO: f64 = 1.26;

    /// Ten well separated unimodal classes.
    pub fn easy(seed: u64) -> DatasetManifest {
        let classes = CLASS_NAMES
            .iter()
            .enumerate()
            .map(|(k, name)| SyntheticClassSpec {
                name: name.to_string(),
                modes: vec![IntensityMode::new(15.0 + 25.0 * k as f64, 4.0, 1.0)],
                spatial_grain: None,
            })
            .collect();
        DatasetManifest {
            seed,
            classes,
            ..hard(seed)
        }
    }

    pub fn by_name(name: &str, seed: u64) -> Option<DatasetManifest> {
        match name {
            "hard" => Some(hard(seed)),
            "easy" => Some(easy(seed)),
            _ => None,
        }
    }
}
