//! The three network input sets: sampled histogram, DCT, and Haar DWT
//! approximation coefficients, each with 32 components at the default stride.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{histogram, sample_stride, GrayImage, NormalizedHistogram, GREY_LEVELS};
use crate::transforms::{dct, dwt_features_at};

/// Default histogram sampling stride: 256 / 8 = 32 network inputs.
pub const DEFAULT_STRIDE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMethod {
    Hist,
    Dct,
    Dwt,
}

impl FeatureMethod {
    pub const ALL: [FeatureMethod; 3] = [FeatureMethod::Hist, FeatureMethod::Dct, FeatureMethod::Dwt];

    /// Upper-case tag used in weight blocks and CSV files.
    pub fn tag(self) -> &'static str {
        match self {
            FeatureMethod::Hist => "HIST",
            FeatureMethod::Dct => "DCT",
            FeatureMethod::Dwt => "DWT",
        }
    }
}

impl fmt::Display for FeatureMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for FeatureMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hist" => Ok(FeatureMethod::Hist),
            "dct" => Ok(FeatureMethod::Dct),
            "dwt" => Ok(FeatureMethod::Dwt),
            _ => Err(Error::Config(format!(
                "unknown feature method {s:?} (expected hist, dct or dwt)"
            ))),
        }
    }
}

/// Network input vector; every component lies in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    method: FeatureMethod,
    components: Vec<f64>,
}

impl FeatureVector {
    pub fn new(method: FeatureMethod, components: Vec<f64>) -> Result<Self> {
        if let Some(bad) = components
            .iter()
            .find(|v| !(-1.0..=1.0).contains(*v))
        {
            return Err(Error::Format(format!(
                "feature component {bad} outside [-1, 1]"
            )));
        }
        Ok(Self { method, components })
    }

    pub fn method(&self) -> FeatureMethod {
        self.method
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn into_components(self) -> Vec<f64> {
        self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// `method,class_index,c0,...` with 17 significant digits per component.
    pub fn csv_row(&self, class_index: usize) -> String {
        let mut row = format!("{},{}", self.method, class_index);
        for c in &self.components {
            row.push(',');
            row.push_str(&fmt_real(*c));
        }
        row
    }
}

/// Shortest-safe round-trip form: 17 significant digits in scientific notation.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn feature_csv_header(len: usize) -> String {
    let mut h = String::from("method,class_index");
    for i in 0..len {
        h.push_str(&format!(",c{i}"));
    }
    h
}

pub fn write_feature_csv<W: Write>(
    mut out: W,
    rows: &[(FeatureVector, usize)],
) -> std::io::Result<()> {
    let len = rows.first().map_or(32, |(f, _)| f.len());
    writeln!(out, "{}", feature_csv_header(len))?;
    for (f, class) in rows {
        writeln!(out, "{}", f.csv_row(*class))?;
    }
    Ok(())
}

/// How the 256-coefficient spectrum is reduced to the network width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DctReduction {
    /// Keep the lowest `256 / stride` coefficients.
    #[default]
    LowPass,
    /// Keep every `stride`-th coefficient, like the histogram.
    Stride,
}

/// Turns an image or a normalized histogram into a feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureExtractor {
    method: FeatureMethod,
    stride: usize,
    dct_reduction: DctReduction,
}

impl FeatureExtractor {
    /// `stride` must be a power of two dividing 256; the DWT depth is `log2(stride)`.
    pub fn new(method: FeatureMethod, stride: usize) -> Result<Self> {
        if stride == 0 || !stride.is_power_of_two() || stride > GREY_LEVELS {
            return Err(Error::BadStride {
                stride,
                len: GREY_LEVELS,
            });
        }
        Ok(Self {
            method,
            stride,
            dct_reduction: DctReduction::default(),
        })
    }

    /// Extractor whose output width is `inputs` (256 / stride).
    pub fn for_input_width(method: FeatureMethod, inputs: usize) -> Result<Self> {
        if inputs == 0 || !GREY_LEVELS.is_multiple_of(inputs) {
            return Err(Error::BadStride {
                stride: 0,
                len: GREY_LEVELS,
            });
        }
        Self::new(method, GREY_LEVELS / inputs)
    }

    pub fn with_dct_reduction(mut self, reduction: DctReduction) -> Self {
        self.dct_reduction = reduction;
        self
    }

    pub fn method(&self) -> FeatureMethod {
        self.method
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn width(&self) -> usize {
        GREY_LEVELS / self.stride
    }

    pub fn extract(&self, hist: &NormalizedHistogram) -> Result<FeatureVector> {
        let values = hist.values();
        match self.method {
            FeatureMethod::Hist => {
                FeatureVector::new(FeatureMethod::Hist, sample_stride(values, self.stride)?)
            }
            FeatureMethod::Dct => {
                let spectrum = dct(values)?.normalized()?.into_coefficients();
                let reduced = match self.dct_reduction {
                    DctReduction::LowPass => spectrum[..self.width()].to_vec(),
                    DctReduction::Stride => sample_stride(&spectrum, self.stride)?,
                };
                FeatureVector::new(FeatureMethod::Dct, reduced)
            }
            FeatureMethod::Dwt => dwt_features_at(values, self.stride.trailing_zeros() as usize),
        }
    }

    pub fn extract_image(&self, img: &GrayImage) -> Result<FeatureVector> {
        self.extract(&histogram(img).normalize()?)
    }
}
