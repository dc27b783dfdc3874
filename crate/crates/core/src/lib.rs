//! Texture classification from grayscale histograms: histogram, DCT and
//! Haar-DWT feature sets, a tanh multilayer perceptron, argmax decision
//! logic, a scan-cycle runtime and a synthetic texture generator.

pub mod datagen;
pub mod dataset;
pub mod decision;
pub mod error;
pub mod experiment;
pub mod features;
pub mod imaging;
pub mod mlp;
pub mod plcsim;
pub mod transforms;

pub use datagen::{
    correlation_matrix, generate_dataset, generate_image, presets, CorrelationMatrix,
    DatasetManifest, IntensityMode, SyntheticClassSpec,
};
pub use dataset::{Dataset, SampleFile};
pub use decision::{accuracy, decide, ClassificationResult, ConfusionMatrix, DecisionLogic};
pub use error::{Error, Result};
pub use experiment::{
    recommend_for_dataset, run_sweep, train_on_dataset, SweepCell, SweepConfig, TrainSpec,
};
pub use features::{DctReduction, FeatureExtractor, FeatureMethod, FeatureVector, DEFAULT_STRIDE};
pub use imaging::{
    brightness_shift, histogram, motion_blur, BlurAxis, GrayImage, Histogram, NormalizedHistogram,
};
pub use mlp::{
    gradient_check, init_network, train, MlpNetwork, Sample, Topology, TrainConfig, TrainReport,
};
pub use plcsim::{
    load_weight_block, run_batch, run_scan_cycle, save_weight_block, ScanCycleReport, ScanRuntime,
    WeightBlock,
};
pub use transforms::{
    cross_correlation, dct, dwt_features, dwt_pyramid, recommend_method, DctSpectrum, FilterBank,
    MethodRecommendation, WaveletDecomposition,
};
