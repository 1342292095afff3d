//! JSON run configuration. Every section is optional; command-line flags
//! override whatever the file sets.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use stacklight_core::classify::{FeatureConfig, SmoothingPolicy, TrainConfig};
use stacklight_core::detect::SpotlightParams;
use stacklight_core::eval::DetectionBenchmark;
use stacklight_core::perturb::SweepGrid;
use stacklight_core::synth::{CropSetConfig, SceneConfig, TimelineConfig};
use stacklight_core::tracker::TrackerConfig;
use stacklight_core::LightCombination;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub synth: SynthSection,
    pub dataset: DatasetSection,
    pub train: TrainSection,
    pub run: RunSection,
    pub eval: EvalSection,
    pub sweep: SweepSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ImageFormat {
    #[default]
    Png,
    Ppm,
}

impl ImageFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ImageFormat::Png => "png",
            ImageFormat::Ppm => "ppm",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub frames: usize,
    pub format: ImageFormat,
    pub scene: SceneConfig,
    pub timeline: TimelineConfig,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self { frames: 100, format: ImageFormat::Png, scene: SceneConfig::default(), timeline: TimelineConfig::default() }
    }
}

/// The in-memory crop set shared by `train`, `eval` and `sweep`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub crops: usize,
    pub crop_set: CropSetConfig,
    /// Train / validation / test proportions.
    pub split: [f64; 3],
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self { crops: 10_000, crop_set: CropSetConfig::default(), split: [0.6, 0.2, 0.2] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub train: TrainConfig,
    pub features: FeatureConfig,
    /// Top up this class in the training split with shifted re-crops.
    pub rebalance: Option<LightCombination>,
    /// Warm-start from a green / yellow / red model first.
    pub pretrain: bool,
    pub pretrain_crops: usize,
    /// Test accuracy required by `--check`.
    pub min_accuracy: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            features: FeatureConfig::default(),
            rebalance: None,
            pretrain: false,
            pretrain_crops: 3000,
            min_accuracy: 0.99,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub tracker: TrackerConfig,
    pub detector: SpotlightParams,
    /// Only the threshold is used; the window comes from the tracker config.
    pub smoothing: SmoothingPolicy,
    /// Context added around each machine box before classifying.
    pub crop_margin: u32,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { tracker: TrackerConfig::default(), detector: SpotlightParams::default(), smoothing: SmoothingPolicy::default(), crop_margin: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub detection: DetectionBenchmark,
    pub detector: SpotlightParams,
    /// Extra tower scales evaluated and reported one by one.
    pub scales: Vec<f64>,
    pub min_accuracy: f64,
    pub min_recall: f64,
    pub max_fp_rate: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            detection: DetectionBenchmark::default(),
            detector: SpotlightParams::default(),
            scales: Vec::new(),
            min_accuracy: 0.99,
            min_recall: 0.99,
            max_fp_rate: 0.002,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub grid: SweepGrid,
    /// Use at most this many test crops.
    pub limit: Option<usize>,
    pub degrade_first: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { grid: SweepGrid::paper_default(), limit: None, degrade_first: false }
    }
}
