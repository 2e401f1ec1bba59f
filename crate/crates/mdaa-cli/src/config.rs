//! Run configuration: a TOML file plus flag overrides.
//!
//! Reproducible runs live in config files; exploration lives on flags.
//! Every flag overrides its config key. Defaults follow the method's
//! published settings (γ=1, θ=1e-3, n=2, λ=0) with φ=512 for desk scale.

use std::path::{Path, PathBuf};

use mdaa_core::adapter::ModelConfig;
use mdaa_core::classifier::UpdateStrategy;
use mdaa_core::error::{Error, Result};
use mdaa_core::expansion::Nonlinearity;
use mdaa_core::sim::{PhaseSchedule, TaskConfig};

use crate::presets;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: u64,
    pub gamma: f64,
    pub theta: f64,
    /// Initial threshold for dynamic runs; defaults to `theta`.
    pub theta_ini: Option<f64>,
    pub lambda: f64,
    pub dynamic_threshold: bool,
    pub top_n: usize,
    pub phi: usize,
    pub nonlinearity: Nonlinearity,
    /// Projection scale; omitted means 1/√input_dim per branch.
    pub scale: Option<f64>,
    pub strategy: UpdateStrategy,
    /// Precomputed embeddings instead of the synthetic task.
    pub features: Option<PathBuf>,
    /// Labeled embeddings used as the clean held-out split for file runs.
    pub heldout_features: Option<PathBuf>,
    pub task: TaskSection,
    pub schedule: ScheduleSection,
}

impl Default for FileConfig {
    fn default() -> Self {
        FileConfig {
            seed: 42,
            gamma: 1.0,
            theta: 1e-3,
            theta_ini: None,
            lambda: 0.0,
            dynamic_threshold: false,
            top_n: 2,
            phi: 512,
            nonlinearity: Nonlinearity::Relu,
            scale: None,
            strategy: UpdateStrategy::Refactor,
            features: None,
            heldout_features: None,
            task: TaskSection::default(),
            schedule: ScheduleSection::default(),
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSection {
    pub classes: usize,
    pub audio_dim: usize,
    pub video_dim: usize,
    pub mean_scale: f64,
    pub within_class_std: f64,
    /// Explicit per-class source counts; wins over `source_size`/`imbalance`.
    pub source_per_class: Option<Vec<usize>>,
    pub source_size: usize,
    /// Largest-to-smallest class ratio; 1 means balanced.
    pub imbalance: f64,
    pub heldout_per_class: usize,
}

impl Default for TaskSection {
    fn default() -> Self {
        TaskSection {
            classes: 10,
            audio_dim: 32,
            video_dim: 32,
            mean_scale: 1.0,
            within_class_std: 2.0,
            source_per_class: None,
            source_size: 2000,
            imbalance: 1.0,
            heldout_per_class: 50,
        }
    }
}

impl TaskSection {
    pub fn to_task_config(&self, seed: u64) -> Result<TaskConfig> {
        let per_class = match &self.source_per_class {
            Some(counts) => counts.clone(),
            None => {
                if self.classes == 0 {
                    return Err(Error::InvalidConfig("classes must be >= 2".into()));
                }
                if !(self.imbalance >= 1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "imbalance ratio must be >= 1, got {}",
                        self.imbalance
                    )));
                }
                let c = self.classes;
                let weights: Vec<f64> = (0..c)
                    .map(|i| {
                        let expo = (c - 1 - i) as f64 / (c - 1).max(1) as f64;
                        self.imbalance.powf(expo)
                    })
                    .collect();
                let total: f64 = weights.iter().sum();
                weights
                    .iter()
                    .map(|w| ((self.source_size as f64 * w / total).round() as usize).max(1))
                    .collect()
            }
        };
        let config = TaskConfig {
            num_classes: self.classes,
            audio_dim: self.audio_dim,
            video_dim: self.video_dim,
            mean_scale: self.mean_scale,
            within_class_std: self.within_class_std,
            source_per_class: per_class,
            heldout_per_class: self.heldout_per_class,
            seed,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    /// Named preset: progressive-audio, progressive-video, interleaved,
    /// or any of them with a `-rev` suffix (reversed phase order).
    pub preset: Option<String>,
    pub samples_per_phase: Option<usize>,
    pub batch_size: Option<usize>,
    pub severity: Option<f64>,
    /// Explicit phase list; wins over `preset`.
    pub phases: Vec<PhaseEntry>,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseEntry {
    /// Corrupted modality; omit for a clean phase.
    pub modality: Option<mdaa_core::sim::Modality>,
    pub kind: Option<mdaa_core::sim::CorruptionKind>,
    pub severity: f64,
    pub samples: usize,
    pub batch: usize,
}

impl Default for PhaseEntry {
    fn default() -> Self {
        PhaseEntry {
            modality: None,
            kind: None,
            severity: 0.0,
            samples: 500,
            batch: 64,
        }
    }
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("config parse: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if !(self.theta >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "theta must be non-negative, got {}",
                self.theta
            )));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        if self.top_n == 0 {
            return Err(Error::InvalidConfig("top_n must be >= 1".into()));
        }
        if self.phi == 0 {
            return Err(Error::InvalidConfig("phi must be >= 1".into()));
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            expanded_dim: self.phi,
            gamma: self.gamma,
            top_n: self.top_n,
            theta: self.theta_ini.unwrap_or(self.theta),
            lambda: self.lambda,
            dynamic_threshold: self.dynamic_threshold,
            nonlinearity: self.nonlinearity,
            scale: self.scale,
            seed: self.seed,
            strategy: self.strategy,
        }
    }

    pub fn schedule(&self) -> Result<PhaseSchedule> {
        if !self.schedule.phases.is_empty() {
            return presets::schedule_from_entries(&self.schedule.phases);
        }
        let name = self.schedule.preset.as_deref().unwrap_or("interleaved");
        presets::by_name(
            name,
            self.schedule.samples_per_phase,
            self.schedule.batch_size,
            self.schedule.severity,
        )
    }
}

/// Flag overrides shared by every subcommand.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Config file (TOML); flags below override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Ridge regularization strength.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Gate threshold on the leader−follower MAP gap.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Initial threshold for dynamic runs (defaults to --theta).
    #[arg(long)]
    pub theta_ini: Option<f64>,
    /// Dynamic threshold learning rate.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Enable per-classifier dynamic thresholds.
    #[arg(long)]
    pub dynamic: Option<bool>,
    /// Soft-label support size.
    #[arg(long = "top-n")]
    pub top_n: Option<usize>,
    /// Expanded feature dimension.
    #[arg(long)]
    pub phi: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Projection scale (default 1/√input_dim).
    #[arg(long)]
    pub scale: Option<f64>,
    /// Bank update strategy: refactor | incremental-factor.
    #[arg(long)]
    pub strategy: Option<String>,
    /// Schedule preset name.
    #[arg(long)]
    pub schedule: Option<String>,
    /// Override every phase's batch size.
    #[arg(long = "batch-size")]
    pub batch_size: Option<usize>,
    /// Preset severity knob.
    #[arg(long)]
    pub severity: Option<f64>,
    /// Preset phase length.
    #[arg(long = "samples-per-phase")]
    pub samples_per_phase: Option<usize>,
    /// Precomputed feature file (binary AEXF or CSV) instead of synthetic data.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Labeled feature file used as the clean held-out split.
    #[arg(long = "heldout-features")]
    pub heldout_features: Option<PathBuf>,
}

pub fn resolve(overrides: &Overrides) -> Result<FileConfig> {
    let mut cfg = match &overrides.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    if let Some(v) = overrides.gamma {
        cfg.gamma = v;
    }
    if let Some(v) = overrides.theta {
        cfg.theta = v;
    }
    if let Some(v) = overrides.theta_ini {
        cfg.theta_ini = Some(v);
    }
    if let Some(v) = overrides.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = overrides.dynamic {
        cfg.dynamic_threshold = v;
    }
    if let Some(v) = overrides.top_n {
        cfg.top_n = v;
    }
    if let Some(v) = overrides.phi {
        cfg.phi = v;
    }
    if let Some(v) = overrides.seed {
        cfg.seed = v;
    }
    if let Some(v) = overrides.scale {
        cfg.scale = Some(v);
    }
    if let Some(v) = &overrides.strategy {
        cfg.strategy = match v.as_str() {
            "refactor" => UpdateStrategy::Refactor,
            "incremental-factor" | "incremental" => UpdateStrategy::IncrementalFactor,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown strategy {other:?} (expected refactor | incremental-factor)"
                )))
            }
        };
    }
    if let Some(v) = &overrides.schedule {
        cfg.schedule.preset = Some(v.clone());
        cfg.schedule.phases.clear();
    }
    if let Some(v) = overrides.batch_size {
        cfg.schedule.batch_size = Some(v);
        for p in &mut cfg.schedule.phases {
            p.batch = v;
        }
    }
    if let Some(v) = overrides.severity {
        cfg.schedule.severity = Some(v);
    }
    if let Some(v) = overrides.samples_per_phase {
        cfg.schedule.samples_per_phase = Some(v);
    }
    if let Some(v) = &overrides.features {
        cfg.features = Some(v.clone());
    }
    if let Some(v) = &overrides.heldout_features {
        cfg.heldout_features = Some(v.clone());
    }
    cfg.validate()?;
    // Config errors surface before any compute, even for commands that end
    // up not streaming a schedule.
    cfg.schedule()?;
    Ok(cfg)
}
