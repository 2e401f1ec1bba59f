//! Synthetic multi-modal streams.
//!
//! Seeded Gaussian class clusters per modality stand in for real encoder
//! features; parametric corruption families stand in for media-level
//! corruptions (their effect at feature level is a controlled distribution
//! shift). Schedules arrange corrupted phases the two benchmark ways:
//! progressively on one modality, or interleaved across both.
//!
//! Ground-truth labels ride alongside each batch for scoring only; the
//! adapter-facing [`AdapterBatch`] has no label field.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::seeds::{self, domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Audio,
    Video,
}

impl Modality {
    pub fn name(self) -> &'static str {
        match self {
            Modality::Audio => "audio",
            Modality::Video => "video",
        }
    }

    pub fn other(self) -> Modality {
        match self {
            Modality::Audio => Modality::Video,
            Modality::Video => Modality::Audio,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    /// Add N(0, severity²) noise per coordinate.
    AdditiveGaussian,
    /// Multiply every coordinate by `severity` (1 is the identity).
    Scale,
    /// Zero coordinates independently with probability `severity`.
    Dropout,
    /// Add `severity` to every coordinate.
    Shift,
}

impl CorruptionKind {
    pub fn name(self) -> &'static str {
        match self {
            CorruptionKind::AdditiveGaussian => "additive_gaussian",
            CorruptionKind::Scale => "scale",
            CorruptionKind::Dropout => "dropout",
            CorruptionKind::Shift => "shift",
        }
    }
}

/// A corruption applied to one modality. Severity 0 disables the transform
/// for every kind.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CorruptionSpec {
    pub modality: Modality,
    pub kind: CorruptionKind,
    pub severity: f64,
}

impl CorruptionSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.severity.is_finite() || self.severity < 0.0 {
            return Err(Error::InvalidSeverity {
                kind: self.kind.name(),
                severity: self.severity,
            });
        }
        if self.kind == CorruptionKind::Dropout && self.severity > 1.0 {
            return Err(Error::InvalidSeverity {
                kind: "dropout",
                severity: self.severity,
            });
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        format!("{}:{}@{}", self.modality.name(), self.kind.name(), self.severity)
    }
}

/// Apply a corruption in place. Draws from `rng` only for the kinds that
/// need randomness.
pub fn corrupt(sample: &mut [f64], spec: &CorruptionSpec, rng: &mut ChaCha8Rng) -> Result<()> {
    spec.validate()?;
    if spec.severity == 0.0 {
        return Ok(());
    }
    match spec.kind {
        CorruptionKind::AdditiveGaussian => {
            let normal = StandardNormal;
            for v in sample.iter_mut() {
                let z: f64 = normal.sample(rng);
                *v += spec.severity * z;
            }
        }
        CorruptionKind::Scale => {
            for v in sample.iter_mut() {
                *v *= spec.severity;
            }
        }
        CorruptionKind::Dropout => {
            for v in sample.iter_mut() {
                if rng.random_range(0.0..1.0) < spec.severity {
                    *v = 0.0;
                }
            }
        }
        CorruptionKind::Shift => {
            for v in sample.iter_mut() {
                *v += spec.severity;
            }
        }
    }
    Ok(())
}

/// Task shape: class clusters in each modality plus sampling noise.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TaskConfig {
    pub num_classes: usize,
    pub audio_dim: usize,
    pub video_dim: usize,
    /// Spread of the class means (std of their Gaussian draw).
    pub mean_scale: f64,
    pub within_class_std: f64,
    /// Source samples per class; unequal counts exercise the class weights.
    pub source_per_class: Vec<usize>,
    pub heldout_per_class: usize,
    pub seed: u64,
}

impl TaskConfig {
    /// Balanced desk-scale default: 10 classes, 32+32 dims, 2000 source
    /// samples, 500 held-out.
    pub fn default_desk(seed: u64) -> TaskConfig {
        TaskConfig {
            num_classes: 10,
            audio_dim: 32,
            video_dim: 32,
            mean_scale: 1.0,
            within_class_std: 2.0,
            source_per_class: vec![200; 10],
            heldout_per_class: 50,
            seed,
        }
    }

    /// Geometric imbalance with the largest class exactly `ratio` times the
    /// smallest (`min_count`); intermediate classes round.
    pub fn with_imbalance(mut self, min_count: usize, ratio: f64) -> TaskConfig {
        let c = self.num_classes;
        self.source_per_class = (0..c)
            .map(|i| {
                let expo = (c - 1 - i) as f64 / (c - 1).max(1) as f64;
                (min_count as f64 * ratio.powf(expo)).round() as usize
            })
            .collect();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if self.audio_dim == 0 || self.video_dim == 0 {
            return Err(Error::InvalidConfig("modality dims must be >= 1".into()));
        }
        if self.source_per_class.len() != self.num_classes {
            return Err(Error::InvalidConfig(format!(
                "source_per_class has {} entries for {} classes",
                self.source_per_class.len(),
                self.num_classes
            )));
        }
        if self.source_per_class.iter().any(|&c| c == 0) {
            return Err(Error::InvalidConfig(
                "every class needs at least one source sample".into(),
            ));
        }
        if !(self.within_class_std >= 0.0) || !(self.mean_scale > 0.0) {
            return Err(Error::InvalidConfig(
                "mean_scale must be positive, within_class_std non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// A labeled multi-modal dataset (source or held-out split).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub audio: Matrix,
    pub video: Matrix,
    pub labels: Vec<usize>,
}

/// The generated task: frozen class means for both modalities.
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    config: TaskConfig,
    audio_means: Matrix,
    video_means: Matrix,
}

pub fn generate_task(config: &TaskConfig) -> Result<(SyntheticTask, LabeledSet, LabeledSet)> {
    config.validate()?;
    let c = config.num_classes;

    let mut means_rng = ChaCha8Rng::seed_from_u64(seeds::derive(config.seed, domain::TASK_MEANS));
    let normal = StandardNormal;
    let draw_means = |dim: usize, rng: &mut ChaCha8Rng| {
        Matrix::from_fn(c, dim, |_, _| {
            let z: f64 = normal.sample(rng);
            z * config.mean_scale
        })
    };
    let audio_means = draw_means(config.audio_dim, &mut means_rng);
    let video_means = draw_means(config.video_dim, &mut means_rng);
    for (means, what) in [(&audio_means, "audio"), (&video_means, "video")] {
        if min_pairwise_distance(means) <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "{what} class means are not pairwise distinct"
            )));
        }
    }

    let task = SyntheticTask {
        config: config.clone(),
        audio_means,
        video_means,
    };

    let source = task.sample_set(
        &config.source_per_class,
        seeds::derive(config.seed, domain::TASK_SOURCE),
    );
    let heldout = task.sample_set(
        &vec![config.heldout_per_class; c],
        seeds::derive(config.seed, domain::TASK_HELDOUT),
    );
    Ok((task, source, heldout))
}

fn min_pairwise_distance(means: &Matrix) -> f64 {
    let mut min = f64::INFINITY;
    for i in 0..means.rows() {
        for j in 0..i {
            let d: f64 = means
                .row(i)
                .iter()
                .zip(means.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            min = min.min(d.sqrt());
        }
    }
    min
}

impl SyntheticTask {
    pub fn config(&self) -> &TaskConfig {
        &self.config
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    fn sample_one(&self, class: usize, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
        let normal = StandardNormal;
        let std = self.config.within_class_std;
        let audio = self
            .audio_means
            .row(class)
            .iter()
            .map(|&m| {
                let z: f64 = normal.sample(rng);
                m + std * z
            })
            .collect();
        let video = self
            .video_means
            .row(class)
            .iter()
            .map(|&m| {
                let z: f64 = normal.sample(rng);
                m + std * z
            })
            .collect();
        (audio, video)
    }

    fn sample_set(&self, per_class: &[usize], seed: u64) -> LabeledSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let total: usize = per_class.iter().sum();
        let mut audio = Matrix::zeros(total, self.config.audio_dim);
        let mut video = Matrix::zeros(total, self.config.video_dim);
        let mut labels = Vec::with_capacity(total);
        let mut row = 0;
        for (class, &count) in per_class.iter().enumerate() {
            for _ in 0..count {
                let (a, v) = self.sample_one(class, &mut rng);
                audio.row_mut(row).copy_from_slice(&a);
                video.row_mut(row).copy_from_slice(&v);
                labels.push(class);
                row += 1;
            }
        }
        LabeledSet { audio, video, labels }
    }
}

/// One stream phase: an optional corruption over a run of samples.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Phase {
    pub corruption: Option<CorruptionSpec>,
    pub samples: usize,
    pub batch_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    /// Every corrupting phase hits the same single modality.
    ProgressiveSingleModality,
    /// Corruption alternates between modalities across phases.
    Interleaved,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PhaseSchedule {
    mode: ScheduleMode,
    phases: Vec<Phase>,
}

impl PhaseSchedule {
    pub fn new(mode: ScheduleMode, phases: Vec<Phase>) -> Result<PhaseSchedule> {
        let corrupting: Vec<Modality> = phases
            .iter()
            .filter_map(|p| p.corruption.map(|c| c.modality))
            .collect();
        match mode {
            ScheduleMode::ProgressiveSingleModality => {
                if corrupting.windows(2).any(|w| w[0] != w[1]) {
                    return Err(Error::InvalidConfig(
                        "progressive schedule must corrupt a single modality".into(),
                    ));
                }
            }
            ScheduleMode::Interleaved => {
                if corrupting.windows(2).any(|w| w[0] == w[1]) {
                    return Err(Error::InvalidConfig(
                        "interleaved schedule must alternate the corrupted modality".into(),
                    ));
                }
            }
        }
        for p in &phases {
            if p.batch_size == 0 {
                return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
            }
            if let Some(c) = &p.corruption {
                c.validate()?;
            }
        }
        Ok(PhaseSchedule { mode, phases })
    }

    pub fn mode(&self) -> ScheduleMode {
        self.mode
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    pub fn total_samples(&self) -> usize {
        self.phases.iter().map(|p| p.samples).sum()
    }
}

/// What the adapter sees: features only.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterBatch {
    pub audio: Matrix,
    pub video: Matrix,
}

/// A scored stream batch: features for the adapter, truth for the metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamBatch {
    pub phase_index: usize,
    pub features: AdapterBatch,
    pub truth: Vec<usize>,
}

/// Iterate schedule batches in order. Deterministic given the task seed and
/// schedule; the clean modality in each phase passes through untouched.
pub fn stream<'a>(
    task: &'a SyntheticTask,
    schedule: &'a PhaseSchedule,
) -> impl Iterator<Item = StreamBatch> + 'a {
    let sample_rng = ChaCha8Rng::seed_from_u64(seeds::derive(
        task.config.seed,
        domain::STREAM_SAMPLES,
    ));
    let corrupt_rng = ChaCha8Rng::seed_from_u64(seeds::derive(
        task.config.seed,
        domain::STREAM_CORRUPTION,
    ));
    TaskStream {
        task,
        schedule,
        phase: 0,
        emitted_in_phase: 0,
        sample_rng,
        corrupt_rng,
    }
}

struct TaskStream<'a> {
    task: &'a SyntheticTask,
    schedule: &'a PhaseSchedule,
    phase: usize,
    emitted_in_phase: usize,
    sample_rng: ChaCha8Rng,
    corrupt_rng: ChaCha8Rng,
}

impl Iterator for TaskStream<'_> {
    type Item = StreamBatch;

    fn next(&mut self) -> Option<StreamBatch> {
        let phases = self.schedule.phases();
        while self.phase < phases.len() && self.emitted_in_phase >= phases[self.phase].samples {
            self.phase += 1;
            self.emitted_in_phase = 0;
        }
        if self.phase >= phases.len() {
            return None;
        }
        let phase = &phases[self.phase];
        let count = phase.batch_size.min(phase.samples - self.emitted_in_phase);

        let c = self.task.num_classes();
        let mut audio = Matrix::zeros(count, self.task.config.audio_dim);
        let mut video = Matrix::zeros(count, self.task.config.video_dim);
        let mut truth = Vec::with_capacity(count);
        for i in 0..count {
            let class = self.sample_rng.random_range(0..c);
            let (a, v) = self.task.sample_one(class, &mut self.sample_rng);
            audio.row_mut(i).copy_from_slice(&a);
            video.row_mut(i).copy_from_slice(&v);
            truth.push(class);
        }
        if let Some(spec) = &phase.corruption {
            let target = match spec.modality {
                Modality::Audio => &mut audio,
                Modality::Video => &mut video,
            };
            for i in 0..count {
                // Schedules are validated at construction; corrupting a
                // validated spec cannot fail.
                corrupt(target.row_mut(i), spec, &mut self.corrupt_rng)
                    .expect("validated corruption spec");
            }
        }
        self.emitted_in_phase += count;
        Some(StreamBatch {
            phase_index: self.phase,
            features: AdapterBatch { audio, video },
            truth,
        })
    }
}
