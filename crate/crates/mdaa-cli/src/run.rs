//! Shared run machinery: data preparation, the phase loop, and scoring.

use std::time::Instant;

use mdaa_core::adapter::{init_from_source, AdaptationEvent, MdaaModel};
use mdaa_core::error::{Error, Result};
use mdaa_core::feature_file::FeatureFile;
use mdaa_core::linalg::Matrix;
use mdaa_core::metrics::{
    build_run_report, heldout_accuracy, peak_rss_bytes, score_phase, PhaseReport, RunReport,
};
use mdaa_core::seeds::{self, domain};
use mdaa_core::sim::{
    corrupt, generate_task, stream, LabeledSet, PhaseSchedule, SyntheticTask,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::FileConfig;

const EVAL_BATCH: usize = 256;

pub enum RunData {
    Synthetic {
        task: SyntheticTask,
        source: LabeledSet,
        heldout: LabeledSet,
    },
    File {
        file: FeatureFile,
        heldout: Option<LabeledSet>,
    },
}

pub struct Prepared {
    pub cfg: FileConfig,
    pub data: RunData,
}

pub fn prepare(cfg: FileConfig) -> Result<Prepared> {
    let data = match &cfg.features {
        Some(path) => {
            let file = FeatureFile::load(path)?;
            if file.num_classes < 2 {
                return Err(Error::InvalidConfig(format!(
                    "feature file declares {} classes",
                    file.num_classes
                )));
            }
            let heldout = match &cfg.heldout_features {
                Some(h) => Some(FeatureFile::load(h)?.labeled_set()?),
                None => None,
            };
            RunData::File { file, heldout }
        }
        None => {
            let task_config = cfg.task.to_task_config(cfg.seed)?;
            let (task, source, heldout) = generate_task(&task_config)?;
            RunData::Synthetic {
                task,
                source,
                heldout,
            }
        }
    };
    Ok(Prepared { cfg, data })
}

impl Prepared {
    pub fn num_classes(&self) -> usize {
        match &self.data {
            RunData::Synthetic { task, .. } => task.num_classes(),
            RunData::File { file, .. } => file.num_classes,
        }
    }

    pub fn heldout(&self) -> Option<&LabeledSet> {
        match &self.data {
            RunData::Synthetic { heldout, .. } => Some(heldout),
            RunData::File { heldout, .. } => heldout.as_ref(),
        }
    }

    pub fn init_model(&self) -> Result<MdaaModel> {
        let model_config = self.cfg.model_config();
        match &self.data {
            RunData::Synthetic { source, .. } => init_from_source(
                &model_config,
                &source.audio,
                &source.video,
                &source.labels,
                self.num_classes(),
            ),
            RunData::File { file, .. } => {
                let set = file.labeled_set()?;
                init_from_source(
                    &model_config,
                    &set.audio,
                    &set.video,
                    &set.labels,
                    file.num_classes,
                )
            }
        }
    }

    /// Held-out accuracy of the current model, if a held-out split exists.
    pub fn heldout_accuracy(&self, model: &mut MdaaModel) -> Result<Option<f64>> {
        match self.heldout() {
            Some(set) => Ok(Some(heldout_accuracy(model, set, EVAL_BATCH)?)),
            None => Ok(None),
        }
    }
}

struct RunBatch {
    phase_index: usize,
    audio: Matrix,
    video: Matrix,
    truth: Vec<Option<usize>>,
}

fn batches(prepared: &Prepared, schedule: &PhaseSchedule) -> Result<Vec<RunBatch>> {
    match &prepared.data {
        RunData::Synthetic { task, .. } => Ok(stream(task, schedule)
            .map(|b| RunBatch {
                phase_index: b.phase_index,
                audio: b.features.audio,
                video: b.features.video,
                truth: b.truth.into_iter().map(Some).collect(),
            })
            .collect()),
        RunData::File { file, .. } => file_batches(file, schedule, prepared.cfg.seed),
    }
}

/// Slice a feature file into schedule batches, applying each phase's
/// corruption to its samples in order.
fn file_batches(
    file: &FeatureFile,
    schedule: &PhaseSchedule,
    seed: u64,
) -> Result<Vec<RunBatch>> {
    let needed = schedule.total_samples();
    if needed > file.n_samples() {
        return Err(Error::InvalidConfig(format!(
            "schedule wants {needed} samples but the feature file has {}",
            file.n_samples()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, domain::STREAM_CORRUPTION));
    let mut out = Vec::new();
    let mut cursor = 0usize;
    for (phase_index, phase) in schedule.phases().iter().enumerate() {
        let mut left = phase.samples;
        while left > 0 {
            let count = left.min(phase.batch_size);
            let mut audio = Matrix::zeros(count, file.audio.cols());
            let mut video = Matrix::zeros(count, file.video.cols());
            let mut truth = Vec::with_capacity(count);
            for i in 0..count {
                audio.row_mut(i).copy_from_slice(file.audio.row(cursor + i));
                video.row_mut(i).copy_from_slice(file.video.row(cursor + i));
                let label = file.labels[cursor + i];
                truth.push((label >= 0).then_some(label as usize));
            }
            if let Some(spec) = &phase.corruption {
                let target = match spec.modality {
                    mdaa_core::sim::Modality::Audio => &mut audio,
                    mdaa_core::sim::Modality::Video => &mut video,
                };
                for i in 0..count {
                    corrupt(target.row_mut(i), spec, &mut rng)?;
                }
            }
            out.push(RunBatch {
                phase_index,
                audio,
                video,
                truth,
            });
            cursor += count;
            left -= count;
        }
    }
    Ok(out)
}

pub struct AdaptOutcome {
    pub report: RunReport,
    /// (phase_index, event) in stream order, kept for optional dumping.
    pub events: Vec<(usize, AdaptationEvent)>,
}

/// Stream every phase through the model, score per phase, and assemble the
/// run report. `baseline_acc` feeds the forgetting number when a held-out
/// split exists.
pub fn run_adapt(
    model: &mut MdaaModel,
    prepared: &Prepared,
    schedule: &PhaseSchedule,
    baseline_acc: Option<f64>,
) -> Result<AdaptOutcome> {
    let started = Instant::now();
    let all = batches(prepared, schedule)?;

    let phase_count = schedule.phases().len();
    let mut by_phase: Vec<(Vec<AdaptationEvent>, Vec<Option<usize>>)> =
        (0..phase_count).map(|_| (Vec::new(), Vec::new())).collect();
    let mut log: Vec<(usize, AdaptationEvent)> = Vec::new();

    for batch in &all {
        let events = model.infer_and_adapt(&batch.audio, &batch.video)?;
        let slot = &mut by_phase[batch.phase_index];
        for (e, t) in events.iter().zip(&batch.truth) {
            slot.1.push(*t);
            log.push((batch.phase_index, e.clone()));
        }
        slot.0.extend(events);
    }

    let mut phases: Vec<PhaseReport> = Vec::with_capacity(phase_count);
    for (i, phase) in schedule.phases().iter().enumerate() {
        let desc = phase
            .corruption
            .map_or_else(|| "clean".to_string(), |c| c.describe());
        let (events, truth) = &by_phase[i];
        // Score only the labeled samples (files may carry unlabeled rows).
        let scored: Vec<AdaptationEvent> = events
            .iter()
            .zip(truth)
            .filter(|(_, t)| t.is_some())
            .map(|(e, _)| e.clone())
            .collect();
        let labels: Vec<usize> = truth.iter().flatten().copied().collect();
        phases.push(score_phase(i, &desc, &scored, &labels)?);
    }

    let forgetting = match (baseline_acc, prepared.heldout()) {
        (Some(baseline), Some(set)) => {
            Some(baseline - heldout_accuracy(model, set, EVAL_BATCH)?)
        }
        _ => None,
    };
    let report = build_run_report(
        phases,
        forgetting,
        started.elapsed().as_secs_f64(),
        peak_rss_bytes(),
    );
    Ok(AdaptOutcome {
        report,
        events: log,
    })
}

/// One full run (fresh init + adaptation) for sweeps.
pub fn run_full(cfg: FileConfig) -> Result<RunReport> {
    let schedule = cfg.schedule()?;
    let prepared = prepare(cfg)?;
    let mut model = prepared.init_model()?;
    let baseline = prepared.heldout_accuracy(&mut model)?;
    let outcome = run_adapt(&mut model, &prepared, &schedule, baseline)?;
    Ok(outcome.report)
}
