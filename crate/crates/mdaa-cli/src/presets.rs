//! Named phase schedules mirroring the two benchmark task shapes, each with
//! a reversed (`-rev`) ordering.

use mdaa_core::error::{Error, Result};
use mdaa_core::sim::{
    CorruptionKind, CorruptionSpec, Modality, Phase, PhaseSchedule, ScheduleMode,
};

use crate::config::PhaseEntry;

/// The six corruption stages a progressive run walks through, scaled by the
/// severity knob where the family is continuous.
fn stages(severity: f64) -> Vec<(CorruptionKind, f64)> {
    vec![
        (CorruptionKind::AdditiveGaussian, 0.5 * severity),
        (CorruptionKind::AdditiveGaussian, severity),
        (CorruptionKind::Dropout, 0.3),
        (CorruptionKind::Shift, 0.25 * severity),
        (CorruptionKind::Scale, 3.0),
        (CorruptionKind::Dropout, 0.6),
    ]
}

pub fn by_name(
    name: &str,
    samples_per_phase: Option<usize>,
    batch_size: Option<usize>,
    severity: Option<f64>,
) -> Result<PhaseSchedule> {
    let (base, reversed) = match name.strip_suffix("-rev") {
        Some(base) => (base, true),
        None => (name, false),
    };
    let samples = samples_per_phase.unwrap_or(500);
    let severity = severity.unwrap_or(4.0);

    let (mode, default_batch, phases) = match base {
        // Zero-phase schedule: evaluate nothing, adapt nothing.
        "none" => (ScheduleMode::ProgressiveSingleModality, 1, Vec::new()),
        "progressive-audio" | "progressive-video" => {
            let modality = if base == "progressive-audio" {
                Modality::Audio
            } else {
                Modality::Video
            };
            let phases: Vec<Phase> = stages(severity)
                .into_iter()
                .map(|(kind, s)| Phase {
                    corruption: Some(CorruptionSpec {
                        modality,
                        kind,
                        severity: s,
                    }),
                    samples,
                    batch_size: 1,
                })
                .collect();
            (ScheduleMode::ProgressiveSingleModality, 1, phases)
        }
        "interleaved" => {
            let kinds = [
                (CorruptionKind::AdditiveGaussian, severity),
                (CorruptionKind::Shift, 0.25 * severity),
                (CorruptionKind::Dropout, 0.4),
            ];
            let mut phases = Vec::new();
            for (kind, s) in kinds {
                for modality in [Modality::Audio, Modality::Video] {
                    phases.push(Phase {
                        corruption: Some(CorruptionSpec {
                            modality,
                            kind,
                            severity: s,
                        }),
                        samples,
                        batch_size: 64,
                    });
                }
            }
            (ScheduleMode::Interleaved, 64, phases)
        }
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown schedule preset {other:?} (expected progressive-audio, \
                 progressive-video, interleaved, none; -rev reverses)"
            )))
        }
    };

    let batch = batch_size.unwrap_or(default_batch);
    let mut phases: Vec<Phase> = phases
        .into_iter()
        .map(|mut p| {
            p.batch_size = batch;
            p
        })
        .collect();
    if reversed {
        phases.reverse();
    }
    PhaseSchedule::new(mode, phases)
}

pub fn schedule_from_entries(entries: &[PhaseEntry]) -> Result<PhaseSchedule> {
    let mut phases = Vec::with_capacity(entries.len());
    for e in entries {
        let corruption = match (e.modality, e.kind) {
            (Some(modality), Some(kind)) => Some(CorruptionSpec {
                modality,
                kind,
                severity: e.severity,
            }),
            (None, None) => None,
            _ => {
                return Err(Error::InvalidConfig(
                    "phase needs both modality and kind, or neither".into(),
                ))
            }
        };
        phases.push(Phase {
            corruption,
            samples: e.samples,
            batch_size: e.batch,
        });
    }
    // Infer the weakest mode the phase list satisfies: alternating target
    // modalities parse as interleaved, otherwise single-modality.
    let corrupting: Vec<Modality> = phases
        .iter()
        .filter_map(|p| p.corruption.map(|c| c.modality))
        .collect();
    let mode = if corrupting.windows(2).all(|w| w[0] != w[1]) && corrupting.len() > 1 {
        ScheduleMode::Interleaved
    } else {
        ScheduleMode::ProgressiveSingleModality
    };
    PhaseSchedule::new(mode, phases)
}
