//! Scoring and reporting.
//!
//! Reports are pure functions of event logs: re-scoring a stored log
//! reproduces byte-identical output. Accuracy is top-1 against the hidden
//! stream labels; forgetting is the drop in clean held-out accuracy relative
//! to a baseline recorded at initialization time.

use crate::adapter::{AdaptationEvent, MdaaModel};
use crate::error::{Error, Result};
use crate::sim::LabeledSet;
use crate::{Branch, PerBranch};

/// Per-phase scores.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PhaseReport {
    pub phase_index: usize,
    pub corruption: String,
    pub samples: usize,
    pub top1: f64,
    pub per_ac_top1: PerBranch<f64>,
    pub acceptance_rate: PerBranch<f64>,
    pub leader_share: PerBranch<f64>,
}

/// Whole-run scores plus runtime bookkeeping.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunReport {
    pub phases: Vec<PhaseReport>,
    /// Sample-weighted mean of the phase top-1 accuracies.
    pub average_top1: f64,
    /// Baseline minus post-adaptation held-out accuracy; positive means the
    /// model forgot source knowledge. Absent when no held-out split exists.
    pub forgetting: Option<f64>,
    pub wall_time_secs: f64,
    pub peak_rss_bytes: Option<u64>,
}

/// Score one phase's events against the hidden labels.
pub fn score_phase(
    phase_index: usize,
    corruption: &str,
    events: &[AdaptationEvent],
    truth: &[usize],
) -> Result<PhaseReport> {
    if events.len() != truth.len() {
        return Err(Error::LengthMismatch {
            context: "events vs truth",
            expected: truth.len(),
            found: events.len(),
        });
    }
    let n = events.len();
    let mut correct = 0usize;
    let mut per_ac_correct = PerBranch::splat(0usize);
    let mut accepted = PerBranch::splat(0usize);
    let mut led = PerBranch::splat(0usize);
    for (e, &label) in events.iter().zip(truth) {
        if e.prediction == label {
            correct += 1;
        }
        for branch in Branch::ALL {
            if *e.per_ac_prediction.get(branch) == label {
                *per_ac_correct.get_mut(branch) += 1;
            }
            if e.gates.get(branch).accepted {
                *accepted.get_mut(branch) += 1;
            }
        }
        *led.get_mut(e.leader) += 1;
    }
    let rate = |count: &usize| {
        if n == 0 {
            0.0
        } else {
            *count as f64 / n as f64
        }
    };
    Ok(PhaseReport {
        phase_index,
        corruption: corruption.to_string(),
        samples: n,
        top1: rate(&correct),
        per_ac_top1: per_ac_correct.map(rate),
        acceptance_rate: accepted.map(rate),
        leader_share: led.map(rate),
    })
}

/// Assemble a run report; the average is the exact sample-weighted mean.
pub fn build_run_report(
    phases: Vec<PhaseReport>,
    forgetting: Option<f64>,
    wall_time_secs: f64,
    peak_rss_bytes: Option<u64>,
) -> RunReport {
    let total: usize = phases.iter().map(|p| p.samples).sum();
    let average_top1 = if total == 0 {
        0.0
    } else {
        phases
            .iter()
            .map(|p| p.top1 * p.samples as f64)
            .sum::<f64>()
            / total as f64
    };
    RunReport {
        phases,
        average_top1,
        forgetting,
        wall_time_secs,
        peak_rss_bytes,
    }
}

/// Top-1 accuracy of the full fusion pipeline on a labeled set, evaluated
/// without adaptation.
pub fn heldout_accuracy(model: &mut MdaaModel, set: &LabeledSet, batch_size: usize) -> Result<f64> {
    if set.labels.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut correct = 0usize;
    let n = set.labels.len();
    let mut start = 0;
    while start < n {
        let end = (start + batch_size.max(1)).min(n);
        let audio = submatrix(&set.audio, start, end);
        let video = submatrix(&set.video, start, end);
        let events = model.infer_only(&audio, &video)?;
        correct += events
            .iter()
            .zip(&set.labels[start..end])
            .filter(|(e, &l)| e.prediction == l)
            .count();
        start = end;
    }
    Ok(correct as f64 / n as f64)
}

fn submatrix(m: &crate::linalg::Matrix, start: usize, end: usize) -> crate::linalg::Matrix {
    let mut out = crate::linalg::Matrix::zeros(end - start, m.cols());
    for i in start..end {
        out.row_mut(i - start).copy_from_slice(m.row(i));
    }
    out
}

/// Tracks clean held-out accuracy from initialization onward.
#[derive(Debug, Clone, Default)]
pub struct ForgettingProbe {
    baseline: Option<f64>,
}

impl ForgettingProbe {
    pub fn new() -> ForgettingProbe {
        ForgettingProbe { baseline: None }
    }

    /// Record the held-out accuracy of the freshly initialized model.
    pub fn record_baseline(
        &mut self,
        model: &mut MdaaModel,
        heldout: &LabeledSet,
        batch_size: usize,
    ) -> Result<f64> {
        let acc = heldout_accuracy(model, heldout, batch_size)?;
        self.baseline = Some(acc);
        Ok(acc)
    }

    pub fn baseline(&self) -> Option<f64> {
        self.baseline
    }

    /// Baseline accuracy minus current accuracy; positive means forgetting.
    pub fn measure(
        &self,
        model: &mut MdaaModel,
        heldout: &LabeledSet,
        batch_size: usize,
    ) -> Result<f64> {
        let baseline = self.baseline.ok_or(Error::NotInitialized)?;
        let now = heldout_accuracy(model, heldout, batch_size)?;
        Ok(baseline - now)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    JsonLines,
    TableText,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<ReportFormat> {
        match s {
            "json-lines" | "json_lines" | "jsonl" => Ok(ReportFormat::JsonLines),
            "table" | "table-text" | "table_text" => Ok(ReportFormat::TableText),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::InvalidConfig(format!("unknown format {other:?}"))),
        }
    }
}

/// Render a run report. Emitted bytes are a pure function of the scored
/// metrics: wall time and memory stay on the struct for callers (the CLI
/// prints them to stderr) so identical runs emit identical bytes. JSON lines
/// round-trip every emitted numeric field exactly; the text table arranges
/// phases as columns with "Avg." last.
pub fn emit_report(run: &RunReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::JsonLines => emit_json_lines(run),
        ReportFormat::TableText => emit_table(run).into_bytes(),
        ReportFormat::Csv => emit_csv(run).into_bytes(),
    }
}

#[derive(Debug, serde::Serialize, serde::Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum JsonRecord {
    Phase(PhaseReport),
    Summary {
        average_top1: f64,
        forgetting: Option<f64>,
        phases: usize,
    },
}

fn emit_json_lines(run: &RunReport) -> Vec<u8> {
    let mut out = Vec::new();
    for phase in &run.phases {
        serde_json::to_writer(&mut out, &JsonRecord::Phase(phase.clone())).unwrap();
        out.push(b'\n');
    }
    serde_json::to_writer(
        &mut out,
        &JsonRecord::Summary {
            average_top1: run.average_top1,
            forgetting: run.forgetting,
            phases: run.phases.len(),
        },
    )
    .unwrap();
    out.push(b'\n');
    out
}

/// Parse `json_lines` output back into a run report.
pub fn parse_json_lines(bytes: &[u8]) -> Result<RunReport> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::InvalidConfig(format!("report not utf-8: {e}")))?;
    let mut phases = Vec::new();
    let mut summary = None;
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let record: JsonRecord = serde_json::from_str(line)
            .map_err(|e| Error::InvalidConfig(format!("bad report line: {e}")))?;
        match record {
            JsonRecord::Phase(p) => phases.push(p),
            JsonRecord::Summary {
                average_top1,
                forgetting,
                ..
            } => summary = Some((average_top1, forgetting)),
        }
    }
    let (average_top1, forgetting) =
        summary.ok_or_else(|| Error::InvalidConfig("report missing summary".into()))?;
    Ok(RunReport {
        phases,
        average_top1,
        forgetting,
        wall_time_secs: 0.0,
        peak_rss_bytes: None,
    })
}

fn emit_table(run: &RunReport) -> String {
    let mut columns: Vec<String> = run
        .phases
        .iter()
        .map(|p| format!("{}:{}", p.phase_index, p.corruption))
        .collect();
    columns.push("Avg.".to_string());

    let mut rows: Vec<(String, Vec<String>)> = Vec::new();
    let fmt = |v: f64| format!("{:.4}", v);
    let collect = |f: &dyn Fn(&PhaseReport) -> f64, avg: f64| -> Vec<String> {
        run.phases
            .iter()
            .map(|p| fmt(f(p)))
            .chain(std::iter::once(fmt(avg)))
            .collect()
    };
    let weighted_avg = |f: &dyn Fn(&PhaseReport) -> f64| -> f64 {
        let total: usize = run.phases.iter().map(|p| p.samples).sum();
        if total == 0 {
            0.0
        } else {
            run.phases
                .iter()
                .map(|p| f(p) * p.samples as f64)
                .sum::<f64>()
                / total as f64
        }
    };

    rows.push(("top1".into(), collect(&|p| p.top1, run.average_top1)));
    for branch in Branch::ALL {
        let f = move |p: &PhaseReport| *p.per_ac_top1.get(branch);
        rows.push((format!("top1[{branch}]"), collect(&f, weighted_avg(&f))));
    }
    for branch in Branch::ALL {
        let f = move |p: &PhaseReport| *p.acceptance_rate.get(branch);
        rows.push((format!("accept[{branch}]"), collect(&f, weighted_avg(&f))));
    }
    for branch in Branch::ALL {
        let f = move |p: &PhaseReport| *p.leader_share.get(branch);
        rows.push((format!("lead[{branch}]"), collect(&f, weighted_avg(&f))));
    }

    let label_width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(6).max(6);
    let col_widths: Vec<usize> = columns
        .iter()
        .enumerate()
        .map(|(i, c)| {
            rows.iter()
                .map(|(_, vs)| vs[i].len())
                .max()
                .unwrap_or(0)
                .max(c.len())
        })
        .collect();

    let mut out = String::new();
    out.push_str(&format!("{:<label_width$}", "metric"));
    for (c, w) in columns.iter().zip(&col_widths) {
        out.push_str(&format!("  {c:>w$}"));
    }
    out.push('\n');
    for (label, values) in &rows {
        out.push_str(&format!("{label:<label_width$}"));
        for (v, w) in values.iter().zip(&col_widths) {
            out.push_str(&format!("  {v:>w$}"));
        }
        out.push('\n');
    }
    if let Some(f) = run.forgetting {
        out.push_str(&format!("forgetting: {f:.4}\n"));
    }
    out
}

fn emit_csv(run: &RunReport) -> String {
    let mut out = String::from(
        "record,phase_index,corruption,samples,top1,\
         top1_audio,top1_video,top1_fused,\
         accept_audio,accept_video,accept_fused,\
         lead_audio,lead_video,lead_fused,\
         average_top1,forgetting\n",
    );
    for p in &run.phases {
        out.push_str(&format!(
            "phase,{},{},{},{},{},{},{},{},{},{},{},{},{},,\n",
            p.phase_index,
            p.corruption,
            p.samples,
            p.top1,
            p.per_ac_top1.audio,
            p.per_ac_top1.video,
            p.per_ac_top1.fused,
            p.acceptance_rate.audio,
            p.acceptance_rate.video,
            p.acceptance_rate.fused,
            p.leader_share.audio,
            p.leader_share.video,
            p.leader_share.fused,
        ));
    }
    out.push_str(&format!(
        "summary,,,,,,,,,,,,,,{},{}\n",
        run.average_top1,
        run.forgetting.map_or(String::new(), |f| f.to_string()),
    ));
    out
}

/// Peak resident set size of this process from /proc/self/status (VmHWM),
/// falling back to the current VmRSS on kernels that do not track the
/// high-water mark.
pub fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let read = |key: &str| {
        status.lines().find_map(|line| {
            let rest = line.strip_prefix(key)?;
            let kb: u64 = rest.trim().trim_end_matches(" kB").trim().parse().ok()?;
            Some(kb * 1024)
        })
    };
    read("VmHWM:").or_else(|| read("VmRSS:"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::{init_from_source, ModelConfig};
    use crate::fusion::{build_soft_label, GateDecision};
    use crate::sim::{generate_task, TaskConfig};

    fn event(prediction: usize, leader: Branch, accepted: PerBranch<bool>) -> AdaptationEvent {
        let probs = vec![0.5, 0.3, 0.2];
        let soft_label = build_soft_label(&probs, 2).unwrap();
        let mk = |b: Branch, a: bool| GateDecision {
            ac_id: b,
            leader_map: 0.5,
            ac_map: if a { 0.2 } else { 0.5 },
            accepted: a,
        };
        AdaptationEvent {
            sample_index: 0,
            maps: PerBranch::new(0.5, 0.4, 0.3),
            leader,
            prediction,
            per_ac_prediction: PerBranch::new(prediction, prediction, 1),
            soft_label,
            gates: PerBranch::new(
                mk(Branch::Audio, accepted.audio),
                mk(Branch::Video, accepted.video),
                mk(Branch::Fused, accepted.fused),
            ),
        }
    }

    #[test]
    fn all_correct_gives_top1_one() {
        let events: Vec<AdaptationEvent> = (0..5)
            .map(|_| event(1, Branch::Fused, PerBranch::splat(false)))
            .collect();
        let truth = vec![1; 5];
        let r = score_phase(0, "clean", &events, &truth).unwrap();
        assert_eq!(r.top1, 1.0);
        assert_eq!(r.acceptance_rate, PerBranch::splat(0.0));
        assert_eq!(r.leader_share.fused, 1.0);
        assert!((r.leader_share.audio + r.leader_share.video + r.leader_share.fused - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn length_mismatch_rejected() {
        let events = vec![event(0, Branch::Audio, PerBranch::splat(false))];
        assert!(matches!(
            score_phase(0, "x", &events, &[0, 1]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn random_predictions_near_chance() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        let c = 4;
        let n = 4000;
        let events: Vec<AdaptationEvent> = (0..n)
            .map(|_| event(rng.random_range(0..c), Branch::Video, PerBranch::splat(false)))
            .collect();
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let r = score_phase(0, "noise", &events, &truth).unwrap();
        // 3σ binomial bound around 1/C.
        let p = 1.0 / c as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!(
            (r.top1 - p).abs() <= 3.0 * sigma,
            "top1 {} vs chance {p}",
            r.top1
        );
    }

    #[test]
    fn average_is_sample_weighted() {
        let mut a = score_phase(
            0,
            "a",
            &(0..4).map(|_| event(0, Branch::Audio, PerBranch::splat(false))).collect::<Vec<_>>(),
            &[0, 0, 0, 1],
        )
        .unwrap();
        let b = score_phase(
            1,
            "b",
            &(0..2).map(|_| event(0, Branch::Audio, PerBranch::splat(false))).collect::<Vec<_>>(),
            &[1, 1],
        )
        .unwrap();
        a.samples = 4;
        let run = build_run_report(vec![a, b], None, 0.0, None);
        let expected = (0.75 * 4.0 + 0.0 * 2.0) / 6.0;
        assert!((run.average_top1 - expected).abs() <= 1e-12);
    }

    #[test]
    fn json_lines_round_trip_exact() {
        let phases = vec![
            score_phase(
                0,
                "audio:additive_gaussian@2.5",
                &(0..3).map(|_| event(1, Branch::Fused, PerBranch::new(true, false, false))).collect::<Vec<_>>(),
                &[1, 0, 1],
            )
            .unwrap(),
        ];
        let run = build_run_report(phases, Some(0.0123456789012345), 1.5, Some(123456789));
        let bytes = emit_report(&run, ReportFormat::JsonLines);
        let parsed = parse_json_lines(&bytes).unwrap();
        assert_eq!(parsed.phases, run.phases);
        assert_eq!(parsed.average_top1, run.average_top1);
        assert_eq!(parsed.forgetting, run.forgetting);
        // Byte-identical re-emission; runtime stats never enter the bytes.
        assert_eq!(emit_report(&parsed, ReportFormat::JsonLines), bytes);
    }

    #[test]
    fn empty_run_emits_summary_only() {
        let run = build_run_report(vec![], None, 0.0, None);
        let bytes = emit_report(&run, ReportFormat::JsonLines);
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.contains("\"record\":\"summary\""));
    }

    #[test]
    fn csv_row_count() {
        let phases: Vec<PhaseReport> = (0..3)
            .map(|i| {
                score_phase(
                    i,
                    "clean",
                    &[event(0, Branch::Audio, PerBranch::splat(false))],
                    &[0],
                )
                .unwrap()
            })
            .collect();
        let run = build_run_report(phases, None, 0.0, None);
        let bytes = emit_report(&run, ReportFormat::Csv);
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(text.trim_end().lines().count(), 3 + 1 + 1);
    }

    #[test]
    fn table_has_phases_as_columns_avg_last() {
        let phases: Vec<PhaseReport> = (0..2)
            .map(|i| {
                score_phase(i, "clean", &[event(0, Branch::Audio, PerBranch::splat(false))], &[0])
                    .unwrap()
            })
            .collect();
        let run = build_run_report(phases, Some(0.01), 2.0, None);
        let text = String::from_utf8(emit_report(&run, ReportFormat::TableText)).unwrap();
        let header = text.lines().next().unwrap();
        assert!(header.trim_end().ends_with("Avg."));
        assert!(header.contains("0:clean") && header.contains("1:clean"));
        assert!(text.contains("forgetting: 0.0100"));
    }

    #[test]
    fn forgetting_probe_contract() {
        let task_config = TaskConfig {
            num_classes: 3,
            source_per_class: vec![40; 3],
            heldout_per_class: 20,
            ..TaskConfig::default_desk(21)
        };
        let (task, source, heldout) = generate_task(&task_config).unwrap();
        let config = ModelConfig {
            expanded_dim: 32,
            seed: 21,
            ..ModelConfig::default()
        };
        let mut model = init_from_source(
            &config,
            &source.audio,
            &source.video,
            &source.labels,
            task.num_classes(),
        )
        .unwrap();

        let mut probe = ForgettingProbe::new();
        assert!(matches!(
            probe.measure(&mut model, &heldout, 32),
            Err(Error::NotInitialized)
        ));
        probe.record_baseline(&mut model, &heldout, 32).unwrap();
        // No adaptation between baseline and measurement: exactly zero.
        assert_eq!(probe.measure(&mut model, &heldout, 32).unwrap(), 0.0);
    }

    #[test]
    fn rescoring_is_byte_identical() {
        let events: Vec<AdaptationEvent> = (0..7)
            .map(|i| event(i % 3, Branch::Video, PerBranch::new(i % 2 == 0, false, false)))
            .collect();
        let truth: Vec<usize> = (0..7).map(|i| (i + 1) % 3).collect();
        let a = score_phase(0, "x", &events, &truth).unwrap();
        let b = score_phase(0, "x", &events, &truth).unwrap();
        let ra = build_run_report(vec![a], None, 0.0, None);
        let rb = build_run_report(vec![b], None, 0.0, None);
        assert_eq!(
            emit_report(&ra, ReportFormat::JsonLines),
            emit_report(&rb, ReportFormat::JsonLines)
        );
    }
}
