//! Subcommand implementations.

use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use rayon::prelude::*;

use mdaa_core::adapter::MdaaModel;
use mdaa_core::error::{Error, Result};
use mdaa_core::fusion::ThresholdState;
use mdaa_core::metrics::{emit_report, ReportFormat};
use mdaa_core::oracle::{probe_gamma_zero, run_equivalence_suite, SuiteConfig};

use crate::config::{resolve, Overrides};
use crate::run::{prepare, run_adapt, run_full};

#[derive(Args)]
pub struct InitArgs {
    /// Snapshot output path.
    #[arg(long, default_value = "model.mdam")]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

pub fn cmd_init(args: InitArgs) -> Result<i32> {
    let cfg = resolve(&args.overrides)?;
    let prepared = prepare(cfg)?;
    let mut model = prepared.init_model()?;
    match prepared.heldout_accuracy(&mut model)? {
        Some(acc) => println!("source accuracy (clean held-out): {acc:.4}"),
        None => println!("source accuracy: n/a (no held-out split)"),
    }
    std::fs::write(&args.out, model.snapshot())?;
    println!("snapshot written to {}", args.out.display());
    Ok(0)
}

#[derive(Args)]
pub struct AdaptArgs {
    /// Model snapshot to adapt (from `mdaa init`).
    #[arg(long)]
    snapshot: PathBuf,
    /// Post-adaptation snapshot path (default: <snapshot>-post.mdam).
    #[arg(long = "snapshot-out")]
    snapshot_out: Option<PathBuf>,
    /// Report destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report format: table | json-lines | csv.
    #[arg(long, default_value = "table")]
    format: String,
    /// Dump the full event log (JSON lines) to this path.
    #[arg(long)]
    events: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

pub fn cmd_adapt(args: AdaptArgs) -> Result<i32> {
    let format: ReportFormat = args.format.parse()?;
    let cfg = resolve(&args.overrides)?;
    let schedule = cfg.schedule()?;

    let bytes = std::fs::read(&args.snapshot)?;
    let mut model = MdaaModel::restore(&bytes)?;
    model.set_strategy(cfg.strategy);
    apply_fusion_overrides(&mut model, &args.overrides)?;

    let prepared = prepare(cfg)?;
    let baseline = prepared.heldout_accuracy(&mut model)?;
    let outcome = run_adapt(&mut model, &prepared, &schedule, baseline)?;

    let rendered = emit_report(&outcome.report, format);
    match &args.out {
        Some(path) => std::fs::write(path, &rendered)?,
        None => std::io::stdout().write_all(&rendered)?,
    }
    // Runtime stats stay out of the report bytes so identical runs emit
    // identical reports.
    eprintln!(
        "wall_time: {:.3}s  peak_rss: {}",
        outcome.report.wall_time_secs,
        outcome
            .report
            .peak_rss_bytes
            .map_or("n/a".to_string(), |b| format!("{} MiB", b / (1 << 20)))
    );

    if let Some(path) = &args.events {
        let mut buf = Vec::new();
        for (phase_index, event) in &outcome.events {
            let line = serde_json::json!({ "phase_index": phase_index, "event": event });
            serde_json::to_writer(&mut buf, &line)
                .map_err(|e| Error::InvalidConfig(format!("event serialization: {e}")))?;
            buf.push(b'\n');
        }
        std::fs::write(path, buf)?;
    }

    let snapshot_out = args.snapshot_out.unwrap_or_else(|| {
        let mut stem = args.snapshot.file_stem().unwrap_or_default().to_os_string();
        stem.push("-post.mdam");
        args.snapshot.with_file_name(stem)
    });
    std::fs::write(&snapshot_out, model.snapshot())?;
    eprintln!("post-adaptation snapshot written to {}", snapshot_out.display());
    Ok(0)
}

/// Explicit fusion flags on `adapt` override the restored snapshot's state.
fn apply_fusion_overrides(model: &mut MdaaModel, overrides: &Overrides) -> Result<()> {
    let need_threshold_rebuild =
        overrides.theta.is_some() || overrides.theta_ini.is_some() || overrides.lambda.is_some();
    let thresholds = if need_threshold_rebuild {
        let theta = overrides
            .theta_ini
            .or(overrides.theta)
            .unwrap_or(model.thresholds().theta_ini());
        let lambda = overrides.lambda.unwrap_or(model.thresholds().lambda());
        ThresholdState::new(theta, lambda)
    } else {
        model.thresholds().clone()
    };
    let top_n = overrides.top_n.unwrap_or(model.top_n());
    let dynamic = overrides.dynamic.unwrap_or(model.dynamic_threshold());
    model.set_fusion_config(thresholds, top_n, dynamic)
}

#[derive(Args)]
pub struct SweepArgs {
    /// Axis to sweep: theta | n | gamma | lambda.
    #[arg(long)]
    axis: String,
    /// Comma-separated values, e.g. "1e-5,1e-4,1e-3,1e-2,1e-1".
    #[arg(long)]
    values: String,
    /// Summary destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format: table | json-lines.
    #[arg(long, default_value = "table")]
    format: String,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(serde::Serialize)]
struct SweepRow {
    axis: String,
    value: f64,
    average_top1: f64,
    forgetting: Option<f64>,
    phase_top1: Vec<f64>,
}

pub fn cmd_sweep(args: SweepArgs) -> Result<i32> {
    let base = resolve(&args.overrides)?;
    let values: Vec<f64> = args
        .values
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidConfig(format!("bad sweep value {v:?}: {e}")))
        })
        .collect::<Result<_>>()?;
    if values.is_empty() {
        return Err(Error::InvalidConfig("empty sweep".into()));
    }

    let configs: Vec<(f64, crate::config::FileConfig)> = values
        .iter()
        .map(|&v| {
            let mut cfg = base.clone();
            match args.axis.as_str() {
                "theta" => {
                    cfg.theta = v;
                    cfg.theta_ini = None;
                }
                "n" | "top-n" | "top_n" => {
                    if v.fract() != 0.0 || v < 1.0 {
                        return Err(Error::InvalidConfig(format!(
                            "top-n sweep value {v} is not a positive integer"
                        )));
                    }
                    cfg.top_n = v as usize;
                }
                "gamma" => cfg.gamma = v,
                "lambda" => {
                    cfg.lambda = v;
                    cfg.dynamic_threshold = true;
                }
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "unknown sweep axis {other:?} (expected theta | n | gamma | lambda)"
                    )))
                }
            }
            cfg.validate()?;
            Ok((v, cfg))
        })
        .collect::<Result<_>>()?;

    // Independent seeded runs; parallel execution cannot change any result.
    let started = std::time::Instant::now();
    let rows: Vec<SweepRow> = configs
        .into_par_iter()
        .map(|(value, cfg)| {
            run_full(cfg).map(|report| SweepRow {
                axis: args.axis.clone(),
                value,
                average_top1: report.average_top1,
                forgetting: report.forgetting,
                phase_top1: report.phases.iter().map(|p| p.top1).collect(),
            })
        })
        .collect::<Result<_>>()?;
    eprintln!(
        "sweep: {} runs in {:.2}s",
        rows.len(),
        started.elapsed().as_secs_f64()
    );

    let rendered = match args.format.as_str() {
        "table" | "table-text" => {
            let mut s = format!(
                "{:<10} {:>12} {:>12}  per-phase top1\n",
                args.axis, "avg_top1", "forgetting"
            );
            for r in &rows {
                s.push_str(&format!(
                    "{:<10} {:>12.4} {:>12}  {}\n",
                    r.value,
                    r.average_top1,
                    r.forgetting
                        .map_or("n/a".into(), |f| format!("{f:.4}")),
                    r.phase_top1
                        .iter()
                        .map(|t| format!("{t:.3}"))
                        .collect::<Vec<_>>()
                        .join(" ")
                ));
            }
            s.into_bytes()
        }
        "json-lines" | "jsonl" | "json_lines" => {
            let mut buf = Vec::new();
            for r in &rows {
                serde_json::to_writer(&mut buf, r)
                    .map_err(|e| Error::InvalidConfig(format!("sweep serialization: {e}")))?;
                buf.push(b'\n');
            }
            buf
        }
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown sweep format {other:?}"
            )))
        }
    };
    match &args.out {
        Some(path) => std::fs::write(path, &rendered)?,
        None => std::io::stdout().write_all(&rendered)?,
    }
    Ok(0)
}

#[derive(Args)]
pub struct OracleArgs {
    /// Number of randomized equivalence cases.
    #[arg(long, default_value_t = 50)]
    cases: usize,
    /// Comma-separated expansion dims (each ≤ 256).
    #[arg(long, default_value = "8,32,128")]
    phi: String,
    /// Comma-separated class counts.
    #[arg(long, default_value = "2,10")]
    classes: String,
    #[arg(long, default_value_t = 200)]
    source_size: usize,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1e-8)]
    tolerance: f64,
    #[arg(long, default_value_t = 0xda7a)]
    seed: u64,
    /// Also run a near-duplicate-features suite.
    #[arg(long, default_value_t = true)]
    near_duplicate: bool,
    /// Emit per-case JSON lines instead of text.
    #[arg(long, default_value = "text")]
    format: String,
}

pub fn cmd_oracle(args: OracleArgs) -> Result<i32> {
    let parse_list = |s: &str, what: &str| -> Result<Vec<usize>> {
        s.split(',')
            .map(|v| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::InvalidConfig(format!("bad {what} {v:?}: {e}")))
            })
            .collect()
    };
    let config = SuiteConfig {
        cases: args.cases,
        phis: parse_list(&args.phi, "phi")?,
        classes: parse_list(&args.classes, "classes")?,
        source_size: args.source_size,
        gamma: args.gamma,
        tolerance: args.tolerance,
        seed: args.seed,
        ..SuiteConfig::default()
    };
    let report = run_equivalence_suite(&config)?;

    let json = args.format == "json-lines" || args.format == "jsonl";
    for case in &report.cases {
        if json {
            println!("{}", serde_json::to_string(case).unwrap());
        } else {
            println!(
                "case {:>3}  phi={:<4} C={:<3} batches={:<4} targets={:<5} rel_err={:.3e}  {}",
                case.case,
                case.phi,
                case.classes,
                case.batches,
                case.target_samples,
                case.rel_error,
                if case.pass { "PASS" } else { "FAIL" }
            );
        }
    }
    let mut all_pass = report.all_pass;

    if args.near_duplicate {
        let near = run_equivalence_suite(&SuiteConfig {
            cases: 10,
            near_duplicate: true,
            seed: args.seed ^ 0x5eed,
            ..config.clone()
        })?;
        all_pass &= near.all_pass;
        println!(
            "near-duplicate suite: {} (max rel err {:.3e})",
            if near.all_pass { "PASS" } else { "FAIL" },
            near.max_rel_error
        );
    }

    match probe_gamma_zero(32, args.seed) {
        Err(Error::NotPositiveDefinite { pivot, value }) => {
            println!("gamma=0 probe: PASS (NotPositiveDefinite diagnosed at pivot {pivot}, value {value:.3e})");
        }
        Err(other) => {
            println!("gamma=0 probe: FAIL (unexpected error {other})");
            all_pass = false;
        }
        Ok(()) => {
            println!("gamma=0 probe: FAIL (singular system went undiagnosed)");
            all_pass = false;
        }
    }

    println!(
        "oracle suite: {} ({} cases, max rel err {:.3e}, tolerance {:.1e})",
        if all_pass { "PASS" } else { "FAIL" },
        report.cases.len(),
        report.max_rel_error,
        report.tolerance
    );
    Ok(if all_pass { 0 } else { 4 })
}
