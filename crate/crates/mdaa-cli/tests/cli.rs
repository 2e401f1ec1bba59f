//! End-to-end tests of the `mdaa` binary: command flows, file formats,
//! determinism, and exit codes.

use std::path::Path;
use std::process::{Command, Output};

use mdaa_core::feature_file::FeatureFile;
use mdaa_core::linalg::Matrix;

fn mdaa(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mdaa"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "command failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL: &str = r#"
seed = 9
phi = 48
[task]
classes = 4
audio_dim = 6
video_dim = 6
source_size = 120
heldout_per_class = 15
within_class_std = 1.0
[schedule]
preset = "interleaved"
samples_per_phase = 40
batch_size = 8
severity = 3.0
"#;

#[test]
fn init_adapt_flow_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", SMALL);

    let init = mdaa(dir.path(), &["init", "--config", &cfg, "--out", "m.mdam"]);
    assert_ok(&init);
    let stdout = String::from_utf8_lossy(&init.stdout);
    assert!(
        stdout.contains("source accuracy"),
        "init must print held-out accuracy, got: {stdout}"
    );
    assert!(dir.path().join("m.mdam").exists());

    let run = |report: &str| {
        let out = mdaa(
            dir.path(),
            &[
                "adapt",
                "--snapshot",
                "m.mdam",
                "--config",
                &cfg,
                "--format",
                "json-lines",
                "--out",
                report,
                "--snapshot-out",
                &format!("{report}.mdam"),
            ],
        );
        assert_ok(&out);
        std::fs::read(dir.path().join(report)).unwrap()
    };
    let a = run("a.jsonl");
    let b = run("b.jsonl");
    assert_eq!(a, b, "same config + seed must give byte-identical reports");

    let parsed = mdaa_core::metrics::parse_json_lines(&a).unwrap();
    assert_eq!(parsed.phases.len(), 6);
    assert!(parsed.average_top1 > 0.3, "sanity: model should beat chance");

    // Post snapshots from identical runs are identical too.
    let pa = std::fs::read(dir.path().join("a.jsonl.mdam")).unwrap();
    let pb = std::fs::read(dir.path().join("b.jsonl.mdam")).unwrap();
    assert_eq!(pa, pb);
}

#[test]
fn zero_phase_schedule_keeps_snapshot_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", SMALL);
    assert_ok(&mdaa(dir.path(), &["init", "--config", &cfg, "--out", "m.mdam"]));

    let out = mdaa(
        dir.path(),
        &[
            "adapt",
            "--snapshot",
            "m.mdam",
            "--config",
            &cfg,
            "--schedule",
            "none",
            "--format",
            "json-lines",
            "--out",
            "r.jsonl",
            "--snapshot-out",
            "post.mdam",
        ],
    );
    assert_ok(&out);
    let report = std::fs::read_to_string(dir.path().join("r.jsonl")).unwrap();
    assert_eq!(report.trim().lines().count(), 1, "summary record only");
    assert!(report.contains("\"record\":\"summary\""));
    let before = std::fs::read(dir.path().join("m.mdam")).unwrap();
    let after = std::fs::read(dir.path().join("post.mdam")).unwrap();
    assert_eq!(before, after, "no phases, no state change");
}

#[test]
fn csv_and_table_formats() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", SMALL);
    assert_ok(&mdaa(dir.path(), &["init", "--config", &cfg, "--out", "m.mdam"]));

    let csv = mdaa(
        dir.path(),
        &[
            "adapt", "--snapshot", "m.mdam", "--config", &cfg, "--format", "csv", "--out",
            "r.csv",
        ],
    );
    assert_ok(&csv);
    let text = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    // Header + one row per phase + summary.
    assert_eq!(text.trim_end().lines().count(), 1 + 6 + 1);

    let table = mdaa(
        dir.path(),
        &["adapt", "--snapshot", "m.mdam", "--config", &cfg, "--format", "table"],
    );
    assert_ok(&table);
    let stdout = String::from_utf8_lossy(&table.stdout);
    assert!(stdout.contains("Avg."));
    assert!(stdout.lines().next().unwrap().trim_end().ends_with("Avg."));
}

#[test]
fn config_validation_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", SMALL);

    // gamma <= 0 rejected before any compute.
    let bad_gamma = mdaa(dir.path(), &["init", "--config", &cfg, "--gamma", "0"]);
    assert_eq!(bad_gamma.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad_gamma.stderr).contains("gamma"));

    // Unknown preset.
    let bad_preset = mdaa(dir.path(), &["init", "--config", &cfg, "--schedule", "bogus"]);
    assert_eq!(bad_preset.status.code(), Some(2));

    // Unknown config key.
    let bad_cfg = write_config(dir.path(), "bad.toml", "nonsense_key = 1\n");
    let unknown = mdaa(dir.path(), &["init", "--config", &bad_cfg]);
    assert_eq!(unknown.status.code(), Some(2));

    // Corrupt snapshot: IO/format class.
    std::fs::write(dir.path().join("junk.mdam"), b"JUNKJUNKJUNK").unwrap();
    let corrupt = mdaa(
        dir.path(),
        &["adapt", "--snapshot", "junk.mdam", "--config", &cfg],
    );
    assert_eq!(corrupt.status.code(), Some(3));

    // Missing snapshot file.
    let missing = mdaa(
        dir.path(),
        &["adapt", "--snapshot", "absent.mdam", "--config", &cfg],
    );
    assert_eq!(missing.status.code(), Some(3));
}

#[test]
fn empty_class_is_surfaced_with_class_id() {
    let dir = tempfile::tempdir().unwrap();
    // Classes = 4 but the feature file only labels 3 of them.
    let file = FeatureFile {
        audio: Matrix::from_fn(30, 4, |i, j| (i * 7 + j) as f64 * 0.01),
        video: Matrix::from_fn(30, 3, |i, j| (i * 5 + j) as f64 * 0.02),
        labels: (0..30).map(|i| (i % 3) as i32).collect(),
        num_classes: 4,
    };
    file.save(&dir.path().join("feat.aexf")).unwrap();
    let cfg = write_config(
        dir.path(),
        "run.toml",
        "seed = 1\nphi = 16\nfeatures = \"feat.aexf\"\n",
    );
    let out = mdaa(dir.path(), &["init", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("class 3"), "must name the empty class, got: {err}");
}

#[test]
fn feature_file_binary_and_csv_runs() {
    let dir = tempfile::tempdir().unwrap();
    // Two well-separated classes so accuracy is meaningful.
    let n = 80;
    let audio = Matrix::from_fn(n, 5, |i, j| if i % 2 == 0 { 1.0 } else { -1.0 } + 0.01 * j as f64);
    let video = Matrix::from_fn(n, 4, |i, j| if i % 2 == 0 { -0.5 } else { 0.5 } + 0.01 * j as f64);
    let labels: Vec<i32> = (0..n).map(|i| (i % 2) as i32).collect();
    let file = FeatureFile {
        audio,
        video,
        labels,
        num_classes: 2,
    };
    file.save(&dir.path().join("feat.aexf")).unwrap();
    file.save(&dir.path().join("feat.csv")).unwrap();

    for name in ["feat.aexf", "feat.csv"] {
        let cfg = write_config(
            dir.path(),
            &format!("{name}.toml"),
            &format!(
                "seed = 3\nphi = 32\ntop_n = 2\nfeatures = \"{name}\"\n\
                 [[schedule.phases]]\nmodality = \"audio\"\nkind = \"additive_gaussian\"\n\
                 severity = 0.5\nsamples = 40\nbatch = 10\n"
            ),
        );
        let snap = format!("{name}.mdam");
        assert_ok(&mdaa(dir.path(), &["init", "--config", &cfg, "--out", &snap]));
        let out = mdaa(
            dir.path(),
            &[
                "adapt", "--snapshot", &snap, "--config", &cfg, "--format", "json-lines",
                "--out", &format!("{name}.jsonl"),
            ],
        );
        assert_ok(&out);
        let report = mdaa_core::metrics::parse_json_lines(
            &std::fs::read(dir.path().join(format!("{name}.jsonl"))).unwrap(),
        )
        .unwrap();
        assert_eq!(report.phases.len(), 1);
        assert!(report.phases[0].top1 > 0.8, "separable task: {report:?}");
    }
}

#[test]
fn singleton_sweep_matches_plain_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", SMALL);
    assert_ok(&mdaa(dir.path(), &["init", "--config", &cfg, "--out", "m.mdam"]));
    let adapt = mdaa(
        dir.path(),
        &[
            "adapt", "--snapshot", "m.mdam", "--config", &cfg, "--format", "json-lines",
            "--out", "plain.jsonl",
        ],
    );
    assert_ok(&adapt);
    let plain = mdaa_core::metrics::parse_json_lines(
        &std::fs::read(dir.path().join("plain.jsonl")).unwrap(),
    )
    .unwrap();

    let sweep = mdaa(
        dir.path(),
        &[
            "sweep", "--axis", "theta", "--values", "1e-3", "--config", &cfg, "--format",
            "json-lines", "--out", "sweep.jsonl",
        ],
    );
    assert_ok(&sweep);
    let text = std::fs::read_to_string(dir.path().join("sweep.jsonl")).unwrap();
    let row: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(row["axis"], "theta");
    assert_eq!(row["value"], 1e-3);
    assert_eq!(
        row["average_top1"].as_f64().unwrap(),
        plain.average_top1,
        "singleton sweep must equal the plain run"
    );
}

#[test]
fn sweep_multiple_values_reports_each() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", SMALL);
    let out = mdaa(
        dir.path(),
        &[
            "sweep", "--axis", "gamma", "--values", "0.1,1,10", "--config", &cfg,
            "--format", "json-lines", "--out", "g.jsonl",
        ],
    );
    assert_ok(&out);
    let text = std::fs::read_to_string(dir.path().join("g.jsonl")).unwrap();
    assert_eq!(text.trim().lines().count(), 3);

    let bad_axis = mdaa(
        dir.path(),
        &["sweep", "--axis", "zeta", "--values", "1", "--config", &cfg],
    );
    assert_eq!(bad_axis.status.code(), Some(2));
}

#[test]
fn oracle_passes_and_enforces_phi_cap() {
    let dir = tempfile::tempdir().unwrap();
    let ok = mdaa(
        dir.path(),
        &["oracle", "--cases", "6", "--phi", "8,24", "--classes", "3", "--source-size", "60"],
    );
    assert_ok(&ok);
    let stdout = String::from_utf8_lossy(&ok.stdout);
    assert!(stdout.contains("oracle suite: PASS"), "{stdout}");
    assert!(stdout.contains("gamma=0 probe: PASS"), "{stdout}");

    let capped = mdaa(dir.path(), &["oracle", "--cases", "2", "--phi", "512"]);
    assert_eq!(capped.status.code(), Some(2));
}

#[test]
fn events_dump_is_complete() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", SMALL);
    assert_ok(&mdaa(dir.path(), &["init", "--config", &cfg, "--out", "m.mdam"]));
    assert_ok(&mdaa(
        dir.path(),
        &[
            "adapt", "--snapshot", "m.mdam", "--config", &cfg, "--events", "ev.jsonl",
            "--out", "r.jsonl", "--format", "json-lines",
        ],
    ));
    let text = std::fs::read_to_string(dir.path().join("ev.jsonl")).unwrap();
    // One line per stream sample: 6 phases x 40 samples.
    assert_eq!(text.trim().lines().count(), 240);
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert!(first["event"]["gates"]["audio"]["accepted"].is_boolean());
    assert!(first["event"]["maps"]["fused"].is_number());
}
