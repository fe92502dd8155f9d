use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qig::codec::write_image;
use qig::harness::{gen_synthetic, Dataset, Item};
use tempfile::TempDir;

const SMALL: &[&str] = &[
    "--per-class",
    "20",
    "--eval-per-class",
    "5",
    "--side",
    "16",
    "--epochs",
    "3",
];

fn qig(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qig"))
        .args(args)
        .env_remove("QIG_OUTPUT_DIR")
        .output()
        .expect("spawn qig")
}

fn run_ok(args: &[&str]) -> Output {
    let out = qig(args);
    assert!(
        out.status.success(),
        "qig {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn with(base: &[&str], extra: &[&str]) -> Vec<String> {
    base.iter().chain(extra).map(|s| s.to_string()).collect()
}

fn run_owned(args: &[String]) -> Output {
    run_ok(&args.iter().map(String::as_str).collect::<Vec<_>>())
}

fn lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
        .lines()
        .map(str::to_string)
        .collect()
}

fn files_in(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let out = qig(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(qig(&[]).status.code(), Some(2));
}

#[test]
fn help_exits_zero() {
    let out = qig(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in [
        "degrade",
        "train",
        "sweep",
        "attribute",
        "overlay",
        "verify",
        "report",
    ] {
        assert!(text.contains(sub), "help lacks {sub}");
    }
}

#[test]
fn usage_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let o = p(dir.path());
    let two_sources = qig(&[
        "--out",
        o,
        "sweep",
        "--checkpoint",
        "x.json",
        "--train-fresh",
    ]);
    assert_eq!(two_sources.status.code(), Some(2));
    let bad_order = qig(&["--out", o, "sweep", "--qualities", "75,original"]);
    assert_eq!(bad_order.status.code(), Some(2));
    let bad_quality = qig(&["--out", o, "sweep", "--qualities", "original,0"]);
    assert_eq!(bad_quality.status.code(), Some(2));
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"stepz": 3}"#).unwrap();
    let bad_cfg = qig(&["--config", p(&cfg), "--out", o, "sweep"]);
    assert_eq!(bad_cfg.status.code(), Some(2));
    let zero_jobs = qig(&["--jobs", "0", "--out", o, "report"]);
    assert_eq!(zero_jobs.status.code(), Some(2));
}

#[test]
fn domain_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("missing.json");
    let out = qig(&["--out", p(dir.path()), "sweep", "--checkpoint", p(&missing)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));
    let out = qig(&["--out", p(dir.path()), "report"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sweep_defaults_emit_four_quality_columns() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    run_ok(&["--out", p(&out), "sweep"]);
    let csv = lines(&out.join("precision.csv"));
    assert_eq!(csv[0], "model,Original,Quality 75,Quality 50,Quality 25");
    assert_eq!(csv.len(), 2);
    let scores: Vec<f64> = csv[1]
        .split(',')
        .skip(1)
        .map(|s| s.parse().unwrap())
        .collect();
    assert_eq!(scores.len(), 4);
    assert!(scores[0] - scores[3] >= 0.05, "{scores:?}");
    for f in ["table.csv", "table.md", "chart.svg", "run-manifest.json"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("run-manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "sweep");
    assert_eq!(manifest["settings"]["seed"], 1);
    assert_eq!(manifest["settings"]["sweep"]["metric"], "macro_precision");
    assert_eq!(manifest["settings"]["model"]["source"], "train_fresh");
    assert_eq!(manifest["settings"]["recipe"]["epochs"], 20);
}

#[test]
fn identical_config_gives_identical_artifacts() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, jobs) in [(&a, "1"), (&b, "3")] {
        run_owned(&with(
            &[
                "--seed",
                "4",
                "--jobs",
                jobs,
                "--out",
                p(out),
                "attribute",
                "--limit",
                "4",
                "--overlays",
                "all",
            ],
            SMALL,
        ));
        run_owned(&with(
            &["--seed", "4", "--jobs", jobs, "--out", p(out), "sweep"],
            SMALL,
        ));
    }
    for f in [
        "attributions.csv",
        "completeness.csv",
        "precision.csv",
        "table.md",
        "chart.svg",
    ] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f} differs"
        );
    }
    let overlays = files_in(&a.join("overlays"));
    assert_eq!(overlays.len(), 4 * 3 * 3);
    assert_eq!(overlays, files_in(&b.join("overlays")));
    for f in &overlays {
        assert_eq!(
            fs::read(a.join("overlays").join(f)).unwrap(),
            fs::read(b.join("overlays").join(f)).unwrap()
        );
    }
}

fn train_small(dir: &Path) -> PathBuf {
    let out = dir.join("model");
    run_owned(&with(&["--out", p(&out), "train"], SMALL));
    let ck = out.join("checkpoint.json");
    assert!(ck.is_file());
    ck
}

fn one_image(dir: &Path) -> PathBuf {
    let ds = gen_synthetic(99, 4, 1, 16).unwrap();
    let path = dir.join("probe.ppm");
    write_image(&path, &ds.items()[2].image).unwrap();
    path
}

#[test]
fn attribute_one_image() {
    let dir = TempDir::new().unwrap();
    let ck = train_small(dir.path());
    let img = one_image(dir.path());
    let out = dir.path().join("att");
    let stdout = run_ok(&[
        "--out",
        p(&out),
        "attribute",
        "--checkpoint",
        p(&ck),
        "--image",
        p(&img),
        "--label",
        "bird",
        "--steps",
        "50",
        "--save-maps",
    ])
    .stdout;
    assert!(String::from_utf8_lossy(&stdout).contains("1 records, 3 overlays"));
    let csv = lines(&out.join("attributions.csv"));
    assert_eq!(csv.len(), 2);
    assert_eq!(
        csv[0],
        "id,true_label,pred_original,pred_75,pred_50,pred_25,\
         score_original,score_75,score_50,score_25,ig_75,ig_50,ig_25"
    );
    let row: Vec<&str> = csv[1].split(',').collect();
    assert_eq!(row.len(), 13);
    assert_eq!((row[0], row[1]), ("probe", "bird"));
    assert_eq!(
        files_in(&out.join("overlays")),
        [
            "probe_25_both.ppm",
            "probe_25_negative.ppm",
            "probe_25_positive.ppm"
        ]
    );
    // IG sums close to the loss change, which for cross-entropy is a log ratio.
    let s: Vec<f64> = row[6..].iter().map(|v| v.parse().unwrap()).collect();
    for k in 0..3 {
        let expected = (s[0] / s[k + 1]).ln();
        assert!(
            (s[4 + k] - expected).abs() <= 0.02 * expected.abs().max(1e-3),
            "{s:?}"
        );
    }

    // The stored map feeds the overlay subcommand, which must agree.
    let ov = dir.path().join("ov");
    let target = dir.path().join("target.ppm");
    run_ok(&[
        "--out",
        p(dir.path()),
        "degrade",
        p(&img),
        "--qualities",
        "25",
    ]);
    fs::rename(dir.path().join("probe_25.ppm"), &target).unwrap();
    run_ok(&[
        "--out",
        p(&ov),
        "overlay",
        "--image",
        p(&target),
        "--map",
        p(&out.join("maps/probe_25.json")),
    ]);
    // The PPM round trip of the target costs at most one 8-bit level.
    for pol in ["negative", "positive", "both"] {
        let a = fs::read(ov.join(format!("target_{pol}.ppm"))).unwrap();
        let b = fs::read(out.join(format!("overlays/probe_25_{pol}.ppm"))).unwrap();
        assert_eq!(a.len(), b.len());
        let worst = a.iter().zip(&b).map(|(x, y)| x.abs_diff(*y)).max().unwrap();
        assert!(worst <= 1, "{pol}: {worst}");
    }
}

#[test]
fn label_must_name_a_class() {
    let dir = TempDir::new().unwrap();
    let ck = train_small(dir.path());
    let img = one_image(dir.path());
    let out = qig(&[
        "--out",
        p(dir.path()),
        "attribute",
        "--checkpoint",
        p(&ck),
        "--image",
        p(&img),
        "--label",
        "zebra",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let by_index = qig(&[
        "--out",
        p(dir.path()),
        "attribute",
        "--checkpoint",
        p(&ck),
        "--image",
        p(&img),
        "--label",
        "2",
    ]);
    assert!(by_index.status.success());
}

#[test]
fn config_file_sits_under_flags() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(
        &cfg,
        r#"{
            "seed": 3,
            "qualities": ["original", "50"],
            "metric": "accuracy",
            "model_name": "tiny",
            "synthetic": {"per_class": 20, "eval_per_class": 5, "side": 16, "epochs": 3}
        }"#,
    )
    .unwrap();
    let a = dir.path().join("a");
    run_ok(&["--config", p(&cfg), "--out", p(&a), "sweep"]);
    let csv = lines(&a.join("precision.csv"));
    assert_eq!(csv[0], "model,Original,Quality 50");
    assert!(csv[1].starts_with("tiny,"));
    let b = dir.path().join("b");
    run_ok(&[
        "--config",
        p(&cfg),
        "--out",
        p(&b),
        "sweep",
        "--qualities",
        "original,75,25",
        "--epochs",
        "2",
    ]);
    assert_eq!(
        lines(&b.join("precision.csv"))[0],
        "model,Original,Quality 75,Quality 25"
    );
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(b.join("run-manifest.json")).unwrap()).unwrap();
    assert_eq!(m["settings"]["seed"], 3);
    assert_eq!(m["settings"]["sweep"]["metric"], "accuracy");
    assert_eq!(m["settings"]["recipe"]["epochs"], 2);
    assert_eq!(m["settings"]["recipe"]["per_class"], 20);
}

#[test]
fn output_dir_from_environment() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("env-out");
    let status = Command::new(env!("CARGO_BIN_EXE_qig"))
        .args(["degrade", p(&one_image(dir.path()))])
        .env("QIG_OUTPUT_DIR", &out)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(
        files_in(&out),
        [
            "degrade.csv",
            "probe_25.ppm",
            "probe_50.ppm",
            "probe_75.ppm",
            "probe_original.ppm",
            "run-manifest.json"
        ]
    );
    let rows = lines(&out.join("degrade.csv"));
    assert_eq!(rows[1], "original,probe_original.ppm,inf");
}

#[test]
fn report_rerenders_stored_results() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("s");
    run_owned(&with(&["--out", p(&out), "sweep"], SMALL));
    let md = fs::read(out.join("table.md")).unwrap();
    let svg = fs::read(out.join("chart.svg")).unwrap();
    let again = dir.path().join("r");
    run_ok(&[
        "--out",
        p(&again),
        "report",
        "--precision",
        p(&out.join("precision.csv")),
    ]);
    assert_eq!(fs::read(again.join("table.md")).unwrap(), md);
    assert_eq!(fs::read(again.join("chart.svg")).unwrap(), svg);
}

#[test]
fn sweep_through_mock_provider() {
    let dir = TempDir::new().unwrap();
    let synth = gen_synthetic(8, 3, 4, 16).unwrap();
    let names: Vec<String> = (0..3).map(|c| format!("class{c}")).collect();
    let items = synth
        .items()
        .iter()
        .map(|it| Item {
            id: it.id.clone(),
            image: it.image.clone(),
            label: 2 - it.label,
        })
        .collect();
    let data = dir.path().join("data");
    Dataset::new(items, names).unwrap().save(&data).unwrap();
    let cmd = format!(
        "{} --height 8 --width 8 --classes 3",
        env!("CARGO_BIN_EXE_qig-mock-provider")
    );
    let out = dir.path().join("o");
    run_ok(&[
        "--out",
        p(&out),
        "sweep",
        "--provider",
        &cmd,
        "--data",
        p(&data),
    ]);
    let csv = lines(&out.join("precision.csv"));
    assert_eq!(csv[0], "model,Original,Quality 75,Quality 50,Quality 25");
    assert!(csv[1].starts_with("qig-mock-provider,"));
    let att = dir.path().join("att");
    run_ok(&[
        "--out",
        p(&att),
        "attribute",
        "--provider",
        &cmd,
        "--data",
        p(&data),
        "--overlays",
        "none",
    ]);
    assert_eq!(lines(&att.join("attributions.csv")).len(), 13);
}

#[test]
fn verify_passes() {
    let out = run_ok(&["verify", "--seed", "1"]);
    let text = String::from_utf8_lossy(&out.stdout);
    let rows: Vec<&str> = text.lines().filter(|l| l.starts_with('[')).collect();
    assert_eq!(rows.len(), 10, "{text}");
    assert!(rows.iter().all(|r| r.starts_with("[pass]")), "{text}");
    assert!(text.contains("10 passed, 0 failed"));
}
