use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn hdmdc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hdmdc"))
        .current_dir(dir)
        .env_remove("HDMDC_OUT_DIR")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = hdmdc(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path).unwrap()
}

/// Header row plus numeric rows of a CSV written by the tool.
fn table(path: impl AsRef<Path>) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = read(path);
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    (header, rows)
}

fn column(t: &(Vec<String>, Vec<Vec<f64>>), name: &str) -> Vec<f64> {
    let i = t.0.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    t.1.iter().map(|r| r[i]).collect()
}

const LINEAR: &str = "x1,x2,x3;u1,u2";

fn linear_record(dir: &Path, name: &str, seed: &str) -> PathBuf {
    ok(dir, &["synth", "--kind", "linear", "--n", "3", "--l", "2", "--periods", "20", "--samples-per-that", "16", "--seed", seed, "--out", name]);
    dir.join(name)
}

#[test]
fn synth_is_byte_identical_for_equal_seeds() {
    let dir = TempDir::new().unwrap();
    for kind in ["wave", "duffing", "linear"] {
        let run = |name: &str, seed: &str| {
            ok(dir.path(), &["synth", "--kind", kind, "--periods", "10", "--seed", seed, "--out", name]);
            read(dir.path().join(name))
        };
        let a = run("a.csv", "1");
        let b = run("b.csv", "1");
        let c = run("c.csv", "2");
        assert_eq!(a, b, "{kind}");
        assert_ne!(a, c, "{kind}");
    }
}

#[test]
fn wave_record_matches_requested_sea_state() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["synth", "--kind", "wave", "--hs", "7", "--tp", "9.2", "--seed", "1", "--periods", "200", "--out", "w.csv"]);
    let text = read(dir.path().join("w.csv"));
    assert!(text.contains("# t_hat: 9.2"));
    assert!(text.contains("# seed: 1"));
    let t = table(dir.path().join("w.csv"));
    assert_eq!(t.0, vec!["t", "eta"]);
    let eta = column(&t, "eta");
    let mean = eta.iter().sum::<f64>() / eta.len() as f64;
    let var = eta.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / eta.len() as f64;
    let hs = 4.0 * var.sqrt();
    assert!((hs - 7.0).abs() < 0.15 * 7.0, "hs estimate {hs}");
}

#[test]
fn duffing_record_has_two_states() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["synth", "--kind", "duffing", "--seed", "2", "--periods", "10", "--out", "d.csv"]);
    let t = table(dir.path().join("d.csv"));
    assert_eq!(t.0, vec!["t", "x", "v", "u"]);
    assert_eq!(t.1.len(), 321);
}

#[test]
fn fit_then_predict_reproduces_linear_oracle() {
    let dir = TempDir::new().unwrap();
    let rec = linear_record(dir.path(), "lin.csv", "4");
    let out = ok(dir.path(), &["fit", "--input", "lin.csv", "--schema", LINEAR, "--l-tr", "10", "--out", "m.txt"]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["residual"].as_f64().unwrap() < 1e-8);
    ok(dir.path(), &["predict", "--model", "m.txt", "--input", "lin.csv", "--schema", LINEAR, "--start", "40", "--out", "p.csv"]);
    let truth = table(&rec);
    let pred = table(dir.path().join("p.csv"));
    assert_eq!(pred.1.len(), truth.1.len() - 40);
    for name in ["x1", "x2", "x3"] {
        let x = column(&truth, name);
        let p = column(&pred, name);
        let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (k, pk) in p.iter().enumerate() {
            assert!((pk - x[40 + k]).abs() <= 1e-8 * scale, "{name}[{k}]: {pk} vs {}", x[40 + k]);
        }
    }
    assert_eq!(column(&pred, "t")[0], column(&truth, "t")[40]);
}

#[test]
fn iic_prediction_flags_transient_and_metrics_skip_it() {
    let dir = TempDir::new().unwrap();
    linear_record(dir.path(), "lin.csv", "5");
    ok(dir.path(), &["fit", "--input", "lin.csv", "--schema", LINEAR, "--l-tr", "10", "--l-dx", "1", "--l-du", "1", "--out", "m.txt"]);
    ok(dir.path(), &["predict", "--model", "m.txt", "--input", "lin.csv", "--schema", LINEAR, "--iic", "--out", "p.csv"]);
    let pred = table(dir.path().join("p.csv"));
    let flags = column(&pred, "transient");
    assert_eq!(flags.iter().filter(|f| **f == 1.0).count(), 80);
    assert!(flags[..80].iter().all(|f| *f == 1.0));
    ok(dir.path(), &["metrics", "--reference", "lin.csv", "--prediction", "p.csv", "--schema", LINEAR, "--out", "m.csv"]);
    let m = read(dir.path().join("m.csv"));
    let rows: Vec<&str> = m.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "channel,nrmse,nammae,jsd,samples");
    assert!(rows[1].starts_with("all,"));
    assert!(rows[1].ends_with(&format!(",{}", 321 - 80)));
    assert_eq!(rows.len(), 5);
}

#[test]
fn point_mass_bayes_equals_fit_and_predict() {
    let dir = TempDir::new().unwrap();
    for s in ["1", "2"] {
        ok(dir.path(), &["synth", "--kind", "duffing", "--periods", "30", "--samples-per-that", "16", "--seed", s, "--out", &format!("d{s}.csv")]);
    }
    let common = ["--schema", "duffing"];
    let mut bayes = vec!["bayes", "--train", "d1.csv", "--target", "d2.csv", "--draws", "5", "--seed", "9", "--standardize", "false"];
    bayes.extend(common);
    bayes.extend(["--l-tr-min", "8", "--l-tr-max", "8", "--l-dx-min", "1", "--l-dx-max", "1", "--l-du-min", "0.5", "--l-du-max", "0.5"]);
    bayes.extend(["--start", "32", "--steps", "200", "--out", "e.csv"]);
    ok(dir.path(), &bayes);
    let mut fit = vec!["fit", "--input", "d1.csv", "--l-tr", "8", "--l-dx", "1", "--l-du", "0.5", "--out", "m.txt"];
    fit.extend(common);
    ok(dir.path(), &fit);
    let mut predict = vec!["predict", "--model", "m.txt", "--input", "d2.csv", "--start", "32", "--steps", "200", "--out", "p.csv"];
    predict.extend(common);
    ok(dir.path(), &predict);

    let e = table(dir.path().join("e.csv"));
    let p = table(dir.path().join("p.csv"));
    assert_eq!(column(&e, "t"), column(&p, "t"));
    for name in ["x", "v"] {
        assert_eq!(column(&e, &format!("{name}_mu")), column(&p, name));
        assert!(column(&e, &format!("{name}_sigma")).iter().all(|s| *s == 0.0));
        assert_eq!(column(&e, &format!("{name}_lower")), column(&p, name));
    }
}

#[test]
fn sweep_on_default_grid_emits_every_configuration() {
    let dir = TempDir::new().unwrap();
    for s in ["1", "2", "3"] {
        ok(dir.path(), &["synth", "--kind", "duffing", "--periods", "25", "--samples-per-that", "4", "--seed", s, "--out", &format!("d{s}.csv")]);
    }
    std::fs::write(dir.path().join("split.txt"), "train d1.csv\nvalidation d2.csv\ntest d3.csv\n").unwrap();
    let args = ["sweep", "--split", "split.txt", "--schema", "duffing"];
    let out = ok(dir.path(), &[&["--out-dir", "a"], &args[..]].concat());
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["configs"], 294);
    let agg = table(dir.path().join("a/aggregate.csv"));
    assert_eq!(agg.1.len(), 294);
    assert!(column(&agg, "cells").iter().all(|c| *c == 1.0));
    let cells = read(dir.path().join("a/cells.csv"));
    assert_eq!(cells.lines().filter(|l| !l.starts_with('#')).count(), 295);
    let best = read(dir.path().join("a/best.csv"));
    assert!(best.contains("best_nrmse,") && best.contains("best_nammae,") && best.contains("best_jsd,"));

    ok(dir.path(), &[&["--jobs", "1", "--out-dir", "b"], &args[..]].concat());
    for f in ["cells.csv", "aggregate.csv", "best.csv"] {
        assert_eq!(read(dir.path().join("a").join(f)), read(dir.path().join("b").join(f)), "{f}");
    }
}

#[test]
fn validate_pdf_writes_density_and_summary() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["synth", "--kind", "duffing", "--periods", "10", "--seed", "3", "--out", "d.csv"]);
    ok(dir.path(), &["fit", "--input", "d.csv", "--schema", "duffing", "--l-tr", "5", "--out", "m.txt"]);
    ok(dir.path(), &["predict", "--model", "m.txt", "--input", "d.csv", "--schema", "duffing", "--out", "p.csv"]);
    ok(dir.path(), &["--out-dir", "v", "validate-pdf", "--reference", "d.csv", "--prediction", "p.csv", "--schema", "duffing", "--replicates", "100"]);
    let text = read(dir.path().join("v/jsd_summary.csv"));
    let rows: Vec<Vec<&str>> = text.lines().filter(|l| !l.starts_with('#')).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0], vec!["channel", "expected", "q_low", "q_high", "width"]);
    let labels: Vec<&str> = rows[1..].iter().map(|r| r[0]).collect();
    assert_eq!(labels, vec!["x", "v", "avg"]);
    for r in &rows[1..] {
        let v: Vec<f64> = r[1..].iter().map(|x| x.parse().unwrap()).collect();
        assert!(v[1] <= v[0] && v[0] <= v[2], "{r:?}");
        assert!(v.iter().all(|x| (0.0..=std::f64::consts::LN_2).contains(x)));
        assert!((v[3] - (v[2] - v[1])).abs() < 1e-12);
    }
    let kde = read(dir.path().join("v/kde.csv"));
    assert_eq!(kde.lines().filter(|l| !l.starts_with('#')).count(), 1 + 2 * 512);
}

#[test]
fn config_file_values_sit_between_defaults_and_flags() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("run.toml"), "periods = 5\n[synth]\nkind = \"wave\"\nseed = 7\n").unwrap();
    ok(dir.path(), &["--config", "run.toml", "synth", "--out", "a.csv"]);
    ok(dir.path(), &["synth", "--kind", "wave", "--periods", "5", "--seed", "7", "--out", "b.csv"]);
    ok(dir.path(), &["--out-dir", "sub", "synth", "--kind", "wave", "--periods", "5", "--seed", "7"]);
    assert_eq!(read(dir.path().join("a.csv")), read(dir.path().join("sub/wave.csv")));
    assert_eq!(read(dir.path().join("a.csv")), read(dir.path().join("b.csv")));
    ok(dir.path(), &["--config", "run.toml", "synth", "--seed", "8", "--out", "c.csv"]);
    let c = read(dir.path().join("c.csv"));
    assert!(c.contains("# seed: 8"));
    assert_eq!(c.lines().filter(|l| !l.starts_with('#')).count(), 1 + 5 * 32 + 1);
}

#[test]
fn output_directory_falls_back_to_environment() {
    let dir = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_hdmdc"))
        .current_dir(dir.path())
        .env("HDMDC_OUT_DIR", dir.path().join("env_out"))
        .args(["synth", "--periods", "2"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("env_out/wave.csv").exists());
}

#[test]
fn failures_map_to_exit_codes_with_json_records() {
    let dir = TempDir::new().unwrap();
    let code = |args: &[&str]| {
        let out = hdmdc(dir.path(), args);
        let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap_or_else(|_| {
            panic!("stderr is not JSON: {}", String::from_utf8_lossy(&out.stderr))
        });
        assert_eq!(err["exit_code"].as_i64().map(|c| c as i32), out.status.code());
        out.status.code().unwrap()
    };
    assert_eq!(code(&["--config", "missing.toml", "synth"]), 2);
    assert_eq!(code(&["synth", "--kind", "nope"]), 2);
    assert_eq!(code(&["synth", "--no-such-flag"]), 2);
    assert_eq!(code(&["fit", "--schema", "duffing"]), 2);
    std::fs::write(dir.path().join("bad.toml"), "[synth]\nseed = \"x\"\n").unwrap();
    assert_eq!(code(&["--config", "bad.toml", "synth"]), 2);

    linear_record(dir.path(), "lin.csv", "1");
    assert_eq!(code(&["fit", "--input", "lin.csv", "--schema", "duffing"]), 3);
    assert_eq!(code(&["fit", "--input", "absent.csv", "--schema", LINEAR]), 3);

    // softening spring driven hard enough to escape
    assert_eq!(code(&["synth", "--kind", "duffing", "--cubic", "-5", "--hs", "12", "--periods", "50"]), 4);
}
