use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tempfile::TempDir;

use vwskill_core::backtest::{run_backtest, StrategyConfig};
use vwskill_core::data::PriceSeries;
use vwskill_core::scores::score_report;
use vwskill_core::{
    apply_threshold, LabelSeries, Objective, PredictionSeries, ProbabilitySeries, SkillScoreKind,
    WindowConfig,
};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_vwskill"));
    c.env_remove("VWSKILL_CONFIG_DIR");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let o = run(dir, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

fn write_lines<T: ToString>(dir: &Path, name: &str, values: &[T]) -> PathBuf {
    let p = dir.join(name);
    let text: String = values.iter().map(|v| v.to_string() + "\n").collect();
    std::fs::write(&p, text).unwrap();
    p
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn score_value(report: &Value, kind: &str, mode: &str) -> Option<f64> {
    report["scores"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["kind"] == kind && e["mode"] == mode)
        .and_then(|e| e["value"].as_f64())
}

/// Label and prediction vectors with the given confusion counts.
fn with_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> (Vec<u8>, Vec<u8>) {
    let mut y = Vec::new();
    let mut p = Vec::new();
    for (n, yv, pv) in [(tp, 1, 1), (fp, 0, 1), (fn_, 1, 0), (tn, 0, 0)] {
        y.extend(std::iter::repeat(yv).take(n));
        p.extend(std::iter::repeat(pv).take(n));
    }
    (y, p)
}

#[test]
fn score_perfect_prediction() {
    let d = TempDir::new().unwrap();
    let y = [0, 1, 1, 0, 0, 1, 0];
    write_lines(d.path(), "y.txt", &y);
    write_lines(d.path(), "p.txt", &y);
    ok(d.path(), &["score", "--labels", "y.txt", "--predictions", "p.txt", "--out", "o"]);
    let r = json(&d.path().join("o/report.json"));
    assert_eq!(score_value(&r, "TSS", "quality"), Some(1.0));
    assert_eq!(score_value(&r, "TSS", "value_weighted"), Some(1.0));
    for f in ["report.csv", "weights.csv", "manifest.json"] {
        assert!(d.path().join("o").join(f).is_file(), "{f}");
    }
}

#[test]
fn score_table_one_counts() {
    let d = TempDir::new().unwrap();
    let (y, p) = with_counts(11, 7, 3, 43);
    write_lines(d.path(), "y.txt", &y);
    write_lines(d.path(), "p.txt", &p);
    ok(d.path(), &["score", "--labels", "y.txt", "--predictions", "p.txt", "--out", "o"]);
    let r = json(&d.path().join("o/report.json"));
    let tss = score_value(&r, "TSS", "quality").unwrap();
    assert!((tss - 0.6457).abs() < 5e-4, "{tss}");
}

#[test]
fn score_matches_library() {
    let d = TempDir::new().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for trial in 0..5 {
        let n = rng.gen_range(10..200);
        let k = rng.gen_range(1..6);
        let y: Vec<u8> = (0..n).map(|_| rng.gen_bool(0.2) as u8).collect();
        let p: Vec<u8> = (0..n).map(|_| rng.gen_bool(0.3) as u8).collect();
        write_lines(d.path(), "y.txt", &y);
        write_lines(d.path(), "p.txt", &p);
        let out = format!("o{trial}");
        ok(
            d.path(),
            &["score", "--labels", "y.txt", "--predictions", "p.txt", "--k", &k.to_string(), "--out", &out],
        );
        let got: vwskill_core::scores::ScoreReport =
            serde_json::from_value(json(&d.path().join(&out).join("report.json"))).unwrap();
        let want = score_report(
            &LabelSeries::new(y).unwrap(),
            &PredictionSeries::new(p).unwrap(),
            WindowConfig::new(k).unwrap(),
        )
        .unwrap();
        assert_eq!(got, want);
    }
}

#[test]
fn input_errors_exit_2() {
    let d = TempDir::new().unwrap();
    write_lines(d.path(), "y.txt", &[0, 1, 0]);
    write_lines(d.path(), "p.txt", &[0, 1]);
    write_lines(d.path(), "bad.txt", &["0", "2"]);
    let o = run(d.path(), &["score", "--labels", "y.txt", "--predictions", "p.txt", "--out", "o"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("length mismatch"));
    let o = run(d.path(), &["score", "--labels", "bad.txt", "--predictions", "p.txt", "--out", "o"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(d.path(), &["score", "--labels", "missing.txt", "--predictions", "p.txt", "--out", "o"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(d.path(), &["score", "--labels", "y.txt", "--predictions", "y.txt", "--k", "0", "--out", "o"]);
    assert_eq!(o.status.code(), Some(2));
}

fn curve_rows(path: &Path) -> Vec<(f64, Option<f64>)> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .map(|l| {
            let (t, s) = l.split_once(',').unwrap();
            (t.parse().unwrap(), s.parse().ok())
        })
        .collect()
}

#[test]
fn curve_examples() {
    let d = TempDir::new().unwrap();
    write_lines(d.path(), "y.txt", &[0, 0, 1, 1]);
    write_lines(d.path(), "sep.txt", &[0.1, 0.2, 0.8, 0.9]);
    write_lines(d.path(), "flat.txt", &[0.5, 0.5, 0.5, 0.5]);
    ok(d.path(), &["curve", "--probs", "sep.txt", "--labels", "y.txt", "--out", "a"]);
    let rows = curve_rows(&d.path().join("a/curve.csv"));
    assert!(rows.iter().any(|r| r.1 == Some(1.0)));
    ok(d.path(), &["curve", "--probs", "flat.txt", "--labels", "y.txt", "--score", "wtss", "--out", "b"]);
    let mut distinct: Vec<String> = curve_rows(&d.path().join("b/curve.csv"))
        .iter()
        .map(|r| format!("{:?}", r.1))
        .collect();
    distinct.dedup();
    assert!(distinct.len() <= 2, "{distinct:?}");
}

#[test]
fn curve_matches_oracle_scan() {
    let d = TempDir::new().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 40;
    let probs: Vec<f64> = (0..n).map(|_| (rng.gen_range(0..20) as f64) / 20.0).collect();
    let mut y: Vec<u8> = (0..n).map(|_| rng.gen_bool(0.3) as u8).collect();
    y[0] = 1;
    write_lines(d.path(), "p.txt", &probs);
    write_lines(d.path(), "y.txt", &y);
    ok(d.path(), &["curve", "--probs", "p.txt", "--labels", "y.txt", "--score", "whss", "--k", "2", "--out", "o"]);
    let objective = Objective::value_weighted(SkillScoreKind::Hss, WindowConfig::new(2).unwrap());
    let labels = LabelSeries::new(y).unwrap();
    let pr = ProbabilitySeries::new(probs.clone()).unwrap();
    for (tau, s) in curve_rows(&d.path().join("o/curve.csv")) {
        let direct = objective.evaluate(&labels, &apply_threshold(&pr, tau).unwrap()).ok();
        assert_eq!(s, direct, "tau {tau}");
    }
    let best = json(&d.path().join("o/best.json"));
    let oracle = std::iter::once(0.0)
        .chain(probs.iter().copied())
        .chain([1.0])
        .filter_map(|t| objective.evaluate(&labels, &apply_threshold(&pr, t).unwrap()).ok())
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(best["best_score"].as_f64(), Some(oracle));
}

/// Snapshot directory with `epochs` rows per split.
fn snapshot_dir(dir: &Path, epochs: usize, seed: u64) -> (Vec<u8>, Vec<u8>, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 30;
    let labels = |rng: &mut ChaCha8Rng| -> Vec<u8> {
        let mut v: Vec<u8> = (0..n).map(|_| rng.gen_bool(0.3) as u8).collect();
        v[0] = 1;
        v[1] = 0;
        v
    };
    let y_train = labels(&mut rng);
    let y_valid = labels(&mut rng);
    std::fs::create_dir_all(dir.join("snap")).unwrap();
    let mut test_rows = Vec::new();
    for (split, y) in [("train", Some(&y_train)), ("valid", Some(&y_valid)), ("test", None)] {
        let mut text = split.to_string();
        for i in 0..n {
            text += &format!(",{i}");
        }
        text += "\n";
        for e in 1..=epochs {
            let row: Vec<f64> = (0..n)
                .map(|i| {
                    let base = y.map_or(0.5, |y| if y[i] == 1 { 0.65 } else { 0.35 });
                    (base + rng.gen_range(-0.3..0.3f64)).clamp(0.0, 1.0)
                })
                .collect();
            text += &e.to_string();
            for v in &row {
                text += &format!(",{v}");
            }
            text += "\n";
            if split == "test" {
                test_rows.push(row);
            }
        }
        std::fs::write(dir.join("snap").join(format!("{split}.csv")), text).unwrap();
    }
    write_lines(dir, "y_train.txt", &y_train);
    write_lines(dir, "y_valid.txt", &y_valid);
    (y_train, y_valid, test_rows)
}

#[test]
fn strict_alpha_one_is_empty_ensemble() {
    let d = TempDir::new().unwrap();
    snapshot_dir(d.path(), 4, 1);
    let args = [
        "ensemble", "--snapshots", "snap", "--labels-train", "y_train.txt", "--labels-valid",
        "y_valid.txt", "--alpha", "1.0", "--out", "o",
    ];
    let o = run(d.path(), &args);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("best validation score"));
    let mut with_fallback = args.to_vec();
    with_fallback.insert(with_fallback.len() - 2, "--fallback");
    ok(d.path(), &with_fallback);
    let sel = json(&d.path().join("o/selection.json"));
    assert_eq!(sel["fallback_used"], true);
    assert_eq!(sel["selected"].as_array().unwrap().len(), 1);
}

#[test]
fn single_epoch_ensemble_is_binarization() {
    let d = TempDir::new().unwrap();
    let (_, _, test_rows) = snapshot_dir(d.path(), 1, 2);
    ok(
        d.path(),
        &[
            "ensemble", "--snapshots", "snap", "--labels-train", "y_train.txt", "--labels-valid",
            "y_valid.txt", "--alpha=-2", "--out", "o",
        ],
    );
    let sel = json(&d.path().join("o/selection.json"));
    let tau = sel["members"][0]["tau_star"].as_f64().unwrap();
    let want = apply_threshold(&ProbabilitySeries::new(test_rows[0].clone()).unwrap(), tau).unwrap();
    let got: Vec<u8> = std::fs::read_to_string(d.path().join("o/predictions.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(got, want.to_u8());
}

fn raw_prices(dir: &Path, days: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = 100.0;
    let mut text = String::from("date,close\n");
    let start = chrono::NaiveDate::from_ymd_opt(2019, 1, 1).unwrap();
    for d in 0..days {
        let shock = if rng.gen_bool(0.1) { -0.02 } else { 0.0 };
        p *= 1.0 + rng.gen_range(-0.012..0.014) + shock;
        text += &format!("{},{p:.4}\n", start + chrono::Duration::days(d as i64));
    }
    std::fs::write(dir.join("raw.csv"), text).unwrap();
}

fn manifest_outputs(path: &Path) -> Vec<(String, String)> {
    json(path)["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| (o["path"].as_str().unwrap().to_string(), o["sha256"].as_str().unwrap().to_string()))
        .collect()
}

#[test]
fn seeded_training_is_bitwise_reproducible() {
    let d = TempDir::new().unwrap();
    raw_prices(d.path(), 300, 5);
    ok(d.path(), &["prepare", "--input", "raw.csv", "--task", "down", "--out", "prep"]);
    let train = |out: &str| {
        ok(
            d.path(),
            &[
                "ensemble", "--train", "prep/train.csv", "--valid", "prep/valid.csv", "--test",
                "prep/test.csv", "--hidden", "8,4", "--epochs", "8", "--lr", "0.01", "--seed", "4",
                "--fallback", "--score", "wtss", "--out", out,
            ],
        );
        manifest_outputs(&d.path().join(out).join("manifest.json"))
    };
    let a = train("run1");
    let b = train("run2");
    assert_eq!(a, b);
    assert!(a.iter().any(|(p, _)| p == "evaluation.json"));

    ok(d.path(), &["replay", "run1/manifest.json", "--out", "run3"]);
    assert_eq!(manifest_outputs(&d.path().join("run3/manifest.json")), a);
}

#[test]
fn divergence_exits_4() {
    let d = TempDir::new().unwrap();
    raw_prices(d.path(), 200, 6);
    ok(d.path(), &["prepare", "--input", "raw.csv", "--task", "down", "--out", "prep"]);
    let o = run(
        d.path(),
        &[
            "ensemble", "--train", "prep/train.csv", "--valid", "prep/valid.csv", "--test",
            "prep/test.csv", "--hidden", "4", "--epochs", "2", "--lr", "1e308", "--out", "o",
        ],
    );
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

fn trajectory_values(path: &Path) -> Vec<(f64, f64, f64)> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<f64> = l.split(',').skip(1).map(|v| v.parse().unwrap()).collect();
            (f[0], f[1], f[2])
        })
        .collect()
}

#[test]
fn backtest_examples() {
    let d = TempDir::new().unwrap();
    let closes = [100.0, 101.0, 99.5, 97.0, 98.0, 96.0, 99.0];
    write_lines(d.path(), "prices.txt", &closes);
    write_lines(d.path(), "none.txt", &[0; 7]);
    ok(d.path(), &["backtest", "--prices", "prices.txt", "--predictions", "none.txt", "--out", "a"]);
    for (r, c) in trajectory_values(&d.path().join("a/trajectory.csv")).iter().zip(closes) {
        assert_eq!(*r, (10.0, 0.0, 10.0 * c));
    }

    write_lines(d.path(), "flat.txt", &[50.0; 7]);
    write_lines(d.path(), "some.txt", &[1, 0, 1, 1, 0, 1, 0]);
    ok(d.path(), &["backtest", "--prices", "flat.txt", "--predictions", "some.txt", "--out", "b"]);
    let last = *trajectory_values(&d.path().join("b/trajectory.csv")).last().unwrap();
    assert!((last.2 - 500.0).abs() < 1e-9);

    write_lines(d.path(), "other.txt", &[0, 0, 0, 1, 0, 0, 0]);
    ok(
        d.path(),
        &["backtest", "--prices", "prices.txt", "--predictions", "some.txt", "--compare", "other.txt", "--out", "c"],
    );
    let prices = PriceSeries::from_closes(closes.to_vec()).unwrap();
    let downs = {
        let mut v = vec![false];
        v.extend(closes.windows(2).map(|w| (w[1] - w[0]) / w[0] * 100.0 < -1.0));
        LabelSeries::from_bools(v).unwrap()
    };
    for (file, preds) in [("trajectory.csv", vec![1, 0, 1, 1, 0, 1, 0]), ("trajectory_b.csv", vec![0, 0, 0, 1, 0, 0, 0])] {
        let single = run_backtest(
            &prices,
            &PredictionSeries::new(preds).unwrap(),
            &downs,
            &StrategyConfig::default(),
        )
        .unwrap();
        let got = trajectory_values(&d.path().join("c").join(file));
        let want: Vec<_> = single.history.iter().map(|r| (r.shares, r.cash, r.value)).collect();
        assert_eq!(got, want, "{file}");
    }
}

#[test]
fn config_file_and_environment_defaults() {
    let d = TempDir::new().unwrap();
    write_lines(d.path(), "y.txt", &[0, 0, 0, 0, 1, 0, 0, 0, 0, 0]);
    write_lines(d.path(), "p.txt", &[1, 0, 0, 0, 0, 0, 0, 0, 0, 0]);
    std::fs::write(d.path().join("cfg.json"), r#"{"k": 5}"#).unwrap();
    ok(d.path(), &["score", "--labels", "y.txt", "--predictions", "p.txt", "--config", "cfg.json", "--out", "a"]);
    assert_eq!(json(&d.path().join("a/report.json"))["window"], 5);
    ok(
        d.path(),
        &["score", "--labels", "y.txt", "--predictions", "p.txt", "--config", "cfg.json", "--k", "2", "--out", "b"],
    );
    assert_eq!(json(&d.path().join("b/report.json"))["window"], 2);

    let conf_dir = d.path().join("conf");
    std::fs::create_dir(&conf_dir).unwrap();
    std::fs::write(conf_dir.join("config.json"), r#"{"k": 4}"#).unwrap();
    let o = bin()
        .current_dir(d.path())
        .env("VWSKILL_CONFIG_DIR", &conf_dir)
        .args(["score", "--labels", "y.txt", "--predictions", "p.txt", "--out", "c"])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(json(&d.path().join("c/report.json"))["window"], 4);
    let m = json(&d.path().join("c/manifest.json"));
    assert!(m["config_file"]["path"].as_str().unwrap().ends_with("config.json"));
}

#[test]
fn inputs_are_not_modified_and_manifest_lists_them() {
    let d = TempDir::new().unwrap();
    let y = write_lines(d.path(), "y.txt", &[0, 1, 0, 1]);
    write_lines(d.path(), "p.txt", &[0, 1, 1, 0]);
    let before = std::fs::read(&y).unwrap();
    ok(d.path(), &["score", "--labels", "y.txt", "--predictions", "p.txt", "--out", "o"]);
    assert_eq!(std::fs::read(&y).unwrap(), before);
    let m = json(&d.path().join("o/manifest.json"));
    assert_eq!(m["inputs"].as_array().unwrap().len(), 2);
    assert_eq!(m["command"], "score");
    assert_eq!(m["parameters"]["k"], 3);
}

#[test]
fn demo_writes_report() {
    let d = TempDir::new().unwrap();
    ok(d.path(), &["demo", "--epochs", "3", "--days", "300", "--out", "o"]);
    let r = json(&d.path().join("o/demo_report.json"));
    assert_eq!(r["runs"].as_array().unwrap().len(), 2);
    assert!(d.path().join("o/summary.csv").is_file());
}
