use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, ValueEnum};
use serde_json::json;

use vwskill_core::backtest::{compare_strategies, run_backtest};
use vwskill_core::data::{daily_percentage_change, CsvSchema, PriceSeries, TimeSeriesTable};
use vwskill_core::scores::{score_report, ScoreReport};
use vwskill_core::synthetic::{run_demo, DemoConfig};
use vwskill_core::thresholding::{optimize_threshold, score_curve, write_curve_csv};
use vwskill_core::{weighted_confusion_matrix, Error as CoreError, LabelSeries, MatrixMode};

use crate::io::{read_labels, read_predictions, read_probabilities, sha256_file, OutDir};
use crate::manifest::{Run, RunManifest, MANIFEST_NAME};
use crate::settings::{SearchArgs, StrategyArgs, WindowArgs};
use crate::{Cli, Command, ReplayMismatch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Quality,
    ValueWeighted,
    Both,
}

#[derive(Debug, Args)]
pub struct ScoreCmd {
    /// Observed 0/1 series
    #[arg(long)]
    labels: PathBuf,
    /// Predicted 0/1 series
    #[arg(long)]
    predictions: PathBuf,
    #[command(flatten)]
    window: WindowArgs,
    /// Which scores to print; the report files always hold both
    #[arg(long, value_enum, default_value_t = ModeArg::Both)]
    mode: ModeArg,
    #[arg(long)]
    out: PathBuf,
}

fn print_report(report: &ScoreReport, mode: ModeArg) {
    for e in &report.scores {
        let shown = match mode {
            ModeArg::Both => true,
            ModeArg::Quality => e.mode == MatrixMode::Quality,
            ModeArg::ValueWeighted => e.mode == MatrixMode::ValueWeighted,
        };
        if !shown {
            continue;
        }
        let name = match e.mode {
            MatrixMode::Quality => e.kind.to_string(),
            MatrixMode::ValueWeighted => format!("w{}", e.kind),
        };
        match e.value {
            Some(v) => println!("{name:<5} {v:.4}"),
            None => println!("{name:<5} undefined"),
        }
    }
}

pub fn score(c: ScoreCmd, mut run: Run) -> Result<()> {
    let window = run.config.overlay(&c.window)?.resolve()?;
    let y = read_labels(run.input(&c.labels)?)?;
    let p = read_predictions(run.input(&c.predictions)?)?;
    let report = score_report(&y, &p, window)?;
    let (_, weights) = weighted_confusion_matrix(&y, &p, window)?;

    let mut out = OutDir::create(&c.out)?;
    out.write_json("report.json", &report)?;
    out.write_with("report.csv", |w| Ok(report.write_csv(w)?))?;
    out.write_with("weights.csv", |w| Ok(weights.write_csv(w)?))?;
    print_report(&report, c.mode);
    run.finish("score", json!({ "k": window.k() }), out)?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct CompareCmd {
    #[arg(long)]
    labels: PathBuf,
    /// Two or more predicted 0/1 series
    #[arg(long, num_args = 1.., required = true)]
    predictions: Vec<PathBuf>,
    #[command(flatten)]
    window: WindowArgs,
    #[arg(long)]
    out: PathBuf,
}

pub fn compare(c: CompareCmd, mut run: Run) -> Result<()> {
    let window = run.config.overlay(&c.window)?.resolve()?;
    let y = read_labels(run.input(&c.labels)?)?;
    let mut reports = Vec::new();
    for path in &c.predictions {
        let p = read_predictions(run.input(path)?)?;
        let report =
            score_report(&y, &p, window).with_context(|| format!("scoring {}", path.display()))?;
        reports.push((path.display().to_string(), report));
    }
    let mut out = OutDir::create(&c.out)?;
    out.write_with("compare.csv", |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["file", "score", "mode", "value"])?;
        for (file, r) in &reports {
            for e in &r.scores {
                let value = e.value.map(|v| v.to_string()).unwrap_or_default();
                csv.write_record([file.as_str(), &e.kind.to_string(), &e.mode.to_string(), &value])?;
            }
        }
        csv.flush()?;
        Ok(())
    })?;
    let as_json: Vec<_> = reports
        .iter()
        .map(|(file, r)| json!({ "file": file, "report": r }))
        .collect();
    out.write_json("compare.json", &as_json)?;
    for (file, r) in &reports {
        println!("{file}");
        print_report(r, ModeArg::Both);
    }
    run.finish("compare", json!({ "k": window.k() }), out)?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct CurveCmd {
    /// Forecast probabilities
    #[arg(long)]
    probs: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[command(flatten)]
    search: SearchArgs,
    #[command(flatten)]
    window: WindowArgs,
    #[arg(long)]
    out: PathBuf,
}

pub fn curve(c: CurveCmd, mut run: Run) -> Result<()> {
    let window = run.config.overlay(&c.window)?.resolve()?;
    let search = run.config.overlay(&c.search)?.resolve(window)?;
    let probs = read_probabilities(run.input(&c.probs)?)?;
    let y = read_labels(run.input(&c.labels)?)?;
    let points = score_curve(&probs, &y, &search)?;
    let best = match optimize_threshold(&probs, &y, &search) {
        Ok(r) => Some(r),
        Err(CoreError::NoFeasibleThreshold) => None,
        Err(e) => return Err(e.into()),
    };
    let mut out = OutDir::create(&c.out)?;
    out.write_with("curve.csv", |w| Ok(write_curve_csv(&points, w)?))?;
    out.write_json("best.json", &best)?;
    match best {
        Some(b) => println!("tau* = {} ({} = {:.4})", b.tau_star, search.objective.name(), b.best_score),
        None => println!("no threshold gives a defined {}", search.objective.name()),
    }
    let params = json!({
        "objective": search.objective.name(),
        "k": window.k(),
        "a": search.lo(),
        "b": search.hi(),
    });
    run.finish("curve", params, out)?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct BacktestCmd {
    /// Closing prices: a CSV with `--date-column` and `--price-column`, or
    /// one value per line
    #[arg(long)]
    prices: PathBuf,
    #[arg(long)]
    price_column: Option<String>,
    #[arg(long, default_value = "date")]
    date_column: String,
    /// 0/1 series: a down movement is predicted for that day
    #[arg(long)]
    predictions: PathBuf,
    /// Second prediction series to compare against the first
    #[arg(long)]
    compare: Option<PathBuf>,
    /// Observed down days; derived from the prices when absent
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Percentage change below which a day counts as down
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    limit: f64,
    #[command(flatten)]
    strategy: StrategyArgs,
    #[arg(long)]
    out: PathBuf,
}

fn load_prices(path: &Path, price_column: Option<&str>, date_column: &str) -> Result<PriceSeries> {
    match price_column {
        Some(col) => {
            let schema = CsvSchema {
                columns: Some(vec![col.to_string()]),
                ..CsvSchema::new(date_column)
            };
            let table = TimeSeriesTable::load_csv(path, &schema)?;
            Ok(PriceSeries::from_table(&table, col)?)
        }
        None => Ok(PriceSeries::from_closes(crate::io::read_values(path)?)?),
    }
}

/// Day 0 has no previous close and is never a down day.
fn derived_downs(prices: &PriceSeries, limit: f64) -> Result<LabelSeries> {
    let mut downs = vec![false];
    downs.extend(daily_percentage_change(prices)?.into_iter().map(|e| e < limit));
    Ok(LabelSeries::from_bools(downs)?)
}

pub fn backtest(c: BacktestCmd, mut run: Run) -> Result<()> {
    let cfg = run.config.overlay(&c.strategy)?.resolve()?;
    let prices = load_prices(run.input(&c.prices)?, c.price_column.as_deref(), &c.date_column)?;
    let preds = read_predictions(run.input(&c.predictions)?)?;
    let downs = match &c.labels {
        Some(p) => read_labels(run.input(p)?)?,
        None => derived_downs(&prices, c.limit)?,
    };
    let mut out = OutDir::create(&c.out)?;
    let mut params = json!({
        "initial_shares": cfg.initial_shares,
        "sell_quantity": cfg.sell_quantity,
        "rebuy_window": cfg.rebuy_window,
        "down_labels": if c.labels.is_some() { "file".to_string() } else { format!("change < {}", c.limit) },
    });
    match &c.compare {
        None => {
            let p = run_backtest(&prices, &preds, &downs, &cfg)?;
            out.write_with("trajectory.csv", |w| Ok(p.write_csv(w)?))?;
            let summary = json!({
                "final_value": p.final_value(),
                "max_drawdown": p.max_drawdown(),
                "trades": p.trades,
            });
            out.write_json("summary.json", &summary)?;
            println!("final value {:.4}, max drawdown {:.4}", p.final_value(), p.max_drawdown());
        }
        Some(second) => {
            let preds_b = read_predictions(run.input(second)?)?;
            let cmp = compare_strategies(&prices, &preds, &preds_b, &downs, &cfg)?;
            out.write_with("trajectory.csv", |w| Ok(cmp.a.write_csv(w)?))?;
            out.write_with("trajectory_b.csv", |w| Ok(cmp.b.write_csv(w)?))?;
            out.write_with("comparison.csv", |w| Ok(cmp.write_csv(w)?))?;
            out.write_json("summary.json", &cmp.summary)?;
            println!(
                "final values {:.4} vs {:.4}",
                cmp.summary.final_value_a, cmp.summary.final_value_b
            );
            params["compare"] = json!(true);
        }
    }
    run.finish("backtest", params, out)?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct DemoCmd {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    epochs: Option<usize>,
    /// Length of the generated price series
    #[arg(long)]
    days: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

pub fn demo(c: DemoCmd, run: Run) -> Result<()> {
    let mut cfg = DemoConfig {
        seed: c.seed,
        ..DemoConfig::default()
    };
    if let Some(e) = c.epochs {
        cfg.train.epochs = e;
    }
    if let Some(d) = c.days {
        cfg.market.days = d;
    }
    let report = run_demo(&cfg)?;
    let mut out = OutDir::create(&c.out)?;
    out.write_json("demo_report.json", &report)?;
    out.write_with("comparison.csv", |w| Ok(report.comparison.write_csv(w)?))?;
    out.write_with("summary.csv", |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["objective", "epochs_selected", "test_tss", "test_wtss", "final_value"])?;
        for r in &report.runs {
            let get = |mode| {
                r.test_report
                    .get(vwskill_core::SkillScoreKind::Tss, mode)
                    .map(|v| v.to_string())
                    .unwrap_or_default()
            };
            csv.write_record([
                r.objective.clone(),
                r.selected_epochs.len().to_string(),
                get(MatrixMode::Quality),
                get(MatrixMode::ValueWeighted),
                r.final_value.to_string(),
            ])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    for r in &report.runs {
        println!(
            "{:<5} {} epochs, final value {:.2}",
            r.objective,
            r.selected_epochs.len(),
            r.final_value
        );
    }
    println!("buy and hold: {:.2}", report.buy_and_hold_value);
    let params = serde_json::to_value(&cfg)?;
    run.finish("demo", params, out)?;
    Ok(())
}

#[derive(Debug, Parser)]
pub struct ReplayCmd {
    /// A manifest.json written by an earlier run
    manifest: PathBuf,
    /// Write the replayed outputs here instead of the recorded directory
    #[arg(long)]
    out: Option<PathBuf>,
}

fn out_position(argv: &[String]) -> Option<(usize, bool)> {
    argv.iter().enumerate().find_map(|(i, a)| {
        if a == "--out" {
            Some((i + 1, false))
        } else if a.starts_with("--out=") {
            Some((i, true))
        } else {
            None
        }
    })
}

pub fn replay(c: ReplayCmd) -> Result<()> {
    let recorded = RunManifest::load(&c.manifest)?;
    let new_out = match &c.out {
        Some(p) if p.is_absolute() => Some(p.clone()),
        Some(p) => Some(std::env::current_dir()?.join(p)),
        None => None,
    };
    std::env::set_current_dir(&recorded.cwd)
        .with_context(|| format!("entering {}", recorded.cwd.display()))?;
    for input in &recorded.inputs {
        if sha256_file(Path::new(&input.path))? != input.sha256 {
            bail!("input {} changed since the recorded run", input.path);
        }
    }
    let mut argv = recorded.argv.clone();
    let Some((pos, inline)) = out_position(&argv) else {
        bail!("recorded command line has no --out");
    };
    if let Some(dir) = &new_out {
        argv[pos] = if inline {
            format!("--out={}", dir.display())
        } else {
            dir.display().to_string()
        };
    }
    let out_dir = PathBuf::from(argv[pos].trim_start_matches("--out="));
    let cli = Cli::try_parse_from(&argv)?;
    if matches!(cli.command, Command::Replay(_)) {
        bail!("a replay manifest cannot be replayed");
    }
    crate::run(cli, argv)?;

    let fresh = RunManifest::load(&out_dir.join(MANIFEST_NAME))?;
    let mismatched: Vec<String> = recorded
        .outputs
        .iter()
        .filter(|o| !fresh.outputs.contains(o))
        .map(|o| o.path.clone())
        .collect();
    if !mismatched.is_empty() || fresh.outputs.len() != recorded.outputs.len() {
        return Err(ReplayMismatch(mismatched).into());
    }
    println!("replay: {} outputs identical", fresh.outputs.len());
    Ok(())
}
