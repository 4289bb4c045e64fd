use std::path::PathBuf;

use anyhow::{bail, Result};
use chrono::{DateTime, Utc};
use clap::{Args, ValueEnum};
use serde_json::json;

use vwskill_core::data::{
    build_down_movement_dataset, build_exceedance_dataset, chronological_split, parse_timestamp,
    CsvSchema, Dataset, PriceSeries, SplitBoundaries, TimeSeriesTable,
};

use crate::io::OutDir;
use crate::manifest::Run;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Task {
    /// Next-day percentage change below `--limit`
    Down,
    /// `--target` above `--threshold` after `--horizon` steps
    Exceed,
}

#[derive(Debug, Args)]
pub struct PrepareCmd {
    /// Raw time-series CSV
    #[arg(long)]
    input: PathBuf,
    /// JSON schema (timestamp column, columns, missing markers, format)
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Timestamp column when no schema is given
    #[arg(long, default_value = "date")]
    timestamp_column: String,
    #[arg(long, value_enum)]
    task: Task,
    /// Observations per feature window
    #[arg(long, default_value_t = 5)]
    lookback: usize,
    #[arg(long, default_value = "close")]
    price_column: String,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    limit: f64,
    /// Feature columns, comma separated (all columns when absent)
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<String>>,
    #[arg(long)]
    target: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    threshold: Option<f64>,
    #[arg(long, default_value_t = 1)]
    horizon: usize,
    /// Train and validation end fractions
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [0.6, 0.8])]
    split: Vec<f64>,
    /// First validation timestamp; with --test-start replaces --split
    #[arg(long, requires = "test_start")]
    valid_start: Option<String>,
    #[arg(long)]
    test_start: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

fn instant(s: &str) -> Result<DateTime<Utc>> {
    parse_timestamp(s, None).map_err(|m| anyhow::anyhow!(m))
}

pub fn run(c: PrepareCmd, mut run: Run) -> Result<()> {
    let schema = match &c.schema {
        Some(p) => CsvSchema::from_json_file(run.input(p)?)?,
        None => CsvSchema::new(c.timestamp_column.clone()),
    };
    let table = TimeSeriesTable::load_csv(run.input(&c.input)?, &schema)?;
    let mut params = json!({ "lookback": c.lookback });
    let mut prices = None;
    let data = match c.task {
        Task::Down => {
            let p = PriceSeries::from_table(&table, &c.price_column)?;
            params["task"] = json!("down");
            params["limit"] = json!(c.limit);
            let d = build_down_movement_dataset(&p, c.lookback, c.limit)?;
            prices = Some(p);
            d
        }
        Task::Exceed => {
            let (Some(target), Some(threshold)) = (&c.target, c.threshold) else {
                bail!("--task exceed needs --target and --threshold");
            };
            let features = c.features.clone().unwrap_or_else(|| table.names().to_vec());
            params["task"] = json!("exceed");
            params["target"] = json!(target);
            params["threshold"] = json!(threshold);
            params["horizon"] = json!(c.horizon);
            params["features"] = json!(features);
            build_exceedance_dataset(&table, &features, c.lookback, target, threshold, c.horizon)?
        }
    };

    let boundaries = match (&c.valid_start, &c.test_start) {
        (Some(v), Some(t)) => SplitBoundaries::Times(instant(v)?, instant(t)?),
        _ => SplitBoundaries::Fractions(c.split[0], c.split[1]),
    };
    params["split"] = json!(boundaries);
    let split = chronological_split(data.len(), &boundaries, Some(&data.timestamps))?;

    let mut out = OutDir::create(&c.out)?;
    let parts: [(&str, Dataset); 3] = [
        ("train", data.slice(split.train.clone())?),
        ("valid", data.slice(split.valid.clone())?),
        ("test", data.slice(split.test.clone())?),
    ];
    let mut sizes = serde_json::Map::new();
    for (name, part) in &parts {
        out.write_with(&format!("{name}.csv"), |w| Ok(part.write_csv(w)?))?;
        sizes.insert(
            name.to_string(),
            json!({ "rows": part.len(), "events": part.labels.positives() }),
        );
    }
    if let Some(p) = &prices {
        // closes and observed downs of the test days, aligned for `backtest`
        let test = &parts[2].1;
        out.write_with("test_prices.csv", |w| {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(["date", "close"])?;
            for &d in &test.target_index {
                csv.write_record([p.dates()[d].to_rfc3339(), p.closes()[d].to_string()])?;
            }
            csv.flush()?;
            Ok(())
        })?;
        out.write_with("test_labels.csv", |w| {
            writeln!(w, "label")?;
            for v in test.labels.to_u8() {
                writeln!(w, "{v}")?;
            }
            Ok(())
        })?;
    }
    let summary = json!({
        "samples": data.len(),
        "dropped_windows": data.dropped_windows,
        "dropped_tail": data.dropped_tail,
        "missing_cells": table.missing_count(),
        "segments": sizes,
    });
    out.write_json("summary.json", &summary)?;
    println!(
        "{} samples ({} windows dropped): train {}, valid {}, test {}",
        data.len(),
        data.dropped_windows,
        parts[0].1.len(),
        parts[1].1.len(),
        parts[2].1.len()
    );
    run.finish("prepare", params, out)?;
    Ok(())
}
