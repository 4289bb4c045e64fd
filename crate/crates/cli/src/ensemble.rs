use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde_json::json;

use vwskill_core::data::{Dataset, Standardizer};
use vwskill_core::ensemble::{
    self, assemble_snapshots, calibrate_epochs, select_epochs_with_policy, EnsembleClassifier,
    EpochSnapshot, SnapshotMatrix, Split,
};
use vwskill_core::model::{train, ModelFile};
use vwskill_core::{LabelSeries, ProbabilitySeries};

use crate::io::{read_labels, OutDir};
use crate::manifest::Run;
use crate::settings::{SearchArgs, SelectArgs, TrainArgs, WindowArgs};

#[derive(Debug, Args)]
pub struct EnsembleCmd {
    /// Training features and labels (as written by `prepare`)
    #[arg(long, requires_all = ["valid", "test"], conflicts_with = "snapshots")]
    train: Option<PathBuf>,
    #[arg(long)]
    valid: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    /// Directory holding train.csv, valid.csv and test.csv snapshot matrices
    #[arg(long, requires_all = ["labels_train", "labels_valid"])]
    snapshots: Option<PathBuf>,
    #[arg(long)]
    labels_train: Option<PathBuf>,
    #[arg(long)]
    labels_valid: Option<PathBuf>,
    /// Test labels; without them only predictions are written
    #[arg(long)]
    labels_test: Option<PathBuf>,
    #[command(flatten)]
    search: SearchArgs,
    #[command(flatten)]
    window: WindowArgs,
    #[command(flatten)]
    select: SelectArgs,
    #[command(flatten)]
    training: TrainArgs,
    #[arg(long)]
    out: PathBuf,
}

struct Inputs {
    snapshots: Vec<EpochSnapshot>,
    test_probs: BTreeMap<usize, ProbabilitySeries>,
    y_train: LabelSeries,
    y_valid: LabelSeries,
    y_test: Option<LabelSeries>,
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Dataset::read_csv(f).with_context(|| format!("reading {}", path.display()))
}

fn read_matrix(path: &Path, split: Split) -> Result<SnapshotMatrix> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let m = SnapshotMatrix::read_csv(BufReader::new(f))
        .with_context(|| format!("reading {}", path.display()))?;
    anyhow::ensure!(
        m.split == split,
        "{} holds {} forecasts, expected {split}",
        path.display(),
        m.split
    );
    Ok(m)
}

pub fn run(c: EnsembleCmd, mut run: Run) -> Result<()> {
    let window = run.config.overlay(&c.window)?.resolve()?;
    let search = run.config.overlay(&c.search)?.resolve(window)?;
    let select = run.config.select(&c.select)?;
    let level = select.level()?;
    let policy = select.policy();
    let training = run.config.overlay(&c.training)?;

    let mut out = OutDir::create(&c.out)?;
    let mut params = json!({
        "objective": search.objective.name(),
        "k": window.k(),
        "a": search.lo(),
        "b": search.hi(),
        "quality_level": level,
        "empty_policy": policy,
    });

    let inputs = if let Some(dir) = &c.snapshots {
        params["source"] = json!("snapshots");
        let train_m = read_matrix(run.input(&dir.join("train.csv"))?, Split::Train)?;
        let valid_m = read_matrix(run.input(&dir.join("valid.csv"))?, Split::Valid)?;
        let test_m = read_matrix(run.input(&dir.join("test.csv"))?, Split::Test)?;
        let y_test = match &c.labels_test {
            Some(p) => Some(read_labels(run.input(p)?)?),
            None => None,
        };
        Inputs {
            snapshots: assemble_snapshots(&train_m, &valid_m)?,
            test_probs: test_m.by_epoch(),
            y_train: read_labels(run.input(c.labels_train.as_deref().unwrap())?)?,
            y_valid: read_labels(run.input(c.labels_valid.as_deref().unwrap())?)?,
            y_test,
        }
    } else {
        let (Some(tr), Some(va), Some(te)) = (&c.train, &c.valid, &c.test) else {
            anyhow::bail!("give either --train/--valid/--test or --snapshots");
        };
        let train_set = read_dataset(run.input(tr)?)?;
        let valid_set = read_dataset(run.input(va)?)?;
        let test_set = read_dataset(run.input(te)?)?;

        let scaler = Standardizer::fit(&train_set.features)?;
        let x_train = scaler.transform(&train_set.features)?;
        let x_valid = scaler.transform(&valid_set.features)?;
        let x_test = scaler.transform(&test_set.features)?;
        let mlp = training.mlp_config(x_train.cols())?;
        let tcfg = training.train_config();
        params["source"] = json!("features");
        params["network"] = json!(mlp);
        params["training"] = json!(tcfg);

        let result = train(&x_train, &train_set.labels, &mlp, &tcfg)?;
        out.write_with("losses.csv", |w| {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(["epoch", "loss"])?;
            for (j, l) in result.epoch_losses.iter().enumerate() {
                csv.write_record([(j + 1).to_string(), l.to_string()])?;
            }
            csv.flush()?;
            Ok(())
        })?;

        let mut rows = [Vec::new(), Vec::new(), Vec::new()];
        for (j, net) in result.states.iter().enumerate() {
            for (slot, x) in rows.iter_mut().zip([&x_train, &x_valid, &x_test]) {
                slot.push((j + 1, net.predict_proba(x)?));
            }
        }
        let [tr_rows, va_rows, te_rows] = rows;
        let train_m = SnapshotMatrix::new(Split::Train, tr_rows)?;
        let valid_m = SnapshotMatrix::new(Split::Valid, va_rows)?;
        let test_m = SnapshotMatrix::new(Split::Test, te_rows)?;
        for m in [&train_m, &valid_m, &test_m] {
            out.write_with(&format!("snapshots/{}.csv", m.split), |w| Ok(m.write_csv(w)?))?;
        }
        for (j, net) in result.states.iter().enumerate() {
            let file = ModelFile::new(net, Some(scaler.clone()));
            out.write_json(&format!("models/epoch_{}.json", j + 1), &file)?;
        }
        Inputs {
            snapshots: assemble_snapshots(&train_m, &valid_m)?,
            test_probs: test_m.by_epoch(),
            y_train: train_set.labels,
            y_valid: valid_set.labels,
            y_test: Some(test_set.labels),
        }
    };

    let mut calibrated = calibrate_epochs(&inputs.snapshots, &inputs.y_train, &search)?;
    let selection = select_epochs_with_policy(
        &calibrated,
        &inputs.y_valid,
        &search.objective,
        level,
        policy,
    )?;
    selection.annotate(&mut calibrated);
    let clf = EnsembleClassifier::from_selection(&calibrated, &selection, search.objective)?;
    let predictions = ensemble::predict(&clf, &inputs.test_probs)?;

    out.write_with("epochs.csv", |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["epoch", "tau_star", "train_score", "valid_score", "selected"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for s in &calibrated {
            let selected = selection.selected.contains(&s.epoch);
            csv.write_record([
                s.epoch.to_string(),
                opt(s.tau_star),
                opt(s.train_score),
                opt(s.valid_score),
                u8::from(selected).to_string(),
            ])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    out.write_json(
        "selection.json",
        &json!({
            "objective": search.objective.name(),
            "selected": selection.selected,
            "cutoff": selection.cutoff,
            "fallback_used": selection.fallback_used,
            "members": clf.members(),
        }),
    )?;
    out.write_with("predictions.csv", |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["index", "prediction"])?;
        for (i, p) in predictions.to_u8().iter().enumerate() {
            csv.write_record([i.to_string(), p.to_string()])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    println!(
        "{} of {} epochs selected ({})",
        selection.selected.len(),
        calibrated.len(),
        search.objective.name()
    );
    if let Some(y_test) = &inputs.y_test {
        let report = ensemble::evaluate(&predictions, y_test, window)?;
        out.write_json("evaluation.json", &report)?;
        out.write_with("evaluation.csv", |w| Ok(report.write_csv(w)?))?;
        for e in &report.scores {
            if let Some(v) = e.value {
                let prefix = if e.mode == vwskill_core::MatrixMode::ValueWeighted { "w" } else { "" };
                let name = format!("{prefix}{}", e.kind);
                println!("{name:<5} {v:.4}");
            }
        }
    }
    run.finish("ensemble", params, out)?;
    Ok(())
}
