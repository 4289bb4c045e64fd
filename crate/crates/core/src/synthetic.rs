//! Seeded synthetic market with bursty down days, and the full pipeline run
//! on it: features, training, calibration, selection, evaluation and
//! backtest, once per optimization objective.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::backtest::{compare_strategies, run_backtest, Comparison, StrategyConfig};
use crate::data::{build_down_movement_dataset, split_by_fraction, Dataset, PriceSeries, Standardizer};
use crate::ensemble::{self, EmptyPolicy, QualityLevel};
use crate::error::{Error, Result};
use crate::model::{snapshots_from_run, train, MlpConfig, TrainConfig};
use crate::scores::{Objective, ScoreReport, SkillScoreKind};
use crate::series::{LabelSeries, PredictionSeries, ProbabilitySeries};
use crate::thresholding::ThresholdSearch;
use crate::weights::WindowConfig;

/// Two-state Markov chain: an event starts with `p_start` and persists with
/// `p_stay`, giving clustered events.
pub fn bursty_events(n: usize, p_start: f64, p_stay: f64, rng: &mut impl Rng) -> Vec<bool> {
    let mut out = Vec::with_capacity(n);
    let mut state = false;
    for _ in 0..n {
        let p = if state { p_stay } else { p_start };
        state = rng.gen_bool(p);
        out.push(state);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketConfig {
    pub days: usize,
    pub start_price: f64,
    pub p_start: f64,
    pub p_stay: f64,
    /// Mean and spread of the daily percentage change on event days.
    pub event_change: (f64, f64),
    /// Same on ordinary days.
    pub calm_change: (f64, f64),
}

impl Default for MarketConfig {
    fn default() -> Self {
        Self {
            days: 800,
            start_price: 100.0,
            p_start: 0.06,
            p_stay: 0.55,
            event_change: (-2.5, 0.8),
            calm_change: (0.25, 0.6),
        }
    }
}

/// Closing prices whose daily changes are drawn from the event or calm
/// regime of a bursty event chain.
pub fn synthetic_prices(cfg: &MarketConfig, seed: u64) -> Result<PriceSeries> {
    if cfg.days < 2 {
        return Err(Error::domain("synthetic market needs at least two days"));
    }
    if !(0.0..=1.0).contains(&cfg.p_start) || !(0.0..=1.0).contains(&cfg.p_stay) {
        return Err(Error::domain("event probabilities must lie in [0, 1]"));
    }
    let normal = |(m, s): (f64, f64)| {
        Normal::new(m, s).map_err(|e| Error::domain(format!("change distribution: {e}")))
    };
    let event = normal(cfg.event_change)?;
    let calm = normal(cfg.calm_change)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let events = bursty_events(cfg.days - 1, cfg.p_start, cfg.p_stay, &mut rng);
    let mut closes = Vec::with_capacity(cfg.days);
    closes.push(cfg.start_price);
    for e in events {
        let change = if e { event.sample(&mut rng) } else { calm.sample(&mut rng) };
        // keep prices positive under extreme draws
        let change = change.max(-50.0);
        let last = *closes.last().unwrap();
        closes.push(last * (1.0 + change / 100.0));
    }
    PriceSeries::from_closes(closes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoConfig {
    pub seed: u64,
    pub market: MarketConfig,
    pub lookback: usize,
    pub down_limit: f64,
    pub split: (f64, f64),
    pub hidden: Vec<usize>,
    pub l2: Vec<f64>,
    pub train: TrainConfig,
    pub window: WindowConfig,
    pub search_range: (f64, f64),
    pub quality: QualityLevel,
    pub empty_policy: EmptyPolicy,
    pub strategy: StrategyConfig,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            market: MarketConfig::default(),
            lookback: 5,
            down_limit: -1.0,
            split: (0.6, 0.8),
            hidden: vec![16, 8],
            l2: vec![1e-3, 0.0, 0.0],
            train: TrainConfig {
                epochs: 50,
                learning_rate: 0.005,
                ..TrainConfig::default()
            },
            window: WindowConfig::default(),
            search_range: (0.0, 1.0),
            quality: QualityLevel::RelativeToMax(0.9),
            empty_policy: EmptyPolicy::BestEpoch,
            strategy: StrategyConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveRun {
    pub objective: String,
    pub selected_epochs: Vec<usize>,
    pub thresholds: Vec<(usize, f64)>,
    pub cutoff: Option<f64>,
    pub fallback_used: bool,
    pub validation_scores: Vec<(usize, Option<f64>)>,
    pub test_report: ScoreReport,
    pub test_predictions: Vec<u8>,
    pub final_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    pub config: DemoConfig,
    pub samples: usize,
    pub train_size: usize,
    pub valid_size: usize,
    pub test_size: usize,
    pub test_event_rate: f64,
    pub epoch_losses: Vec<f64>,
    /// Quality-optimized run first, value-weighted second.
    pub runs: Vec<ObjectiveRun>,
    pub buy_and_hold_value: f64,
    pub comparison: Comparison,
}

fn probs_by_epoch(
    states: &[crate::model::Mlp],
    x: &crate::model::FeatureMatrix,
) -> Result<BTreeMap<usize, ProbabilitySeries>> {
    states
        .iter()
        .enumerate()
        .map(|(j, net)| Ok((j + 1, net.predict_proba(x)?)))
        .collect()
}

pub fn run_demo(cfg: &DemoConfig) -> Result<DemoReport> {
    let prices = synthetic_prices(&cfg.market, cfg.seed)?;
    let data = build_down_movement_dataset(&prices, cfg.lookback, cfg.down_limit)?;
    let split = split_by_fraction(data.len(), cfg.split.0, cfg.split.1)?;
    let train_set = data.slice(split.train.clone())?;
    let valid_set = data.slice(split.valid.clone())?;
    let test_set = data.slice(split.test.clone())?;

    let scaler = Standardizer::fit(&train_set.features)?;
    let x_train = scaler.transform(&train_set.features)?;
    let x_valid = scaler.transform(&valid_set.features)?;
    let x_test = scaler.transform(&test_set.features)?;

    let mlp = MlpConfig::with_hidden(
        x_train.cols(),
        &cfg.hidden,
        cfg.l2.clone(),
        cfg.seed.wrapping_add(1),
    );
    let tcfg = TrainConfig {
        shuffle_seed: cfg.seed.wrapping_add(2),
        ..cfg.train.clone()
    };
    let run = train(&x_train, &train_set.labels, &mlp, &tcfg)?;
    let snapshots = snapshots_from_run(&run, &x_train, &x_valid)?;
    let test_probs = probs_by_epoch(&run.states, &x_test)?;

    let (test_prices, test_down) = test_market(&prices, &test_set)?;
    let mut runs = Vec::new();
    let mut predictions = Vec::new();
    for objective in [
        Objective::quality(SkillScoreKind::Tss),
        Objective::value_weighted(SkillScoreKind::Tss, cfg.window),
    ] {
        let search = ThresholdSearch::new(cfg.search_range.0, cfg.search_range.1, objective)?;
        let (clf, _, selection) = ensemble::fit(
            &snapshots,
            &train_set.labels,
            &valid_set.labels,
            &search,
            cfg.quality,
            cfg.empty_policy,
        )?;
        let pred = ensemble::predict(&clf, &test_probs)?;
        let report = ensemble::evaluate(&pred, &test_set.labels, cfg.window)?;
        let value = run_backtest(&test_prices, &pred, &test_down, &cfg.strategy)?.final_value();
        runs.push(ObjectiveRun {
            objective: objective.name(),
            selected_epochs: selection.selected.clone(),
            thresholds: clf.members().iter().map(|m| (m.epoch, m.tau_star)).collect(),
            cutoff: selection.cutoff,
            fallback_used: selection.fallback_used,
            validation_scores: selection.valid_scores.clone(),
            test_report: report,
            test_predictions: pred.to_u8(),
            final_value: value,
        });
        predictions.push(pred);
    }
    let comparison = compare_strategies(
        &test_prices,
        &predictions[0],
        &predictions[1],
        &test_down,
        &cfg.strategy,
    )?;
    let hold = PredictionSeries::from_bools(vec![false; test_prices.len()]);
    let buy_and_hold_value =
        run_backtest(&test_prices, &hold, &test_down, &cfg.strategy)?.final_value();

    Ok(DemoReport {
        config: cfg.clone(),
        samples: data.len(),
        train_size: train_set.len(),
        valid_size: valid_set.len(),
        test_size: test_set.len(),
        test_event_rate: test_set.labels.positives() as f64 / test_set.len() as f64,
        epoch_losses: run.epoch_losses,
        runs,
        buy_and_hold_value,
        comparison,
    })
}

/// Prices and down labels of the test days, in the same order as the test
/// samples.
fn test_market(prices: &PriceSeries, test: &Dataset) -> Result<(PriceSeries, LabelSeries)> {
    let first = test.target_index[0];
    let last = *test.target_index.last().unwrap();
    if test.target_index.iter().enumerate().any(|(i, &d)| d != first + i) {
        return Err(Error::domain("test days are not consecutive"));
    }
    Ok((prices.slice(first..last + 1)?, test.labels.clone()))
}
