//! Sell-on-predicted-down, rebuy-on-actual-down trading simulation.
//!
//! Day `d` runs in this order, all at the close of `d`:
//! 1. rebuy with all held cash if an actual down occurs inside the open
//!    window, or the rebuy deadline is reached;
//! 2. sell if a down movement is predicted for `d + 1`;
//! 3. record shares, cash and mark-to-market value.
//!
//! Proceeds of overlapping sales are pooled and rebought together at the
//! earliest pending deadline.

use std::io::Write;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::data::PriceSeries;
use crate::error::{Error, Result};
use crate::series::{LabelSeries, PredictionSeries};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub initial_shares: f64,
    pub sell_quantity: f64,
    /// A sale for predicted day `N` is rebought at the first actual down
    /// within `N .. N + rebuy_window`, else at day `N + rebuy_window`.
    pub rebuy_window: usize,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            initial_shares: 10.0,
            sell_quantity: 2.0,
            rebuy_window: 3,
        }
    }
}

impl StrategyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_shares.is_finite() && self.initial_shares >= 0.0) {
            return Err(Error::domain("initial shares must be a nonnegative number"));
        }
        if !(self.sell_quantity.is_finite() && self.sell_quantity > 0.0) {
            return Err(Error::domain("sell quantity must be positive"));
        }
        if self.sell_quantity > self.initial_shares {
            return Err(Error::domain(format!(
                "sell quantity {} exceeds initial shares {}",
                self.sell_quantity, self.initial_shares
            )));
        }
        if self.rebuy_window == 0 {
            return Err(Error::domain("rebuy window must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TradeKind {
    Sell,
    Buy,
    /// A sale was signalled but could not execute (no shares held, or the
    /// signal falls before the first day).
    SkippedSell,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trade {
    pub day: usize,
    pub kind: TradeKind,
    pub shares: f64,
    pub price: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DayRecord {
    pub date: DateTime<Utc>,
    pub shares: f64,
    pub cash: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    pub shares: f64,
    pub cash: f64,
    pub history: Vec<DayRecord>,
    pub trades: Vec<Trade>,
}

impl Portfolio {
    pub fn final_value(&self) -> f64 {
        self.history.last().map_or(0.0, |r| r.value)
    }

    pub fn values(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.value).collect()
    }

    /// Largest peak-to-trough loss as a fraction of the peak.
    pub fn max_drawdown(&self) -> f64 {
        let mut peak = f64::NEG_INFINITY;
        let mut worst = 0.0f64;
        for r in &self.history {
            peak = peak.max(r.value);
            if peak > 0.0 {
                worst = worst.max((peak - r.value) / peak);
            }
        }
        worst
    }

    /// CSV with columns `date,shares,cash,value`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["date", "shares", "cash", "value"])?;
        for r in &self.history {
            w.write_record([
                r.date.to_rfc3339(),
                r.shares.to_string(),
                r.cash.to_string(),
                r.value.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `predictions[d]` and `actual_down[d]` refer to day `d` of `prices`.
pub fn run_backtest(
    prices: &PriceSeries,
    predictions: &PredictionSeries,
    actual_down: &LabelSeries,
    cfg: &StrategyConfig,
) -> Result<Portfolio> {
    cfg.validate()?;
    Error::check_aligned("backtest predictions", prices.len(), predictions.len())?;
    Error::check_aligned("backtest labels", prices.len(), actual_down.len())?;
    let closes = prices.closes();
    let n = closes.len();

    let mut shares = cfg.initial_shares;
    let mut cash = 0.0;
    // earliest open sale: first day a down counts, and the forced rebuy day
    let mut window: Option<(usize, usize)> = None;
    let mut history = Vec::with_capacity(n);
    let mut trades = Vec::new();

    if n > 0 && predictions[0] {
        log::info!("sale signalled for day 0 has no previous close; skipped");
        trades.push(Trade {
            day: 0,
            kind: TradeKind::SkippedSell,
            shares: 0.0,
            price: closes[0],
        });
    }

    for d in 0..n {
        let price = closes[d];
        if let Some((start, deadline)) = window {
            if (actual_down[d] && d >= start) || d >= deadline {
                let bought = cash / price;
                shares += bought;
                trades.push(Trade {
                    day: d,
                    kind: TradeKind::Buy,
                    shares: bought,
                    price,
                });
                cash = 0.0;
                window = None;
            }
        }

        if d + 1 < n && predictions[d + 1] {
            let qty = cfg.sell_quantity.min(shares);
            if qty > 0.0 {
                shares -= qty;
                cash += qty * price;
                trades.push(Trade {
                    day: d,
                    kind: TradeKind::Sell,
                    shares: qty,
                    price,
                });
                let (start, deadline) = (d + 1, d + 1 + cfg.rebuy_window);
                window = Some(match window {
                    Some((s, dl)) => (s.min(start), dl.min(deadline)),
                    None => (start, deadline),
                });
            } else {
                log::info!("sale on day {d} skipped: no shares held");
                trades.push(Trade {
                    day: d,
                    kind: TradeKind::SkippedSell,
                    shares: 0.0,
                    price,
                });
            }
        }

        history.push(DayRecord {
            date: prices.dates()[d],
            shares,
            cash,
            value: shares * price + cash,
        });
    }

    Ok(Portfolio {
        shares,
        cash,
        history,
        trades,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub final_value_a: f64,
    pub final_value_b: f64,
    pub max_drawdown_a: f64,
    pub max_drawdown_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: Portfolio,
    pub b: Portfolio,
    pub summary: ComparisonSummary,
}

impl Comparison {
    /// CSV with columns `date,value_a,value_b`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["date", "value_a", "value_b"])?;
        for (ra, rb) in self.a.history.iter().zip(&self.b.history) {
            w.write_record([ra.date.to_rfc3339(), ra.value.to_string(), rb.value.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn compare_strategies(
    prices: &PriceSeries,
    predictions_a: &PredictionSeries,
    predictions_b: &PredictionSeries,
    actual_down: &LabelSeries,
    cfg: &StrategyConfig,
) -> Result<Comparison> {
    let a = run_backtest(prices, predictions_a, actual_down, cfg)?;
    let b = run_backtest(prices, predictions_b, actual_down, cfg)?;
    let summary = ComparisonSummary {
        final_value_a: a.final_value(),
        final_value_b: b.final_value(),
        max_drawdown_a: a.max_drawdown(),
        max_drawdown_b: b.max_drawdown(),
    };
    Ok(Comparison { a, b, summary })
}
