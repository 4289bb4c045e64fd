//! Optimal binarization threshold for a probabilistic forecast.
//!
//! A score of `p > tau` is piecewise constant in `tau`, changing only where
//! `tau` crosses one of the forecast values. The search therefore evaluates
//! the interval ends plus the midpoints between consecutive distinct
//! forecast values (clipped to the interval), which reaches every achievable
//! binarization without a grid resolution parameter.
//!
//! Candidates are swept in ascending order and the confusion matrix is
//! updated incrementally as forecasts drop below the threshold. Value weights
//! are kept as integer class tallies, so every candidate's matrix is
//! bit-identical to one computed from scratch.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scores::{score, Objective};
use crate::series::{
    apply_threshold, ConfusionMatrix, LabelSeries, MatrixMode, ProbabilitySeries,
};
use crate::weights::{error_tallies, matrix_from_tallies, phi_class, psi_class, WeightClass};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSearch {
    lo: f64,
    hi: f64,
    pub objective: Objective,
}

impl ThresholdSearch {
    pub fn new(lo: f64, hi: f64, objective: Objective) -> Result<Self> {
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::domain(format!(
                "threshold interval [{lo}, {hi}] must satisfy 0 <= a < b <= 1"
            )));
        }
        Ok(Self { lo, hi, objective })
    }

    /// Full interval `[0, 1]`.
    pub fn full(objective: Objective) -> Self {
        Self {
            lo: 0.0,
            hi: 1.0,
            objective,
        }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    /// Candidate thresholds for `probs`, ascending and without duplicates.
    pub fn candidates(&self, probs: &ProbabilitySeries) -> Vec<f64> {
        let mut values = probs.as_slice().to_vec();
        values.sort_by(f64::total_cmp);
        values.dedup();
        let mut out = Vec::with_capacity(values.len() + 2);
        out.push(self.lo);
        out.extend(
            values
                .windows(2)
                .map(|w| (0.5 * (w[0] + w[1])).clamp(self.lo, self.hi)),
        );
        out.push(self.hi);
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub tau_star: f64,
    pub best_score: f64,
    pub candidates_evaluated: usize,
}

/// Incrementally maintained matrix of `probs > tau` against `y` as `tau`
/// increases.
struct Sweep<'a> {
    y: &'a [bool],
    probs: &'a [f64],
    /// Sample indices by ascending probability.
    order: Vec<usize>,
    cursor: usize,
    pred: Vec<bool>,
    k: usize,
    weighted: bool,
    tp: u64,
    fp: u64,
    fn_: u64,
    tn: u64,
    fp_tally: crate::weights::WeightTally,
    fn_tally: crate::weights::WeightTally,
    fn_class: Vec<Option<WeightClass>>,
    dirty: Vec<usize>,
}

impl<'a> Sweep<'a> {
    fn new(y: &'a [bool], probs: &'a [f64], tau: f64, objective: &Objective) -> Self {
        let k = objective.window.k();
        let weighted = objective.mode == MatrixMode::ValueWeighted;
        let mut order: Vec<usize> = (0..probs.len()).collect();
        order.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]).then(a.cmp(&b)));
        let pred: Vec<bool> = probs.iter().map(|&v| v > tau).collect();
        let cursor = order.partition_point(|&i| probs[i] <= tau);

        let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
        for (&yi, &pi) in y.iter().zip(&pred) {
            match (yi, pi) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => tn += 1,
            }
        }
        let (fp_tally, fn_tally) = error_tallies(y, &pred, k);
        let fn_class = (0..y.len())
            .map(|i| (weighted && y[i] && !pred[i]).then(|| phi_class(&pred, i, k)))
            .collect();
        Self {
            y,
            probs,
            order,
            cursor,
            pred,
            k,
            weighted,
            tp,
            fp,
            fn_,
            tn,
            fp_tally,
            fn_tally,
            fn_class,
            dirty: Vec::new(),
        }
    }

    /// Moves the threshold up to `tau`, switching off every forecast `<= tau`.
    fn advance(&mut self, tau: f64) {
        let n = self.y.len();
        self.dirty.clear();
        while self.cursor < self.order.len() && self.probs[self.order[self.cursor]] <= tau {
            let i = self.order[self.cursor];
            self.cursor += 1;
            if self.y[i] {
                self.tp -= 1;
                self.fn_ += 1;
            } else {
                self.fp -= 1;
                self.tn += 1;
                if self.weighted {
                    self.fp_tally.remove(psi_class(self.y, i, self.k));
                }
            }
            if self.weighted {
                let lo = i.saturating_sub(self.k);
                let hi = (i + self.k).min(n - 1);
                for j in lo..=hi {
                    if let Some(c) = self.fn_class[j].take() {
                        self.fn_tally.remove(c);
                    }
                    self.dirty.push(j);
                }
            }
            self.pred[i] = false;
        }
        if self.weighted {
            for idx in 0..self.dirty.len() {
                let j = self.dirty[idx];
                if self.y[j] && !self.pred[j] && self.fn_class[j].is_none() {
                    let c = phi_class(&self.pred, j, self.k);
                    self.fn_tally.add(c);
                    self.fn_class[j] = Some(c);
                }
            }
        }
    }

    fn matrix(&self) -> ConfusionMatrix {
        if self.weighted {
            matrix_from_tallies(self.tp, self.tn, &self.fp_tally, &self.fn_tally)
        } else {
            ConfusionMatrix::from_counts(self.tp, self.fp, self.fn_, self.tn)
        }
    }
}

/// Score of `probs > tau` for every candidate threshold, ascending in `tau`.
/// Undefined scores are `None`.
pub fn score_curve(
    probs: &ProbabilitySeries,
    y: &LabelSeries,
    search: &ThresholdSearch,
) -> Result<Vec<(f64, Option<f64>)>> {
    Error::check_aligned("threshold search", probs.len(), y.len())?;
    let candidates = search.candidates(probs);
    let objective = &search.objective;
    let mut sweep = Sweep::new(y.as_slice(), probs.as_slice(), candidates[0], objective);
    let mut out = Vec::with_capacity(candidates.len());
    for &tau in &candidates {
        sweep.advance(tau);
        out.push((tau, score(objective.kind, &sweep.matrix()).ok()));
    }
    Ok(out)
}

/// The threshold in `[a, b]` maximizing the search objective; ties go to the
/// smallest threshold.
pub fn optimize_threshold(
    probs: &ProbabilitySeries,
    y: &LabelSeries,
    search: &ThresholdSearch,
) -> Result<ThresholdResult> {
    let curve = score_curve(probs, y, search)?;
    let mut best: Option<(f64, f64)> = None;
    for &(tau, s) in &curve {
        if let Some(s) = s {
            if best.map_or(true, |(_, b)| s > b) {
                best = Some((tau, s));
            }
        }
    }
    let (tau_star, best_score) = best.ok_or(Error::NoFeasibleThreshold)?;
    debug_assert_eq!(
        search
            .objective
            .evaluate(y, &apply_threshold(probs, tau_star)?)
            .ok(),
        Some(best_score)
    );
    Ok(ThresholdResult {
        tau_star,
        best_score,
        candidates_evaluated: curve.len(),
    })
}

/// CSV with columns `tau,score`; undefined scores are left empty.
pub fn write_curve_csv<W: Write>(curve: &[(f64, Option<f64>)], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["tau", "score"])?;
    for (tau, s) in curve {
        w.write_record([tau.to_string(), s.map(|v| v.to_string()).unwrap_or_default()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scores::SkillScoreKind;
    use crate::weights::WindowConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn probs(v: &[f64]) -> ProbabilitySeries {
        ProbabilitySeries::new(v.to_vec()).unwrap()
    }

    fn labels(v: &[u8]) -> LabelSeries {
        LabelSeries::new(v.to_vec()).unwrap()
    }

    /// Every binarization reachable on `[lo, hi]` starts at `lo` or at a
    /// forecast value inside the interval.
    fn brute_force(
        p: &ProbabilitySeries,
        y: &LabelSeries,
        search: &ThresholdSearch,
    ) -> Option<f64> {
        let mut taus = vec![search.lo(), search.hi()];
        taus.extend(
            p.as_slice()
                .iter()
                .copied()
                .filter(|v| (search.lo()..=search.hi()).contains(v)),
        );
        taus.iter()
            .filter_map(|&t| {
                search
                    .objective
                    .evaluate(y, &apply_threshold(p, t).unwrap())
                    .ok()
            })
            .reduce(f64::max)
    }

    #[test]
    fn separable_reaches_one() {
        let p = probs(&[0.1, 0.2, 0.05, 0.8, 0.9, 0.95]);
        let y = labels(&[0, 0, 0, 1, 1, 1]);
        let r = optimize_threshold(&p, &y, &ThresholdSearch::full(Objective::quality(SkillScoreKind::Tss)))
            .unwrap();
        assert_eq!(r.best_score, 1.0);
        assert_eq!(r.tau_star, 0.5);
        assert!(r.tau_star > 0.2 && r.tau_star < 0.8);
    }

    #[test]
    fn monotone_alignment() {
        let p = probs(&[0.1, 0.4, 0.6, 0.9]);
        let y = labels(&[0, 0, 1, 1]);
        for name in ["tss", "wtss", "csi", "hss", "acc"] {
            let search = ThresholdSearch::full(name.parse().unwrap());
            let r = optimize_threshold(&p, &y, &search).unwrap();
            assert_eq!(r.best_score, 1.0, "{name}");
        }
    }

    #[test]
    fn constant_probs_flat_curve() {
        let p = probs(&[0.4; 6]);
        let y = labels(&[0, 1, 0, 1, 0, 0]);
        let curve = score_curve(&p, &y, &ThresholdSearch::full(Objective::quality(SkillScoreKind::Acc)))
            .unwrap();
        assert_eq!(curve.len(), 2);
        let mut distinct: Vec<f64> = curve.iter().filter_map(|c| c.1).collect();
        distinct.dedup();
        assert!(distinct.len() <= 2);
    }

    #[test]
    fn undefined_everywhere() {
        // no events: TSS is undefined for every threshold
        let p = probs(&[0.1, 0.7]);
        let y = labels(&[0, 0]);
        let search = ThresholdSearch::full(Objective::quality(SkillScoreKind::Tss));
        assert!(matches!(
            optimize_threshold(&p, &y, &search),
            Err(Error::NoFeasibleThreshold)
        ));
        assert!(score_curve(&p, &y, &search)
            .unwrap()
            .iter()
            .all(|c| c.1.is_none()));
    }

    #[test]
    fn interval_validation() {
        let o = Objective::quality(SkillScoreKind::Tss);
        assert!(ThresholdSearch::new(0.5, 0.5, o).is_err());
        assert!(ThresholdSearch::new(-0.1, 0.5, o).is_err());
        assert!(ThresholdSearch::new(0.2, 1.1, o).is_err());
        assert!(ThresholdSearch::new(0.2, 0.8, o).is_ok());
    }

    #[test]
    fn candidates_are_clipped_and_sorted() {
        let o = Objective::quality(SkillScoreKind::Tss);
        let s = ThresholdSearch::new(0.3, 0.6, o).unwrap();
        let c = s.candidates(&probs(&[0.1, 0.2, 0.5, 0.9]));
        assert_eq!(c, vec![0.3, 0.35, 0.6]);
    }

    #[test]
    fn curve_matches_direct_scoring() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for name in ["tss", "wtss", "whss", "wcsi"] {
            let p: Vec<f64> = (0..10).map(|_| (rng.gen_range(0..8) as f64) / 8.0).collect();
            let y: Vec<u8> = (0..10).map(|i| u8::from(i % 3 == 0)).collect();
            let (p, y) = (probs(&p), labels(&y));
            let obj: Objective = name.parse().unwrap();
            let search = ThresholdSearch::full(obj.with_window(WindowConfig::new(2).unwrap()));
            for (tau, s) in score_curve(&p, &y, &search).unwrap() {
                let direct = search.objective.evaluate(&y, &apply_threshold(&p, tau).unwrap()).ok();
                assert_eq!(s, direct, "{name} at {tau}");
            }
        }
    }

    #[test]
    fn random_instances_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..300 {
            let n = rng.gen_range(1..=30);
            let p: Vec<f64> = (0..n).map(|_| (rng.gen_range(0..=20) as f64) / 20.0).collect();
            let y: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(0.3))).collect();
            let (p, y) = (probs(&p), labels(&y));
            let name = ["tss", "wtss", "hss", "whss", "csi", "wcsi", "acc", "wacc"][trial % 8];
            let k = WindowConfig::new(rng.gen_range(1..=4)).unwrap();
            let lo = rng.gen_range(0.0..0.5);
            let hi = rng.gen_range(0.5..=1.0);
            let search = ThresholdSearch::new(lo, hi, name.parse::<Objective>().unwrap().with_window(k)).unwrap();
            let expected = brute_force(&p, &y, &search);
            match optimize_threshold(&p, &y, &search) {
                Ok(r) => {
                    assert_eq!(Some(r.best_score), expected);
                    assert!(r.tau_star >= lo && r.tau_star <= hi);
                }
                Err(Error::NoFeasibleThreshold) => assert_eq!(expected, None),
                Err(e) => panic!("{e}"),
            }
        }
    }

    #[test]
    fn csv_output() {
        let mut buf = Vec::new();
        write_curve_csv(&[(0.0, Some(0.5)), (1.0, None)], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "tau,score\n0,0.5\n1,\n");
    }
}
