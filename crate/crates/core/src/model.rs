//! Feedforward binary classifier trained with Adam on binary cross-entropy,
//! recording its outputs after every epoch.
//!
//! Hidden layers use ReLU, the output unit a sigmoid. Parameters live in one
//! flat vector (per layer: the `out x in` weight matrix row-major, then the
//! bias), which keeps the optimizer and gradient checks simple.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Standardizer;
use crate::ensemble::EpochSnapshot;
use crate::error::{Error, Result};
use crate::series::{LabelSeries, ProbabilitySeries};

/// Outputs are clamped to `[PROB_EPS, 1 - PROB_EPS]`.
pub const PROB_EPS: f64 = 1e-7;

/// Dense row-major `rows x cols` matrix of finite features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::domain(format!(
                "feature matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!(
                "non-finite feature at row {}, column {}",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::domain(format!(
                    "feature row {i} has {} values, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    /// Input width, hidden widths, then 1.
    pub layer_sizes: Vec<usize>,
    /// L2 penalty per weight layer (biases are not penalized).
    pub l2_per_layer: Vec<f64>,
    pub seed: u64,
}

impl MlpConfig {
    pub const DEFAULT_HIDDEN: [usize; 7] = [32, 32, 32, 32, 16, 16, 8];

    /// Seven ReLU hidden layers with an L2 penalty of 0.01 on the first two
    /// weight layers.
    pub fn deep(inputs: usize, seed: u64) -> Self {
        let mut l2 = vec![0.0; Self::DEFAULT_HIDDEN.len() + 1];
        l2[0] = 0.01;
        l2[1] = 0.01;
        Self::with_hidden(inputs, &Self::DEFAULT_HIDDEN, l2, seed)
    }

    pub fn with_hidden(inputs: usize, hidden: &[usize], l2_per_layer: Vec<f64>, seed: u64) -> Self {
        let mut layer_sizes = Vec::with_capacity(hidden.len() + 2);
        layer_sizes.push(inputs);
        layer_sizes.extend_from_slice(hidden);
        layer_sizes.push(1);
        Self {
            layer_sizes,
            l2_per_layer,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::domain("network needs at least an input and an output layer"));
        }
        if self.layer_sizes.iter().any(|&w| w == 0) {
            return Err(Error::domain("layer widths must be positive"));
        }
        if *self.layer_sizes.last().unwrap() != 1 {
            return Err(Error::domain("output layer must have width 1"));
        }
        if self.l2_per_layer.len() != self.layer_sizes.len() - 1 {
            return Err(Error::domain(format!(
                "{} L2 coefficients given for {} weight layers",
                self.l2_per_layer.len(),
                self.layer_sizes.len() - 1
            )));
        }
        if self.l2_per_layer.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
            return Err(Error::domain("L2 coefficients must be finite and nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            learning_rate: 0.001,
            batch_size: 72,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            shuffle_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::domain("at least one epoch is required"));
        }
        if self.batch_size == 0 {
            return Err(Error::domain("batch size must be positive"));
        }
        // zero is allowed: it freezes the initial network
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::domain("learning rate must be finite and nonnegative"));
        }
        for (name, b) in [("beta1", self.adam_beta1), ("beta2", self.adam_beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::domain(format!("Adam {name} must lie in (0, 1)")));
            }
        }
        if !(self.adam_epsilon > 0.0) {
            return Err(Error::domain("Adam epsilon must be positive"));
        }
        Ok(())
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Network state: layer widths and the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

impl Mlp {
    fn param_count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    /// Weights uniform in `±sqrt(6 / fan_in)`, biases zero.
    pub fn init(cfg: &MlpConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut params = Vec::with_capacity(Self::param_count(&cfg.layer_sizes));
        for w in cfg.layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / fan_in as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| rng.gen_range(-limit..limit)));
            params.extend(std::iter::repeat(0.0).take(fan_out));
        }
        Ok(Self {
            sizes: cfg.layer_sizes.clone(),
            params,
        })
    }

    pub fn from_params(sizes: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&w| w == 0) || *sizes.last().unwrap() != 1 {
            return Err(Error::domain(format!("invalid layer sizes {sizes:?}")));
        }
        let expected = Self::param_count(&sizes);
        if params.len() != expected {
            return Err(Error::domain(format!(
                "layer sizes {sizes:?} need {expected} parameters, got {}",
                params.len()
            )));
        }
        Ok(Self { sizes, params })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn inputs(&self) -> usize {
        self.sizes[0]
    }

    fn layers(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        // (offset, fan_in, fan_out)
        let mut offset = 0;
        self.sizes.windows(2).map(move |w| {
            let o = offset;
            offset += w[0] * w[1] + w[1];
            (o, w[0], w[1])
        })
    }

    /// Pre-activations of every layer for one input.
    fn pre_activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let n_layers = self.sizes.len() - 1;
        let mut out = Vec::with_capacity(n_layers);
        let mut act: Vec<f64> = x.to_vec();
        for (l, (off, fan_in, fan_out)) in self.layers().enumerate() {
            let w = &self.params[off..off + fan_in * fan_out];
            let b = &self.params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
            let z: Vec<f64> = (0..fan_out)
                .map(|j| {
                    let row = &w[j * fan_in..(j + 1) * fan_in];
                    row.iter().zip(&act).fold(b[j], |s, (wi, ai)| s + wi * ai)
                })
                .collect();
            if l + 1 < n_layers {
                act = z.iter().map(|&v| v.max(0.0)).collect();
            }
            out.push(z);
        }
        out
    }

    fn check_width(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.inputs() {
            return Err(Error::domain(format!(
                "input has {} features, network expects {}",
                x.len(),
                self.inputs()
            )));
        }
        Ok(())
    }

    /// Which hidden ReLU units are active (`z > 0`) for one input, layer by
    /// layer. The loss is smooth in the parameters as long as this pattern
    /// does not change.
    pub fn active_units(&self, x: &[f64]) -> Result<Vec<bool>> {
        self.check_width(x)?;
        let zs = self.pre_activations(x);
        Ok(zs[..zs.len() - 1].iter().flatten().map(|&z| z > 0.0).collect())
    }

    /// Output probability, clamped away from 0 and 1.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_width(x)?;
        let z = self.pre_activations(x).last().unwrap()[0];
        Ok(sigmoid(z).clamp(PROB_EPS, 1.0 - PROB_EPS))
    }

    pub fn predict_proba(&self, x: &FeatureMatrix) -> Result<ProbabilitySeries> {
        if x.rows() == 0 {
            return Err(Error::domain("no samples to score"));
        }
        let probs = x.iter_rows().map(|r| self.forward(r)).collect::<Result<_>>()?;
        ProbabilitySeries::new(probs)
    }

    /// Mean binary cross-entropy over the batch plus `sum_l l2[l] * ||W_l||^2`,
    /// and its exact gradient in the flat parameter layout.
    pub fn loss_and_gradient(
        &self,
        x: &FeatureMatrix,
        y: &[bool],
        l2_per_layer: &[f64],
    ) -> Result<(f64, Vec<f64>)> {
        if x.rows() == 0 {
            return Err(Error::domain("empty batch"));
        }
        Error::check_aligned("batch labels", x.rows(), y.len())?;
        Error::check_aligned("L2 coefficients", l2_per_layer.len(), self.sizes.len() - 1)?;
        let batch = x.rows() as f64;
        let layers: Vec<_> = self.layers().collect();
        let mut grad = vec![0.0; self.params.len()];
        let mut data_loss = 0.0;

        for (row, &target) in x.iter_rows().zip(y) {
            self.check_width(row)?;
            let zs = self.pre_activations(row);
            let z_out = zs.last().unwrap()[0];
            let s = sigmoid(z_out);
            let p = s.clamp(PROB_EPS, 1.0 - PROB_EPS);
            let t = if target { 1.0 } else { 0.0 };
            data_loss -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();

            // d loss / d z for the output unit; zero where the clamp is active
            let clamped = s < PROB_EPS || s > 1.0 - PROB_EPS;
            let mut delta = vec![if clamped { 0.0 } else { (s - t) / batch }];

            for l in (0..layers.len()).rev() {
                let (off, fan_in, fan_out) = layers[l];
                let input: Vec<f64> = if l == 0 {
                    row.to_vec()
                } else {
                    zs[l - 1].iter().map(|&v| v.max(0.0)).collect()
                };
                for j in 0..fan_out {
                    let gw = &mut grad[off + j * fan_in..off + (j + 1) * fan_in];
                    for (g, a) in gw.iter_mut().zip(&input) {
                        *g += delta[j] * a;
                    }
                    grad[off + fan_in * fan_out + j] += delta[j];
                }
                if l > 0 {
                    let w = &self.params[off..off + fan_in * fan_out];
                    let prev_z = &zs[l - 1];
                    delta = (0..fan_in)
                        .map(|i| {
                            if prev_z[i] > 0.0 {
                                (0..fan_out).map(|j| w[j * fan_in + i] * delta[j]).sum()
                            } else {
                                0.0
                            }
                        })
                        .collect();
                }
            }
        }

        let mut loss = data_loss / batch;
        for (&(off, fan_in, fan_out), &lambda) in layers.iter().zip(l2_per_layer) {
            if lambda == 0.0 {
                continue;
            }
            let w = &self.params[off..off + fan_in * fan_out];
            loss += lambda * w.iter().map(|v| v * v).sum::<f64>();
            for (g, v) in grad[off..off + fan_in * fan_out].iter_mut().zip(w) {
                *g += 2.0 * lambda * v;
            }
        }
        Ok((loss, grad))
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * grad[i];
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_epsilon);
        }
    }
}

/// Network state after each epoch, with the mean training loss of the epoch.
#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub states: Vec<Mlp>,
    pub epoch_losses: Vec<f64>,
}

/// Mini-batch Adam; the sample order is reshuffled every epoch from
/// `shuffle_seed` and a short final batch is kept.
pub fn train(
    x_train: &FeatureMatrix,
    y_train: &LabelSeries,
    mlp: &MlpConfig,
    cfg: &TrainConfig,
) -> Result<TrainingRun> {
    cfg.validate()?;
    mlp.validate()?;
    Error::check_aligned("training labels", x_train.rows(), y_train.len())?;
    if mlp.layer_sizes[0] != x_train.cols() {
        return Err(Error::domain(format!(
            "network expects {} features, training data has {}",
            mlp.layer_sizes[0],
            x_train.cols()
        )));
    }
    let positives = y_train.positives();
    if positives == 0 || positives == y_train.len() {
        return Err(Error::DegenerateData(
            "training labels contain a single class".into(),
        ));
    }

    let mut net = Mlp::init(mlp)?;
    let mut adam = Adam::new(net.params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    let mut order: Vec<usize> = (0..x_train.rows()).collect();
    let labels = y_train.as_slice();
    let mut states = Vec::with_capacity(cfg.epochs);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let xb = x_train.select_rows(chunk);
            let yb: Vec<bool> = chunk.iter().map(|&i| labels[i]).collect();
            let (loss, grad) = net.loss_and_gradient(&xb, &yb, &mlp.l2_per_layer)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence { epoch });
            }
            loss_sum += loss * chunk.len() as f64;
            adam.step(&mut net.params, &grad, cfg);
        }
        if net.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence { epoch });
        }
        let mean = loss_sum / x_train.rows() as f64;
        log::debug!("epoch {epoch}: loss {mean}");
        epoch_losses.push(mean);
        states.push(net.clone());
    }
    Ok(TrainingRun {
        states,
        epoch_losses,
    })
}

/// Trains for `cfg.epochs` epochs and returns, for each epoch `1..=N`, the
/// network's outputs on the training and validation features.
pub fn train_with_snapshots(
    x_train: &FeatureMatrix,
    y_train: &LabelSeries,
    x_valid: &FeatureMatrix,
    mlp: &MlpConfig,
    cfg: &TrainConfig,
) -> Result<Vec<EpochSnapshot>> {
    let run = train(x_train, y_train, mlp, cfg)?;
    snapshots_from_run(&run, x_train, x_valid)
}

pub fn snapshots_from_run(
    run: &TrainingRun,
    x_train: &FeatureMatrix,
    x_valid: &FeatureMatrix,
) -> Result<Vec<EpochSnapshot>> {
    run.states
        .iter()
        .enumerate()
        .map(|(j, net)| {
            Ok(EpochSnapshot::new(
                j + 1,
                net.predict_proba(x_train)?,
                net.predict_proba(x_valid)?,
            ))
        })
        .collect()
}

/// On-disk model: a trained network plus the feature standardization it
/// expects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub layer_sizes: Vec<usize>,
    pub params: Vec<f64>,
    pub standardizer: Option<Standardizer>,
}

impl ModelFile {
    pub const VERSION: u32 = 1;

    pub fn new(net: &Mlp, standardizer: Option<Standardizer>) -> Self {
        Self {
            format_version: Self::VERSION,
            layer_sizes: net.sizes.clone(),
            params: net.params.clone(),
            standardizer,
        }
    }

    pub fn into_mlp(self) -> Result<(Mlp, Option<Standardizer>)> {
        if self.format_version != Self::VERSION {
            return Err(Error::domain(format!(
                "unsupported model format version {}",
                self.format_version
            )));
        }
        Ok((Mlp::from_params(self.layer_sizes, self.params)?, self.standardizer))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::calibrate_epochs;
    use crate::scores::{Objective, SkillScoreKind};
    use crate::thresholding::ThresholdSearch;

    fn small_cfg(seed: u64) -> MlpConfig {
        MlpConfig::with_hidden(2, &[6, 4], vec![0.0; 3], seed)
    }

    fn separable(n: usize) -> (FeatureMatrix, LabelSeries) {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        while rows.len() < n {
            let a: f64 = rng.gen_range(-1.0..1.0);
            let b: f64 = rng.gen_range(-1.0..1.0);
            let margin = a + 0.5 * b;
            if margin.abs() < 0.2 {
                continue;
            }
            rows.push(vec![a, b]);
            y.push(u8::from(margin > 0.0));
        }
        (
            FeatureMatrix::from_rows(&rows).unwrap(),
            LabelSeries::new(y).unwrap(),
        )
    }

    /// Straightforward re-implementation of the forward pass.
    fn reference_forward(net: &Mlp, x: &[f64]) -> f64 {
        let sizes = net.layer_sizes();
        let p = net.params();
        let mut off = 0;
        let mut a = x.to_vec();
        for l in 0..sizes.len() - 1 {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let mut z = vec![0.0; n_out];
            for j in 0..n_out {
                let mut s = p[off + n_in * n_out + j];
                for i in 0..n_in {
                    s += p[off + j * n_in + i] * a[i];
                }
                z[j] = s;
            }
            off += n_in * n_out + n_out;
            a = if l + 2 < sizes.len() {
                z.into_iter().map(|v| if v > 0.0 { v } else { 0.0 }).collect()
            } else {
                z
            };
        }
        (1.0 / (1.0 + (-a[0]).exp())).clamp(PROB_EPS, 1.0 - PROB_EPS)
    }

    #[test]
    fn zero_network_outputs_half() {
        let net = Mlp::from_params(vec![3, 2, 1], vec![0.0; 3 * 2 + 2 + 2 + 1]).unwrap();
        assert_eq!(net.forward(&[1.0, -4.0, 9.0]).unwrap(), 0.5);
    }

    #[test]
    fn single_layer_is_logistic() {
        let net = Mlp::from_params(vec![2, 1], vec![0.5, -1.0, 0.25]).unwrap();
        let expected = 1.0 / (1.0 + (-(0.5 * 2.0 - 1.0 * 1.0 + 0.25f64)).exp());
        assert!((net.forward(&[2.0, 1.0]).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn forward_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for seed in 0..20 {
            let net = Mlp::init(&MlpConfig::with_hidden(4, &[5, 3], vec![0.0; 3], seed)).unwrap();
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let a = net.forward(&x).unwrap();
            let b = reference_forward(&net, &x);
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn width_mismatch() {
        let net = Mlp::init(&small_cfg(0)).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn output_is_clamped() {
        let net = Mlp::from_params(vec![1, 1], vec![1000.0, 0.0]).unwrap();
        assert_eq!(net.forward(&[1.0]).unwrap(), 1.0 - PROB_EPS);
        assert_eq!(net.forward(&[-1.0]).unwrap(), PROB_EPS);
    }

    #[test]
    fn half_output_loss_is_ln2() {
        let net = Mlp::from_params(vec![2, 1], vec![0.0; 3]).unwrap();
        let x = FeatureMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let (loss, _) = net.loss_and_gradient(&x, &[true, false], &[0.0]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn confident_correct_loss_is_small() {
        // sigmoid(z) = 1 - 1e-4
        let z = (1.0f64 / 1e-4 - 1.0).ln();
        let net = Mlp::from_params(vec![1, 1], vec![z, 0.0]).unwrap();
        let x = FeatureMatrix::from_rows(&[vec![1.0]]).unwrap();
        let (loss, _) = net.loss_and_gradient(&x, &[true], &[0.0]).unwrap();
        assert!((loss - 1e-4).abs() < 1e-8);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for seed in 0..5 {
            let cfg = MlpConfig::with_hidden(3, &[4, 3], vec![0.01, 0.02, 0.0], seed);
            let mut net = Mlp::init(&cfg).unwrap();
            for p in net.params_mut() {
                *p += rng.gen_range(-0.1..0.1);
            }
            let rows: Vec<Vec<f64>> = (0..6)
                .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let x = FeatureMatrix::from_rows(&rows).unwrap();
            let y: Vec<bool> = (0..6).map(|i| i % 2 == 0).collect();
            let (_, grad) = net.loss_and_gradient(&x, &y, &cfg.l2_per_layer).unwrap();
            let h = 1e-5;
            for i in 0..net.params().len() {
                let orig = net.params()[i];
                let pattern = |n: &Mlp| rows.iter().map(|r| n.active_units(r).unwrap()).collect::<Vec<_>>();
                net.params_mut()[i] = orig + h;
                let (lp, _) = net.loss_and_gradient(&x, &y, &cfg.l2_per_layer).unwrap();
                let up = pattern(&net);
                net.params_mut()[i] = orig - h;
                let (lm, _) = net.loss_and_gradient(&x, &y, &cfg.l2_per_layer).unwrap();
                let down = pattern(&net);
                net.params_mut()[i] = orig;
                if up != down {
                    // a ReLU kink lies inside the difference stencil
                    continue;
                }
                let fd = (lp - lm) / (2.0 * h);
                let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6);
                assert!(rel < 1e-4, "param {i}: analytic {} vs fd {fd}", grad[i]);
            }
        }
    }

    #[test]
    fn zero_learning_rate_keeps_initial_network() {
        let (x, y) = separable(40);
        let mlp = small_cfg(5);
        let cfg = TrainConfig {
            epochs: 1,
            learning_rate: 0.0,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let snaps = train_with_snapshots(&x, &y, &x, &mlp, &cfg).unwrap();
        assert_eq!(snaps.len(), 1);
        let init = Mlp::init(&mlp).unwrap();
        assert_eq!(snaps[0].train_probs, init.predict_proba(&x).unwrap());
        assert_eq!(snaps[0].valid_probs, init.predict_proba(&x).unwrap());
    }

    #[test]
    fn snapshot_count_and_determinism() {
        let (x, y) = separable(60);
        let cfg = TrainConfig {
            epochs: 7,
            learning_rate: 0.01,
            batch_size: 16,
            shuffle_seed: 4,
            ..TrainConfig::default()
        };
        let a = train_with_snapshots(&x, &y, &x, &small_cfg(1), &cfg).unwrap();
        let b = train_with_snapshots(&x, &y, &x, &small_cfg(1), &cfg).unwrap();
        assert_eq!(a.len(), 7);
        assert_eq!(a.iter().map(|s| s.epoch).collect::<Vec<_>>(), (1..=7).collect::<Vec<_>>());
        for (sa, sb) in a.iter().zip(&b) {
            let bits_a: Vec<u64> = sa.train_probs.as_slice().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = sb.train_probs.as_slice().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
    }

    #[test]
    fn separable_set_is_learned() {
        let (x, y) = separable(80);
        let cfg = TrainConfig {
            epochs: 200,
            learning_rate: 0.01,
            batch_size: 16,
            ..TrainConfig::default()
        };
        let run = train(&x, &y, &small_cfg(2), &cfg).unwrap();
        let snaps = snapshots_from_run(&run, &x, &x).unwrap();
        let search = ThresholdSearch::full(Objective::quality(SkillScoreKind::Tss));
        let last = calibrate_epochs(&snaps[snaps.len() - 1..], &y, &search).unwrap();
        assert_eq!(last[0].train_score, Some(1.0));

        // 20-epoch moving average of the loss keeps going down
        let ma: Vec<f64> = run
            .epoch_losses
            .windows(20)
            .map(|w| w.iter().sum::<f64>() / 20.0)
            .collect();
        assert!(ma.windows(2).all(|w| w[1] < w[0]), "{ma:?}");
    }

    #[test]
    fn degenerate_labels() {
        let x = FeatureMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let y = LabelSeries::new(vec![1, 1]).unwrap();
        let err = train(&x, &y, &small_cfg(0), &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::DegenerateData(_)));
    }

    #[test]
    fn divergence_is_reported() {
        let (x, y) = separable(20);
        let cfg = TrainConfig {
            epochs: 3,
            learning_rate: f64::MAX,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let err = train(&x, &y, &small_cfg(0), &cfg).unwrap_err();
        assert!(matches!(err, Error::Divergence { epoch: 1 | 2 | 3 }), "{err:?}");
    }

    #[test]
    fn config_validation() {
        let mut cfg = small_cfg(0);
        cfg.l2_per_layer.pop();
        assert!(cfg.validate().is_err());
        let cfg = MlpConfig {
            layer_sizes: vec![2, 3, 2],
            l2_per_layer: vec![0.0, 0.0],
            seed: 0,
        };
        assert!(cfg.validate().is_err());
        let deep = MlpConfig::deep(23, 0);
        assert_eq!(deep.layer_sizes.len(), 9);
        assert_eq!(deep.l2_per_layer, vec![0.01, 0.01, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        deep.validate().unwrap();
        let bad = TrainConfig {
            adam_beta1: 1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn model_file_round_trip() {
        let net = Mlp::init(&small_cfg(8)).unwrap();
        let file = ModelFile::new(&net, None);
        let json = serde_json::to_string(&file).unwrap();
        let back: ModelFile = serde_json::from_str(&json).unwrap();
        let (net2, _) = back.into_mlp().unwrap();
        assert_eq!(net, net2);
    }
}
