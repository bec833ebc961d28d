//! Linear probe over frozen embeddings.
//!
//! Multinomial logistic regression trained with momentum SGD on shuffled mini-batches
//! under a cosine learning-rate schedule. Training is single-threaded and seeded, so the
//! same inputs always give the same weights.

use rand::seq::SliceRandom;

use crate::seed::stream_rng;
use crate::{Error, Result};

/// Embeddings with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEmbeddings {
    data: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
}

impl LabeledEmbeddings {
    pub fn new(data: Vec<f64>, labels: Vec<usize>, dim: usize) -> Result<Self> {
        if dim == 0 || data.len() != labels.len() * dim {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} labels of dimension {dim}",
                data.len(),
                labels.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { data, labels, dim })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// `max label + 1`.
    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub iterations: usize,
    pub base_lr: f64,
    pub final_lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub rng_seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            iterations: 12_500,
            base_lr: 0.01,
            final_lr: 0.0,
            momentum: 0.9,
            batch_size: 256,
            rng_seed: 0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.final_lr.is_finite()
            && self.base_lr.is_finite()
            && 0.0 <= self.final_lr
            && self.final_lr <= self.base_lr)
        {
            return Err(Error::InvalidRange {
                what: "learning rate",
                lo: self.final_lr,
                hi: self.base_lr,
            });
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidParameter {
                name: "momentum",
                reason: format!("{} is outside [0, 1)", self.momentum),
            });
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter {
                name: "batch_size",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}

/// `final + (base - final) * (1 + cos(pi t / T)) / 2`.
pub fn cosine_lr(t: usize, cfg: &ProbeConfig) -> Result<f64> {
    if t > cfg.iterations {
        return Err(Error::IterationOutOfRange {
            t,
            iterations: cfg.iterations,
        });
    }
    if t == 0 {
        return Ok(cfg.base_lr);
    }
    if t == cfg.iterations {
        return Ok(cfg.final_lr);
    }
    let progress = t as f64 / cfg.iterations as f64;
    Ok(cfg.final_lr + 0.5 * (cfg.base_lr - cfg.final_lr) * (1.0 + (std::f64::consts::PI * progress).cos()))
}

/// Weights (`classes x dim`, row-major) and biases of a linear classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub classes: usize,
    pub dim: usize,
}

impl LinearModel {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        Self {
            weights: vec![0.0; classes * dim],
            bias: vec![0.0; classes],
            classes,
            dim,
        }
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.dim)
            .zip(&self.bias)
            .map(|(w, b)| w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b)
            .collect()
    }

    /// Argmax class; the lowest index wins ties.
    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.logits(x))
    }

    /// Mean cross-entropy over a data set.
    pub fn loss(&self, data: &LabeledEmbeddings) -> f64 {
        let total: f64 = (0..data.len())
            .map(|i| {
                let logits = self.logits(data.row(i));
                log_sum_exp(&logits) - logits[data.labels[i]]
            })
            .sum();
        total / data.len() as f64
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedProbe {
    pub model: LinearModel,
    /// Mini-batch loss at each iteration, before that iteration's update.
    pub batch_losses: Vec<f64>,
    /// Full training-set loss after the last update.
    pub final_loss: f64,
}

/// Fits a softmax classifier to `train` starting from zero weights.
///
/// Each epoch visits the rows in a fresh seeded permutation; mini-batches are taken
/// from that stream and may straddle epochs. The update is
/// `v <- momentum * v + grad`, `theta <- theta - lr(t) * v`.
pub fn train_linear_probe(train: &LabeledEmbeddings, cfg: &ProbeConfig) -> Result<TrainedProbe> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::TooFewRows { needed: 1, got: 0 });
    }
    let first = train.labels[0];
    if train.labels.iter().all(|&l| l == first) {
        return Err(Error::SingleClass);
    }
    if cfg.batch_size > train.len() {
        return Err(Error::InvalidParameter {
            name: "batch_size",
            reason: format!("{} exceeds the {} training rows", cfg.batch_size, train.len()),
        });
    }

    let classes = train.num_classes();
    let dim = train.dim;
    let mut model = LinearModel::zeros(classes, dim);
    let mut vel_w = vec![0.0; classes * dim];
    let mut vel_b = vec![0.0; classes];
    let mut grad_w = vec![0.0; classes * dim];
    let mut grad_b = vec![0.0; classes];
    let mut batch_losses = Vec::with_capacity(cfg.iterations);

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch = 0u64;
    let mut cursor = order.len();
    let mut batch = Vec::with_capacity(cfg.batch_size);

    for t in 0..cfg.iterations {
        batch.clear();
        while batch.len() < cfg.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut stream_rng(cfg.rng_seed, epoch));
                epoch += 1;
                cursor = 0;
            }
            let take = (cfg.batch_size - batch.len()).min(order.len() - cursor);
            batch.extend_from_slice(&order[cursor..cursor + take]);
            cursor += take;
        }

        grad_w.iter_mut().for_each(|g| *g = 0.0);
        grad_b.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for &i in &batch {
            let x = train.row(i);
            let logits = model.logits(x);
            let lse = log_sum_exp(&logits);
            let y = train.labels[i];
            loss += lse - logits[y];
            for c in 0..classes {
                let err = (logits[c] - lse).exp() - if c == y { 1.0 } else { 0.0 };
                grad_b[c] += err;
                for (g, xv) in grad_w[c * dim..(c + 1) * dim].iter_mut().zip(x) {
                    *g += err * xv;
                }
            }
        }
        let inv = 1.0 / batch.len() as f64;
        loss *= inv;
        if loss.is_nan() {
            return Err(Error::NanLoss(t));
        }
        batch_losses.push(loss);

        let lr = cosine_lr(t, cfg)?;
        for ((w, v), g) in model.weights.iter_mut().zip(&mut vel_w).zip(&grad_w) {
            *v = cfg.momentum * *v + g * inv;
            *w -= lr * *v;
        }
        for ((b, v), g) in model.bias.iter_mut().zip(&mut vel_b).zip(&grad_b) {
            *v = cfg.momentum * *v + g * inv;
            *b -= lr * *v;
        }
    }

    let final_loss = model.loss(train);
    if final_loss.is_nan() {
        return Err(Error::NanLoss(cfg.iterations));
    }
    Ok(TrainedProbe {
        model,
        batch_losses,
        final_loss,
    })
}

/// Fraction of rows whose argmax prediction matches the label.
pub fn evaluate_accuracy(model: &LinearModel, test: &LabeledEmbeddings) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    if test.dim != model.dim {
        return Err(Error::ShapeMismatch(format!(
            "model expects dimension {}, test has {}",
            model.dim, test.dim
        )));
    }
    let correct = (0..test.len())
        .filter(|&i| model.predict(test.row(i)) == test.labels[i])
        .count();
    Ok(correct as f64 / test.len() as f64)
}
