//! Differential-entropy estimators for embeddings on the unit hypersphere.
//!
//! [`koleo_entropy`] averages the log distance of each point to its nearest neighbour.
//! Its gradient with respect to a pair grows like `1 / d` as the pair collapses.
//! [`kde_entropy`] replaces the nearest neighbour with a von Mises-Fisher kernel density
//! over all other points; with unit rows each pairwise gradient is bounded by `kappa`.
//!
//! Gradients are taken with respect to the (already normalized) rows. Chaining through
//! the normalization Jacobian belongs to the caller.

use rayon::prelude::*;

use crate::{Error, Result};

/// Floor applied to nearest-neighbour distances inside the log.
pub const KOLEO_MIN_DISTANCE: f64 = 1e-8;

/// Rows within this distance of unit norm count as normalized.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

pub const DEFAULT_KAPPA: f64 = 5.0;

/// `n` row vectors of dimension `dim`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    data: Vec<f64>,
    n: usize,
    dim: usize,
    normalized: bool,
}

impl EmbeddingBatch {
    /// Wraps row-major data. The batch is flagged normalized when every row is unit-norm.
    pub fn new(data: Vec<f64>, n: usize, dim: usize) -> Result<Self> {
        if dim == 0 || data.len() != n * dim {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {n} rows of dimension {dim}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        let mut batch = Self {
            data,
            n,
            dim,
            normalized: false,
        };
        batch.normalized = batch.rows().all(|r| (norm(r) - 1.0).abs() <= UNIT_NORM_TOLERANCE);
        Ok(batch)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::ShapeMismatch("rows have different lengths".into()));
        }
        Self::new(rows.concat(), rows.len(), dim)
    }

    /// Flags the batch as lying on the sphere without checking.
    ///
    /// Finite-difference probes move rows slightly off the sphere; the estimators are
    /// smooth functions of the raw coordinates and stay meaningful there.
    pub fn assume_normalized(mut self) -> Self {
        self.normalized = true;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }
}

/// Kernel used by the density estimator. Only von Mises-Fisher is provided.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    pub kappa: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { kappa: DEFAULT_KAPPA }
    }
}

impl KernelConfig {
    pub fn vmf(kappa: f64) -> Result<Self> {
        if kappa.is_finite() && kappa > 0.0 {
            Ok(Self { kappa })
        } else {
            Err(Error::InvalidParameter {
                name: "kappa",
                reason: format!("{kappa} is not positive"),
            })
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Divides every row by its Euclidean norm.
pub fn normalize_to_sphere(batch: &EmbeddingBatch) -> Result<EmbeddingBatch> {
    let mut data = Vec::with_capacity(batch.data.len());
    for (i, row) in batch.rows().enumerate() {
        let len = norm(row);
        if len == 0.0 {
            return Err(Error::ZeroNormRow(i));
        }
        data.extend(row.iter().map(|v| v / len));
    }
    Ok(EmbeddingBatch {
        data,
        n: batch.n,
        dim: batch.dim,
        normalized: true,
    })
}

/// `exp(kappa * x.y)` for unit vectors.
pub fn vmf_kernel(x: &[f64], y: &[f64], cfg: &KernelConfig) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch(format!(
            "vectors of length {} and {}",
            x.len(),
            y.len()
        )));
    }
    for v in [x, y] {
        let len = norm(v);
        if (len - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(Error::NotUnitNorm(len));
        }
    }
    Ok((cfg.kappa * dot(x, y)).exp())
}

fn check_batch(batch: &EmbeddingBatch) -> Result<()> {
    if batch.n < 2 {
        return Err(Error::TooFewRows {
            needed: 2,
            got: batch.n,
        });
    }
    if !batch.normalized {
        return Err(Error::NotNormalized);
    }
    Ok(())
}

/// Nearest neighbour of each row (lowest index wins ties) and its unclamped distance.
fn nearest_neighbors(batch: &EmbeddingBatch) -> Vec<(usize, f64)> {
    (0..batch.n)
        .into_par_iter()
        .map(|i| {
            let zi = batch.row(i);
            let mut best = (usize::MAX, f64::INFINITY);
            for j in (0..batch.n).filter(|&j| j != i) {
                let d = distance(zi, batch.row(j));
                if d < best.1 {
                    best = (j, d);
                }
            }
            best
        })
        .collect()
}

/// Mean log nearest-neighbour distance, with distances floored at [`KOLEO_MIN_DISTANCE`].
pub fn koleo_entropy(batch: &EmbeddingBatch) -> Result<f64> {
    check_batch(batch)?;
    let sum: f64 = nearest_neighbors(batch)
        .iter()
        .map(|&(_, d)| d.max(KOLEO_MIN_DISTANCE).ln())
        .sum();
    Ok(sum / batch.n as f64)
}

/// Gradient of [`koleo_entropy`] with respect to every row.
///
/// Term `i` pulls on both `z_i` and its neighbour. Pairs closer than the distance floor
/// sit on the flat part of the clamp and contribute nothing.
pub fn koleo_grad(batch: &EmbeddingBatch) -> Result<Vec<f64>> {
    check_batch(batch)?;
    let dim = batch.dim;
    let scale = 1.0 / batch.n as f64;
    let mut grad = vec![0.0; batch.data.len()];
    for (i, (j, d)) in nearest_neighbors(batch).into_iter().enumerate() {
        if d < KOLEO_MIN_DISTANCE {
            continue;
        }
        let w = scale / (d * d);
        for k in 0..dim {
            let diff = batch.data[i * dim + k] - batch.data[j * dim + k];
            grad[i * dim + k] += w * diff;
            grad[j * dim + k] -= w * diff;
        }
    }
    Ok(grad)
}

/// Row-wise log-normalized kernel weights.
///
/// Returns `(log_sums, weights)` where `log_sums[i] = log sum_{j != i} exp(kappa z_i.z_j)`
/// and `weights[i * n + j]` is the softmax weight of `j` in that sum (zero on the diagonal).
fn kernel_softmax(batch: &EmbeddingBatch, kappa: f64) -> (Vec<f64>, Vec<f64>) {
    let n = batch.n;
    let rows: Vec<(f64, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let zi = batch.row(i);
            let logits: Vec<f64> = (0..n)
                .map(|j| {
                    if j == i {
                        f64::NEG_INFINITY
                    } else {
                        kappa * dot(zi, batch.row(j))
                    }
                })
                .collect();
            let shift = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut weights: Vec<f64> = logits.iter().map(|&l| (l - shift).exp()).collect();
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
            (shift + total.ln(), weights)
        })
        .collect();
    let mut log_sums = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n * n);
    for (l, w) in rows {
        log_sums.push(l);
        weights.extend(w);
    }
    (log_sums, weights)
}

/// Kernel density entropy `-(1/n) sum_i log sum_{j != i} k(z_i, z_j)` with the vMF kernel.
///
/// The kernel's normalizing constant is dropped; it only shifts the value.
pub fn kde_entropy(batch: &EmbeddingBatch, cfg: &KernelConfig) -> Result<f64> {
    check_batch(batch)?;
    let (log_sums, _) = kernel_softmax(batch, cfg.kappa);
    Ok(-log_sums.iter().sum::<f64>() / batch.n as f64)
}

/// Gradient of [`kde_entropy`] with respect to every row.
///
/// With `p_ij` the softmax weight of `j` in row `i`'s kernel sum,
/// `dH/dz_k = -(kappa / n) sum_{j != k} (p_kj + p_jk) z_j`.
pub fn kde_grad(batch: &EmbeddingBatch, cfg: &KernelConfig) -> Result<Vec<f64>> {
    check_batch(batch)?;
    let n = batch.n;
    let dim = batch.dim;
    let (_, p) = kernel_softmax(batch, cfg.kappa);
    let scale = -cfg.kappa / n as f64;
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut g = vec![0.0; dim];
            for j in (0..n).filter(|&j| j != k) {
                let w = scale * (p[k * n + j] + p[j * n + k]);
                for (gd, zj) in g.iter_mut().zip(batch.row(j)) {
                    *gd += w * zj;
                }
            }
            g
        })
        .collect();
    Ok(rows.concat())
}
