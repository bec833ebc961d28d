//! Independent reference implementations shared by the integration suites.
//!
//! Nothing here calls into the library's internals: each oracle recomputes its
//! quantity the slow, obvious way so the fast paths can be checked against it.

#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

use pathssl_core::regularizers::EmbeddingBatch;

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// `n` Gaussian rows projected onto the unit sphere.
pub fn random_unit_rows<R: Rng>(rng: &mut R, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
            let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / len).collect()
        })
        .collect()
}

pub fn batch_of(rows: &[Vec<f64>]) -> EmbeddingBatch {
    EmbeddingBatch::from_rows(rows).unwrap()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..a.len() {
        s += (a[k] - b[k]) * (a[k] - b[k]);
    }
    s.sqrt()
}

/// Mean log nearest-neighbour distance by exhaustive search.
pub fn naive_koleo(rows: &[Vec<f64>]) -> f64 {
    let n = rows.len();
    let mut total = 0.0;
    for i in 0..n {
        let mut best = f64::INFINITY;
        for j in 0..n {
            if i != j {
                best = best.min(dist(&rows[i], &rows[j]));
            }
        }
        total += best.max(1e-8).ln();
    }
    total / n as f64
}

/// `-(1/n) sum_i log sum_{j != i} exp(kappa z_i.z_j)` as a plain double loop.
pub fn naive_kde(rows: &[Vec<f64>], kappa: f64) -> f64 {
    let n = rows.len();
    let mut total = 0.0;
    for i in 0..n {
        let mut s = 0.0;
        for j in 0..n {
            if i != j {
                let d: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
                s += (kappa * d).exp();
            }
        }
        total += s.ln();
    }
    -total / n as f64
}

/// Central differences of `f` at every coordinate.
pub fn central_difference(rows: &[Vec<f64>], step: f64, f: impl Fn(&[Vec<f64>]) -> f64) -> Vec<f64> {
    let mut grad = Vec::new();
    let mut probe = rows.to_vec();
    for i in 0..rows.len() {
        for k in 0..rows[i].len() {
            let orig = probe[i][k];
            probe[i][k] = orig + step;
            let up = f(&probe);
            probe[i][k] = orig - step;
            let down = f(&probe);
            probe[i][k] = orig;
            grad.push((up - down) / (2.0 * step));
        }
    }
    grad
}

/// `|a - b| / |b|` over the whole flattened gradient.
pub fn relative_error(analytic: &[f64], reference: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let scale: f64 = reference.iter().map(|b| b * b).sum::<f64>().sqrt();
    diff / scale.max(f64::MIN_POSITIVE)
}

/// Haar-ish random orthogonal matrix by Gram-Schmidt on Gaussian columns.
pub fn random_rotation<R: Rng>(rng: &mut R, dim: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while basis.len() < dim {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        for _ in 0..2 {
            for b in &basis {
                let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
        }
        let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if len > 1e-6 {
            basis.push(v.into_iter().map(|x| x / len).collect());
        }
    }
    basis
}

pub fn rotate(rows: &[Vec<f64>], q: &[Vec<f64>]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| {
            q.iter()
                .map(|qrow| qrow.iter().zip(r).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect()
}

/// Rectangle sampler written out from the crop-and-resize recipe, with its own generator.
#[derive(Clone, Copy, Debug)]
pub struct NaiveViewSampler {
    pub source: u32,
    /// Fraction of source area.
    pub scale: (f64, f64),
    pub aspect: (f64, f64),
}

impl NaiveViewSampler {
    pub fn crop_resize(source: u32, scale: (f64, f64), aspect: (f64, f64)) -> Self {
        Self { source, scale, aspect }
    }

    pub fn ect(source: u32, output: u32, scale: (f64, f64), aspect: (f64, f64)) -> Self {
        let f = (output as f64 * output as f64) / (source as f64 * source as f64);
        Self {
            source,
            scale: (scale.0 * f, scale.1 * f),
            aspect,
        }
    }

    /// Returns `(x, y, w, h)`.
    pub fn draw<R: Rng>(&self, rng: &mut R) -> (f64, f64, f64, f64) {
        let s = self.source as f64;
        for _attempt in 0..10 {
            let area = s * s * rng.random_range(self.scale.0..=self.scale.1);
            let r = rng.random_range(self.aspect.0.ln()..=self.aspect.1.ln()).exp();
            let w = (area * r).sqrt().round();
            let h = (area / r).sqrt().round();
            if w > 0.0 && h > 0.0 && w <= s && h <= s {
                let x = rng.random_range(0..=(s - w) as u32) as f64;
                let y = rng.random_range(0..=(s - h) as u32) as f64;
                return (x, y, w, h);
            }
        }
        let area = s * s * (self.scale.0 * self.scale.1).sqrt();
        let r = (self.aspect.0 * self.aspect.1).sqrt();
        let w = (area * r).sqrt().round().clamp(1.0, s);
        let h = (area / r).sqrt().round().clamp(1.0, s);
        (((s - w) / 2.0).floor(), ((s - h) / 2.0).floor(), w, h)
    }
}

fn rect_iou(a: (f64, f64, f64, f64), b: (f64, f64, f64, f64)) -> f64 {
    let ix = ((a.0 + a.2).min(b.0 + b.2) - a.0.max(b.0)).max(0.0);
    let iy = ((a.1 + a.3).min(b.1 + b.3) - a.1.max(b.1)).max(0.0);
    let inter = ix * iy;
    inter / (a.2 * a.3 + b.2 * b.3 - inter)
}

/// Sequential Monte Carlo mean IoU and standard error; one generator for the whole run.
pub fn naive_mean_iou(sampler: NaiveViewSampler, trials: usize, seed: u64) -> (f64, f64) {
    let mut rng = rng(seed);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..trials {
        let v = rect_iou(sampler.draw(&mut rng), sampler.draw(&mut rng));
        sum += v;
        sum_sq += v * v;
    }
    let n = trials as f64;
    let mean = sum / n;
    let var = (sum_sq - n * mean * mean) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// HSV by exhaustive search: for each channel pick the integer nearest the exact
/// rational value, ties upward.
pub fn brute_force_hsv([r, g, b]: [u8; 3]) -> [u8; 3] {
    let (r, g, b) = (r as i64, g as i64, b as i64);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;

    // exact value as num / den, channel value k chosen to minimize |k * den - num|
    let nearest = |num: i64, den: i64, top: i64| -> u8 {
        let mut best = 0;
        for k in 0..=top {
            let e = (2 * (k * den - num)).abs();
            let be = (2 * (best * den - num)).abs();
            if e < be || (e == be && k > best) {
                best = k;
            }
        }
        best as u8
    };

    let s = if max == 0 { 0 } else { nearest(255 * delta, max, 255) };
    let h = if delta == 0 {
        0
    } else {
        // hue in degrees = 60 * sector offset, then halved
        let (offset, a, c) = if max == r {
            (0, g, b)
        } else if max == g {
            (120, b, r)
        } else {
            (240, r, g)
        };
        // degrees = offset + 60 (a - c) / delta, wrapped into [0, 360)
        let mut num = offset * delta + 60 * (a - c);
        if num < 0 {
            num += 360 * delta;
        }
        nearest(num, 2 * delta, 180)
    };
    [h, s, max as u8]
}
