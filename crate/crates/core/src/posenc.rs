//! Scale-aware position encodings for ViT patch grids.
//!
//! Cell-sample-distance (CSD) encodings are fixed sinusoids whose argument is the
//! physical distance `m * p` (microns per pixel times grid index) relative to a
//! reference magnification. Two grids that sample the same physical location get the
//! same vector, whatever their magnification.
//!
//! Vector layout for dimension `D`: the first `D/2` slots encode the column index and
//! the last `D/2` the row index. Within each half, slot `2i` holds
//! `sin(m/M * p / omega^(2i/D))` and slot `2i + 1` the matching cosine.
//!
//! Learned-per-micron (LPM) tables keep one independently initialized grid per declared
//! magnification and cannot serve any other.

use rand_distr::{Distribution, Normal};

use crate::seed::stream_rng;
use crate::{Error, Result};

pub const DEFAULT_OMEGA: f64 = 10_000.0;
/// Reference magnification (20x).
pub const DEFAULT_REFERENCE_MPP: f64 = 0.5;
pub const DEFAULT_LPM_INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsdConfig {
    dim: usize,
    omega: f64,
    reference_mpp: f64,
}

impl CsdConfig {
    pub fn new(dim: usize, omega: f64, reference_mpp: f64) -> Result<Self> {
        if dim == 0 || !dim.is_multiple_of(4) {
            return Err(Error::InvalidParameter {
                name: "dim",
                reason: format!("{dim} is not a positive multiple of 4"),
            });
        }
        if !(omega.is_finite() && omega > 1.0) {
            return Err(Error::InvalidParameter {
                name: "omega",
                reason: format!("{omega} must exceed 1"),
            });
        }
        check_mpp("reference_mpp", reference_mpp)?;
        Ok(Self {
            dim,
            omega,
            reference_mpp,
        })
    }

    /// `dim` with the default frequency base and reference magnification.
    pub fn with_dim(dim: usize) -> Result<Self> {
        Self::new(dim, DEFAULT_OMEGA, DEFAULT_REFERENCE_MPP)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn reference_mpp(&self) -> f64 {
        self.reference_mpp
    }

    /// Divisors `omega^(2i/D)` for `i` in `0..D/4`.
    fn wavelengths(&self) -> Vec<f64> {
        (0..self.dim / 4)
            .map(|i| self.omega.powf(2.0 * i as f64 / self.dim as f64))
            .collect()
    }
}

fn check_mpp(name: &'static str, mpp: f64) -> Result<()> {
    if mpp.is_finite() && mpp > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("{mpp} is not a positive number"),
        })
    }
}

fn encode_into(out: &mut [f64], p: (u32, u32), mpp: f64, reference: f64, wavelengths: &[f64]) {
    let half = out.len() / 2;
    for (axis, coord) in [p.0, p.1].into_iter().enumerate() {
        // physical distance first, so equal m * p gives bit-equal arguments
        let relative = mpp * coord as f64 / reference;
        let slots = &mut out[axis * half..(axis + 1) * half];
        for (pair, &wl) in slots.chunks_exact_mut(2).zip(wavelengths) {
            let (s, c) = (relative / wl).sin_cos();
            pair[0] = s;
            pair[1] = c;
        }
    }
}

/// CSD encoding of grid index `p = (column, row)` at `mpp` microns per pixel.
pub fn csd_encode(p: (u32, u32), mpp: f64, cfg: &CsdConfig) -> Vec<f64> {
    let mut out = vec![0.0; cfg.dim];
    encode_into(&mut out, p, mpp, cfg.reference_mpp, &cfg.wavelengths());
    out
}

/// `grid_h x grid_w x dim` array of encodings.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodingGrid {
    pub grid_h: usize,
    pub grid_w: usize,
    pub dim: usize,
    pub mpp: f64,
    pub values: Vec<f64>,
}

impl EncodingGrid {
    /// Encoding at (`row`, `col`).
    pub fn at(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.grid_w + col) * self.dim;
        &self.values[start..start + self.dim]
    }
}

/// Evaluates [`csd_encode`] at every patch of a `grid_h x grid_w` grid.
pub fn csd_grid(grid_h: usize, grid_w: usize, mpp: f64, cfg: &CsdConfig) -> Result<EncodingGrid> {
    if grid_h == 0 || grid_w == 0 {
        return Err(Error::InvalidParameter {
            name: "grid",
            reason: format!("{grid_h}x{grid_w} is empty"),
        });
    }
    check_mpp("mpp", mpp)?;
    let wavelengths = cfg.wavelengths();
    let mut values = vec![0.0; grid_h * grid_w * cfg.dim];
    for (k, slot) in values.chunks_exact_mut(cfg.dim).enumerate() {
        let p = ((k % grid_w) as u32, (k / grid_w) as u32);
        encode_into(slot, p, mpp, cfg.reference_mpp, &wavelengths);
    }
    Ok(EncodingGrid {
        grid_h,
        grid_w,
        dim: cfg.dim,
        mpp,
        values,
    })
}

/// One learned position table per declared magnification.
#[derive(Debug, Clone, PartialEq)]
pub struct LpmTable {
    pub grid_h: usize,
    pub grid_w: usize,
    pub dim: usize,
    pub init_std: f64,
    tables: Vec<(f64, Vec<f64>)>,
}

impl LpmTable {
    pub fn magnifications(&self) -> impl Iterator<Item = f64> + '_ {
        self.tables.iter().map(|(m, _)| *m)
    }
}

/// Initializes a table per magnification with entries drawn from `Normal(0, init_std^2)`.
///
/// The table for the `k`-th magnification uses stream `k` of `rng_seed`.
pub fn lpm_init(
    magnifications: &[f64],
    grid_h: usize,
    grid_w: usize,
    dim: usize,
    rng_seed: u64,
    init_std: f64,
) -> Result<LpmTable> {
    if magnifications.is_empty() {
        return Err(Error::InvalidParameter {
            name: "magnifications",
            reason: "list is empty".into(),
        });
    }
    if grid_h == 0 || grid_w == 0 || dim == 0 {
        return Err(Error::InvalidParameter {
            name: "shape",
            reason: format!("{grid_h}x{grid_w}x{dim} is empty"),
        });
    }
    if !(init_std.is_finite() && init_std > 0.0) {
        return Err(Error::InvalidParameter {
            name: "init_std",
            reason: format!("{init_std} is not positive"),
        });
    }
    let normal = Normal::new(0.0, init_std).map_err(|e| Error::InvalidParameter {
        name: "init_std",
        reason: e.to_string(),
    })?;

    let mut tables: Vec<(f64, Vec<f64>)> = Vec::with_capacity(magnifications.len());
    for (k, &mpp) in magnifications.iter().enumerate() {
        check_mpp("mpp", mpp)?;
        if tables.iter().any(|(m, _)| *m == mpp) {
            return Err(Error::DuplicateMagnification(mpp));
        }
        let mut rng = stream_rng(rng_seed, k as u64);
        let values = normal.sample_iter(&mut rng).take(grid_h * grid_w * dim).collect();
        tables.push((mpp, values));
    }
    Ok(LpmTable {
        grid_h,
        grid_w,
        dim,
        init_std,
        tables,
    })
}

/// The table registered for `mpp`. Unregistered magnifications are an error.
pub fn lpm_lookup(table: &LpmTable, mpp: f64) -> Result<&[f64]> {
    table
        .tables
        .iter()
        .find(|(m, _)| *m == mpp)
        .map(|(_, v)| v.as_slice())
        .ok_or(Error::UnknownMagnification(mpp))
}
