//! View geometry for joint-embedding augmentation.
//!
//! Two sampling modes share one rejection sampler:
//!
//! - **crop-and-resize**: a sub-rectangle covering a random fraction of the source
//!   area is cut out and resized to the output size.
//! - **extended-context translation (ECT)**: the source is an `N x N` window around a
//!   smaller `L x L` target. The scale range is expressed relative to the *output*
//!   area and rescaled by `(L / N)^2`, so every crop is roughly `L x L` and views
//!   differ mainly by translation rather than by resizing.
//!
//! Overlap between the two views of a pair is measured as the intersection over union
//! of their rectangles in source coordinates; [`estimate_pair_iou`] averages it over
//! many seeded trials and [`calibrate_source_size`] picks the `N` whose expected
//! overlap is closest to a target.

use image::{Rgb, RgbImage};
use rand::Rng;
use rayon::prelude::*;

use crate::seed::stream_rng;
use crate::{Error, Result};

/// Rejection attempts before falling back to a centered crop.
pub const MAX_ATTEMPTS: usize = 10;

pub const DINO_GLOBAL_SCALE: (f64, f64) = (0.32, 1.0);
pub const DINO_LOCAL_SCALE: (f64, f64) = (0.05, 0.32);
pub const DINO_ASPECT: (f64, f64) = (0.75, 1.33);
pub const ECT_SCALE: (f64, f64) = (0.9, 1.1);
pub const ECT_ASPECT: (f64, f64) = (0.95, 1.05);
pub const GLOBAL_OUTPUT: u32 = 224;
pub const LOCAL_OUTPUT: u32 = 96;
pub const ECT_SOURCE: u32 = 392;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViewMode {
    CropResize,
    Ect,
}

/// One sampled view: a crop rectangle in source pixels and the side of the resized output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CropParams {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub out: u32,
}

impl CropParams {
    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn fits_within(&self, width: u32, height: u32) -> bool {
        self.w >= 1
            && self.h >= 1
            && self.x as u64 + self.w as u64 <= width as u64
            && self.y as u64 + self.h as u64 <= height as u64
    }

    /// Long side over short side; 1 means the resize is isotropic.
    pub fn distortion(&self) -> f64 {
        self.w.max(self.h) as f64 / self.w.min(self.h) as f64
    }

    /// Crop side (geometric mean of width and height) relative to the output side.
    pub fn resize_ratio(&self) -> f64 {
        (self.area() as f64).sqrt() / self.out as f64
    }
}

/// Sampling policy for one kind of view.
///
/// For [`ViewMode::CropResize`] the scale range is a fraction of the source area. For
/// [`ViewMode::Ect`] it is a fraction of the output area; see
/// [`ViewPolicy::effective_scale_range`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewPolicy {
    pub source_size: u32,
    pub output_size: u32,
    pub scale_range: (f64, f64),
    pub aspect_range: (f64, f64),
    pub mode: ViewMode,
}

impl ViewPolicy {
    pub fn new(
        mode: ViewMode,
        source_size: u32,
        output_size: u32,
        scale_range: (f64, f64),
        aspect_range: (f64, f64),
    ) -> Result<Self> {
        let policy = Self {
            source_size,
            output_size,
            scale_range,
            aspect_range,
            mode,
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn crop_resize(
        source_size: u32,
        output_size: u32,
        scale_range: (f64, f64),
        aspect_range: (f64, f64),
    ) -> Result<Self> {
        Self::new(
            ViewMode::CropResize,
            source_size,
            output_size,
            scale_range,
            aspect_range,
        )
    }

    pub fn ect(source_size: u32, output_size: u32, scale_range: (f64, f64), aspect_range: (f64, f64)) -> Result<Self> {
        Self::new(ViewMode::Ect, source_size, output_size, scale_range, aspect_range)
    }

    /// DINOv2 global crop-and-resize on a `tile`-sized source.
    pub fn dino_global(tile: u32) -> Result<Self> {
        Self::crop_resize(tile, GLOBAL_OUTPUT, DINO_GLOBAL_SCALE, DINO_ASPECT)
    }

    pub fn dino_local(tile: u32) -> Result<Self> {
        Self::crop_resize(tile, LOCAL_OUTPUT, DINO_LOCAL_SCALE, DINO_ASPECT)
    }

    pub fn ect_global(source_size: u32) -> Result<Self> {
        Self::ect(source_size, GLOBAL_OUTPUT, ECT_SCALE, ECT_ASPECT)
    }

    /// Local ECT views reuse the ECT ranges, referenced to the local output area.
    pub fn ect_local(source_size: u32) -> Result<Self> {
        Self::ect(source_size, LOCAL_OUTPUT, ECT_SCALE, ECT_ASPECT)
    }

    /// Scale range as a fraction of the source area.
    ///
    /// ECT multiplies the configured range by the area ratio `(L / N)^2`.
    pub fn effective_scale_range(&self) -> (f64, f64) {
        match self.mode {
            ViewMode::CropResize => self.scale_range,
            ViewMode::Ect => {
                let ratio = (self.output_size as f64 / self.source_size as f64).powi(2);
                (self.scale_range.0 * ratio, self.scale_range.1 * ratio)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_range("scale", self.scale_range)?;
        check_range("aspect", self.aspect_range)?;
        if self.source_size == 0 {
            return Err(Error::InvalidParameter {
                name: "source_size",
                reason: "must be at least 1".into(),
            });
        }
        if self.output_size == 0 {
            return Err(Error::InvalidParameter {
                name: "output_size",
                reason: "must be at least 1".into(),
            });
        }
        if self.mode == ViewMode::Ect && self.source_size <= self.output_size {
            return Err(Error::SourceNotLarger {
                source_size: self.source_size,
                output_size: self.output_size,
            });
        }
        check_feasible(
            self.effective_scale_range().0,
            self.aspect_range,
            self.source_size,
            self.source_size,
        )
    }

    /// Draws one view. The policy must already be valid.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CropParams {
        sample_rect(
            rng,
            self.source_size,
            self.source_size,
            self.effective_scale_range(),
            self.aspect_range,
            self.output_size,
        )
    }
}

fn check_range(what: &'static str, (lo, hi): (f64, f64)) -> Result<()> {
    if lo.is_finite() && hi.is_finite() && 0.0 < lo && lo <= hi {
        Ok(())
    } else {
        Err(Error::InvalidRange { what, lo, hi })
    }
}

/// Is there an aspect in range at which a crop of the minimum area fits the source?
fn check_feasible(scale_lo: f64, aspect: (f64, f64), width: u32, height: u32) -> Result<()> {
    let (w, h) = (width as f64, height as f64);
    let min_area = scale_lo * w * h;
    // width fits iff aspect <= w^2 / area, height fits iff aspect >= area / h^2
    let lo = aspect.0.max(min_area / (h * h));
    let hi = aspect.1.min(w * w / min_area);
    if lo <= hi {
        Ok(())
    } else {
        Err(Error::InfeasibleCrop {
            scale_lo,
            aspect_lo: aspect.0,
            aspect_hi: aspect.1,
            width,
            height,
        })
    }
}

fn sample_rect<R: Rng + ?Sized>(
    rng: &mut R,
    width: u32,
    height: u32,
    scale: (f64, f64),
    aspect: (f64, f64),
    out: u32,
) -> CropParams {
    let area = width as f64 * height as f64;
    let log_aspect = (aspect.0.ln(), aspect.1.ln());
    for _ in 0..MAX_ATTEMPTS {
        let target_area = area * rng.random_range(scale.0..=scale.1);
        let ratio = rng.random_range(log_aspect.0..=log_aspect.1).exp();
        let w = (target_area * ratio).sqrt().round();
        let h = (target_area / ratio).sqrt().round();
        if w >= 1.0 && h >= 1.0 && w <= width as f64 && h <= height as f64 {
            let (w, h) = (w as u32, h as u32);
            let x = rng.random_range(0..=width - w);
            let y = rng.random_range(0..=height - h);
            return CropParams { x, y, w, h, out };
        }
    }
    // centered crop at the geometric means of both ranges, clamped to the source
    let target_area = area * (scale.0 * scale.1).sqrt();
    let ratio = (aspect.0 * aspect.1).sqrt();
    let w = ((target_area * ratio).sqrt().round() as u32).clamp(1, width);
    let h = ((target_area / ratio).sqrt().round() as u32).clamp(1, height);
    CropParams {
        x: (width - w) / 2,
        y: (height - h) / 2,
        w,
        h,
        out,
    }
}

/// Seeded crop-and-resize draw over a square source.
pub fn sample_crop_resize(
    rng_seed: u64,
    source_size: u32,
    output_size: u32,
    scale_range: (f64, f64),
    aspect_range: (f64, f64),
) -> Result<CropParams> {
    let policy = ViewPolicy::crop_resize(source_size, output_size, scale_range, aspect_range)?;
    Ok(policy.sample(&mut stream_rng(rng_seed, 0)))
}

/// Seeded ECT draw: same sampler, scale range rescaled by `(L / N)^2`.
pub fn sample_ect(rng_seed: u64, policy: &ViewPolicy) -> Result<CropParams> {
    if policy.mode != ViewMode::Ect {
        return Err(Error::InvalidParameter {
            name: "mode",
            reason: "policy is not an ECT policy".into(),
        });
    }
    policy.validate()?;
    Ok(policy.sample(&mut stream_rng(rng_seed, 0)))
}

/// Two views from one policy, drawn exactly as trial 0 of [`estimate_mean_iou`] with the same seed.
pub fn sample_view_pair(policy: &ViewPolicy, rng_seed: u64) -> Result<(CropParams, CropParams)> {
    policy.validate()?;
    let mut rng = stream_rng(rng_seed, 0);
    let a = policy.sample(&mut rng);
    Ok((a, policy.sample(&mut rng)))
}

/// Crops `params` out of `image` and resizes it to `out x out` with bilinear sampling.
///
/// Sample positions follow the pixel-center convention and are clamped to the crop, so
/// nothing outside the rectangle leaks in.
pub fn apply_crop(image: &RgbImage, params: &CropParams) -> Result<RgbImage> {
    if !params.fits_within(image.width(), image.height()) || params.out == 0 {
        return Err(Error::CropOutOfBounds {
            x: params.x,
            y: params.y,
            w: params.w,
            h: params.h,
            width: image.width(),
            height: image.height(),
        });
    }
    let out = params.out;
    let xs = axis_taps(params.x, params.w, out);
    let ys = axis_taps(params.y, params.h, out);
    Ok(RgbImage::from_fn(out, out, |u, v| {
        let (x0, x1, fx) = xs[u as usize];
        let (y0, y1, fy) = ys[v as usize];
        let p00 = image.get_pixel(x0, y0).0;
        let p10 = image.get_pixel(x1, y0).0;
        let p01 = image.get_pixel(x0, y1).0;
        let p11 = image.get_pixel(x1, y1).0;
        Rgb(std::array::from_fn(|c| {
            let top = (1.0 - fx) * p00[c] as f64 + fx * p10[c] as f64;
            let bottom = (1.0 - fx) * p01[c] as f64 + fx * p11[c] as f64;
            ((1.0 - fy) * top + fy * bottom).round().clamp(0.0, 255.0) as u8
        }))
    }))
}

/// Per output index: the two neighbouring source indices and the weight of the second.
fn axis_taps(start: u32, len: u32, out: u32) -> Vec<(u32, u32, f64)> {
    let step = len as f64 / out as f64;
    let last = (start + len - 1) as f64;
    (0..out)
        .map(|i| {
            let pos = (start as f64 + (i as f64 + 0.5) * step - 0.5).clamp(start as f64, last);
            let i0 = pos.floor();
            let i1 = (i0 + 1.0).min(last);
            (i0 as u32, i1 as u32, pos - i0)
        })
        .collect()
}

/// Intersection over union of two rectangles in the same source frame.
pub fn view_iou(a: &CropParams, b: &CropParams) -> f64 {
    let span = |a0: u32, al: u32, b0: u32, bl: u32| {
        let lo = a0.max(b0) as u64;
        let hi = (a0 as u64 + al as u64).min(b0 as u64 + bl as u64);
        hi.saturating_sub(lo)
    };
    let inter = span(a.x, a.w, b.x, b.w) * span(a.y, a.h, b.y, b.h);
    let union = a.area() + b.area() - inter;
    if union == 0 {
        return 0.0;
    }
    inter as f64 / union as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IouEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
}

/// Mean IoU between two views drawn from the same policy.
pub fn estimate_mean_iou(policy: &ViewPolicy, trials: usize, rng_seed: u64) -> Result<IouEstimate> {
    estimate_pair_iou(policy, policy, trials, rng_seed)
}

/// Mean IoU between a `first`-policy view and a `second`-policy view over `trials` pairs.
///
/// Trial `t` draws from its own stream `(rng_seed, t)`, and the reduction runs in
/// trial order, so the result is the same for any thread count.
pub fn estimate_pair_iou(first: &ViewPolicy, second: &ViewPolicy, trials: usize, rng_seed: u64) -> Result<IouEstimate> {
    first.validate()?;
    second.validate()?;
    if first.source_size != second.source_size {
        return Err(Error::ShapeMismatch(format!(
            "policies use different sources ({} vs {})",
            first.source_size, second.source_size
        )));
    }
    if trials == 0 {
        return Err(Error::InvalidParameter {
            name: "trials",
            reason: "must be at least 1".into(),
        });
    }

    let ious: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(rng_seed, t);
            let a = first.sample(&mut rng);
            let b = second.sample(&mut rng);
            view_iou(&a, &b)
        })
        .collect();

    let n = trials as f64;
    let mean = ious.iter().sum::<f64>() / n;
    let stderr = if trials > 1 {
        let var = ious.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(IouEstimate { mean, stderr, trials })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub source_size: u32,
    /// Estimate for every candidate, in the order given.
    pub estimates: Vec<(u32, IouEstimate)>,
}

/// Picks the ECT source size whose mean global-view IoU is closest to `target_iou`.
///
/// Every candidate is simulated with the same seed. Ties go to the smaller source.
pub fn calibrate_source_size(
    target_iou: f64,
    output_size: u32,
    scale_range: (f64, f64),
    aspect_range: (f64, f64),
    candidates: &[u32],
    trials: usize,
    rng_seed: u64,
) -> Result<Calibration> {
    if candidates.is_empty() {
        return Err(Error::NoCandidates);
    }
    let estimates = candidates
        .iter()
        .map(|&n| {
            let policy = ViewPolicy::ect(n, output_size, scale_range, aspect_range)?;
            Ok((n, estimate_mean_iou(&policy, trials, rng_seed)?))
        })
        .collect::<Result<Vec<_>>>()?;

    let means: Vec<(u32, f64)> = estimates.iter().map(|(n, e)| (*n, e.mean)).collect();
    Ok(Calibration {
        source_size: closest_candidate(target_iou, &means),
        estimates,
    })
}

fn closest_candidate(target: f64, means: &[(u32, f64)]) -> u32 {
    let mut best: Option<(u32, f64)> = None;
    for &(n, mean) in means {
        let gap = (mean - target).abs();
        best = match best {
            Some((bn, bgap)) if bgap < gap || (bgap == gap && bn <= n) => Some((bn, bgap)),
            _ => Some((n, gap)),
        };
    }
    best.map(|b| b.0).unwrap_or_default()
}
