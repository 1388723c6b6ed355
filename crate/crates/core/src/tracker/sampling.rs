//! Box sampling around the current estimate.

use crate::error::{Error, Result};
use crate::geometry::{iou, Rect};
use crate::tensor::Rng;

/// Smallest side a sampled box may shrink to, in pixels.
pub const MIN_SIDE: f64 = 4.0;

/// Gaussian translation with std `trans_sigma * sqrt(w * h)` per axis and
/// scale factor `scale_step^r`, `r ~ N(0, scale_sigma)`, clamped to the image.
pub fn gaussian_box(
    center: &Rect,
    trans_sigma: f64,
    scale_step: f64,
    scale_sigma: f64,
    image: (usize, usize),
    rng: &mut Rng,
) -> Rect {
    let (cx, cy) = center.center();
    let s = (center.w * center.h).sqrt();
    let dx = rng.normal() * trans_sigma * s;
    let dy = rng.normal() * trans_sigma * s;
    let k = scale_step.powf(rng.normal() * scale_sigma);
    Rect::from_center(cx + dx, cy + dy, center.w * k, center.h * k).clamp_to(
        image.0 as f64,
        image.1 as f64,
        MIN_SIDE,
    )
}

/// A box of the same size as `like` placed uniformly inside the image.
pub fn uniform_box(like: &Rect, image: (usize, usize), rng: &mut Rng) -> Rect {
    let (w, h) = (like.w.min(image.0 as f64), like.h.min(image.1 as f64));
    let x = rng.uniform_in(0.0, image.0 as f64 - w);
    let y = rng.uniform_in(0.0, image.1 as f64 - h);
    Rect::new(x, y, w, h)
}

pub fn candidates(
    center: &Rect,
    n: usize,
    trans_sigma: f64,
    scale_step: f64,
    scale_sigma: f64,
    image: (usize, usize),
    rng: &mut Rng,
) -> Vec<Rect> {
    (0..n)
        .map(|_| gaussian_box(center, trans_sigma, scale_step, scale_sigma, image, rng))
        .collect()
}

/// Boxes with IoU >= `min_iou` against `gt`. Tries `50 * n` draws, then once
/// more with the translation std halved, then gives up.
pub fn positives(
    gt: &Rect,
    n: usize,
    min_iou: f64,
    trans_sigma: f64,
    scale_step: f64,
    scale_sigma: f64,
    image: (usize, usize),
    rng: &mut Rng,
) -> Result<Vec<Rect>> {
    let mut out = Vec::with_capacity(n);
    for sigma in [trans_sigma, trans_sigma / 2.0] {
        for _ in 0..50 * n {
            if out.len() == n {
                return Ok(out);
            }
            let b = gaussian_box(gt, sigma, scale_step, scale_sigma, image, rng);
            if iou(&b, gt) >= min_iou {
                out.push(b);
            }
        }
    }
    if out.len() == n {
        return Ok(out);
    }
    Err(Error::InsufficientSamples(format!(
        "only {} of {n} positive samples with IoU >= {min_iou} around {gt:?}",
        out.len()
    )))
}

/// Boxes with IoU <= `max_iou` against `gt`: half drawn near the target
/// (translation std `trans_sigma`), half anywhere in the image.
pub fn negatives(
    gt: &Rect,
    n: usize,
    max_iou: f64,
    trans_sigma: f64,
    scale_step: f64,
    scale_sigma: f64,
    image: (usize, usize),
    rng: &mut Rng,
) -> Result<Vec<Rect>> {
    let mut out = Vec::with_capacity(n);
    let local = n / 2;
    let mut tries = 0;
    while out.len() < n && tries < 50 * n {
        tries += 1;
        let b = if out.len() < local {
            gaussian_box(gt, trans_sigma, scale_step, scale_sigma, image, rng)
        } else {
            uniform_box(gt, image, rng)
        };
        if iou(&b, gt) <= max_iou {
            out.push(b);
        }
    }
    if out.len() < n {
        return Err(Error::InsufficientSamples(format!(
            "only {} of {n} negative samples with IoU <= {max_iou} around {gt:?}",
            out.len()
        )));
    }
    Ok(out)
}

/// `k` distinct indices from `0..n` when `k <= n`; otherwise every index,
/// cycled in a shuffled order until `k` are drawn.
pub fn draw_indices(n: usize, k: usize, rng: &mut Rng) -> Vec<usize> {
    let mut all: Vec<usize> = (0..n).collect();
    if n == 0 {
        return Vec::new();
    }
    if k <= n {
        for i in 0..k {
            let j = i + rng.below(n - i);
            all.swap(i, j);
        }
        all.truncate(k);
        return all;
    }
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        rng.shuffle(&mut all);
        out.extend(all.iter().take(k - out.len()));
    }
    out
}
