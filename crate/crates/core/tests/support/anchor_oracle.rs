//! Brute-force anchor matching written from the grid definition, without
//! going through the library's geometry helpers.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rpntrack::geometry::{match_anchors, AnchorGridConfig, GridPos, MatchScheme, Rect};
use rpntrack::tensor::Rng;

pub const TAUS: [f64; 5] = [0.5, 0.6, 0.7, 0.8, 0.9];

/// `(x0, y0, x1, y1)` of the anchor square at cell `(i, j)`.
pub fn anchor_square(cfg: &AnchorGridConfig, i: usize, j: usize) -> (f64, f64, f64, f64) {
    let centre = |k: usize| cfg.patch_size as f64 / 2.0 + (k as f64 - (cfg.grid_size as f64 - 1.0) / 2.0) * cfg.stride as f64;
    let h = cfg.anchor_side as f64 / 2.0;
    let (cx, cy) = (centre(i), centre(j));
    (cx - h, cy - h, cx + h, cy + h)
}

pub fn overlap(a: (f64, f64, f64, f64), b: (f64, f64, f64, f64)) -> f64 {
    let w = (a.2.min(b.2) - a.0.max(b.0)).max(0.0);
    let h = (a.3.min(b.3) - a.1.max(b.1)).max(0.0);
    let inter = w * h;
    let area = |r: (f64, f64, f64, f64)| (r.2 - r.0) * (r.3 - r.1);
    inter / (area(a) + area(b) - inter)
}

/// Every cell whose anchor reaches `tau`, plus the central cells.
pub fn brute_force(gt: &Rect, cfg: &AnchorGridConfig, tau: f64) -> BTreeSet<(usize, usize)> {
    let g = cfg.grid_size as usize;
    let central: Vec<usize> = if g % 2 == 0 { vec![g / 2 - 1, g / 2] } else { vec![g / 2] };
    let gtr = (gt.x, gt.y, gt.x + gt.w, gt.y + gt.h);
    let mut out = BTreeSet::new();
    for j in 0..g {
        for i in 0..g {
            let fiat = central.contains(&i) && central.contains(&j);
            if fiat || overlap(anchor_square(cfg, i, j), gtr) >= tau {
                out.insert((i, j));
            }
        }
    }
    out
}

pub fn library(gt: &Rect, cfg: &AnchorGridConfig, tau: f64) -> BTreeSet<(usize, usize)> {
    match_anchors(gt, cfg, MatchScheme::AnchorMatched(tau))
        .unwrap()
        .into_iter()
        .map(|p: GridPos| (p.x, p.y))
        .collect()
}

/// Random groundtruth boxes inside the patch, biased towards anchor-sized
/// boxes near the centre so that non-trivial matches occur.
pub fn random_gts(n: usize, seed: u64) -> Vec<Rect> {
    let cfg = AnchorGridConfig::default();
    let p = cfg.patch_size as f64;
    let mut rng = Rng::new(seed);
    (0..n)
        .map(|_| {
            let w = rng.uniform_in(100.0, p);
            let h = rng.uniform_in(100.0, p);
            Rect::new(rng.uniform_in(0.0, p - w), rng.uniform_in(0.0, p - h), w, h)
        })
        .collect()
}

/// Placements x thresholds on which library and brute force disagree.
pub fn disagreements(seed: u64) -> Vec<String> {
    let cfg = AnchorGridConfig::default();
    let mut bad = Vec::new();
    for gt in random_gts(50, seed) {
        for tau in TAUS {
            let (a, b) = (library(&gt, &cfg, tau), brute_force(&gt, &cfg, tau));
            if a != b {
                bad.push(format!("{gt:?} tau {tau}: library {} cells, oracle {}", a.len(), b.len()));
            }
        }
    }
    bad
}

/// Central 2x2 at tau 0.7 for the centred 171 square, and the nearest
/// non-central IoU (offset (24, 8)) equal to 23961/34521 within 1e-6.
pub fn centred_case() -> (bool, f64) {
    let cfg = AnchorGridConfig::default();
    let gt = cfg.centered_target();
    let want: BTreeSet<(usize, usize)> = [(6, 6), (7, 6), (6, 7), (7, 7)].into_iter().collect();
    let gtr = (gt.x, gt.y, gt.x + gt.w, gt.y + gt.h);
    let ring = overlap(anchor_square(&cfg, 5, 6), gtr);
    (library(&gt, &cfg, 0.7) == want, ring)
}
