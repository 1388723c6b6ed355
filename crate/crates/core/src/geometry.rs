//! Rectangle arithmetic, the anchor grid, anchor matching and label maps.
//!
//! All coordinates are pixels with a top-left origin. A grid position is
//! written `(x, y)`: `x` indexes columns, `y` indexes rows, and label maps
//! are stored row-major.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box: left edge, top edge, width, height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    /// Builds a rect, rejecting non-finite coordinates and non-positive sizes.
    pub fn try_new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let r = Self { x, y, w, h };
        if r.is_valid() {
            Ok(r)
        } else {
            Err(Error::Geometry(format!("invalid rect ({x}, {y}, {w}, {h})")))
        }
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.w.is_finite()
            && self.h.is_finite()
            && self.w > 0.0
            && self.h > 0.0
    }

    #[inline]
    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    #[inline]
    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    #[inline]
    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    #[inline]
    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    /// Clamps the rect so that it lies fully inside a `width` x `height` image.
    /// Sizes are limited to `[min_side, image side]`.
    pub fn clamp_to(&self, width: f64, height: f64, min_side: f64) -> Rect {
        let w = self.w.clamp(min_side.min(width), width);
        let h = self.h.clamp(min_side.min(height), height);
        let (cx, cy) = self.center();
        let x = (cx - w / 2.0).clamp(0.0, width - w);
        let y = (cy - h / 2.0).clamp(0.0, height - h);
        Rect::new(x, y, w, h)
    }
}

/// Intersection over union of two boxes. Symmetric, in `[0, 1]`, and 0 for
/// disjoint boxes.
pub fn iou(a: &Rect, b: &Rect) -> f64 {
    // Extents are recomputed as right - left on both sides so that identical
    // boxes produce bitwise-equal intersection and area terms.
    let (aw, ah) = (a.right() - a.x, a.bottom() - a.y);
    let (bw, bh) = (b.right() - b.x, b.bottom() - b.y);
    let iw = a.right().min(b.right()) - a.x.max(b.x);
    let ih = a.bottom().min(b.bottom()) - a.y.max(b.y);
    if !(iw > 0.0 && ih > 0.0) {
        return 0.0;
    }
    let inter = iw * ih;
    let union = aw * ah + bw * bh - inter;
    if !(union > 0.0) {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Euclidean distance between box centers.
pub fn center_distance(a: &Rect, b: &Rect) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
}

/// Layout of the square anchor grid over an input patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorGridConfig {
    pub patch_size: u32,
    pub grid_size: u32,
    pub stride: u32,
    pub anchor_side: u32,
}

impl Default for AnchorGridConfig {
    fn default() -> Self {
        Self {
            patch_size: 203,
            grid_size: 14,
            stride: 16,
            anchor_side: 171,
        }
    }
}

impl AnchorGridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || self.stride == 0 || self.anchor_side == 0 {
            return Err(Error::Config("anchor grid sizes must be positive".into()));
        }
        if self.grid_size < 2 {
            return Err(Error::Config(format!(
                "anchor grid_size must be >= 2, got {}",
                self.grid_size
            )));
        }
        if self.anchor_side > self.patch_size {
            return Err(Error::Config(format!(
                "anchor_side {} exceeds patch_size {}",
                self.anchor_side, self.patch_size
            )));
        }
        Ok(())
    }

    pub fn grid(&self) -> usize {
        self.grid_size as usize
    }

    pub fn cells(&self) -> usize {
        self.grid() * self.grid()
    }

    /// Ratio of patch side to the object side inside a positive patch.
    pub fn context_scale(&self) -> f64 {
        f64::from(self.patch_size) / f64::from(self.anchor_side)
    }

    /// The groundtruth square inside a positive patch: an `anchor_side`
    /// square centered in the patch.
    pub fn centered_target(&self) -> Rect {
        let c = f64::from(self.patch_size) / 2.0;
        let s = f64::from(self.anchor_side);
        Rect::from_center(c, c, s, s)
    }

    fn axis_center(&self, k: usize) -> f64 {
        let half = f64::from(self.patch_size) / 2.0;
        let mid = (f64::from(self.grid_size) - 1.0) / 2.0;
        half + (k as f64 - mid) * f64::from(self.stride)
    }

    /// Center of the anchor at grid position `pos`.
    pub fn anchor_center(&self, pos: GridPos) -> (f64, f64) {
        (self.axis_center(pos.x), self.axis_center(pos.y))
    }

    pub fn anchor_box(&self, pos: GridPos) -> Rect {
        let (cx, cy) = self.anchor_center(pos);
        let s = f64::from(self.anchor_side);
        Rect::from_center(cx, cy, s, s)
    }

    /// Positions that are always matched: the central 2x2 block for even
    /// grids, the single central cell for odd grids.
    pub fn central_positions(&self) -> Vec<GridPos> {
        let g = self.grid();
        let ks: Vec<usize> = if g % 2 == 0 {
            vec![g / 2 - 1, g / 2]
        } else {
            vec![g / 2]
        };
        let mut out = Vec::with_capacity(ks.len() * ks.len());
        for &y in &ks {
            for &x in &ks {
                out.push(GridPos { x, y });
            }
        }
        out
    }

    /// All grid positions in row-major order.
    pub fn positions(&self) -> impl Iterator<Item = GridPos> {
        let g = self.grid();
        (0..g * g).map(move |i| GridPos { x: i % g, y: i / g })
    }
}

/// Anchor centers for every grid cell, row-major.
pub fn anchor_centers(cfg: &AnchorGridConfig) -> Vec<(f64, f64)> {
    cfg.positions().map(|p| cfg.anchor_center(p)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GridPos {
    pub x: usize,
    pub y: usize,
}

impl GridPos {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }
}

/// How anchor positions are matched against the groundtruth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MatchScheme {
    /// IoU of the anchor box with the groundtruth must reach `tau`.
    AnchorMatched(f64),
    /// Every grid position is matched.
    AllPositions,
}

impl MatchScheme {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MatchScheme::AnchorMatched(tau) if !(tau > 0.0 && tau <= 1.0) => Err(Error::Config(
                format!("anchor match threshold must lie in (0, 1], got {tau}"),
            )),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for MatchScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatchScheme::AnchorMatched(tau) => write!(f, "anchor:{tau}"),
            MatchScheme::AllPositions => write!(f, "all"),
        }
    }
}

impl FromStr for MatchScheme {
    type Err = Error;

    /// Accepts `all` or `anchor:<tau>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "all" {
            return Ok(MatchScheme::AllPositions);
        }
        if let Some(t) = s.strip_prefix("anchor:") {
            let tau: f64 = t
                .parse()
                .map_err(|_| Error::Config(format!("bad match threshold `{t}`")))?;
            let scheme = MatchScheme::AnchorMatched(tau);
            scheme.validate()?;
            return Ok(scheme);
        }
        Err(Error::Config(format!(
            "unknown match scheme `{s}` (expected `all` or `anchor:<tau>`)"
        )))
    }
}

/// Grid positions matched to `gt` under `scheme`, sorted row-major.
///
/// Under `AnchorMatched(tau)` a position matches when the IoU of its anchor
/// box with `gt` is at least `tau`; the central positions count as IoU 1.0.
pub fn match_anchors(
    gt: &Rect,
    cfg: &AnchorGridConfig,
    scheme: MatchScheme,
) -> Result<Vec<GridPos>> {
    cfg.validate()?;
    scheme.validate()?;
    let patch = f64::from(cfg.patch_size);
    if !gt.is_valid() || gt.x < 0.0 || gt.y < 0.0 || gt.right() > patch || gt.bottom() > patch {
        return Err(Error::Geometry(format!(
            "groundtruth {gt:?} extends beyond the {patch}x{patch} patch"
        )));
    }
    let tau = match scheme {
        MatchScheme::AllPositions => return Ok(cfg.positions().collect()),
        MatchScheme::AnchorMatched(tau) => tau,
    };
    let central: BTreeSet<GridPos> = cfg.central_positions().into_iter().collect();
    let mut matched: Vec<GridPos> = cfg
        .positions()
        .filter(|p| central.contains(p) || iou(&cfg.anchor_box(*p), gt) >= tau)
        .collect();
    matched.sort_by_key(|p| (p.y, p.x));
    Ok(matched)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Positive,
    Negative,
    Ignore,
}

impl Label {
    pub fn symbol(self) -> char {
        match self {
            Label::Positive => '+',
            Label::Negative => '-',
            Label::Ignore => '.',
        }
    }

    pub fn from_symbol(c: char) -> Option<Label> {
        match c {
            '+' => Some(Label::Positive),
            '-' => Some(Label::Negative),
            '.' => Some(Label::Ignore),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SampleClass {
    Positive,
    Negative,
}

/// Square grid of per-anchor labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    size: usize,
    cells: Vec<Label>,
}

impl LabelMap {
    pub fn filled(size: usize, label: Label) -> Self {
        Self {
            size,
            cells: vec![label; size * size],
        }
    }

    /// Parses rows of `+`, `-`, `.` characters separated by newlines.
    pub fn parse(text: &str) -> Result<Self> {
        let rows: Vec<&str> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect();
        let size = rows.len();
        let mut cells = Vec::with_capacity(size * size);
        for row in &rows {
            if row.chars().count() != size {
                return Err(Error::Data(format!("label map row `{row}` is not {size} wide")));
            }
            for c in row.chars() {
                cells.push(
                    Label::from_symbol(c)
                        .ok_or_else(|| Error::Data(format!("bad label symbol `{c}`")))?,
                );
            }
        }
        Ok(Self { size, cells })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn cells(&self) -> &[Label] {
        &self.cells
    }

    pub fn get(&self, pos: GridPos) -> Label {
        self.cells[pos.y * self.size + pos.x]
    }

    pub fn set(&mut self, pos: GridPos, label: Label) {
        self.cells[pos.y * self.size + pos.x] = label;
    }

    pub fn count(&self, label: Label) -> usize {
        self.cells.iter().filter(|&&l| l == label).count()
    }

    pub fn is_all_ignore(&self) -> bool {
        self.cells.iter().all(|&l| l == Label::Ignore)
    }

    /// One text row per grid row using `+`, `-` and `.`.
    pub fn render_text(&self) -> String {
        let mut s = String::with_capacity(self.size * (self.size + 1));
        for row in self.cells.chunks(self.size) {
            s.extend(row.iter().map(|l| l.symbol()));
            s.push('\n');
        }
        s
    }

    /// CSV with one row per grid row: 1 positive, 0 negative, empty ignore.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for row in self.cells.chunks(self.size) {
            let fields: Vec<&str> = row
                .iter()
                .map(|l| match l {
                    Label::Positive => "1",
                    Label::Negative => "0",
                    Label::Ignore => "",
                })
                .collect();
            s.push_str(&fields.join(","));
            s.push('\n');
        }
        s
    }
}

/// Label map for a sample patch: matched positions carry the sample's class,
/// everything else is ignored.
pub fn label_map(
    class: SampleClass,
    matched: &[GridPos],
    cfg: &AnchorGridConfig,
) -> Result<LabelMap> {
    let g = cfg.grid();
    let label = match class {
        SampleClass::Positive => Label::Positive,
        SampleClass::Negative => Label::Negative,
    };
    let mut map = LabelMap::filled(g, Label::Ignore);
    for &p in matched {
        if p.x >= g || p.y >= g {
            return Err(Error::Geometry(format!("position {p:?} outside {g}x{g} grid")));
        }
        map.set(p, label);
    }
    Ok(map)
}
