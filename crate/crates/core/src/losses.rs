//! Score-map losses: the classic RPN objective (classification plus box
//! regression) and the dual classification objective with an anchor-matched
//! a-branch and an all-positions q-branch.
//!
//! Logit tensors are `[2, G, G]` or `[N, 2, G, G]`; channel 1 is the object
//! class. Each cross-entropy term is a mean over its non-ignored positions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Label, LabelMap, MatchScheme, Rect};
use crate::tensor::{softmax2_ce, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMaps {
    pub a_logits: Tensor,
    pub q_logits: Tensor,
    /// `[4, G, G]` or `[N, 4, G, G]` box deltas, only used by [`rpn_loss`].
    pub reg: Option<Tensor>,
}

impl ScoreMaps {
    fn check(&self) -> Result<()> {
        if self.a_logits.shape() != self.q_logits.shape() {
            return Err(Error::Shape(format!(
                "a-branch {:?} and q-branch {:?} differ",
                self.a_logits.shape(),
                self.q_logits.shape()
            )));
        }
        Ok(())
    }
}

/// Box regression target relative to an anchor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxDelta {
    pub tx: f64,
    pub ty: f64,
    pub tw: f64,
    pub th: f64,
}

impl BoxDelta {
    pub fn to_array(&self) -> [f64; 4] {
        [self.tx, self.ty, self.tw, self.th]
    }
}

pub fn box_delta(anchor: &Rect, gt: &Rect) -> Result<BoxDelta> {
    if !anchor.is_valid() || !gt.is_valid() {
        return Err(Error::Geometry(format!("box delta needs positive sizes: {anchor:?}, {gt:?}")));
    }
    let (ax, ay) = anchor.center();
    let (gx, gy) = gt.center();
    Ok(BoxDelta {
        tx: (gx - ax) / anchor.w,
        ty: (gy - ay) / anchor.h,
        tw: (gt.w / anchor.w).ln(),
        th: (gt.h / anchor.h).ln(),
    })
}

pub fn apply_delta(anchor: &Rect, d: &BoxDelta) -> Result<Rect> {
    if !anchor.is_valid() || !d.to_array().iter().all(|v| v.is_finite()) {
        return Err(Error::Geometry(format!("cannot apply {d:?} to {anchor:?}")));
    }
    let (ax, ay) = anchor.center();
    let r = Rect::from_center(
        ax + d.tx * anchor.w,
        ay + d.ty * anchor.h,
        anchor.w * d.tw.exp(),
        anchor.h * d.th.exp(),
    );
    if !r.is_valid() {
        return Err(Error::Geometry(format!("delta {d:?} produced degenerate box")));
    }
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rpn2tConfig {
    pub alpha: f32,
    pub beta: f32,
    pub scheme_a: MatchScheme,
    pub scheme_q: MatchScheme,
}

impl Default for Rpn2tConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 10.0,
            scheme_a: MatchScheme::AnchorMatched(0.7),
            scheme_q: MatchScheme::AllPositions,
        }
    }
}

impl Rpn2tConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0) || !(self.alpha.is_finite() && self.beta.is_finite()) {
            return Err(Error::Config(format!(
                "alpha and beta must be finite and non-negative, got {} and {}",
                self.alpha, self.beta
            )));
        }
        if self.alpha == 0.0 && self.beta == 0.0 {
            return Err(Error::Config("alpha and beta cannot both be zero".into()));
        }
        self.scheme_a.validate()?;
        self.scheme_q.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RpnConfig {
    pub lambda: f32,
    pub tau: f64,
}

impl Default for RpnConfig {
    fn default() -> Self {
        Self { lambda: 10.0, tau: 0.7 }
    }
}

impl RpnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        MatchScheme::AnchorMatched(self.tau).validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f32,
    /// Unweighted a-branch cross-entropy (0 when the branch has no support).
    pub cls_a: f32,
    /// Unweighted q-branch cross-entropy.
    pub cls_q: f32,
    /// Unweighted regression term.
    pub reg: f32,
    pub grad_a: Tensor,
    pub grad_q: Tensor,
    pub grad_reg: Option<Tensor>,
}

/// Cross-entropy that treats an all-ignored branch as absent.
fn branch_ce(logits: &Tensor, labels: &[&LabelMap]) -> Result<Option<(f32, Tensor)>> {
    match softmax2_ce(logits, labels) {
        Ok(v) => Ok(Some(v)),
        Err(Error::EmptyLossSupport) => Ok(None),
        Err(e) => Err(e),
    }
}

fn scale(t: &mut Tensor, k: f32) {
    t.data_mut().iter_mut().for_each(|v| *v *= k);
}

/// `alpha * CE(a, labels_a) + beta * CE(q, labels_q)`.
///
/// A branch whose labels are all ignored contributes nothing; it is an error
/// only when both are.
pub fn rpn2t_loss(
    maps: &ScoreMaps,
    labels_a: &[&LabelMap],
    labels_q: &[&LabelMap],
    cfg: &Rpn2tConfig,
) -> Result<LossOutput> {
    cfg.validate()?;
    maps.check()?;
    let a = branch_ce(&maps.a_logits, labels_a)?;
    let q = branch_ce(&maps.q_logits, labels_q)?;
    if a.is_none() && q.is_none() {
        return Err(Error::EmptyLossSupport);
    }
    let (cls_a, mut grad_a) = a.unwrap_or_else(|| (0.0, Tensor::zeros(maps.a_logits.shape())));
    let (cls_q, mut grad_q) = q.unwrap_or_else(|| (0.0, Tensor::zeros(maps.q_logits.shape())));
    scale(&mut grad_a, cfg.alpha);
    scale(&mut grad_q, cfg.beta);
    Ok(LossOutput {
        loss: cfg.alpha * cls_a + cfg.beta * cls_q,
        cls_a,
        cls_q,
        reg: 0.0,
        grad_a,
        grad_q,
        grad_reg: None,
    })
}

/// Per-sample regression targets, one optional delta per grid cell in
/// row-major order.
pub type RegTargets = Vec<Option<BoxDelta>>;

/// `CE(a, labels) + lambda * mean over positive cells of sum_c smoothL1(t_c - t*_c)`.
pub fn rpn_loss(
    maps: &ScoreMaps,
    labels: &[&LabelMap],
    reg_targets: &[&RegTargets],
    cfg: &RpnConfig,
) -> Result<LossOutput> {
    cfg.validate()?;
    let reg = maps
        .reg
        .as_ref()
        .ok_or_else(|| Error::Shape("regression maps are required".into()))?;
    let (cls_a, grad_a) = softmax2_ce(&maps.a_logits, labels)?;
    let (n, g) = match maps.a_logits.shape() {
        &[_, g, _] => (1, g),
        &[n, _, g, _] => (n, g),
        s => return Err(Error::Shape(format!("unexpected logit shape {s:?}"))),
    };
    let plane = g * g;
    if reg.len() != n * 4 * plane || reg_targets.len() != n {
        return Err(Error::Shape(format!(
            "regression maps {:?} / {} target sets for {n} samples of {g}x{g}",
            reg.shape(),
            reg_targets.len()
        )));
    }
    let positives: usize = labels.iter().map(|m| m.count(Label::Positive)).sum();
    let mut grad_reg = vec![0.0f32; reg.len()];
    let mut total = 0.0f64;
    if positives > 0 {
        let inv = 1.0 / positives as f64;
        for (s, (map, targets)) in labels.iter().zip(reg_targets).enumerate() {
            if targets.len() != plane {
                return Err(Error::Shape(format!("{} regression targets for {plane} cells", targets.len())));
            }
            for (p, label) in map.cells().iter().enumerate() {
                if *label != Label::Positive {
                    continue;
                }
                let t = targets[p].ok_or_else(|| {
                    Error::Data(format!("missing regression target at positive cell {p} of sample {s}"))
                })?;
                for (c, want) in t.to_array().into_iter().enumerate() {
                    let i = (s * 4 + c) * plane + p;
                    let d = reg.data()[i] as f64 - want;
                    let (v, dv) = if d.abs() < 1.0 { (0.5 * d * d, d) } else { (d.abs() - 0.5, d.signum()) };
                    total += v;
                    grad_reg[i] = (cfg.lambda as f64 * dv * inv) as f32;
                }
            }
        }
        total *= inv;
    }
    let reg_term = total as f32;
    let loss = cls_a + cfg.lambda * reg_term;
    if !loss.is_finite() {
        return Err(Error::NonFinite("rpn loss".into()));
    }
    Ok(LossOutput {
        loss,
        cls_a,
        cls_q: 0.0,
        reg: reg_term,
        grad_a,
        grad_q: Tensor::zeros(maps.q_logits.shape()),
        grad_reg: Some(Tensor::from_vec(reg.shape(), grad_reg)?),
    })
}
