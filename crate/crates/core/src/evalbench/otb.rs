use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{center_distance, iou, Rect};

/// Location-error thresholds `0..=50` pixels.
pub const PRECISION_THRESHOLDS: usize = 51;
/// Overlap thresholds `0.00, 0.01, ..., 1.00`.
pub const SUCCESS_THRESHOLDS: usize = 101;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub thresholds: Vec<f64>,
    pub values: Vec<f64>,
}

impl Curve {
    pub fn to_csv(&self, header: &str) -> String {
        let mut s = format!("{header},value\n");
        for (t, v) in self.thresholds.iter().zip(&self.values) {
            s.push_str(&format!("{t},{v}\n"));
        }
        s
    }
}

fn check_lengths(boxes: &[Rect], gt: &[Rect]) -> Result<()> {
    if boxes.len() != gt.len() {
        return Err(Error::Data(format!(
            "{} tracked boxes for {} groundtruth frames",
            boxes.len(),
            gt.len()
        )));
    }
    if gt.is_empty() {
        return Err(Error::Data("cannot evaluate an empty trajectory".into()));
    }
    Ok(())
}

fn fraction(values: &[f64], pred: impl Fn(f64) -> bool) -> f64 {
    values.iter().filter(|&&v| pred(v)).count() as f64 / values.len() as f64
}

pub fn center_errors(boxes: &[Rect], gt: &[Rect]) -> Result<Vec<f64>> {
    check_lengths(boxes, gt)?;
    Ok(boxes.iter().zip(gt).map(|(b, g)| center_distance(b, g)).collect())
}

pub fn overlaps(boxes: &[Rect], gt: &[Rect]) -> Result<Vec<f64>> {
    check_lengths(boxes, gt)?;
    Ok(boxes.iter().zip(gt).map(|(b, g)| iou(b, g)).collect())
}

/// Fraction of frames whose centre error is at most `t`, for `t = 0..=50`.
pub fn precision_curve(boxes: &[Rect], gt: &[Rect]) -> Result<Curve> {
    let err = center_errors(boxes, gt)?;
    let thresholds: Vec<f64> = (0..PRECISION_THRESHOLDS).map(|t| t as f64).collect();
    let values = thresholds.iter().map(|&t| fraction(&err, |e| e <= t)).collect();
    let c = Curve { thresholds, values };
    ensure_monotone(&c.values, true, "precision")?;
    Ok(c)
}

/// Fraction of frames whose IoU strictly exceeds `u`, for `u = 0, 0.01, ..., 1`.
pub fn success_curve(boxes: &[Rect], gt: &[Rect]) -> Result<Curve> {
    let ov = overlaps(boxes, gt)?;
    Ok(success_curve_from_overlaps(&ov))
}

pub fn success_curve_from_overlaps(ov: &[f64]) -> Curve {
    let thresholds: Vec<f64> = (0..SUCCESS_THRESHOLDS).map(|i| i as f64 / 100.0).collect();
    let values = thresholds.iter().map(|&u| fraction(ov, |o| o > u)).collect();
    let c = Curve { thresholds, values };
    ensure_monotone(&c.values, false, "success").expect("counting a shrinking set");
    c
}

/// Value of the precision curve at 20 px.
pub fn precision_at_20(curve: &Curve) -> f64 {
    curve.values[20]
}

/// Mean of the success curve.
pub fn auc(curve: &Curve) -> f64 {
    curve.values.iter().sum::<f64>() / curve.values.len() as f64
}

fn ensure_monotone(values: &[f64], increasing: bool, what: &str) -> Result<()> {
    let ok = values
        .windows(2)
        .all(|w| if increasing { w[0] <= w[1] } else { w[0] >= w[1] });
    if ok {
        Ok(())
    } else {
        Err(Error::Data(format!("{what} curve is not monotone")))
    }
}

/// Mean IoU over all frames.
pub fn mean_iou(boxes: &[Rect], gt: &[Rect]) -> Result<f64> {
    let ov = overlaps(boxes, gt)?;
    Ok(ov.iter().sum::<f64>() / ov.len() as f64)
}

/// How much the tracked box grew relative to the groundtruth between the
/// first and last frame: `(A_last / A_first) / (G_last / G_first)`.
pub fn area_inflation(boxes: &[Rect], gt: &[Rect]) -> Result<f64> {
    check_lengths(boxes, gt)?;
    let (b0, b1) = (boxes[0], boxes[boxes.len() - 1]);
    let (g0, g1) = (gt[0], gt[gt.len() - 1]);
    Ok((b1.area() / b0.area()) / (g1.area() / g0.area()))
}
