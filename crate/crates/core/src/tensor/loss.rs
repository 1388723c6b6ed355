use super::Tensor;
use crate::error::{Error, Result};
use crate::geometry::{Label, LabelMap};

/// `(n, g)` for logits shaped `[2, g, g]` or `[n, 2, g, g]`.
fn two_channel_dims(logits: &Tensor) -> Result<(usize, usize)> {
    let (n, c, h, w) = match logits.shape() {
        &[c, h, w] => (1, c, h, w),
        &[n, c, h, w] => (n, c, h, w),
        s => return Err(Error::Shape(format!("expected [n,]2xGxG logits, got {s:?}"))),
    };
    if c != 2 || h != w {
        return Err(Error::Shape(format!(
            "expected two square channels, got {:?}",
            logits.shape()
        )));
    }
    Ok((n, h))
}

/// Per-position probability of the object class (channel 1), shaped
/// `[n, g, g]` flattened.
pub fn softmax2_object_prob(logits: &Tensor) -> Result<Vec<f32>> {
    let (n, g) = two_channel_dims(logits)?;
    let plane = g * g;
    let d = logits.data();
    let mut out = Vec::with_capacity(n * plane);
    for s in 0..n {
        let (bg, fg) = d[s * 2 * plane..(s + 1) * 2 * plane].split_at(plane);
        out.extend(
            bg.iter()
                .zip(fg)
                .map(|(&b, &f)| 1.0 / (1.0 + (b - f).exp())),
        );
    }
    Ok(out)
}

/// Two-class softmax cross-entropy averaged over every non-ignored position
/// of every sample. Channel 0 is background, channel 1 is object.
///
/// Returns the loss and its gradient with respect to `logits`; ignored
/// positions get exactly zero gradient.
pub fn softmax2_ce(logits: &Tensor, labels: &[&LabelMap]) -> Result<(f32, Tensor)> {
    let (n, g) = two_channel_dims(logits)?;
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "{} label maps for {n} logit maps",
            labels.len()
        )));
    }
    if let Some(m) = labels.iter().find(|m| m.size() != g) {
        return Err(Error::Shape(format!(
            "label map is {0}x{0}, logits are {g}x{g}",
            m.size()
        )));
    }
    let support: usize = labels
        .iter()
        .map(|m| m.cells().len() - m.count(Label::Ignore))
        .sum();
    if support == 0 {
        return Err(Error::EmptyLossSupport);
    }
    let inv = 1.0 / support as f32;
    let plane = g * g;
    let d = logits.data();
    let mut grad = vec![0.0f32; d.len()];
    let mut total = 0.0f32;
    for (s, map) in labels.iter().enumerate() {
        let base = s * 2 * plane;
        for (p, &label) in map.cells().iter().enumerate() {
            let target = match label {
                Label::Ignore => continue,
                Label::Positive => 1,
                Label::Negative => 0,
            };
            let z = [d[base + p], d[base + plane + p]];
            let m = z[0].max(z[1]);
            let e = [(z[0] - m).exp(), (z[1] - m).exp()];
            let sum = e[0] + e[1];
            let lse = m + sum.ln();
            total += lse - z[target];
            for c in 0..2 {
                let prob = e[c] / sum;
                let y = if c == target { 1.0 } else { 0.0 };
                grad[base + c * plane + p] = (prob - y) * inv;
            }
        }
    }
    let loss = total * inv;
    if !loss.is_finite() {
        return Err(Error::NonFinite("softmax cross-entropy".into()));
    }
    Ok((loss, Tensor::from_vec(logits.shape(), grad)?))
}

/// Smooth-L1 (Huber with unit threshold) averaged over all elements.
pub fn smooth_l1(pred: &Tensor, target: &Tensor) -> Result<(f32, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "smooth_l1 {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    if pred.is_empty() {
        return Ok((0.0, pred.clone()));
    }
    let inv = 1.0 / pred.len() as f32;
    let mut total = 0.0f32;
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p - t;
            if d.abs() < 1.0 {
                total += 0.5 * d * d;
                d * inv
            } else {
                total += d.abs() - 0.5;
                d.signum() * inv
            }
        })
        .collect();
    let loss = total * inv;
    if !loss.is_finite() {
        return Err(Error::NonFinite("smooth_l1".into()));
    }
    Ok((loss, Tensor::from_vec(pred.shape(), grad)?))
}

/// Mean squared error over all elements.
pub fn mse(pred: &Tensor, target: &Tensor) -> Result<(f32, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!("mse {:?} vs {:?}", pred.shape(), target.shape())));
    }
    if pred.is_empty() {
        return Err(Error::Shape("mse of empty tensors".into()));
    }
    let inv = 1.0 / pred.len() as f32;
    let mut total = 0.0f32;
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p - t;
            total += d * d;
            2.0 * d * inv
        })
        .collect();
    let loss = total * inv;
    if !loss.is_finite() {
        return Err(Error::NonFinite("mse".into()));
    }
    Ok((loss, Tensor::from_vec(pred.shape(), grad)?))
}
