use super::Tensor;
use crate::error::{Error, Result};

/// SGD with momentum and L2 weight decay:
/// `v <- momentum * v + grad + weight_decay * param; param <- param - lr * v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f32,
    pub momentum: f32,
    pub weight_decay: f32,
    velocity: Vec<Vec<f32>>,
}

impl Sgd {
    pub fn new(lr: f32, momentum: f32, weight_decay: f32) -> Self {
        Self {
            lr,
            momentum,
            weight_decay,
            velocity: Vec::new(),
        }
    }

    /// Applies one update. Nothing is modified when any new value would be
    /// non-finite.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[&Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Shape(format!(
                "{} params, {} grads",
                params.len(),
                grads.len()
            )));
        }
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|p| vec![0.0; p.len()]).collect();
        }
        if self.velocity.len() != params.len() {
            return Err(Error::Shape("optimizer reused with a different parameter list".into()));
        }
        let mut new_v = Vec::with_capacity(params.len());
        for ((p, g), v) in params.iter().zip(grads).zip(&self.velocity) {
            if p.shape() != g.shape() || v.len() != p.len() {
                return Err(Error::Shape(format!(
                    "param {:?} vs grad {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
            let nv: Vec<f32> = v
                .iter()
                .zip(g.data())
                .zip(p.data())
                .map(|((&v, &g), &w)| self.momentum * v + g + self.weight_decay * w)
                .collect();
            let finite = nv
                .iter()
                .zip(p.data())
                .all(|(&v, &w)| (w - self.lr * v).is_finite());
            if !finite {
                return Err(Error::NonFinite("sgd update".into()));
            }
            new_v.push(nv);
        }
        for (p, v) in params.iter_mut().zip(&new_v) {
            for (w, &v) in p.data_mut().iter_mut().zip(v) {
                *w -= self.lr * v;
            }
        }
        self.velocity = new_v;
        Ok(())
    }
}
