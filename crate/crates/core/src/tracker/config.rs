use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Online tracking hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    pub n_pos_init: usize,
    pub n_neg_init: usize,
    pub init_iters: usize,
    pub n_candidates: usize,
    /// Candidate translation std as a fraction of `sqrt(w * h)`.
    pub trans_sigma: f64,
    pub scale_step: f64,
    /// Std of the exponent `r` in the scale factor `scale_step^r`.
    pub scale_sigma: f64,
    pub pos_iou: f64,
    pub neg_iou: f64,
    pub success_threshold: f64,
    pub short_memory: usize,
    pub long_memory: usize,
    pub long_interval: usize,
    pub update_iters: usize,
    pub per_frame_pos: usize,
    pub per_frame_neg: usize,
    pub minibatch_pos: usize,
    pub minibatch_neg: usize,
    pub hard_neg_pool: usize,
    pub lr_init: f32,
    pub lr_update: f32,
    pub momentum: f32,
    pub weight_decay: f32,
    /// Width of the 3x3 head conv.
    pub head_channels: usize,
    /// Per-channel mean subtracted from every patch (pixel values in `[0, 1]`).
    pub pixel_mean: [f32; 3],
    /// Search widening applied after a failed frame.
    pub failure_expand: f64,
    /// Number of best candidates averaged into the estimate.
    pub top_k: usize,
    /// Translation std of positive training samples, as a fraction of `sqrt(w * h)`.
    pub pos_trans_sigma: f64,
    /// Translation std of the local half of the negative samples.
    pub neg_trans_sigma: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            n_pos_init: 500,
            n_neg_init: 5000,
            init_iters: 30,
            n_candidates: 256,
            trans_sigma: 0.6,
            scale_step: 1.05,
            scale_sigma: 0.5,
            pos_iou: 0.7,
            neg_iou: 0.3,
            success_threshold: 0.5,
            short_memory: 20,
            long_memory: 100,
            long_interval: 10,
            update_iters: 10,
            per_frame_pos: 50,
            per_frame_neg: 200,
            minibatch_pos: 32,
            minibatch_neg: 96,
            hard_neg_pool: 1024,
            lr_init: 1e-3,
            lr_update: 2e-3,
            momentum: 0.9,
            weight_decay: 5e-4,
            head_channels: 256,
            pixel_mean: [0.5; 3],
            failure_expand: 1.5,
            top_k: 5,
            pos_trans_sigma: 0.1,
            neg_trans_sigma: 1.0,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_pos_init", self.n_pos_init),
            ("n_neg_init", self.n_neg_init),
            ("init_iters", self.init_iters),
            ("n_candidates", self.n_candidates),
            ("short_memory", self.short_memory),
            ("long_memory", self.long_memory),
            ("long_interval", self.long_interval),
            ("update_iters", self.update_iters),
            ("per_frame_pos", self.per_frame_pos),
            ("per_frame_neg", self.per_frame_neg),
            ("minibatch_pos", self.minibatch_pos),
            ("minibatch_neg", self.minibatch_neg),
            ("hard_neg_pool", self.hard_neg_pool),
            ("head_channels", self.head_channels),
            ("top_k", self.top_k),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("tracker.{name} must be positive")));
            }
        }
        for (name, v) in [
            ("pos_iou", self.pos_iou),
            ("neg_iou", self.neg_iou),
            ("success_threshold", self.success_threshold),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("tracker.{name} must lie in (0, 1), got {v}")));
            }
        }
        if self.pos_iou <= self.neg_iou {
            return Err(Error::Config(format!(
                "tracker.pos_iou ({}) must exceed tracker.neg_iou ({})",
                self.pos_iou, self.neg_iou
            )));
        }
        if self.short_memory > self.long_memory {
            return Err(Error::Config("tracker.short_memory exceeds tracker.long_memory".into()));
        }
        if self.top_k > self.n_candidates {
            return Err(Error::Config("tracker.top_k exceeds tracker.n_candidates".into()));
        }
        if self.minibatch_neg > self.hard_neg_pool {
            return Err(Error::Config("tracker.minibatch_neg exceeds tracker.hard_neg_pool".into()));
        }
        let positive = [
            ("trans_sigma", self.trans_sigma),
            ("scale_sigma", self.scale_sigma),
            ("failure_expand", self.failure_expand),
            ("pos_trans_sigma", self.pos_trans_sigma),
            ("neg_trans_sigma", self.neg_trans_sigma),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("tracker.{name} must be positive, got {v}")));
            }
        }
        if !(self.scale_step > 1.0 && self.scale_step.is_finite()) {
            return Err(Error::Config(format!("tracker.scale_step must exceed 1, got {}", self.scale_step)));
        }
        for (name, v) in [
            ("lr_init", self.lr_init),
            ("lr_update", self.lr_update),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("tracker.{name} must be positive, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("tracker.momentum must lie in [0, 1) and weight_decay be >= 0".into()));
        }
        Ok(())
    }
}
