//! The trainable part of the tracker: a 3x3 conv over backbone features
//! followed by two sibling 1x1 classifiers.

use crate::error::Result;
use crate::losses::ScoreMaps;
use crate::tensor::{conv2d, conv2d_backward, relu, relu_backward, Rng, Tensor, WeightSet};

pub const PARAM_NAMES: [&str; 6] = [
    "head.conv.weight",
    "head.conv.bias",
    "head.a.weight",
    "head.a.bias",
    "head.q.weight",
    "head.q.bias",
];

#[derive(Debug, Clone, PartialEq)]
pub struct HeadNet {
    pub conv_w: Tensor,
    pub conv_b: Tensor,
    pub a_w: Tensor,
    pub a_b: Tensor,
    pub q_w: Tensor,
    pub q_b: Tensor,
}

pub struct HeadTrace {
    input: Tensor,
    pre: Tensor,
    hidden: Tensor,
}

/// Gradients in [`PARAM_NAMES`] order.
pub type HeadGrads = [Tensor; 6];

impl HeadNet {
    /// He-normal 3x3 conv, small-gaussian classifiers, zero biases.
    pub fn init(in_channels: usize, width: usize, rng: &mut Rng) -> Self {
        let fan_in = (in_channels * 9) as f32;
        Self {
            conv_w: Tensor::randn(&[width, in_channels, 3, 3], (2.0 / fan_in).sqrt(), rng),
            conv_b: Tensor::zeros(&[width]),
            a_w: Tensor::randn(&[2, width, 1, 1], 0.01, rng),
            a_b: Tensor::zeros(&[2]),
            q_w: Tensor::randn(&[2, width, 1, 1], 0.01, rng),
            q_b: Tensor::zeros(&[2]),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.conv_w.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.conv_w.shape()[0]
    }

    pub fn forward(&self, features: &Tensor) -> Result<ScoreMaps> {
        Ok(self.forward_traced(features)?.0)
    }

    pub fn forward_traced(&self, features: &Tensor) -> Result<(ScoreMaps, HeadTrace)> {
        let pre = conv2d(features, &self.conv_w, &self.conv_b, 1, 1)?;
        let hidden = relu(&pre);
        let maps = ScoreMaps {
            a_logits: conv2d(&hidden, &self.a_w, &self.a_b, 1, 0)?,
            q_logits: conv2d(&hidden, &self.q_w, &self.q_b, 1, 0)?,
            reg: None,
        };
        let trace = HeadTrace {
            input: features.clone(),
            pre,
            hidden,
        };
        Ok((maps, trace))
    }

    pub fn backward(&self, trace: &HeadTrace, grad_a: &Tensor, grad_q: &Tensor) -> Result<HeadGrads> {
        let ga = conv2d_backward(&trace.hidden, &self.a_w, grad_a, 1, 0, true)?;
        let gq = conv2d_backward(&trace.hidden, &self.q_w, grad_q, 1, 0, true)?;
        let mut gh = ga.input.expect("requested");
        for (d, s) in gh.data_mut().iter_mut().zip(gq.input.expect("requested").data()) {
            *d += s;
        }
        let gpre = relu_backward(&trace.pre, &gh)?;
        let gc = conv2d_backward(&trace.input, &self.conv_w, &gpre, 1, 1, false)?;
        Ok([gc.weight, gc.bias, ga.weight, ga.bias, gq.weight, gq.bias])
    }

    pub fn params_mut(&mut self) -> [&mut Tensor; 6] {
        [
            &mut self.conv_w,
            &mut self.conv_b,
            &mut self.a_w,
            &mut self.a_b,
            &mut self.q_w,
            &mut self.q_b,
        ]
    }

    pub fn params(&self) -> [&Tensor; 6] {
        [&self.conv_w, &self.conv_b, &self.a_w, &self.a_b, &self.q_w, &self.q_b]
    }

    pub fn to_weights(&self) -> WeightSet {
        let mut w = WeightSet::new();
        for (n, t) in PARAM_NAMES.iter().zip(self.params()) {
            w.insert(*n, t.clone());
        }
        w
    }
}
