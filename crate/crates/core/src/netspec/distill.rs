//! Feature-mimicking distillation from a high-resolution teacher into a
//! low-resolution student.
//!
//! The student sees each teacher patch resized to its own input size and is
//! trained to reproduce the teacher's final feature map under MSE. Nothing
//! here takes labels.

use serde::{Deserialize, Serialize};

use super::Network;
use crate::error::{Error, Result};
use crate::image::resize_chw;
use crate::tensor::{mse, Rng, Sgd, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistillConfig {
    pub lr: f32,
    pub momentum: f32,
    pub weight_decay: f32,
    pub iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            lr: 0.03,
            momentum: 0.9,
            weight_decay: 0.0,
            iterations: 500,
            batch_size: 8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillReport {
    /// Training minibatch loss before each update.
    pub losses: Vec<f32>,
    pub heldout_initial: f32,
    pub heldout_final: f32,
}

impl DistillReport {
    /// Fraction by which the held-out loss fell, in `[.., 1]`.
    pub fn heldout_reduction(&self) -> f64 {
        if self.heldout_initial == 0.0 {
            return 0.0;
        }
        1.0 - self.heldout_final as f64 / self.heldout_initial as f64
    }
}

struct Pairs {
    inputs: Vec<Tensor>,
    targets: Vec<Tensor>,
}

fn prepare(teacher: &Network, student: &Network, patches: &[Tensor]) -> Result<Pairs> {
    let t_in = teacher.spec().input_size;
    let s_in = student.spec().input_size;
    let mut inputs = Vec::with_capacity(patches.len());
    let mut targets = Vec::with_capacity(patches.len());
    for p in patches {
        if p.shape() != [teacher.spec().input_channels, t_in, t_in] {
            return Err(Error::Shape(format!(
                "distillation patch {:?}, teacher expects [{}, {t_in}, {t_in}]",
                p.shape(),
                teacher.spec().input_channels
            )));
        }
        let target = teacher.forward(&Tensor::stack(&[p])?)?;
        inputs.push(resize_chw(p, s_in)?);
        targets.push(target.slice_outer(0));
    }
    Ok(Pairs { inputs, targets })
}

fn batch_loss(student: &Network, pairs: &Pairs, idx: &[usize]) -> Result<f32> {
    let x = Tensor::stack(&idx.iter().map(|&i| &pairs.inputs[i]).collect::<Vec<_>>())?;
    let y = Tensor::stack(&idx.iter().map(|&i| &pairs.targets[i]).collect::<Vec<_>>())?;
    Ok(mse(&student.forward(&x)?, &y)?.0)
}

fn heldout_loss(student: &Network, pairs: &Pairs) -> Result<f32> {
    if pairs.inputs.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0f64;
    for i in 0..pairs.inputs.len() {
        total += batch_loss(student, pairs, &[i])? as f64;
    }
    Ok((total / pairs.inputs.len() as f64) as f32)
}

/// Trains `student` to mimic `teacher` on unlabeled teacher-resolution
/// patches `[c, T, T]`. Held-out patches are only evaluated.
pub fn distill(
    teacher: &Network,
    student: &mut Network,
    train: &[Tensor],
    heldout: &[Tensor],
    cfg: &DistillConfig,
) -> Result<DistillReport> {
    let t_out = teacher.spec().output_size(teacher.spec().input_size)?;
    let s_out = student.spec().output_size(student.spec().input_size)?;
    if t_out != s_out || teacher.spec().output_channels() != student.spec().output_channels() {
        return Err(Error::Spec(format!(
            "teacher features {}x{t_out}x{t_out} do not match student features {}x{s_out}x{s_out}",
            teacher.spec().output_channels(),
            student.spec().output_channels()
        )));
    }
    if train.is_empty() || cfg.batch_size == 0 {
        return Err(Error::Config("distillation needs training patches and a positive batch size".into()));
    }
    let train = prepare(teacher, student, train)?;
    let heldout = prepare(teacher, student, heldout)?;
    let heldout_initial = heldout_loss(student, &heldout)?;

    let mut rng = Rng::new(cfg.seed);
    let mut opt = Sgd::new(cfg.lr, cfg.momentum, cfg.weight_decay);
    let params = student.param_names();
    // Gradients are matched to parameters in the weight set's own order.
    let names: Vec<String> = student
        .weights()
        .iter()
        .map(|(n, _)| n.to_string())
        .filter(|n| params.contains(n))
        .collect();
    let mut order: Vec<usize> = (0..train.inputs.len()).collect();
    let mut cursor = order.len();
    let mut losses = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        let mut idx = Vec::with_capacity(cfg.batch_size);
        while idx.len() < cfg.batch_size {
            if cursor == order.len() {
                rng.shuffle(&mut order);
                cursor = 0;
            }
            idx.push(order[cursor]);
            cursor += 1;
        }
        let x = Tensor::stack(&idx.iter().map(|&i| &train.inputs[i]).collect::<Vec<_>>())?;
        let y = Tensor::stack(&idx.iter().map(|&i| &train.targets[i]).collect::<Vec<_>>())?;
        let (out, trace) = student.forward_traced(&x)?;
        let (loss, grad) = mse(&out, &y)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite("distillation loss".into()));
        }
        losses.push(loss);
        let (grads, _) = student.backward(&trace, &grad, false)?;
        let grads: Vec<Tensor> = names
            .iter()
            .map(|n| grads.require(n).cloned())
            .collect::<Result<_>>()?;
        let weights = student.weights_mut();
        let mut params: Vec<&mut Tensor> = weights
            .iter_mut()
            .filter(|(n, _)| names.iter().any(|m| m == n))
            .map(|(_, t)| t)
            .collect();
        opt.step(&mut params, &grads.iter().collect::<Vec<_>>())?;
    }
    let heldout_final = heldout_loss(student, &heldout)?;
    if !heldout_final.is_finite() {
        return Err(Error::NonFinite("held-out distillation loss".into()));
    }
    Ok(DistillReport {
        losses,
        heldout_initial,
        heldout_final,
    })
}
