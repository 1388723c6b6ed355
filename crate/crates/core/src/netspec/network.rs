use super::{LayerKind, NetworkSpec};
use crate::error::{Error, Result};
use crate::tensor::{
    conv2d, conv2d_backward, maxpool2d, maxpool2d_backward, relu, relu_backward, Rng, Tensor,
    WeightSet,
};

/// A [`NetworkSpec`] together with its weights.
///
/// Weights are stored as `<layer>.weight` (`[out, in, k, k]`) and
/// `<layer>.bias` (`[out]`) for every conv layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    weights: WeightSet,
}

/// Intermediate values kept by [`Network::forward_traced`] for the backward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    inputs: Vec<Tensor>,
    argmax: Vec<Option<Vec<usize>>>,
}

pub fn weight_name(layer: &str) -> String {
    format!("{layer}.weight")
}

pub fn bias_name(layer: &str) -> String {
    format!("{layer}.bias")
}

impl Network {
    /// Checks that `weights` holds correctly shaped tensors for every conv.
    pub fn new(spec: NetworkSpec, weights: WeightSet) -> Result<Self> {
        spec.validate()?;
        let mut cin = spec.input_channels;
        for l in &spec.layers {
            if let LayerKind::Conv { out_channels } = l.kind {
                let w = weights.require(&weight_name(&l.name))?;
                let b = weights.require(&bias_name(&l.name))?;
                if w.shape() != [out_channels, cin, l.kernel, l.kernel] || b.shape() != [out_channels] {
                    return Err(Error::Weights(format!(
                        "layer `{}` expects weight {:?} and bias {:?}, found {:?} and {:?}",
                        l.name,
                        [out_channels, cin, l.kernel, l.kernel],
                        [out_channels],
                        w.shape(),
                        b.shape()
                    )));
                }
                cin = out_channels;
            }
        }
        Ok(Self { spec, weights })
    }

    /// He-normal weights and zero biases.
    pub fn init(spec: NetworkSpec, rng: &mut Rng) -> Result<Self> {
        let mut weights = WeightSet::new();
        let mut cin = spec.input_channels;
        for l in &spec.layers {
            if let LayerKind::Conv { out_channels } = l.kind {
                let fan_in = (cin * l.kernel * l.kernel) as f32;
                let std = (2.0 / fan_in).sqrt();
                weights.insert(
                    weight_name(&l.name),
                    Tensor::randn(&[out_channels, cin, l.kernel, l.kernel], std, rng),
                );
                weights.insert(bias_name(&l.name), Tensor::zeros(&[out_channels]));
                cin = out_channels;
            }
        }
        Self::new(spec, weights)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn weights(&self) -> &WeightSet {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut WeightSet {
        &mut self.weights
    }

    pub fn into_weights(self) -> WeightSet {
        self.weights
    }

    /// Same weights under a different spec, e.g. a surgery-derived student.
    pub fn with_spec(&self, spec: NetworkSpec) -> Result<Self> {
        Self::new(spec, self.weights.clone())
    }

    /// Conv parameter names in layer order.
    pub fn param_names(&self) -> Vec<String> {
        self.spec
            .layers
            .iter()
            .filter(|l| l.is_conv())
            .flat_map(|l| [weight_name(&l.name), bias_name(&l.name)])
            .collect()
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        let (_, c, h, w) = input.dims4()?;
        if c != self.spec.input_channels || h != w {
            return Err(Error::Shape(format!(
                "network expects square input with {} channels, got {:?}",
                self.spec.input_channels,
                input.shape()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input)?;
        let mut x = input.clone();
        for l in &self.spec.layers {
            x = match l.kind {
                LayerKind::Conv { .. } => conv2d(
                    &x,
                    self.weights.require(&weight_name(&l.name))?,
                    self.weights.require(&bias_name(&l.name))?,
                    l.stride,
                    l.pad,
                )?,
                LayerKind::MaxPool { ceil_mode } => {
                    maxpool2d(&x, l.kernel, l.stride, l.pad, ceil_mode)?.output
                }
                LayerKind::Relu => relu(&x),
            };
        }
        Ok(x)
    }

    pub fn forward_traced(&self, input: &Tensor) -> Result<(Tensor, Trace)> {
        self.check_input(input)?;
        let mut inputs = Vec::with_capacity(self.spec.layers.len());
        let mut argmax = Vec::with_capacity(self.spec.layers.len());
        let mut x = input.clone();
        for l in &self.spec.layers {
            let (y, am) = match l.kind {
                LayerKind::Conv { .. } => (
                    conv2d(
                        &x,
                        self.weights.require(&weight_name(&l.name))?,
                        self.weights.require(&bias_name(&l.name))?,
                        l.stride,
                        l.pad,
                    )?,
                    None,
                ),
                LayerKind::MaxPool { ceil_mode } => {
                    let p = maxpool2d(&x, l.kernel, l.stride, l.pad, ceil_mode)?;
                    (p.output, Some(p.argmax))
                }
                LayerKind::Relu => (relu(&x), None),
            };
            inputs.push(std::mem::replace(&mut x, y));
            argmax.push(am);
        }
        Ok((x, Trace { inputs, argmax }))
    }

    /// Parameter gradients for `grad_out` (and the input gradient when asked).
    pub fn backward(
        &self,
        trace: &Trace,
        grad_out: &Tensor,
        need_input_grad: bool,
    ) -> Result<(WeightSet, Option<Tensor>)> {
        if trace.inputs.len() != self.spec.layers.len() {
            return Err(Error::Shape("trace does not belong to this network".into()));
        }
        let first_conv = self.spec.layers.iter().position(|l| l.is_conv());
        let mut grads = Vec::new();
        let mut g = grad_out.clone();
        for (i, l) in self.spec.layers.iter().enumerate().rev() {
            let x = &trace.inputs[i];
            g = match l.kind {
                LayerKind::Conv { .. } => {
                    let need = need_input_grad || Some(i) != first_conv;
                    let cg = conv2d_backward(
                        x,
                        self.weights.require(&weight_name(&l.name))?,
                        &g,
                        l.stride,
                        l.pad,
                        need,
                    )?;
                    grads.push((bias_name(&l.name), cg.bias));
                    grads.push((weight_name(&l.name), cg.weight));
                    match cg.input {
                        Some(gi) => gi,
                        None => break,
                    }
                }
                LayerKind::MaxPool { .. } => {
                    let am = trace.argmax[i]
                        .as_ref()
                        .ok_or_else(|| Error::Shape("missing pool argmax in trace".into()))?;
                    maxpool2d_backward(&g, am, x.shape())?
                }
                LayerKind::Relu => relu_backward(x, &g)?,
            };
        }
        let mut set = WeightSet::new();
        for (name, t) in grads.into_iter().rev() {
            set.insert(name, t);
        }
        let input_grad = if need_input_grad || first_conv.is_none() {
            Some(g)
        } else {
            None
        };
        Ok((set, input_grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netspec::LayerSpec;

    fn small() -> NetworkSpec {
        NetworkSpec {
            input_size: 9,
            input_channels: 2,
            layers: vec![
                LayerSpec::conv("c1", 3, 1, 1, 3),
                LayerSpec::relu("r1"),
                LayerSpec::maxpool("p1", 2, 2, 0, true),
                LayerSpec::conv("c2", 3, 1, 0, 2),
            ],
        }
    }

    #[test]
    fn init_shapes_and_names() {
        let net = Network::init(small(), &mut Rng::new(1)).unwrap();
        assert_eq!(net.param_names(), ["c1.weight", "c1.bias", "c2.weight", "c2.bias"]);
        assert_eq!(net.weights().require("c1.weight").unwrap().shape(), &[3, 2, 3, 3]);
        let out = net.forward(&Tensor::zeros(&[1, 2, 9, 9])).unwrap();
        assert_eq!(out.shape(), &[1, 2, 3, 3]);
    }

    #[test]
    fn rejects_misshaped_weights() {
        let mut w = Network::init(small(), &mut Rng::new(1)).unwrap().into_weights();
        w.insert("c2.bias", Tensor::zeros(&[3]));
        assert!(Network::new(small(), w).is_err());
    }

    #[test]
    fn traced_forward_matches_plain() {
        let net = Network::init(small(), &mut Rng::new(2)).unwrap();
        let x = Tensor::randn(&[2, 2, 9, 9], 1.0, &mut Rng::new(3));
        let (y, _) = net.forward_traced(&x).unwrap();
        assert_eq!(y, net.forward(&x).unwrap());
    }

    #[test]
    fn backward_covers_every_param() {
        let net = Network::init(small(), &mut Rng::new(2)).unwrap();
        let x = Tensor::randn(&[1, 2, 9, 9], 1.0, &mut Rng::new(3));
        let (y, trace) = net.forward_traced(&x).unwrap();
        let (g, gi) = net.backward(&trace, &Tensor::full(y.shape(), 1.0), true).unwrap();
        let names: Vec<&str> = g.iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["c1.weight", "c1.bias", "c2.weight", "c2.bias"]);
        assert_eq!(gi.unwrap().shape(), x.shape());
    }
}
