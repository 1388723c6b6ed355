//! Symbolic network descriptions.
//!
//! A [`NetworkSpec`] is an ordered chain of conv / max-pool / relu layers.
//! It drives receptive-field and output-size arithmetic, teacher-to-student
//! surgery, and the [`Network`] executor.
//!
//! Text format, one layer per line (`#` starts a comment):
//!
//! ```text
//! input 203 3
//! conv1 conv 7 2 3 96
//! relu1 relu 1 1 0 0
//! pool1 maxpool 3 2 1 0 ceil
//! ```
//!
//! Layer lines are `name kind kernel stride pad channels [ceil]`; `channels`
//! is only meaningful for conv layers and `ceil` only for pools.

mod distill;
mod network;

pub use distill::{distill, DistillConfig, DistillReport};
pub use network::{Network, Trace};

use std::collections::HashSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::tensor::{conv_output_size, pool_output_size};

/// Input side of the surgery-derived student network.
pub const STUDENT_INPUT_SIZE: usize = 107;
/// Name of the 3x3 head conv appended on top of the backbone for score-layer arithmetic.
pub const SCORE_LAYER: &str = "score";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv { out_channels: usize },
    MaxPool { ceil_mode: bool },
    Relu,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl LayerSpec {
    pub fn conv(name: &str, kernel: usize, stride: usize, pad: usize, out_channels: usize) -> Self {
        Self {
            name: name.into(),
            kind: LayerKind::Conv { out_channels },
            kernel,
            stride,
            pad,
        }
    }

    pub fn relu(name: &str) -> Self {
        Self {
            name: name.into(),
            kind: LayerKind::Relu,
            kernel: 1,
            stride: 1,
            pad: 0,
        }
    }

    pub fn maxpool(name: &str, kernel: usize, stride: usize, pad: usize, ceil_mode: bool) -> Self {
        Self {
            name: name.into(),
            kind: LayerKind::MaxPool { ceil_mode },
            kernel,
            stride,
            pad,
        }
    }

    pub fn is_conv(&self) -> bool {
        matches!(self.kind, LayerKind::Conv { .. })
    }

    pub fn is_pool(&self) -> bool {
        matches!(self.kind, LayerKind::MaxPool { .. })
    }

    /// Spatial output size for a given input size.
    pub fn output_size(&self, input: usize) -> Option<usize> {
        match self.kind {
            LayerKind::Conv { .. } => conv_output_size(input, self.kernel, self.stride, self.pad),
            LayerKind::MaxPool { ceil_mode } => {
                pool_output_size(input, self.kernel, self.stride, self.pad, ceil_mode)
            }
            LayerKind::Relu => Some(input),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RfInfo {
    pub rf: usize,
    pub jump: usize,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub input_size: usize,
    pub input_channels: usize,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        let mut names = HashSet::new();
        for l in &self.layers {
            if !names.insert(l.name.as_str()) {
                return Err(Error::Spec(format!("duplicate layer name `{}`", l.name)));
            }
            if l.kernel == 0 || l.stride == 0 {
                return Err(Error::Spec(format!("layer `{}` needs kernel and stride >= 1", l.name)));
            }
            if let LayerKind::Conv { out_channels: 0 } = l.kind {
                return Err(Error::Spec(format!("conv `{}` has zero channels", l.name)));
            }
        }
        if self.input_channels == 0 {
            return Err(Error::Spec("input needs at least one channel".into()));
        }
        self.layer_sizes(self.input_size)?;
        Ok(())
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.layers
            .iter()
            .position(|l| l.name == name)
            .ok_or_else(|| Error::Spec(format!("unknown layer `{name}`")))
    }

    /// Spatial size after every layer for a square input of side `input`.
    pub fn layer_sizes(&self, input: usize) -> Result<Vec<usize>> {
        let mut size = input;
        let mut out = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            size = l
                .output_size(size)
                .filter(|&s| s > 0)
                .ok_or_else(|| {
                    Error::Spec(format!("layer `{}` has no valid output for input {size}", l.name))
                })?;
            out.push(size);
        }
        Ok(out)
    }

    /// Output cells per axis after the last layer.
    pub fn output_size(&self, input: usize) -> Result<usize> {
        Ok(self.layer_sizes(input)?.last().copied().unwrap_or(input))
    }

    pub fn output_size_at(&self, input: usize, layer: &str) -> Result<usize> {
        let i = self.index_of(layer)?;
        Ok(self.layer_sizes(input)?[i])
    }

    /// Receptive field and jump of one cell of `upto_layer`, plus its grid
    /// size at this spec's input size.
    pub fn receptive_field(&self, upto_layer: &str) -> Result<RfInfo> {
        let end = self.index_of(upto_layer)?;
        let (mut rf, mut jump) = (1usize, 1usize);
        for l in &self.layers[..=end] {
            if !matches!(l.kind, LayerKind::Relu) {
                rf += (l.kernel - 1) * jump;
                jump *= l.stride;
            }
        }
        let size = self.layer_sizes(self.input_size)?[end];
        Ok(RfInfo { rf, jump, size })
    }

    /// Channels produced by the last conv layer.
    pub fn output_channels(&self) -> usize {
        self.layers
            .iter()
            .rev()
            .find_map(|l| match l.kind {
                LayerKind::Conv { out_channels } => Some(out_channels),
                _ => None,
            })
            .unwrap_or(self.input_channels)
    }

    /// Name of the last conv layer.
    pub fn last_conv(&self) -> Option<&str> {
        self.layers.iter().rev().find(|l| l.is_conv()).map(|l| l.name.as_str())
    }

    /// Copy with the 3x3 / stride-1 / pad-1 head conv appended.
    pub fn with_score_layer(&self, channels: usize) -> NetworkSpec {
        let mut s = self.clone();
        s.layers.push(LayerSpec::conv(SCORE_LAYER, 3, 1, 1, channels));
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut input = None;
        let mut layers = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            let bad = |what: &str| Error::Spec(format!("line {}: {what}: `{raw}`", lineno + 1));
            let num = |s: &str| s.parse::<usize>().map_err(|_| bad("expected an integer"));
            if f[0] == "input" {
                if f.len() != 3 {
                    return Err(bad("expected `input <size> <channels>`"));
                }
                input = Some((num(f[1])?, num(f[2])?));
                continue;
            }
            if f.len() < 6 || f.len() > 7 {
                return Err(bad("expected `name kind kernel stride pad channels [ceil]`"));
            }
            let (kernel, stride, pad, channels) = (num(f[2])?, num(f[3])?, num(f[4])?, num(f[5])?);
            let ceil = match f.get(6) {
                None => false,
                Some(&"ceil") => true,
                Some(_) => return Err(bad("trailing field must be `ceil`")),
            };
            let kind = match f[1] {
                "conv" => LayerKind::Conv { out_channels: channels },
                "maxpool" | "pool" => LayerKind::MaxPool { ceil_mode: ceil },
                "relu" => LayerKind::Relu,
                _ => return Err(bad("unknown layer kind")),
            };
            if ceil && !matches!(kind, LayerKind::MaxPool { .. }) {
                return Err(bad("`ceil` only applies to pooling layers"));
            }
            layers.push(LayerSpec {
                name: f[0].to_string(),
                kind,
                kernel,
                stride,
                pad,
            });
        }
        let (input_size, input_channels) =
            input.ok_or_else(|| Error::Spec("missing `input <size> <channels>` line".into()))?;
        let spec = NetworkSpec {
            input_size,
            input_channels,
            layers,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("input {} {}\n", self.input_size, self.input_channels);
        for l in &self.layers {
            let (kind, channels, ceil) = match l.kind {
                LayerKind::Conv { out_channels } => ("conv", out_channels, ""),
                LayerKind::MaxPool { ceil_mode } => ("maxpool", 0, if ceil_mode { " ceil" } else { "" }),
                LayerKind::Relu => ("relu", 0, ""),
            };
            let _ = writeln!(
                s,
                "{} {} {} {} {} {}{}",
                l.name, kind, l.kernel, l.stride, l.pad, channels, ceil
            );
        }
        s
    }

    /// ZF-style teacher backbone with the given conv1..conv5 widths.
    pub fn zf_style(channels: [usize; 5]) -> NetworkSpec {
        NetworkSpec {
            input_size: 203,
            input_channels: 3,
            layers: vec![
                LayerSpec::conv("conv1", 7, 2, 3, channels[0]),
                LayerSpec::relu("relu1"),
                LayerSpec::maxpool("pool1", 3, 2, 1, true),
                LayerSpec::conv("conv2", 5, 2, 2, channels[1]),
                LayerSpec::relu("relu2"),
                LayerSpec::maxpool("pool2", 3, 2, 1, true),
                LayerSpec::conv("conv3", 3, 1, 1, channels[2]),
                LayerSpec::relu("relu3"),
                LayerSpec::conv("conv4", 3, 1, 1, channels[3]),
                LayerSpec::relu("relu4"),
                LayerSpec::conv("conv5", 3, 1, 1, channels[4]),
                LayerSpec::relu("relu5"),
            ],
        }
    }

    /// The reference ZF-style teacher (96/256/384/384/256 channels).
    pub fn reference_teacher() -> NetworkSpec {
        Self::zf_style([96, 256, 384, 384, 256])
    }

    /// Same geometry as the reference teacher with narrow layers for fast runs.
    pub fn tiny_teacher() -> NetworkSpec {
        Self::zf_style([8, 16, 24, 24, 16])
    }

    /// Looks up a built-in spec by name.
    pub fn preset(name: &str) -> Result<NetworkSpec> {
        match name {
            "reference-teacher" | "zf-teacher" => Ok(Self::reference_teacher()),
            "tiny-teacher" => Ok(Self::tiny_teacher()),
            "reference-student" | "zf-student" => surgery(&Self::reference_teacher(), STUDENT_INPUT_SIZE),
            "tiny-student" => surgery(&Self::tiny_teacher(), STUDENT_INPUT_SIZE),
            _ => Err(Error::Config(format!(
                "unknown network preset `{name}` (expected reference-teacher, tiny-teacher, reference-student or tiny-student)"
            ))),
        }
    }
}

/// Derives a low-resolution student from a teacher by removing its first two
/// max-pool layers and raising the stride of the first conv after the first
/// removed pool by half the removed pools' combined stride.
///
/// Kernel sizes and channel counts are untouched, so teacher weights load
/// into the student unchanged. The student must produce the same output grid
/// at `student_input` as the teacher does at its own input size.
pub fn surgery(teacher: &NetworkSpec, student_input: usize) -> Result<NetworkSpec> {
    teacher.validate()?;
    let pools: Vec<usize> = teacher
        .layers
        .iter()
        .enumerate()
        .filter(|(_, l)| l.is_pool())
        .map(|(i, _)| i)
        .take(2)
        .collect();
    if pools.len() < 2 {
        return Err(Error::Spec(format!(
            "surgery needs at least two pooling layers, found {}",
            pools.len()
        )));
    }
    let removed_stride: usize = pools.iter().map(|&i| teacher.layers[i].stride).product();
    if removed_stride % 2 != 0 {
        return Err(Error::Spec("removed pools must have an even combined stride".into()));
    }
    let boost = removed_stride / 2;
    let target = (pools[0] + 1..teacher.layers.len())
        .find(|&i| teacher.layers[i].is_conv())
        .ok_or_else(|| Error::Spec("no conv layer after the first pool".into()))?;
    let mut layers = Vec::with_capacity(teacher.layers.len() - 2);
    for (i, l) in teacher.layers.iter().enumerate() {
        if pools.contains(&i) {
            continue;
        }
        let mut l = l.clone();
        if i == target {
            l.stride *= boost;
        }
        layers.push(l);
    }
    let student = NetworkSpec {
        input_size: student_input,
        input_channels: teacher.input_channels,
        layers,
    };
    student.validate()?;
    let want = teacher.output_size(teacher.input_size)?;
    let got = student.output_size(student_input)?;
    if want != got {
        return Err(Error::Spec(format!(
            "student output {got} at input {student_input} does not match teacher output {want}"
        )));
    }
    Ok(student)
}
