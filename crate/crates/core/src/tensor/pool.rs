use super::Tensor;
use crate::error::{Error, Result};

/// Output size of a max-pool. With `ceil_mode` the division rounds up.
pub fn pool_output_size(
    input: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    ceil_mode: bool,
) -> Option<usize> {
    if stride == 0 || kernel == 0 || input + 2 * pad < kernel {
        return None;
    }
    let span = input + 2 * pad - kernel;
    let steps = if ceil_mode {
        span.div_ceil(stride)
    } else {
        span / stride
    };
    Some(steps + 1)
}

#[derive(Debug, Clone)]
pub struct PoolOutput {
    pub output: Tensor,
    /// Flat input index selected for every output element.
    pub argmax: Vec<usize>,
}

/// Max-pool over NCHW input. Padding cells never win; ties go to the lowest
/// linear input index.
pub fn maxpool2d(
    input: &Tensor,
    kernel: usize,
    stride: usize,
    pad: usize,
    ceil_mode: bool,
) -> Result<PoolOutput> {
    let (n, c, h, w) = input.dims4()?;
    let size = |d| {
        pool_output_size(d, kernel, stride, pad, ceil_mode)
            .ok_or_else(|| Error::Shape(format!("pool kernel {kernel} does not fit input {d}")))
    };
    let (ho, wo) = (size(h)?, size(w)?);
    let window = |o: usize, d: usize| -> Result<(usize, usize)> {
        let start = (o * stride) as isize - pad as isize;
        let lo = start.max(0) as usize;
        let hi = ((start + kernel as isize).min(d as isize)).max(0) as usize;
        if lo >= hi {
            return Err(Error::Shape(format!(
                "pool window {o} lies entirely in padding (input {d})"
            )));
        }
        Ok((lo, hi))
    };
    let data = input.data();
    let mut out = Vec::with_capacity(n * c * ho * wo);
    let mut argmax = Vec::with_capacity(n * c * ho * wo);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..ho {
            let (y0, y1) = window(oy, h)?;
            for ox in 0..wo {
                let (x0, x1) = window(ox, w)?;
                let mut best = base + y0 * w + x0;
                let mut best_v = data[best];
                for y in y0..y1 {
                    for x in x0..x1 {
                        let i = base + y * w + x;
                        if data[i] > best_v {
                            best_v = data[i];
                            best = i;
                        }
                    }
                }
                out.push(best_v);
                argmax.push(best);
            }
        }
    }
    Ok(PoolOutput {
        output: Tensor::from_vec(&[n, c, ho, wo], out)?,
        argmax,
    })
}

/// Routes each output gradient to the input position that won the max.
pub fn maxpool2d_backward(grad_out: &Tensor, argmax: &[usize], input_shape: &[usize]) -> Result<Tensor> {
    if grad_out.len() != argmax.len() {
        return Err(Error::Shape(format!(
            "pool grad has {} entries, argmax {}",
            grad_out.len(),
            argmax.len()
        )));
    }
    let mut g = Tensor::zeros(input_shape);
    let gd = g.data_mut();
    for (&i, &v) in argmax.iter().zip(grad_out.data()) {
        gd[i] += v;
    }
    Ok(g)
}
