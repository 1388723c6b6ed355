use super::gemm::sgemm;
use super::Tensor;
use crate::error::{Error, Result};

/// `floor((input + 2 pad - kernel) / stride) + 1`, or `None` when the
/// kernel does not fit.
pub fn conv_output_size(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    if stride == 0 || kernel == 0 || input + 2 * pad < kernel {
        return None;
    }
    Some((input + 2 * pad - kernel) / stride + 1)
}

/// Target width of the column matrix when batching small feature maps.
const GEMM_COLUMNS: usize = 2048;

struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geometry {
    fn col_rows(&self) -> usize {
        self.c * self.k * self.k
    }

    fn col_cols(&self) -> usize {
        self.ho * self.wo
    }
}

fn check(input: &Tensor, weight: &Tensor, stride: usize) -> Result<(usize, usize, Geometry)> {
    let (n, c, h, w) = input.dims4()?;
    let (co, ci, kh, kw) = weight.dims4()?;
    if ci != c {
        return Err(Error::Shape(format!(
            "conv weight expects {ci} input channels, input has {c}"
        )));
    }
    if kh != kw {
        return Err(Error::Shape(format!("non-square kernel {kh}x{kw}")));
    }
    if stride == 0 {
        return Err(Error::Shape("conv stride must be >= 1".into()));
    }
    Ok((
        n,
        co,
        Geometry {
            c,
            h,
            w,
            k: kh,
            stride,
            pad: 0,
            ho: 0,
            wo: 0,
        },
    ))
}

fn geometry(input: &Tensor, weight: &Tensor, stride: usize, pad: usize) -> Result<(usize, usize, Geometry)> {
    let (n, co, mut g) = check(input, weight, stride)?;
    g.pad = pad;
    g.ho = conv_output_size(g.h, g.k, stride, pad)
        .ok_or_else(|| Error::Shape(format!("conv kernel {} does not fit input {}", g.k, g.h)))?;
    g.wo = conv_output_size(g.w, g.k, stride, pad)
        .ok_or_else(|| Error::Shape(format!("conv kernel {} does not fit input {}", g.k, g.w)))?;
    Ok((n, co, g))
}

/// Output columns `lo..hi` whose input column `ox * stride + kx - pad`
/// falls inside the image.
fn valid_range(g: &Geometry, kx: usize) -> (usize, usize) {
    let lo = if kx >= g.pad { 0 } else { (g.pad - kx).div_ceil(g.stride) };
    let hi = if g.w + g.pad <= kx {
        0
    } else {
        (g.w + g.pad - kx).div_ceil(g.stride).min(g.wo)
    };
    (lo.min(hi), hi)
}

/// Splits every input row into its `stride` phases (`phase p` holds columns
/// `p, p + stride, ...`) so strided taps become contiguous copies.
fn split_phases(x: &[f32], g: &Geometry) -> (Vec<f32>, usize) {
    let s = g.stride;
    let pw = g.w.div_ceil(s);
    let mut out = vec![0.0f32; g.c * s * g.h * pw];
    for ci in 0..g.c {
        for y in 0..g.h {
            let src = &x[(ci * g.h + y) * g.w..(ci * g.h + y + 1) * g.w];
            for (i, &v) in src.iter().enumerate() {
                out[((ci * s + i % s) * g.h + y) * pw + i / s] = v;
            }
        }
    }
    (out, pw)
}

/// Writes the column matrix of one sample into `cols`, whose rows are `ld`
/// long, starting at column `off`.
fn im2col(x: &[f32], g: &Geometry, cols: &mut [f32], ld: usize, off: usize) {
    let hw = g.col_cols();
    let s = g.stride;
    let (phases, pw) = if s > 1 { split_phases(x, g) } else { (Vec::new(), g.w) };
    let data: &[f32] = if s > 1 { &phases } else { x };
    for ci in 0..g.c {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let dst = &mut cols[row * ld + off..row * ld + off + hw];
                let (lo, hi) = valid_range(g, kx);
                for oy in 0..g.ho {
                    let iy = (oy * s + ky) as isize - g.pad as isize;
                    let out_row = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize || lo == hi {
                        out_row.fill(0.0);
                        continue;
                    }
                    out_row[..lo].fill(0.0);
                    out_row[hi..].fill(0.0);
                    let start = lo * s + kx - g.pad;
                    let base = ((ci * s + start % s) * g.h + iy as usize) * pw + start / s;
                    out_row[lo..hi].copy_from_slice(&data[base..base + hi - lo]);
                }
            }
        }
    }
}

/// Accumulates one sample's column gradient (rows `ld` long, starting at
/// column `off`) back onto its input gradient `x`.
fn col2im(cols: &[f32], g: &Geometry, x: &mut [f32], ld: usize, off: usize) {
    let hw = g.col_cols();
    for ci in 0..g.c {
        let plane = &mut x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let src = &cols[row * ld + off..row * ld + off + hw];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.wo {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += src[oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

/// 2-D convolution of an NCHW input with `[out, in, k, k]` weights.
pub fn conv2d(input: &Tensor, weight: &Tensor, bias: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
    let (n, co, g) = geometry(input, weight, stride, pad)?;
    if bias.len() != co {
        return Err(Error::Shape(format!("bias has {} entries, expected {co}", bias.len())));
    }
    let (rows, hw) = (g.col_rows(), g.col_cols());
    let in_len = g.c * g.h * g.w;
    let pointwise = g.k == 1 && g.stride == 1 && g.pad == 0;
    // Small maps are stacked side by side so one GEMM covers several samples.
    let group = (GEMM_COLUMNS / hw).clamp(1, n.max(1));
    let mut out = vec![0.0f32; n * co * hw];
    let mut cols = vec![0.0f32; rows * hw * group];
    let mut res = vec![0.0f32; co * hw * group];
    for first in (0..n).step_by(group) {
        let m = group.min(n - first);
        let ld = m * hw;
        for j in 0..m {
            let x = &input.data()[(first + j) * in_len..(first + j + 1) * in_len];
            if pointwise {
                for r in 0..rows {
                    cols[r * ld + j * hw..r * ld + (j + 1) * hw].copy_from_slice(&x[r * hw..(r + 1) * hw]);
                }
            } else {
                im2col(x, &g, &mut cols, ld, j * hw);
            }
        }
        sgemm(co, rows, ld, weight.data(), false, &cols[..rows * ld], false, &mut res[..co * ld], 0.0);
        for j in 0..m {
            let dst = &mut out[(first + j) * co * hw..(first + j + 1) * co * hw];
            for (o, d) in dst.chunks_mut(hw).enumerate() {
                let b = bias.data()[o];
                for (v, r) in d.iter_mut().zip(&res[o * ld + j * hw..o * ld + (j + 1) * hw]) {
                    *v = r + b;
                }
            }
        }
    }
    let out = Tensor::from_vec(&[n, co, g.ho, g.wo], out)?;
    out.ensure_finite("conv2d output")?;
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Option<Tensor>,
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Gradients of a [`conv2d`] call given the upstream gradient.
pub fn conv2d_backward(
    input: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    pad: usize,
    need_input_grad: bool,
) -> Result<ConvGrads> {
    let (n, co, g) = geometry(input, weight, stride, pad)?;
    if grad_out.shape() != [n, co, g.ho, g.wo] {
        return Err(Error::Shape(format!(
            "conv grad_out {:?}, expected {:?}",
            grad_out.shape(),
            [n, co, g.ho, g.wo]
        )));
    }
    let (rows, hw) = (g.col_rows(), g.col_cols());
    let in_len = g.c * g.h * g.w;
    let pointwise = g.k == 1 && g.stride == 1 && g.pad == 0;
    let mut gw = vec![0.0f32; co * rows];
    let mut gb = vec![0.0f32; co];
    let mut gin = if need_input_grad {
        Some(vec![0.0f32; input.len()])
    } else {
        None
    };
    let group = (GEMM_COLUMNS / hw).clamp(1, n.max(1));
    let mut cols = vec![0.0f32; rows * hw * group];
    let mut gcols = vec![0.0f32; rows * hw * group];
    let mut go = vec![0.0f32; co * hw * group];
    for first in (0..n).step_by(group) {
        let m = group.min(n - first);
        let ld = m * hw;
        for j in 0..m {
            let s = first + j;
            let x = &input.data()[s * in_len..(s + 1) * in_len];
            let src = &grad_out.data()[s * co * hw..(s + 1) * co * hw];
            for (o, chunk) in src.chunks(hw).enumerate() {
                gb[o] += chunk.iter().sum::<f32>();
                go[o * ld + j * hw..o * ld + (j + 1) * hw].copy_from_slice(chunk);
            }
            if pointwise {
                for r in 0..rows {
                    cols[r * ld + j * hw..r * ld + (j + 1) * hw].copy_from_slice(&x[r * hw..(r + 1) * hw]);
                }
            } else {
                im2col(x, &g, &mut cols, ld, j * hw);
            }
        }
        // dW += dY * cols^T
        sgemm(co, ld, rows, &go[..co * ld], false, &cols[..rows * ld], true, &mut gw, 1.0);
        if let Some(gin) = gin.as_mut() {
            sgemm(rows, co, ld, weight.data(), true, &go[..co * ld], false, &mut gcols[..rows * ld], 0.0);
            for j in 0..m {
                let s = first + j;
                let dst = &mut gin[s * in_len..(s + 1) * in_len];
                if pointwise {
                    for r in 0..rows {
                        dst[r * hw..(r + 1) * hw].copy_from_slice(&gcols[r * ld + j * hw..r * ld + (j + 1) * hw]);
                    }
                } else {
                    col2im(&gcols, &g, dst, ld, j * hw);
                }
            }
        }
    }
    Ok(ConvGrads {
        input: gin
            .map(|v| Tensor::from_vec(input.shape(), v))
            .transpose()?,
        weight: Tensor::from_vec(weight.shape(), gw)?,
        bias: Tensor::from_vec(&[co], gb)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;

    #[test]
    fn output_size_formula() {
        assert_eq!(conv_output_size(203, 7, 2, 3), Some(102));
        assert_eq!(conv_output_size(54, 5, 4, 2), Some(14));
        assert_eq!(conv_output_size(2, 5, 1, 0), None);
    }

    #[test]
    fn identity_pointwise_conv() {
        let mut rng = Rng::new(3);
        let x = Tensor::randn(&[2, 3, 4, 5], 1.0, &mut rng);
        let mut w = Tensor::zeros(&[3, 3, 1, 1]);
        for c in 0..3 {
            w.data_mut()[c * 3 + c] = 1.0;
        }
        let y = conv2d(&x, &w, &Tensor::zeros(&[3]), 1, 0).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn pointwise_conv_is_per_pixel_matmul() {
        let mut rng = Rng::new(4);
        let (c, co, h, w) = (3, 4, 3, 2);
        let x = Tensor::randn(&[1, c, h, w], 1.0, &mut rng);
        let wt = Tensor::randn(&[co, c, 1, 1], 1.0, &mut rng);
        let b = Tensor::randn(&[co], 1.0, &mut rng);
        let y = conv2d(&x, &wt, &b, 1, 0).unwrap();
        for p in 0..h * w {
            for o in 0..co {
                let want: f32 = b.data()[o]
                    + (0..c)
                        .map(|i| wt.data()[o * c + i] * x.data()[i * h * w + p])
                        .sum::<f32>();
                assert!((y.data()[o * h * w + p] - want).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn mismatched_channels_rejected() {
        let x = Tensor::zeros(&[1, 2, 4, 4]);
        let w = Tensor::zeros(&[1, 3, 3, 3]);
        assert!(conv2d(&x, &w, &Tensor::zeros(&[1]), 1, 1).is_err());
        let w = Tensor::zeros(&[1, 2, 7, 7]);
        assert!(conv2d(&x, &w, &Tensor::zeros(&[1]), 1, 0).is_err());
    }
}
