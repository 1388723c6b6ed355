//! 8-bit RGB frames and bilinear patch extraction.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io_util::write_atomic;
use crate::tensor::Tensor;

/// Interleaved 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Data("empty image".into()));
        }
        if data.len() != width * height * 3 {
            return Err(Error::Shape(format!(
                "{width}x{height} RGB image needs {} bytes, got {}",
                width * height * 3,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Loads any 8-bit PNG; grayscale is replicated to three channels.
    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)?.to_rgb8();
        let (w, h) = img.dimensions();
        Self::new(w as usize, h as usize, img.into_raw())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        use image::ImageEncoder;
        let mut bytes = Vec::new();
        image::codecs::png::PngEncoder::new(&mut bytes).write_image(
            &self.data,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::Rgb8,
        )?;
        write_atomic(path, &bytes)
    }

    /// Resamples the square of side `side` centred on `(cx, cy)` to a
    /// `[3, out, out]` tensor in `[0, 1]`. See [`crop_resize_chw`].
    pub fn crop_resize(&self, cx: f64, cy: f64, side: f64, out: usize) -> Result<Tensor> {
        crop_resize_chw(&self.to_tensor(), cx, cy, side, out)
    }

    /// The whole image as a `[3, h, w]` tensor in `[0, 1]`.
    pub fn to_tensor(&self) -> Tensor {
        let plane = self.width * self.height;
        let mut data = vec![0.0f32; 3 * plane];
        for (i, px) in self.data.chunks_exact(3).enumerate() {
            for c in 0..3 {
                data[c * plane + i] = px[c] as f32 / 255.0;
            }
        }
        Tensor::from_vec(&[3, self.height, self.width], data).expect("shape matches data")
    }
}

/// Bilinear taps `(i0, i1, frac)` along one axis, with edge replication.
fn taps(origin: f64, scale: f64, out: usize, len: usize) -> Vec<(usize, usize, f32)> {
    (0..out)
        .map(|o| {
            let s = (origin + (o as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
            let i0 = s.floor() as usize;
            (i0, (i0 + 1).min(len - 1), (s - i0 as f64) as f32)
        })
        .collect()
}

fn chw_dims(input: &Tensor) -> Result<(usize, usize, usize)> {
    match input.shape() {
        &[c, h, w] if h > 0 && w > 0 => Ok((c, h, w)),
        s => Err(Error::Shape(format!("expected non-empty CHW tensor, got {s:?}"))),
    }
}

fn bilinear(input: &Tensor, xs: &[(usize, usize, f32)], ys: &[(usize, usize, f32)]) -> Result<Tensor> {
    let (c, h, w) = chw_dims(input)?;
    let d = input.data();
    let mut data = Vec::with_capacity(c * xs.len() * ys.len());
    for ch in 0..c {
        let p = &d[ch * h * w..(ch + 1) * h * w];
        for &(y0, y1, fy) in ys {
            let (r0, r1) = (&p[y0 * w..(y0 + 1) * w], &p[y1 * w..(y1 + 1) * w]);
            for &(x0, x1, fx) in xs {
                let top = r0[x0] * (1.0 - fx) + r0[x1] * fx;
                let bot = r1[x0] * (1.0 - fx) + r1[x1] * fx;
                data.push(top * (1.0 - fy) + bot * fy);
            }
        }
    }
    Tensor::from_vec(&[c, ys.len(), xs.len()], data)
}

/// Bilinear crop of the square of side `side` centred on `(cx, cy)` from a
/// `[c, h, w]` tensor, resampled to `[c, out, out]`. Output pixel `u` samples
/// source coordinate `x0 + (u + 0.5) * side / out - 0.5`; samples outside the
/// source replicate the nearest edge.
pub fn crop_resize_chw(input: &Tensor, cx: f64, cy: f64, side: f64, out: usize) -> Result<Tensor> {
    let (_, h, w) = chw_dims(input)?;
    if !(side > 0.0) || !cx.is_finite() || !cy.is_finite() || out == 0 {
        return Err(Error::Geometry(format!(
            "bad crop: centre ({cx}, {cy}), side {side}, output {out}"
        )));
    }
    let scale = side / out as f64;
    let xs = taps(cx - side / 2.0, scale, out, w);
    let ys = taps(cy - side / 2.0, scale, out, h);
    bilinear(input, &xs, &ys)
}

/// Bilinear resize of a `[c, h, w]` tensor to `[c, out, out]` using the same
/// pixel-centre mapping as [`Image::crop_resize`].
pub fn resize_chw(input: &Tensor, out: usize) -> Result<Tensor> {
    let (_, h, w) = chw_dims(input)?;
    let xs = taps(0.0, w as f64 / out as f64, out, w);
    let ys = taps(0.0, h as f64 / out as f64, out, h);
    bilinear(input, &xs, &ys)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> Image {
        let mut img = Image::filled(w, h, [0, 0, 0]);
        for y in 0..h {
            for x in 0..w {
                img.set_pixel(x, y, [(x * 10) as u8, (y * 10) as u8, 7]);
            }
        }
        img
    }

    #[test]
    fn crop_at_native_size_is_exact() {
        let img = ramp(12, 10);
        let t = img.crop_resize(6.0, 5.0, 6.0, 6).unwrap();
        // Crop origin (3, 2).
        for v in 0..6 {
            for u in 0..6 {
                let px = img.pixel(3 + u, 2 + v);
                for c in 0..3 {
                    assert_eq!(t.data()[(c * 6 + v) * 6 + u], px[c] as f32 / 255.0);
                }
            }
        }
    }

    #[test]
    fn outside_is_edge_replicated() {
        let img = ramp(4, 4);
        let t = img.crop_resize(-10.0, -10.0, 2.0, 2).unwrap();
        assert!(t.data()[..8].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn resize_identity_and_constant() {
        let t = ramp(5, 5).to_tensor();
        assert_eq!(resize_chw(&t, 5).unwrap(), t);
        let c = Tensor::full(&[2, 9, 9], 0.25);
        assert!(resize_chw(&c, 4).unwrap().data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        let img = ramp(7, 3);
        img.save_png(&p).unwrap();
        assert_eq!(Image::load_png(&p).unwrap(), img);
    }

    #[test]
    fn grayscale_png_is_replicated() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.png");
        image::GrayImage::from_raw(2, 1, vec![9, 200]).unwrap().save(&p).unwrap();
        let img = Image::load_png(&p).unwrap();
        assert_eq!(img.pixel(1, 0), [200, 200, 200]);
    }
}
