//! Deterministic synthetic sequences with exact groundtruth.
//!
//! A value-noise textured target moves over a value-noise background. Target
//! positions are whole pixels, so the groundtruth box is exact by
//! construction.

use crate::error::{Error, Result};
use crate::geometry::Rect;
use crate::image::Image;
use crate::sequence::Sequence;
use crate::tensor::{Rng, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Motion {
    Static,
    /// Pixels per frame.
    Linear { vx: f64, vy: f64 },
    /// Per-axis Gaussian step with this standard deviation in pixels.
    RandomWalk { sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Occlusion {
    pub start: usize,
    pub duration: usize,
    /// Fraction of target pixels covered, in `[0, 1]`.
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub name: String,
    pub frame_width: usize,
    pub frame_height: usize,
    pub length: usize,
    pub target_width: usize,
    pub target_height: usize,
    pub motion: Motion,
    /// Blend weight of fresh noise mixed into the target texture every frame.
    pub appearance_drift: f64,
    pub occlusion: Option<Occlusion>,
    pub distractors: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            name: "synth".into(),
            frame_width: 128,
            frame_height: 128,
            length: 40,
            target_width: 32,
            target_height: 32,
            motion: Motion::Static,
            appearance_drift: 0.0,
            occlusion: None,
            distractors: 0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.length == 0 {
            return Err(Error::Config("sequence length must be positive".into()));
        }
        if self.target_width == 0 || self.target_height == 0 {
            return Err(Error::Config("target size must be positive".into()));
        }
        if self.target_width + 2 > self.frame_width || self.target_height + 2 > self.frame_height {
            return Err(Error::Geometry(format!(
                "target {}x{} does not fit inside frame {}x{} with a 1 px margin",
                self.target_width, self.target_height, self.frame_width, self.frame_height
            )));
        }
        if !(0.0..=1.0).contains(&self.appearance_drift) {
            return Err(Error::Config("appearance drift must lie in [0, 1]".into()));
        }
        if let Some(o) = self.occlusion {
            if !(0.0..=1.0).contains(&o.coverage) {
                return Err(Error::Config("occlusion coverage must lie in [0, 1]".into()));
            }
        }
        match self.motion {
            Motion::Linear { vx, vy } if !(vx.is_finite() && vy.is_finite()) => {
                Err(Error::Config("linear motion needs finite velocity".into()))
            }
            Motion::RandomWalk { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => {
                Err(Error::Config("random walk sigma must be non-negative".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Smooth noise in `[0, 1]`: two octaves of bilinearly interpolated lattice values.
fn value_noise(w: usize, h: usize, rng: &mut Rng) -> Vec<f64> {
    let mut field = vec![0.0; w * h];
    for (cell, weight) in [(8usize, 0.65), (3, 0.35)] {
        let (gw, gh) = (w / cell + 2, h / cell + 2);
        let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.uniform()).collect();
        for y in 0..h {
            let fy = y as f64 / cell as f64;
            let (y0, ty) = (fy.floor() as usize, smooth(fy.fract()));
            for x in 0..w {
                let fx = x as f64 / cell as f64;
                let (x0, tx) = (fx.floor() as usize, smooth(fx.fract()));
                let at = |xx: usize, yy: usize| lattice[yy * gw + xx];
                let top = at(x0, y0) * (1.0 - tx) + at(x0 + 1, y0) * tx;
                let bot = at(x0, y0 + 1) * (1.0 - tx) + at(x0 + 1, y0 + 1) * tx;
                field[y * w + x] += weight * (top * (1.0 - ty) + bot * ty);
            }
        }
    }
    field
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Rescales to the given mean and standard deviation, clamped to `[0, 1]`.
fn normalize(field: &mut [f64], mean: f64, std: f64) {
    let n = field.len() as f64;
    let m = field.iter().sum::<f64>() / n;
    let s = (field.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt().max(1e-9);
    for v in field.iter_mut() {
        *v = (mean + (*v - m) / s * std).clamp(0.0, 1.0);
    }
}

type Palette = [[f64; 3]; 2];

fn palette(rng: &mut Rng) -> Palette {
    let mut c = || [rng.uniform(), rng.uniform(), rng.uniform()];
    [c(), c()]
}

fn shade(p: &Palette, t: f64) -> [u8; 3] {
    let mut out = [0u8; 3];
    for c in 0..3 {
        out[c] = ((p[0][c] * (1.0 - t) + p[1][c] * t) * 255.0).round() as u8;
    }
    out
}

fn paint(frame: &mut Image, field: &[f64], w: usize, x0: usize, y0: usize, p: &Palette) {
    for (i, &t) in field.iter().enumerate() {
        frame.set_pixel(x0 + i % w, y0 + i / w, shade(p, t));
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<Sequence> {
    cfg.validate()?;
    let (fw, fh) = (cfg.frame_width, cfg.frame_height);
    let (tw, th) = (cfg.target_width, cfg.target_height);
    let rng = Rng::new(cfg.seed);
    let mut tex_rng = rng.fork(1);
    let mut motion_rng = rng.fork(2);

    let mut bg_field = value_noise(fw, fh, &mut tex_rng);
    normalize(&mut bg_field, 0.5, 0.2);
    let bg_palette = palette(&mut tex_rng);
    let target_palette = palette(&mut tex_rng);
    let mut background = Image::filled(fw, fh, [0; 3]);
    paint(&mut background, &bg_field, fw, 0, 0, &bg_palette);

    let (max_x, max_y) = ((fw - tw - 1) as f64, (fh - th - 1) as f64);
    for _ in 0..cfg.distractors {
        let mut f = value_noise(tw, th, &mut tex_rng);
        normalize(&mut f, 0.5, 0.25);
        let x = 1 + tex_rng.below(fw - tw - 1);
        let y = 1 + tex_rng.below(fh - th - 1);
        paint(&mut background, &f, tw, x, y, &target_palette);
    }

    let mut field = value_noise(tw, th, &mut tex_rng);
    normalize(&mut field, 0.5, 0.25);
    let (mut px, mut py) = (max_x / 2.0 + 0.5, max_y / 2.0 + 0.5);
    let (sx, sy) = (px, py);

    let mut frames = Vec::with_capacity(cfg.length);
    let mut groundtruth = Vec::with_capacity(cfg.length);
    for t in 0..cfg.length {
        if t > 0 {
            match cfg.motion {
                Motion::Static => {}
                Motion::Linear { vx, vy } => {
                    px = sx + vx * t as f64;
                    py = sy + vy * t as f64;
                }
                Motion::RandomWalk { sigma } => {
                    px += sigma * motion_rng.normal();
                    py += sigma * motion_rng.normal();
                }
            }
            px = px.clamp(1.0, max_x);
            py = py.clamp(1.0, max_y);
            if cfg.appearance_drift > 0.0 {
                let fresh = value_noise(tw, th, &mut tex_rng);
                for (v, f) in field.iter_mut().zip(&fresh) {
                    *v = (1.0 - cfg.appearance_drift) * *v + cfg.appearance_drift * f;
                }
                normalize(&mut field, 0.5, 0.25);
            }
        }
        let (x, y) = (px.round() as usize, py.round() as usize);
        let mut frame = background.clone();
        paint(&mut frame, &field, tw, x, y, &target_palette);
        if let Some(o) = cfg.occlusion {
            if t >= o.start && t < o.start + o.duration {
                let covered = (o.coverage * (tw * th) as f64).round() as usize;
                for i in 0..covered {
                    frame.set_pixel(x + i % tw, y + i / tw, [0, 0, 0]);
                }
            }
        }
        frames.push(frame);
        groundtruth.push(Rect::new(x as f64, y as f64, tw as f64, th as f64));
    }
    let mut seq = Sequence::new(cfg.name.clone(), frames, groundtruth)?;
    seq.attributes = attributes(cfg);
    Ok(seq)
}

fn attributes(cfg: &SynthConfig) -> Vec<String> {
    let mut a = vec![match cfg.motion {
        Motion::Static => "static".to_string(),
        Motion::Linear { .. } => "linear-motion".to_string(),
        Motion::RandomWalk { .. } => "random-walk".to_string(),
    }];
    if cfg.appearance_drift > 0.0 {
        a.push("appearance-drift".into());
    }
    if cfg.occlusion.is_some() {
        a.push("occlusion".into());
    }
    if cfg.distractors > 0 {
        a.push("distractors".into());
    }
    a
}

pub const PRESETS: [&str; 3] = ["easy", "drift-prone", "occlusion"];

/// Configs of a named preset suite, seeded from `seed`.
pub fn preset(name: &str, seed: u64) -> Result<Vec<SynthConfig>> {
    let mut rng = Rng::new(seed);
    let base = |i: usize, rng: &mut Rng| SynthConfig {
        name: format!("{name}-{i:02}"),
        seed: rng.next_u64(),
        ..SynthConfig::default()
    };
    let suite = match name {
        "easy" => (0..10)
            .map(|i| {
                let mut c = base(i, &mut rng);
                c.motion = if i % 2 == 0 {
                    Motion::Static
                } else {
                    let a = rng.uniform_in(0.0, std::f64::consts::TAU);
                    Motion::Linear { vx: 0.5 * a.cos(), vy: 0.5 * a.sin() }
                };
                c
            })
            .collect(),
        "drift-prone" => (0..8)
            .map(|i| {
                let mut c = base(i, &mut rng);
                c.motion = Motion::RandomWalk { sigma: 1.5 };
                c.appearance_drift = 0.3;
                c.distractors = 1;
                c
            })
            .collect(),
        "occlusion" => (0..6)
            .map(|i| {
                let mut c = base(i, &mut rng);
                let a = rng.uniform_in(0.0, std::f64::consts::TAU);
                c.motion = Motion::Linear { vx: 0.5 * a.cos(), vy: 0.5 * a.sin() };
                c.occlusion = Some(Occlusion { start: 15, duration: 6, coverage: 0.5 });
                c
            })
            .collect(),
        _ => {
            return Err(Error::Config(format!(
                "unknown synthetic preset `{name}` (expected one of {})",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(suite)
}

pub fn generate_suite(name: &str, seed: u64) -> Result<Vec<Sequence>> {
    preset(name, seed)?.iter().map(generate).collect()
}

/// Unlabeled `[3, size, size]` patches, each cropped at random from its own
/// freshly generated synthetic frame.
pub fn random_patches(count: usize, size: usize, seed: u64) -> Result<Vec<Tensor>> {
    let mut rng = Rng::new(seed);
    (0..count)
        .map(|_| {
            let cfg = SynthConfig {
                length: 1,
                distractors: 2,
                seed: rng.next_u64(),
                ..SynthConfig::default()
            };
            let frame = &generate(&cfg)?.frames[0];
            let side = rng.uniform_in(32.0, 96.0);
            let cx = rng.uniform_in(side / 2.0, frame.width() as f64 - side / 2.0);
            let cy = rng.uniform_in(side / 2.0, frame.height() as f64 - side / 2.0);
            frame.crop_resize(cx, cy, side, size)
        })
        .collect()
}
