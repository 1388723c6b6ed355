//! Annotated frame sequences and the on-disk sequence directory format.
//!
//! ```text
//! <seq>/frames/000001.png
//! <seq>/frames/000002.png
//! <seq>/groundtruth_rect.txt   one "x,y,w,h" line per frame
//! <seq>/attributes.txt         optional, one free-form tag per line
//! ```
//!
//! Boxes are 0-based with a top-left origin unless the loader is told the
//! file is 1-based (as OTB files are).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::Rect;
use crate::image::Image;
use crate::io_util::write_atomic;

pub const FRAMES_DIR: &str = "frames";
pub const GROUNDTRUTH_FILE: &str = "groundtruth_rect.txt";
pub const ATTRIBUTES_FILE: &str = "attributes.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub name: String,
    pub frames: Vec<Image>,
    pub groundtruth: Vec<Rect>,
    pub attributes: Vec<String>,
}

impl Sequence {
    pub fn new(name: impl Into<String>, frames: Vec<Image>, groundtruth: Vec<Rect>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Data("sequence has no frames".into()));
        }
        if frames.len() != groundtruth.len() {
            return Err(Error::Data(format!(
                "{} frames but {} groundtruth boxes",
                frames.len(),
                groundtruth.len()
            )));
        }
        Ok(Self {
            name: name.into(),
            frames,
            groundtruth,
            attributes: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame_path(dir: &Path, index: usize) -> PathBuf {
        dir.join(FRAMES_DIR).join(format!("{:06}.png", index + 1))
    }

    pub fn load(dir: &Path, one_based: bool) -> Result<Self> {
        let gt_path = dir.join(GROUNDTRUTH_FILE);
        let text = std::fs::read_to_string(&gt_path)
            .map_err(|e| Error::Data(format!("{}: {e}", gt_path.display())))?;
        let groundtruth = parse_groundtruth(&text, one_based)?;
        let mut frames = Vec::with_capacity(groundtruth.len());
        for i in 0..groundtruth.len() {
            let p = Self::frame_path(dir, i);
            let img = Image::load_png(&p).map_err(|e| Error::Data(format!("{}: {e}", p.display())))?;
            frames.push(img);
        }
        if Self::frame_path(dir, groundtruth.len()).exists() {
            return Err(Error::Data(format!(
                "{} has more frames than groundtruth lines ({})",
                dir.display(),
                groundtruth.len()
            )));
        }
        let attributes = match std::fs::read_to_string(dir.join(ATTRIBUTES_FILE)) {
            Ok(s) => s.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect(),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "sequence".into());
        let mut seq = Self::new(name, frames, groundtruth)?;
        seq.attributes = attributes;
        Ok(seq)
    }

    /// Writes the sequence with 0-based groundtruth.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir.join(FRAMES_DIR))?;
        for (i, f) in self.frames.iter().enumerate() {
            f.save_png(&Self::frame_path(dir, i))?;
        }
        write_atomic(&dir.join(GROUNDTRUTH_FILE), format_groundtruth(&self.groundtruth).as_bytes())?;
        if !self.attributes.is_empty() {
            let mut s = self.attributes.join("\n");
            s.push('\n');
            write_atomic(&dir.join(ATTRIBUTES_FILE), s.as_bytes())?;
        }
        Ok(())
    }
}

/// Parses `x,y,w,h` lines; commas, tabs and spaces are all accepted as separators.
pub fn parse_groundtruth(text: &str, one_based: bool) -> Result<Vec<Rect>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Data(format!("groundtruth line {}: {e}", i + 1)))?;
        if vals.len() != 4 {
            return Err(Error::Data(format!(
                "groundtruth line {} has {} values, expected 4",
                i + 1,
                vals.len()
            )));
        }
        let shift = if one_based { 1.0 } else { 0.0 };
        let r = Rect::try_new(vals[0] - shift, vals[1] - shift, vals[2], vals[3])
            .map_err(|e| Error::Data(format!("groundtruth line {}: {e}", i + 1)))?;
        out.push(r);
    }
    if out.is_empty() {
        return Err(Error::Data("groundtruth file is empty".into()));
    }
    Ok(out)
}

pub fn format_groundtruth(boxes: &[Rect]) -> String {
    let mut s = String::new();
    for b in boxes {
        let _ = writeln!(s, "{},{},{},{}", b.x, b.y, b.w, b.h);
    }
    s
}
