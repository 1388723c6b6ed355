//! The JSON results file written by a tracking run.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::geometry::Rect;
use crate::io_util::write_atomic;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Results {
    pub config: RunConfig,
    pub seed: u64,
    /// `[x, y, w, h]` per frame.
    pub boxes: Vec<[f64; 4]>,
    pub scores: Vec<f64>,
    pub flags: Vec<String>,
    pub metrics: BTreeMap<String, f64>,
}

impl Results {
    pub fn rects(&self) -> Vec<Rect> {
        self.boxes.iter().map(|&a| Rect::from_array(a)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }
}
