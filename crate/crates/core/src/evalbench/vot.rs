use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, Rect};
use crate::image::Image;
use crate::tracker::FrameTracker;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameFlag {
    /// Tracked and counted towards accuracy.
    Tracked,
    /// Zero overlap with the groundtruth.
    Failed,
    /// Between a failure and the following re-initialisation.
    Skipped,
    /// (Re-)initialised from the groundtruth.
    Reinit,
    /// Tracked, but too soon after initialisation to count towards accuracy.
    Burnin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VotConfig {
    /// Frames between a failure and the re-initialisation.
    pub reset_delay: usize,
    /// Frames after each (re-)initialisation excluded from accuracy.
    pub burnin: usize,
    pub eao_lo: usize,
    pub eao_hi: usize,
}

impl Default for VotConfig {
    fn default() -> Self {
        Self {
            reset_delay: 5,
            burnin: 10,
            eao_lo: 20,
            eao_hi: 80,
        }
    }
}

impl VotConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reset_delay == 0 {
            return Err(Error::Config("vot.reset_delay must be positive".into()));
        }
        if self.eao_lo == 0 || self.eao_lo > self.eao_hi {
            return Err(Error::Config(format!(
                "vot EAO interval [{}, {}] is empty",
                self.eao_lo, self.eao_hi
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub boxes: Vec<Rect>,
    pub scores: Vec<f64>,
    pub flags: Vec<FrameFlag>,
}

impl Trajectory {
    pub fn failures(&self) -> usize {
        self.flags.iter().filter(|&&f| f == FrameFlag::Failed).count()
    }

    pub fn reinits(&self) -> usize {
        self.flags.iter().skip(1).filter(|&&f| f == FrameFlag::Reinit).count()
    }

    /// Mean IoU over frames flagged [`FrameFlag::Tracked`]; `None` if there are none.
    pub fn accuracy(&self, gt: &[Rect]) -> Option<f64> {
        let ov: Vec<f64> = self
            .flags
            .iter()
            .zip(self.boxes.iter().zip(gt))
            .filter(|(f, _)| **f == FrameFlag::Tracked)
            .map(|(_, (b, g))| iou(b, g))
            .collect();
        (!ov.is_empty()).then(|| ov.iter().sum::<f64>() / ov.len() as f64)
    }

    /// Overlaps of the frames after the first initialisation, as a run
    /// without resets would see them: zero from the first failure on.
    pub fn overlaps_without_reset(&self, gt: &[Rect]) -> Vec<f64> {
        let mut failed = false;
        let mut out = Vec::with_capacity(gt.len().saturating_sub(1));
        for i in 1..self.flags.len() {
            failed |= self.flags[i] == FrameFlag::Failed;
            out.push(if failed { 0.0 } else { iou(&self.boxes[i], &gt[i]) });
        }
        out
    }
}

/// Runs `tracker` over a sequence, re-initialising it from the groundtruth
/// `reset_delay` frames after every failure.
pub fn vot_run(
    tracker: &mut dyn FrameTracker,
    frames: &[Image],
    gt: &[Rect],
    cfg: &VotConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    if frames.is_empty() || frames.len() != gt.len() {
        return Err(Error::Data(format!(
            "{} frames and {} groundtruth boxes",
            frames.len(),
            gt.len()
        )));
    }
    let n = frames.len();
    let mut t = Trajectory {
        boxes: Vec::with_capacity(n),
        scores: Vec::with_capacity(n),
        flags: Vec::with_capacity(n),
    };
    let mut reinit_at = Some(0);
    let mut since_init = 0;
    let mut last = gt[0];
    for i in 0..n {
        match reinit_at {
            Some(r) if r == i => {
                tracker.initialize(&frames[i], gt[i])?;
                reinit_at = None;
                since_init = 0;
                last = gt[i];
                t.boxes.push(gt[i]);
                t.scores.push(1.0);
                t.flags.push(FrameFlag::Reinit);
            }
            Some(_) => {
                t.boxes.push(last);
                t.scores.push(0.0);
                t.flags.push(FrameFlag::Skipped);
            }
            None => {
                let r = tracker.update(&frames[i])?;
                last = r.rect;
                since_init += 1;
                t.boxes.push(r.rect);
                t.scores.push(r.score);
                if iou(&r.rect, &gt[i]) == 0.0 {
                    t.flags.push(FrameFlag::Failed);
                    reinit_at = Some(i + cfg.reset_delay);
                } else if since_init <= cfg.burnin {
                    t.flags.push(FrameFlag::Burnin);
                } else {
                    t.flags.push(FrameFlag::Tracked);
                }
            }
        }
    }
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VotScores {
    pub accuracy: f64,
    pub robustness: f64,
    pub eao: f64,
}

/// Overlaps of one run without resets, from the frame after initialisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapCurve {
    pub overlaps: Vec<f64>,
    /// The run failed; its overlap is zero from the failure on, past the end too.
    pub failed: bool,
}

impl OverlapCurve {
    pub fn new(overlaps: Vec<f64>, failed: bool) -> Self {
        Self { overlaps, failed }
    }
}

/// One run's contribution to [`vot_scores`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub accuracy: Option<f64>,
    pub failures: usize,
    pub curve: OverlapCurve,
}

impl RunSummary {
    pub fn from_trajectory(t: &Trajectory, gt: &[Rect]) -> Self {
        Self {
            accuracy: t.accuracy(gt),
            failures: t.failures(),
            curve: OverlapCurve::new(t.overlaps_without_reset(gt), t.failures() > 0),
        }
    }
}

/// Mean over `N` in `[lo, hi]` of `phi(N)`, the mean over curves of the
/// average of the first `N` overlaps. A failed curve counts as zero past its
/// end; a curve that ended without failing says nothing about lengths beyond
/// its own and is left out of those `phi(N)`. Lengths no curve speaks for are
/// skipped.
pub fn eao(curves: &[OverlapCurve], lo: usize, hi: usize) -> Result<f64> {
    if curves.is_empty() {
        return Err(Error::Data("EAO needs at least one run".into()));
    }
    if lo == 0 || lo > hi {
        return Err(Error::Config(format!("EAO interval [{lo}, {hi}] is empty")));
    }
    let (mut total, mut lengths) = (0.0, 0usize);
    for n in lo..=hi {
        let avg: Vec<f64> = curves
            .iter()
            .filter(|c| c.failed || c.overlaps.len() >= n)
            .map(|c| c.overlaps.iter().take(n).sum::<f64>() / n as f64)
            .collect();
        if !avg.is_empty() {
            total += avg.iter().sum::<f64>() / avg.len() as f64;
            lengths += 1;
        }
    }
    if lengths == 0 {
        return Err(Error::Data(format!(
            "no run is long enough or failed early enough to cover EAO interval [{lo}, {hi}]"
        )));
    }
    Ok(total / lengths as f64)
}

/// Scores over sequences, each holding one summary per repeat. Accuracy is
/// the mean of per-sequence accuracies (sequences with no counted frame are
/// left out); robustness the mean per-sequence failure count.
pub fn vot_scores(per_sequence: &[Vec<RunSummary>], cfg: &VotConfig) -> Result<VotScores> {
    if per_sequence.is_empty() || per_sequence.iter().any(|r| r.is_empty()) {
        return Err(Error::Data("VOT scores need at least one run per sequence".into()));
    }
    let mut accs = Vec::new();
    let mut rob = 0.0;
    let mut curves = Vec::new();
    for runs in per_sequence {
        let a: Vec<f64> = runs.iter().filter_map(|r| r.accuracy).collect();
        if !a.is_empty() {
            accs.push(a.iter().sum::<f64>() / a.len() as f64);
        }
        rob += runs.iter().map(|r| r.failures as f64).sum::<f64>() / runs.len() as f64;
        curves.extend(runs.iter().map(|r| r.curve.clone()));
    }
    let accuracy = if accs.is_empty() {
        0.0
    } else {
        accs.iter().sum::<f64>() / accs.len() as f64
    };
    Ok(VotScores {
        accuracy,
        robustness: rob / per_sequence.len() as f64,
        eao: eao(&curves, cfg.eao_lo, cfg.eao_hi)?,
    })
}
