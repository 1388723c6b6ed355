//! Run orchestration shared by the command line and the acceptance suite.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::Result;
use crate::evalbench::{
    area_inflation, auc, mean_iou, precision_at_20, precision_curve, success_curve, vot_run,
    vot_scores, RunSummary, Trajectory, VotScores,
};
use crate::netspec::Network;
use crate::results::Results;
use crate::sequence::Sequence;
use crate::tracker::Tracker;

pub fn make_tracker(cfg: &RunConfig, backbone: Arc<Network>, seed: u64) -> Result<Tracker> {
    Tracker::new(cfg.tracker.clone(), cfg.loss, cfg.anchors, backbone, seed)
}

/// OTB metrics of a full-length trajectory.
pub fn otb_metrics(boxes: &[crate::geometry::Rect], gt: &[crate::geometry::Rect]) -> Result<BTreeMap<String, f64>> {
    let mut m = BTreeMap::new();
    m.insert("mean_iou".to_string(), mean_iou(boxes, gt)?);
    m.insert("auc".to_string(), auc(&success_curve(boxes, gt)?));
    m.insert("precision_20".to_string(), precision_at_20(&precision_curve(boxes, gt)?));
    m.insert("area_inflation".to_string(), area_inflation(boxes, gt)?);
    Ok(m)
}

/// Tracks one sequence from its first groundtruth box.
pub fn track(cfg: &RunConfig, backbone: Arc<Network>, seq: &Sequence) -> Result<Results> {
    let mut t = make_tracker(cfg, backbone, cfg.seed)?;
    let out = t.track_sequence(&seq.frames, seq.groundtruth[0])?;
    let flags = out
        .success
        .iter()
        .enumerate()
        .map(|(i, &s)| match (i, s) {
            (0, _) => "init",
            (_, true) => "success",
            (_, false) => "miss",
        })
        .map(String::from)
        .collect();
    Ok(Results {
        config: cfg.clone(),
        seed: cfg.seed,
        boxes: out.boxes.iter().map(|b| b.to_array()).collect(),
        scores: out.scores,
        flags,
        metrics: otb_metrics(&out.boxes, &seq.groundtruth)?,
    })
}

/// Tracks every sequence; sequences run in parallel, results keep input order.
pub fn track_suite(cfg: &RunConfig, backbone: Arc<Network>, seqs: &[Sequence]) -> Result<Vec<Results>> {
    seqs.par_iter()
        .map(|s| track(cfg, backbone.clone(), s))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VotSequenceRuns {
    pub sequence: String,
    pub trajectories: Vec<Trajectory>,
    pub summaries: Vec<RunSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VotReport {
    pub scores: VotScores,
    pub sequences: Vec<VotSequenceRuns>,
}

/// Re-initialising runs, `repeats` per sequence with seeds `seed, seed + 1, ...`.
pub fn vot_suite(cfg: &RunConfig, backbone: Arc<Network>, seqs: &[Sequence], repeats: usize) -> Result<VotReport> {
    let sequences = seqs
        .par_iter()
        .map(|s| {
            let mut trajectories = Vec::with_capacity(repeats);
            let mut summaries = Vec::with_capacity(repeats);
            for r in 0..repeats {
                let mut t = make_tracker(cfg, backbone.clone(), cfg.seed.wrapping_add(r as u64))?;
                let traj = vot_run(&mut t, &s.frames, &s.groundtruth, &cfg.vot)?;
                summaries.push(RunSummary::from_trajectory(&traj, &s.groundtruth));
                trajectories.push(traj);
            }
            Ok(VotSequenceRuns {
                sequence: s.name.clone(),
                trajectories,
                summaries,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let per: Vec<Vec<RunSummary>> = sequences.iter().map(|s| s.summaries.clone()).collect();
    Ok(VotReport {
        scores: vot_scores(&per, &cfg.vot)?,
        sequences,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedRow {
    pub sequence: String,
    pub iou_a: f64,
    pub iou_b: f64,
    pub inflation_a: f64,
    pub inflation_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ablation {
    pub rows: Vec<PairedRow>,
    pub mean_iou_a: f64,
    pub mean_iou_b: f64,
    pub mean_inflation_a: f64,
    pub mean_inflation_b: f64,
}

/// Runs two configurations on the same sequences with the same seeds.
pub fn ablate(cfg_a: &RunConfig, cfg_b: &RunConfig, backbone: Arc<Network>, seqs: &[Sequence]) -> Result<Ablation> {
    let a = track_suite(cfg_a, backbone.clone(), seqs)?;
    let b = track_suite(cfg_b, backbone, seqs)?;
    let rows: Vec<PairedRow> = seqs
        .iter()
        .zip(a.iter().zip(&b))
        .map(|(s, (ra, rb))| PairedRow {
            sequence: s.name.clone(),
            iou_a: ra.metrics["mean_iou"],
            iou_b: rb.metrics["mean_iou"],
            inflation_a: ra.metrics["area_inflation"],
            inflation_b: rb.metrics["area_inflation"],
        })
        .collect();
    let n = rows.len().max(1) as f64;
    let mean = |f: fn(&PairedRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    Ok(Ablation {
        mean_iou_a: mean(|r| r.iou_a),
        mean_iou_b: mean(|r| r.iou_b),
        mean_inflation_a: mean(|r| r.inflation_a),
        mean_inflation_b: mean(|r| r.inflation_b),
        rows,
    })
}

impl Ablation {
    pub fn render(&self, label_a: &str, label_b: &str) -> String {
        let w = self.rows.iter().map(|r| r.sequence.len()).max().unwrap_or(0).max(8);
        let mut s = format!(
            "{:<w$}  {:>10}  {:>10}  {:>10}  {:>10}\n",
            "sequence",
            format!("iou:{label_a}"),
            format!("iou:{label_b}"),
            format!("infl:{label_a}"),
            format!("infl:{label_b}")
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{:<w$}  {:>10.4}  {:>10.4}  {:>10.4}  {:>10.4}\n",
                r.sequence, r.iou_a, r.iou_b, r.inflation_a, r.inflation_b
            ));
        }
        s.push_str(&format!(
            "{:<w$}  {:>10.4}  {:>10.4}  {:>10.4}  {:>10.4}\n",
            "mean", self.mean_iou_a, self.mean_iou_b, self.mean_inflation_a, self.mean_inflation_b
        ));
        s
    }
}
