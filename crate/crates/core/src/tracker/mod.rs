//! Online tracker: a frozen backbone, a small head trained on the first frame
//! and refreshed from short- and long-term sample memories.

mod config;
mod head;
mod memory;
pub mod sampling;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::TrackerConfig;
pub use head::{HeadGrads, HeadNet, HeadTrace, PARAM_NAMES as HEAD_PARAM_NAMES};
pub use memory::{FrameSamples, Memory};

use crate::error::{Error, Result};
use crate::geometry::{label_map, match_anchors, AnchorGridConfig, GridPos, LabelMap, Rect, SampleClass};
use crate::image::{crop_resize_chw, Image};
use crate::losses::{rpn2t_loss, Rpn2tConfig};
use crate::netspec::Network;
use crate::tensor::{softmax2_object_prob, Rng, Sgd, Tensor};

/// Patches per backbone forward call.
const FEATURE_CHUNK: usize = 32;

/// Crops the square of side `max(w, h) * context_scale` centred on `b`,
/// resamples it to `out_size` and subtracts `mean` per channel.
pub fn extract_patch(image: &Image, b: &Rect, out_size: usize, context_scale: f64, mean: [f32; 3]) -> Result<Tensor> {
    patch_from_planes(&centered_planes(image, mean)?, b, out_size, context_scale)
}

/// The image as a `[3, h, w]` tensor with `mean` subtracted per channel.
/// Bilinear sampling commutes with the subtraction, so cropping these planes
/// gives the same patch as cropping first.
pub fn centered_planes(image: &Image, mean: [f32; 3]) -> Result<Tensor> {
    if image.width() == 0 || image.height() == 0 {
        return Err(Error::Data("cannot extract a patch from an empty image".into()));
    }
    let mut t = image.to_tensor();
    let plane = image.width() * image.height();
    for (c, m) in mean.iter().enumerate() {
        t.data_mut()[c * plane..(c + 1) * plane].iter_mut().for_each(|v| *v -= m);
    }
    Ok(t)
}

fn patch_from_planes(planes: &Tensor, b: &Rect, out_size: usize, context_scale: f64) -> Result<Tensor> {
    if !b.is_valid() {
        return Err(Error::Geometry(format!("patch box {b:?} is not valid")));
    }
    let (cx, cy) = b.center();
    crop_resize_chw(planes, cx, cy, b.w.max(b.h) * context_scale, out_size)
}

/// `(alpha * mean_a + beta * mean_q) / (alpha + beta)`.
pub fn combine_score(mean_a: f64, mean_q: f64, alpha: f64, beta: f64) -> f64 {
    (alpha * mean_a + beta * mean_q) / (alpha + beta)
}

/// Mean of the `k` best-scoring boxes; ties keep candidate order.
pub fn top_k_mean(boxes: &[Rect], scores: &[f64], k: usize) -> (Rect, Vec<usize>) {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
    order.truncate(k.min(boxes.len()));
    let n = order.len() as f64;
    let mut acc = [0.0; 4];
    for &i in &order {
        for (a, v) in acc.iter_mut().zip(boxes[i].to_array()) {
            *a += v;
        }
    }
    let mean = Rect::new(acc[0] / n, acc[1] / n, acc[2] / n, acc[3] / n);
    (mean, order)
}

/// Per-sample labels shared by every patch: each sample class labels the
/// matched positions of its branch and ignores the rest.
#[derive(Debug, Clone)]
struct Labels {
    matched_a: Vec<GridPos>,
    matched_q: Vec<GridPos>,
    pos_a: LabelMap,
    pos_q: LabelMap,
    neg_a: LabelMap,
    neg_q: LabelMap,
}

impl Labels {
    fn new(anchors: &AnchorGridConfig, loss: &Rpn2tConfig) -> Result<Self> {
        let gt = anchors.centered_target();
        let matched_a = match_anchors(&gt, anchors, loss.scheme_a)?;
        let matched_q = match_anchors(&gt, anchors, loss.scheme_q)?;
        Ok(Self {
            pos_a: label_map(SampleClass::Positive, &matched_a, anchors)?,
            pos_q: label_map(SampleClass::Positive, &matched_q, anchors)?,
            neg_a: label_map(SampleClass::Negative, &matched_a, anchors)?,
            neg_q: label_map(SampleClass::Negative, &matched_q, anchors)?,
            matched_a,
            matched_q,
        })
    }
}

/// Mutable per-sequence tracking state.
#[derive(Debug, Clone)]
pub struct TrackerState {
    pub current_box: Rect,
    pub head: HeadNet,
    pub frame_index: usize,
    pub short_mem: Memory,
    pub long_mem: Memory,
    pub rng: Rng,
    /// Multiplier on the candidate translation std; widened after a failure.
    pub search_scale: f64,
    update_opt: Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub rect: Rect,
    pub score: f64,
    pub success: bool,
}

/// Per-frame output of [`Tracker::track_sequence`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackOutput {
    pub boxes: Vec<Rect>,
    pub scores: Vec<f64>,
    pub success: Vec<bool>,
}

/// Anything that can be initialised on a box and then follow it frame by frame.
pub trait FrameTracker {
    fn initialize(&mut self, frame: &Image, gt: Rect) -> Result<()>;
    fn update(&mut self, frame: &Image) -> Result<StepResult>;
}

#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    loss: Rpn2tConfig,
    anchors: AnchorGridConfig,
    backbone: Arc<Network>,
    seed: u64,
    labels: Labels,
    inits: u64,
    state: Option<TrackerState>,
}

impl Tracker {
    pub fn new(
        cfg: TrackerConfig,
        loss: Rpn2tConfig,
        anchors: AnchorGridConfig,
        backbone: Arc<Network>,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        loss.validate()?;
        anchors.validate()?;
        let spec = backbone.spec();
        let grid = spec.output_size(spec.input_size)?;
        if grid != anchors.grid() {
            return Err(Error::Spec(format!(
                "backbone produces a {grid}x{grid} map at input {}, anchor grid is {}x{}",
                spec.input_size,
                anchors.grid(),
                anchors.grid()
            )));
        }
        let labels = Labels::new(&anchors, &loss)?;
        Ok(Self {
            cfg,
            loss,
            anchors,
            backbone,
            seed,
            labels,
            inits: 0,
            state: None,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn backbone(&self) -> &Network {
        &self.backbone
    }

    pub fn state(&self) -> Option<&TrackerState> {
        self.state.as_ref()
    }

    fn feature_dim(&self) -> usize {
        let g = self.anchors.grid();
        self.backbone.spec().output_channels() * g * g
    }

    fn feature_shape(&self, n: usize) -> [usize; 4] {
        let g = self.anchors.grid();
        [n, self.backbone.spec().output_channels(), g, g]
    }

    /// Backbone features for every box, flattened in box order.
    pub fn features(&self, image: &Image, boxes: &[Rect]) -> Result<Vec<f32>> {
        let size = self.backbone.spec().input_size;
        let scale = self.anchors.context_scale();
        let planes = centered_planes(image, self.cfg.pixel_mean)?;
        let chunks: Vec<Result<Vec<f32>>> = boxes
            .par_chunks(FEATURE_CHUNK)
            .map(|chunk| {
                let patches = chunk
                    .iter()
                    .map(|b| patch_from_planes(&planes, b, size, scale))
                    .collect::<Result<Vec<_>>>()?;
                let x = Tensor::stack(&patches.iter().collect::<Vec<_>>())?;
                Ok(self.backbone.forward(&x)?.into_vec())
            })
            .collect();
        let mut out = Vec::with_capacity(boxes.len() * self.feature_dim());
        for c in chunks {
            out.extend(c?);
        }
        Ok(out)
    }

    /// Combined objectness for every feature row.
    pub fn score_rows(&self, head: &HeadNet, rows: &[&[f32]]) -> Result<Vec<f64>> {
        let dim = self.feature_dim();
        let plane = self.anchors.cells();
        let g = self.anchors.grid();
        let (alpha, beta) = (f64::from(self.loss.alpha), f64::from(self.loss.beta));
        let mut out = Vec::with_capacity(rows.len());
        for chunk in rows.chunks(FEATURE_CHUNK * 4) {
            let mut data = Vec::with_capacity(chunk.len() * dim);
            for r in chunk {
                data.extend_from_slice(r);
            }
            let maps = head.forward(&Tensor::from_vec(&self.feature_shape(chunk.len()), data)?)?;
            let pa = softmax2_object_prob(&maps.a_logits)?;
            let pq = softmax2_object_prob(&maps.q_logits)?;
            for s in 0..chunk.len() {
                let mean = |p: &[f32], pos: &[GridPos]| {
                    pos.iter().map(|q| f64::from(p[s * plane + q.y * g + q.x])).sum::<f64>() / pos.len() as f64
                };
                let ma = mean(&pa, &self.labels.matched_a);
                let mq = mean(&pq, &self.labels.matched_q);
                out.push(combine_score(ma, mq, alpha, beta));
            }
        }
        Ok(out)
    }

    fn rows<'a>(&self, flat: &'a [f32]) -> Vec<&'a [f32]> {
        flat.chunks_exact(self.feature_dim()).collect()
    }

    /// `iters` minibatch steps; negatives are the hardest of a random pool.
    fn train(
        &self,
        head: &mut HeadNet,
        opt: &mut Sgd,
        pos: &[&[f32]],
        neg: &[&[f32]],
        iters: usize,
        rng: &mut Rng,
    ) -> Result<()> {
        if pos.is_empty() || neg.is_empty() {
            return Ok(());
        }
        let cfg = &self.cfg;
        for _ in 0..iters {
            let pi = sampling::draw_indices(pos.len(), cfg.minibatch_pos, rng);
            let pool = sampling::draw_indices(neg.len(), cfg.hard_neg_pool.min(neg.len()), rng);
            let pool_rows: Vec<&[f32]> = pool.iter().map(|&i| neg[i]).collect();
            let scores = self.score_rows(head, &pool_rows)?;
            let mut order: Vec<usize> = (0..pool.len()).collect();
            order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
            let ni: Vec<usize> = order.iter().take(cfg.minibatch_neg).map(|&k| pool[k]).collect();

            let n = pi.len() + ni.len();
            let mut data = Vec::with_capacity(n * self.feature_dim());
            for &i in &pi {
                data.extend_from_slice(pos[i]);
            }
            for &i in &ni {
                data.extend_from_slice(neg[i]);
            }
            let x = Tensor::from_vec(&self.feature_shape(n), data)?;
            let l = &self.labels;
            let la: Vec<&LabelMap> = (0..n).map(|k| if k < pi.len() { &l.pos_a } else { &l.neg_a }).collect();
            let lq: Vec<&LabelMap> = (0..n).map(|k| if k < pi.len() { &l.pos_q } else { &l.neg_q }).collect();
            let (maps, trace) = head.forward_traced(&x)?;
            let out = rpn2t_loss(&maps, &la, &lq, &self.loss)?;
            if !out.loss.is_finite() {
                return Err(Error::NonFinite("tracker head loss".into()));
            }
            let grads = head.backward(&trace, &out.grad_a, &out.grad_q)?;
            let mut params = head.params_mut();
            opt.step(&mut params, &grads.iter().collect::<Vec<_>>())?;
        }
        Ok(())
    }

    fn image_dims(frame: &Image) -> (usize, usize) {
        (frame.width(), frame.height())
    }

    fn harvest(&self, frame: &Image, b: &Rect, n_pos: usize, n_neg: usize, rng: &mut Rng) -> Result<(Vec<f32>, Vec<f32>)> {
        let cfg = &self.cfg;
        let dims = Self::image_dims(frame);
        let pos = sampling::positives(b, n_pos, cfg.pos_iou, cfg.pos_trans_sigma, cfg.scale_step, cfg.scale_sigma, dims, rng)?;
        let neg = sampling::negatives(b, n_neg, cfg.neg_iou, cfg.neg_trans_sigma, cfg.scale_step, cfg.scale_sigma, dims, rng)?;
        Ok((self.features(frame, &pos)?, self.features(frame, &neg)?))
    }

    /// Trains a fresh head on the first frame.
    pub fn init(&mut self, frame: &Image, gt: Rect) -> Result<()> {
        let dims = Self::image_dims(frame);
        if !gt.is_valid() || gt.x < 0.0 || gt.y < 0.0 || gt.right() > dims.0 as f64 || gt.bottom() > dims.1 as f64 {
            return Err(Error::Geometry(format!(
                "initial box {gt:?} is outside the {}x{} frame",
                dims.0, dims.1
            )));
        }
        let mut rng = Rng::new(self.seed).fork(self.inits);
        self.inits += 1;
        let cfg = self.cfg.clone();
        let mut head = HeadNet::init(self.backbone.spec().output_channels(), cfg.head_channels, &mut rng);
        let (pos, neg) = self.harvest(frame, &gt, cfg.n_pos_init, cfg.n_neg_init, &mut rng)?;
        let mut opt = Sgd::new(cfg.lr_init, cfg.momentum, cfg.weight_decay);
        self.train(&mut head, &mut opt, &self.rows(&pos), &self.rows(&neg), cfg.init_iters, &mut rng)?;

        let dim = self.feature_dim();
        let keep_pos = cfg.per_frame_pos.min(cfg.n_pos_init) * dim;
        let keep_neg = cfg.per_frame_neg.min(cfg.n_neg_init) * dim;
        let first = Arc::new(FrameSamples {
            frame: 0,
            pos: pos[..keep_pos].to_vec(),
            neg: neg[..keep_neg].to_vec(),
        });
        let mut short_mem = Memory::new(cfg.short_memory);
        let mut long_mem = Memory::new(cfg.long_memory);
        short_mem.push(first.clone());
        long_mem.push(first);
        self.state = Some(TrackerState {
            current_box: gt,
            head,
            frame_index: 0,
            short_mem,
            long_mem,
            rng,
            search_scale: 1.0,
            update_opt: Sgd::new(cfg.lr_update, cfg.momentum, cfg.weight_decay),
        });
        Ok(())
    }

    /// Scores candidates around the current box on the next frame and
    /// updates the model.
    pub fn step(&mut self, frame: &Image) -> Result<StepResult> {
        let mut st = self
            .state
            .take()
            .ok_or_else(|| Error::Config("tracker stepped before init".into()))?;
        let r = self.step_with(&mut st, frame);
        self.state = Some(st);
        r
    }

    fn step_with(&self, st: &mut TrackerState, frame: &Image) -> Result<StepResult> {
        let cfg = &self.cfg;
        let dims = Self::image_dims(frame);
        st.frame_index += 1;
        let cands = sampling::candidates(
            &st.current_box,
            cfg.n_candidates,
            cfg.trans_sigma * st.search_scale,
            cfg.scale_step,
            cfg.scale_sigma,
            dims,
            &mut st.rng,
        );
        let feats = self.features(frame, &cands)?;
        let scores = self.score_rows(&st.head, &self.rows(&feats))?;
        let (estimate, top) = top_k_mean(&cands, &scores, cfg.top_k);
        let best = scores[top[0]];
        let top_score = top.iter().map(|&i| scores[i]).sum::<f64>() / top.len() as f64;
        let success = best > cfg.success_threshold;

        if success {
            st.current_box = estimate.clamp_to(dims.0 as f64, dims.1 as f64, sampling::MIN_SIDE);
            st.search_scale = 1.0;
            match self.harvest(frame, &st.current_box, cfg.per_frame_pos, cfg.per_frame_neg, &mut st.rng) {
                Ok((pos, neg)) => {
                    let s = Arc::new(FrameSamples {
                        frame: st.frame_index,
                        pos,
                        neg,
                    });
                    st.short_mem.push(s.clone());
                    st.long_mem.push(s);
                }
                // A box hugging the frame border may leave no room for
                // negatives; the frame simply contributes no samples.
                Err(Error::InsufficientSamples(_)) => {}
                Err(e) => return Err(e),
            }
            if st.frame_index % cfg.long_interval == 0 {
                let dim = self.feature_dim();
                let (p, n) = (st.long_mem.positives(dim), st.long_mem.negatives(dim));
                self.train(&mut st.head, &mut st.update_opt, &p.rows, &n.rows, cfg.update_iters, &mut st.rng)?;
            }
        } else {
            st.search_scale = cfg.failure_expand;
            let dim = self.feature_dim();
            let (p, n) = (st.short_mem.positives(dim), st.short_mem.negatives(dim));
            self.train(&mut st.head, &mut st.update_opt, &p.rows, &n.rows, cfg.update_iters, &mut st.rng)?;
        }
        Ok(StepResult {
            rect: st.current_box,
            score: top_score,
            success,
        })
    }

    /// Runs init on the first frame and step on the rest. The first box is
    /// `gt0` with score 1.
    pub fn track_sequence(&mut self, frames: &[Image], gt0: Rect) -> Result<TrackOutput> {
        let first = frames
            .first()
            .ok_or_else(|| Error::Data("cannot track an empty sequence".into()))?;
        let mut out = TrackOutput {
            boxes: vec![gt0],
            scores: vec![1.0],
            success: vec![true],
        };
        if frames.len() == 1 {
            return Ok(out);
        }
        self.init(first, gt0)?;
        for f in &frames[1..] {
            let r = self.step(f)?;
            out.boxes.push(r.rect);
            out.scores.push(r.score);
            out.success.push(r.success);
        }
        Ok(out)
    }
}

impl FrameTracker for Tracker {
    fn initialize(&mut self, frame: &Image, gt: Rect) -> Result<()> {
        self.init(frame, gt)
    }

    fn update(&mut self, frame: &Image) -> Result<StepResult> {
        self.step(frame)
    }
}
