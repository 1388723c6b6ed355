//! Hand-computed metric fixtures, shared by the evalbench tests and the
//! acceptance harness.
#![allow(dead_code)]

use rpntrack::evalbench::{
    auc, eao, precision_at_20, precision_curve, success_curve, success_curve_from_overlaps, vot_run,
    vot_scores, FrameFlag, OverlapCurve, RunSummary, Trajectory, VotConfig,
};
use rpntrack::geometry::Rect;
use rpntrack::image::Image;
use rpntrack::tracker::{FrameTracker, StepResult};
use rpntrack::tensor::Rng;
use rpntrack::Result;

pub struct Fixture {
    pub name: &'static str,
    pub got: f64,
    pub want: f64,
}

impl Fixture {
    pub fn passed(&self) -> bool {
        (self.got - self.want).abs() <= 1e-9
    }
}

/// Replays one box per frame. Frame `i` is an `(i + 1)`-pixel-wide image so
/// the script knows where it was (re-)initialised.
pub struct Scripted {
    pub boxes: Vec<Rect>,
    pub cursor: usize,
    pub inits: Vec<usize>,
}

impl Scripted {
    pub fn new(boxes: Vec<Rect>) -> Self {
        Self { boxes, cursor: 0, inits: vec![] }
    }
}

impl FrameTracker for Scripted {
    fn initialize(&mut self, frame: &Image, _gt: Rect) -> Result<()> {
        self.cursor = frame.width() - 1;
        self.inits.push(self.cursor);
        Ok(())
    }

    fn update(&mut self, _frame: &Image) -> Result<StepResult> {
        self.cursor += 1;
        Ok(StepResult { rect: self.boxes[self.cursor], score: 1.0, success: true })
    }
}

pub fn indexed_frames(n: usize) -> Vec<Image> {
    (0..n).map(|i| Image::filled(i + 1, 1, [0; 3])).collect()
}

/// Groundtruth 10x10 boxes; `shifted(k)` moves each by `dx[k]` in x.
fn shifted(dx: &[f64]) -> (Vec<Rect>, Vec<Rect>) {
    let gt: Vec<Rect> = (0..dx.len()).map(|i| Rect::new(20.0 * i as f64, 5.0, 10.0, 10.0)).collect();
    let tr = gt.iter().zip(dx).map(|(g, d)| Rect::new(g.x + d, g.y, g.w, g.h)).collect();
    (tr, gt)
}

/// Centre errors 5, 15 and 30 px: two of three within 20 px.
pub fn precision_fixture() -> Fixture {
    let (tr, gt) = shifted(&[5.0, 15.0, 30.0]);
    let c = precision_curve(&tr, &gt).unwrap();
    Fixture { name: "precision@20, errors 5/15/30", got: precision_at_20(&c), want: 2.0 / 3.0 }
}

/// Boxes nested in a 10x10 groundtruth with areas 90, 50, 20 give IoU 0.9,
/// 0.5, 0.2. Under the strict `>` rule they clear 90, 50 and 20 of the 101
/// thresholds, so the AUC is 160 / 303.
pub fn success_fixture() -> Fixture {
    let gt = vec![Rect::new(0.0, 0.0, 10.0, 10.0); 3];
    let tr = vec![Rect::new(0.0, 0.0, 9.0, 10.0), Rect::new(0.0, 0.0, 5.0, 10.0), Rect::new(0.0, 0.0, 2.0, 10.0)];
    Fixture { name: "AUC, IoU 0.9/0.5/0.2", got: auc(&success_curve(&tr, &gt).unwrap()), want: 160.0 / 303.0 }
}

/// A tracker stuck on an off-screen box over 20 frames, reset delay 5: it
/// fails on the first frame after every (re-)initialisation, so failures
/// fall on frames 1, 7, 13, 19 and re-inits on 6, 12, 18.
pub fn offscreen_trajectory() -> (Trajectory, Vec<usize>) {
    let n = 20;
    let gt: Vec<Rect> = (0..n).map(|i| Rect::new(10.0 + i as f64, 10.0, 8.0, 8.0)).collect();
    let mut t = Scripted::new(vec![Rect::new(-500.0, -500.0, 8.0, 8.0); n]);
    let traj = vot_run(&mut t, &indexed_frames(n), &gt, &VotConfig::default()).unwrap();
    (traj, t.inits)
}

pub fn offscreen_fixtures() -> Vec<Fixture> {
    let (traj, inits) = offscreen_trajectory();
    let failed: Vec<usize> = (0..traj.flags.len()).filter(|&i| traj.flags[i] == FrameFlag::Failed).collect();
    let ok = failed == [1, 7, 13, 19] && inits == [0, 6, 12, 18];
    vec![
        Fixture { name: "off-screen failures", got: traj.failures() as f64, want: 4.0 },
        Fixture { name: "off-screen re-inits", got: traj.reinits() as f64, want: 3.0 },
        Fixture { name: "off-screen schedule 1/7/13/19", got: ok as u8 as f64, want: 1.0 },
    ]
}

/// Wrong (but overlapping) boxes only on the burn-in frames 1..=10.
pub fn burnin_fixture() -> Fixture {
    let n = 25;
    let gt: Vec<Rect> = (0..n).map(|i| Rect::new(2.0 * i as f64, 0.0, 10.0, 10.0)).collect();
    let boxes = gt
        .iter()
        .enumerate()
        .map(|(i, g)| if (1..=10).contains(&i) { Rect::new(g.x + 5.0, g.y, g.w, g.h) } else { *g })
        .collect();
    let mut t = Scripted::new(boxes);
    let traj = vot_run(&mut t, &indexed_frames(n), &gt, &VotConfig::default()).unwrap();
    Fixture { name: "accuracy ignores burn-in", got: traj.accuracy(&gt).unwrap_or(f64::NAN), want: 1.0 }
}

/// Curves 0.8 x 10 and 0.6 x 4 then failure, interval [2, 6]:
/// phi(2..=4) = 0.7, phi(5) = (0.8 + 2.4 / 5) / 2 = 0.64, phi(6) = (0.8 + 0.4) / 2 = 0.6,
/// mean (3 * 0.7 + 0.64 + 0.6) / 5 = 0.668.
pub fn eao_fixtures() -> Vec<Fixture> {
    let a = OverlapCurve::new(vec![0.8; 10], false);
    let b = OverlapCurve::new(vec![0.6; 4], true);
    let direct = eao(&[a, b], 2, 6).unwrap();

    // Same curves produced by the re-initialising protocol. Overlap 0.8 is a
    // 10x8 box inside a 10x10 target, 0.6 a 10x6 box.
    let gt: Vec<Rect> = (0..11).map(|i| Rect::new(3.0 * i as f64, 0.0, 10.0, 10.0)).collect();
    let inside = |g: &Rect, h: f64| Rect::new(g.x, g.y, g.w, h);
    let steady: Vec<Rect> = gt.iter().map(|g| inside(g, 8.0)).collect();
    let failing: Vec<Rect> = gt
        .iter()
        .enumerate()
        .map(|(i, g)| if i <= 4 { inside(g, 6.0) } else { Rect::new(-100.0, -100.0, 5.0, 5.0) })
        .collect();
    let cfg = VotConfig { eao_lo: 2, eao_hi: 6, ..VotConfig::default() };
    let summary = |boxes: Vec<Rect>| {
        let mut t = Scripted::new(boxes);
        let traj = vot_run(&mut t, &indexed_frames(gt.len()), &gt, &cfg).unwrap();
        RunSummary::from_trajectory(&traj, &gt)
    };
    let scores = vot_scores(&[vec![summary(steady)], vec![summary(failing)]], &cfg).unwrap();
    vec![
        Fixture { name: "EAO, two curves on [2, 6]", got: direct, want: 0.668 },
        Fixture { name: "EAO through vot_run", got: scores.eao, want: 0.668 },
        Fixture { name: "ROB through vot_run", got: scores.robustness, want: 0.5 },
    ]
}

pub fn all_fixtures() -> Vec<Fixture> {
    let mut v = vec![precision_fixture(), success_fixture(), burnin_fixture()];
    v.extend(offscreen_fixtures());
    v.extend(eao_fixtures());
    v
}

/// A random trajectory around a random groundtruth, some boxes far off.
pub fn random_trajectory(rng: &mut Rng, n: usize) -> (Vec<Rect>, Vec<Rect>) {
    let mut gt = Vec::with_capacity(n);
    let mut tr = Vec::with_capacity(n);
    for _ in 0..n {
        let g = Rect::new(rng.uniform_in(0.0, 200.0), rng.uniform_in(0.0, 200.0), rng.uniform_in(4.0, 60.0), rng.uniform_in(4.0, 60.0));
        let spread = if rng.uniform() < 0.2 { 150.0 } else { 15.0 };
        let b = Rect::new(
            g.x + rng.uniform_in(-spread, spread),
            g.y + rng.uniform_in(-spread, spread),
            g.w * rng.uniform_in(0.5, 2.0),
            g.h * rng.uniform_in(0.5, 2.0),
        );
        gt.push(g);
        tr.push(b);
    }
    (tr, gt)
}

/// Precision non-decreasing, success non-increasing, AUC in [0, 1], and the
/// pointwise-max curve's AUC at least either AUC. Returns the first violation.
pub fn check_curve_invariants(a: (&[Rect], &[Rect]), b: (&[Rect], &[Rect])) -> std::result::Result<(), String> {
    let pa = precision_curve(a.0, a.1).map_err(|e| e.to_string())?;
    if pa.values.windows(2).any(|w| w[0] > w[1]) {
        return Err("precision curve decreases".into());
    }
    let sa = success_curve(a.0, a.1).map_err(|e| e.to_string())?;
    let sb = success_curve(b.0, b.1).map_err(|e| e.to_string())?;
    for s in [&sa, &sb] {
        if s.values.windows(2).any(|w| w[0] < w[1]) {
            return Err("success curve increases".into());
        }
        let v = auc(s);
        if !(0.0..=1.0).contains(&v) {
            return Err(format!("AUC {v} out of range"));
        }
    }
    let max: Vec<f64> = sa.values.iter().zip(&sb.values).map(|(x, y)| x.max(*y)).collect();
    let max_auc = max.iter().sum::<f64>() / max.len() as f64;
    if max_auc < auc(&sa).max(auc(&sb)) {
        return Err("pointwise max has a smaller AUC".into());
    }
    // The overlap-based constructor agrees with the box-based one.
    let ov: Vec<f64> = a.0.iter().zip(a.1).map(|(x, y)| rpntrack::geometry::iou(x, y)).collect();
    if success_curve_from_overlaps(&ov) != sa {
        return Err("success curve depends on how overlaps are supplied".into());
    }
    Ok(())
}
