//! Finite-difference gradient checks against independent f64 reference
//! implementations.
//!
//! Analytic gradients come from the crate's f32 kernels. The numeric side
//! perturbs one f32 input by +/- eps, then evaluates a plain f64 re-implementation
//! of the op at both points and divides by the step actually taken. Keeping the
//! numeric side in f64 removes the cancellation noise that makes pure f32
//! central differences useless at the 1e-4 level.

#![allow(dead_code)]

use rpntrack::geometry::{GridPos, Label, LabelMap};
use rpntrack::losses::{rpn2t_loss, rpn_loss, BoxDelta, Rpn2tConfig, RpnConfig, ScoreMaps};
use rpntrack::netspec::{LayerKind, LayerSpec, Network, NetworkSpec};
use rpntrack::tensor::{
    conv2d, conv2d_backward, maxpool2d, maxpool2d_backward, mse, relu, relu_backward, smooth_l1,
    softmax2_ce, Rng, Tensor,
};

pub const EPS: f32 = 1e-3;
pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub rel_err: f64,
    pub elements: usize,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.rel_err < TOLERANCE
    }
}

pub fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let na = analytic.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|v| v * v).sum::<f64>().sqrt();
    let denom = na.max(nn);
    if denom < 1e-12 {
        diff
    } else {
        diff / denom
    }
}

/// Central differences of `f` with respect to every entry of `x`.
pub fn numeric_grad(x: &[f32], mut f: impl FnMut(&[f32]) -> f64) -> Vec<f64> {
    let mut buf = x.to_vec();
    (0..x.len())
        .map(|i| {
            let (plus, minus) = (x[i] + EPS, x[i] - EPS);
            buf[i] = plus;
            let fp = f(&buf);
            buf[i] = minus;
            let fm = f(&buf);
            buf[i] = x[i];
            (fp - fm) / (plus as f64 - minus as f64)
        })
        .collect()
}

fn f64s(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

fn dot(a: &[f64], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, &y)| x * y as f64).sum()
}

fn randn(rng: &mut Rng, n: usize, std: f64) -> Vec<f32> {
    (0..n).map(|_| (rng.normal() * std) as f32).collect()
}

/// Values bounded away from zero, so relu kinks are never crossed.
fn away_from_zero(rng: &mut Rng, n: usize) -> Vec<f32> {
    (0..n)
        .map(|_| {
            let m = rng.uniform_in(0.05, 1.5);
            (if rng.uniform() < 0.5 { -m } else { m }) as f32
        })
        .collect()
}

/// A shuffled ladder of distinct values, so no pooling window has a near tie.
fn distinct(rng: &mut Rng, n: usize) -> Vec<f32> {
    let mut v: Vec<f32> = (0..n).map(|i| i as f32 * 0.1 - 0.8 + rng.uniform_in(0.0, 0.02) as f32).collect();
    rng.shuffle(&mut v);
    v
}

// ---- f64 reference implementations ----

pub fn conv_ref(x: &[f64], xs: [usize; 4], w: &[f64], ws: [usize; 4], b: &[f64], stride: usize, pad: usize) -> (Vec<f64>, [usize; 4]) {
    let [n, c, h, wd] = xs;
    let [o, _, k, _] = ws;
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (wd + 2 * pad - k) / stride + 1;
    let mut y = vec![0.0; n * o * ho * wo];
    for s in 0..n {
        for oc in 0..o {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = b[oc];
                    for ic in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += x[((s * c + ic) * h + iy as usize) * wd + ix as usize]
                                    * w[((oc * c + ic) * k + ky) * k + kx];
                            }
                        }
                    }
                    y[((s * o + oc) * ho + oy) * wo + ox] = acc;
                }
            }
        }
    }
    (y, [n, o, ho, wo])
}

pub fn pool_ref(x: &[f64], xs: [usize; 4], k: usize, stride: usize, pad: usize, ceil: bool) -> (Vec<f64>, [usize; 4], Vec<usize>) {
    let [n, c, h, w] = xs;
    let size = |d: usize| {
        let span = (d + 2 * pad - k) as f64 / stride as f64;
        (if ceil { span.ceil() } else { span.floor() }) as usize + 1
    };
    let (ho, wo) = (size(h), size(w));
    let mut y = Vec::new();
    let mut arg = Vec::new();
    for plane in 0..n * c {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = (f64::NEG_INFINITY, usize::MAX);
                for ky in 0..k {
                    for kx in 0..k {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                            continue;
                        }
                        let idx = plane * h * w + iy as usize * w + ix as usize;
                        if x[idx] > best.0 || (x[idx] == best.0 && idx < best.1) {
                            best = (x[idx], idx);
                        }
                    }
                }
                y.push(best.0);
                arg.push(best.1);
            }
        }
    }
    (y, [n, c, ho, wo], arg)
}

pub fn ce_ref(logits: &[f64], n: usize, g: usize, labels: &[&LabelMap]) -> Option<f64> {
    let plane = g * g;
    let (mut total, mut count) = (0.0, 0usize);
    for s in 0..n {
        for (p, l) in labels[s].cells().iter().enumerate() {
            let (bg, fg) = (logits[s * 2 * plane + p], logits[s * 2 * plane + plane + p]);
            let lse = (bg.exp() + fg.exp()).ln();
            match l {
                Label::Positive => total += lse - fg,
                Label::Negative => total += lse - bg,
                Label::Ignore => continue,
            }
            count += 1;
        }
    }
    (count > 0).then(|| total / count as f64)
}

pub fn smooth_l1_scalar(d: f64) -> f64 {
    if d.abs() < 1.0 {
        0.5 * d * d
    } else {
        d.abs() - 0.5
    }
}

fn random_labels(rng: &mut Rng, g: usize, allow: &[Label]) -> LabelMap {
    let mut m = LabelMap::filled(g, Label::Ignore);
    for y in 0..g {
        for x in 0..g {
            m.set(GridPos::new(x, y), allow[rng.below(allow.len())]);
        }
    }
    m
}

// ---- individual checks ----

fn check(name: impl Into<String>, analytic: &[f32], numeric: &[f64]) -> Check {
    Check {
        name: name.into(),
        rel_err: rel_err(&f64s(analytic), numeric),
        elements: analytic.len(),
    }
}

fn conv_checks(rng: &mut Rng, out: &mut Vec<Check>) {
    // (input shape, weight shape, stride, pad)
    let cases: [([usize; 4], [usize; 4], usize, usize); 6] = [
        ([1, 1, 4, 4], [1, 1, 3, 3], 1, 1),
        ([1, 1, 4, 4], [4, 1, 2, 2], 1, 0),
        ([1, 1, 4, 4], [4, 1, 2, 2], 2, 1),
        ([1, 1, 4, 4], [4, 1, 2, 2], 4, 1),
        ([2, 2, 2, 2], [4, 2, 1, 1], 1, 0),
        ([1, 2, 2, 2], [2, 2, 3, 3], 2, 2),
    ];
    for (xs, ws, stride, pad) in cases {
        let x = randn(rng, xs.iter().product(), 1.0);
        let w = randn(rng, ws.iter().product(), 0.5);
        let b = randn(rng, ws[0], 0.5);
        let xt = Tensor::from_vec(&xs, x.clone()).unwrap();
        let wt = Tensor::from_vec(&ws, w.clone()).unwrap();
        let bt = Tensor::from_vec(&[ws[0]], b.clone()).unwrap();
        let y = conv2d(&xt, &wt, &bt, stride, pad).unwrap();
        let r = randn(rng, y.len(), 1.0);
        let g = conv2d_backward(&xt, &wt, &Tensor::from_vec(y.shape(), r.clone()).unwrap(), stride, pad, true).unwrap();
        let tag = format!("conv2d k{} s{stride} p{pad} {:?}", ws[2], xs);
        let loss = |x: &[f32], w: &[f32], b: &[f32]| dot(&conv_ref(&f64s(x), xs, &f64s(w), ws, &f64s(b), stride, pad).0, &r);
        out.push(check(format!("{tag} d/input"), g.input.as_ref().unwrap().data(), &numeric_grad(&x, |v| loss(v, &w, &b))));
        out.push(check(format!("{tag} d/weight"), g.weight.data(), &numeric_grad(&w, |v| loss(&x, v, &b))));
        out.push(check(format!("{tag} d/bias"), g.bias.data(), &numeric_grad(&b, |v| loss(&x, &w, v))));
    }
}

fn pool_checks(rng: &mut Rng, out: &mut Vec<Check>) {
    let cases: [([usize; 4], usize, usize, usize, bool); 4] = [
        ([1, 1, 4, 4], 2, 2, 0, false),
        ([1, 1, 4, 4], 3, 2, 1, true),
        ([1, 1, 3, 3], 2, 2, 0, true),
        ([2, 1, 3, 2], 2, 1, 0, false),
    ];
    for (xs, k, s, p, ceil) in cases {
        let x = distinct(rng, xs.iter().product());
        let xt = Tensor::from_vec(&xs, x.clone()).unwrap();
        let po = maxpool2d(&xt, k, s, p, ceil).unwrap();
        let r = randn(rng, po.output.len(), 1.0);
        let g = maxpool2d_backward(&Tensor::from_vec(po.output.shape(), r.clone()).unwrap(), &po.argmax, xt.shape()).unwrap();
        let num = numeric_grad(&x, |v| dot(&pool_ref(&f64s(v), xs, k, s, p, ceil).0, &r));
        out.push(check(format!("maxpool2d k{k} s{s} p{p} ceil={ceil} {:?}", xs), g.data(), &num));
    }
}

fn relu_check(rng: &mut Rng, out: &mut Vec<Check>) {
    let x = away_from_zero(rng, 12);
    let xt = Tensor::from_vec(&[3, 4], x.clone()).unwrap();
    let r = randn(rng, 12, 1.0);
    let y = relu(&xt);
    assert_eq!(y.shape(), xt.shape());
    let g = relu_backward(&xt, &Tensor::from_vec(&[3, 4], r.clone()).unwrap()).unwrap();
    let num = numeric_grad(&x, |v| v.iter().zip(&r).map(|(&a, &b)| (a as f64).max(0.0) * b as f64).sum());
    out.push(check("relu", g.data(), &num));
}

fn ce_checks(rng: &mut Rng, out: &mut Vec<Check>) {
    for (n, g) in [(1usize, 2usize), (2, 2)] {
        let x = randn(rng, n * 2 * g * g, 1.5);
        let maps: Vec<LabelMap> = (0..n)
            .map(|_| loop {
                let m = random_labels(rng, g, &[Label::Positive, Label::Negative, Label::Ignore]);
                if !m.is_all_ignore() {
                    break m;
                }
            })
            .collect();
        let refs: Vec<&LabelMap> = maps.iter().collect();
        let shape: Vec<usize> = if n == 1 { vec![2, g, g] } else { vec![n, 2, g, g] };
        let (_, grad) = softmax2_ce(&Tensor::from_vec(&shape, x.clone()).unwrap(), &refs).unwrap();
        let num = numeric_grad(&x, |v| ce_ref(&f64s(v), n, g, &refs).unwrap());
        out.push(check(format!("softmax2_ce {shape:?}"), grad.data(), &num));
    }
}

fn smooth_l1_check(rng: &mut Rng, out: &mut Vec<Check>) {
    let t = randn(rng, 12, 1.0);
    // Differences spread over both branches, kept 2*eps away from |d| = 1.
    let p: Vec<f32> = t
        .iter()
        .map(|&tv| loop {
            let d = rng.uniform_in(-3.0, 3.0);
            if (d.abs() - 1.0).abs() > 2.0 * EPS as f64 {
                break tv + d as f32;
            }
        })
        .collect();
    let (_, g) = smooth_l1(&Tensor::from_vec(&[12], p.clone()).unwrap(), &Tensor::from_vec(&[12], t.clone()).unwrap()).unwrap();
    let num = numeric_grad(&p, |v| v.iter().zip(&t).map(|(&a, &b)| smooth_l1_scalar(a as f64 - b as f64)).sum::<f64>() / 12.0);
    out.push(check("smooth_l1", g.data(), &num));
}

fn mse_check(rng: &mut Rng, out: &mut Vec<Check>) {
    let p = randn(rng, 10, 1.0);
    let t = randn(rng, 10, 1.0);
    let (_, g) = mse(&Tensor::from_vec(&[10], p.clone()).unwrap(), &Tensor::from_vec(&[10], t.clone()).unwrap()).unwrap();
    let num = numeric_grad(&p, |v| v.iter().zip(&t).map(|(&a, &b)| (a as f64 - b as f64).powi(2)).sum::<f64>() / 10.0);
    out.push(check("mse", g.data(), &num));
}

fn rpn2t_checks(rng: &mut Rng, out: &mut Vec<Check>) {
    for (alpha, beta) in [(1.0f32, 10.0f32), (0.5, 2.0), (0.0, 1.0)] {
        let g = 2;
        let a = randn(rng, 8, 1.5);
        let q = randn(rng, 8, 1.5);
        let la = random_labels(rng, g, &[Label::Positive, Label::Ignore]);
        let lq = random_labels(rng, g, &[Label::Positive, Label::Negative]);
        let cfg = Rpn2tConfig { alpha, beta, ..Default::default() };
        let maps = ScoreMaps {
            a_logits: Tensor::from_vec(&[2, g, g], a.clone()).unwrap(),
            q_logits: Tensor::from_vec(&[2, g, g], q.clone()).unwrap(),
            reg: None,
        };
        let o = rpn2t_loss(&maps, &[&la], &[&lq], &cfg).unwrap();
        let total = |a: &[f32], q: &[f32]| {
            alpha as f64 * ce_ref(&f64s(a), 1, g, &[&la]).unwrap_or(0.0)
                + beta as f64 * ce_ref(&f64s(q), 1, g, &[&lq]).unwrap_or(0.0)
        };
        let mut analytic = o.grad_a.data().to_vec();
        analytic.extend_from_slice(o.grad_q.data());
        let mut num = numeric_grad(&a, |v| total(v, &q));
        num.extend(numeric_grad(&q, |v| total(&a, v)));
        out.push(check(format!("rpn2t_loss alpha={alpha} beta={beta}"), &analytic, &num));
    }
}

fn rpn_check(rng: &mut Rng, out: &mut Vec<Check>) {
    let g = 2;
    let lambda = 10.0f32;
    let a = randn(rng, 8, 1.5);
    let labels = {
        let mut m = random_labels(rng, g, &[Label::Positive, Label::Negative, Label::Ignore]);
        m.set(GridPos::new(0, 0), Label::Positive);
        m
    };
    let targets: Vec<Option<BoxDelta>> = (0..4)
        .map(|_| Some(BoxDelta { tx: rng.normal() * 0.3, ty: rng.normal() * 0.3, tw: rng.normal() * 0.3, th: rng.normal() * 0.3 }))
        .collect();
    let reg: Vec<f32> = (0..16)
        .map(|i| {
            let want = targets[i % 4].unwrap().to_array()[i / 4];
            loop {
                let d = rng.uniform_in(-2.5, 2.5);
                if (d.abs() - 1.0).abs() > 2.0 * EPS as f64 {
                    break (want + d) as f32;
                }
            }
        })
        .collect();
    let cfg = RpnConfig { lambda, tau: 0.7 };
    let maps = |a: &[f32], r: &[f32]| ScoreMaps {
        a_logits: Tensor::from_vec(&[2, g, g], a.to_vec()).unwrap(),
        q_logits: Tensor::zeros(&[2, g, g]),
        reg: Some(Tensor::from_vec(&[4, g, g], r.to_vec()).unwrap()),
    };
    let o = rpn_loss(&maps(&a, &reg), &[&labels], &[&targets], &cfg).unwrap();
    let reference = |a: &[f32], r: &[f32]| {
        let cls = ce_ref(&f64s(a), 1, g, &[&labels]).unwrap();
        let pos: Vec<usize> = (0..4).filter(|&p| labels.cells()[p] == Label::Positive).collect();
        let mut sum = 0.0;
        for &p in &pos {
            for c in 0..4 {
                sum += smooth_l1_scalar(r[c * 4 + p] as f64 - targets[p].unwrap().to_array()[c]);
            }
        }
        cls + lambda as f64 * sum / pos.len() as f64
    };
    let mut analytic = o.grad_a.data().to_vec();
    analytic.extend_from_slice(o.grad_reg.as_ref().unwrap().data());
    let mut num = numeric_grad(&a, |v| reference(v, &reg));
    num.extend(numeric_grad(&reg, |v| reference(&a, v)));
    out.push(check("rpn_loss lambda=10", &analytic, &num));
}

/// f64 forward through a whole spec; also returns every relu sign pattern
/// and pool argmax so kink crossings can be detected.
fn network_ref(spec: &NetworkSpec, weights: &[(String, Vec<f64>)], x: &[f64], xs: [usize; 4]) -> (Vec<f64>, Vec<usize>) {
    let get = |n: String| &weights.iter().find(|(m, _)| *m == n).unwrap().1;
    let mut cur = x.to_vec();
    let mut shape = xs;
    let mut signature = Vec::new();
    let mut cin = xs[1];
    for l in &spec.layers {
        match l.kind {
            LayerKind::Conv { out_channels } => {
                let (y, s) = conv_ref(&cur, shape, get(format!("{}.weight", l.name)), [out_channels, cin, l.kernel, l.kernel], get(format!("{}.bias", l.name)), l.stride, l.pad);
                cur = y;
                shape = s;
                cin = out_channels;
            }
            LayerKind::MaxPool { ceil_mode } => {
                let (y, s, arg) = pool_ref(&cur, shape, l.kernel, l.stride, l.pad, ceil_mode);
                cur = y;
                shape = s;
                signature.extend(arg);
            }
            LayerKind::Relu => {
                signature.extend(cur.iter().map(|&v| (v > 0.0) as usize));
                cur.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
    }
    (cur, signature)
}

fn network_check(rng: &mut Rng, out: &mut Vec<Check>) {
    let spec = NetworkSpec {
        input_size: 9,
        input_channels: 2,
        layers: vec![
            LayerSpec::conv("c1", 3, 2, 1, 3),
            LayerSpec::relu("r1"),
            LayerSpec::maxpool("p1", 2, 1, 0, true),
            LayerSpec::conv("c2", 2, 4, 1, 2),
            LayerSpec::relu("r2"),
        ],
    };
    let xs = [1, 2, 9, 9];
    // Retry until no relu sign or pool argmax flips under any perturbation.
    'attempt: for _ in 0..50 {
        let net = Network::init(spec.clone(), rng).unwrap();
        let x = randn(rng, xs.iter().product(), 1.0);
        let xt = Tensor::from_vec(&xs, x.clone()).unwrap();
        let (y, trace) = net.forward_traced(&xt).unwrap();
        let r = randn(rng, y.len(), 1.0);
        let (grads, gin) = net.backward(&trace, &Tensor::from_vec(y.shape(), r.clone()).unwrap(), true).unwrap();
        let weights: Vec<(String, Vec<f32>)> = net.weights().iter().map(|(n, t)| (n.to_string(), t.data().to_vec())).collect();
        let as64 = |w: &[(String, Vec<f32>)]| -> Vec<(String, Vec<f64>)> { w.iter().map(|(n, v)| (n.clone(), f64s(v))).collect() };
        let base_sig = network_ref(&spec, &as64(&weights), &f64s(&x), xs).1;
        let mut stable = true;
        let mut eval = |w: &[(String, Vec<f32>)], x: &[f32]| {
            let (y, sig) = network_ref(&spec, &as64(w), &f64s(x), xs);
            if sig != base_sig {
                stable = false;
            }
            dot(&y, &r)
        };
        let mut analytic = gin.unwrap().data().to_vec();
        let mut num = numeric_grad(&x, |v| eval(&weights, v));
        for (i, (name, w)) in weights.iter().enumerate() {
            analytic.extend_from_slice(grads.require(name).unwrap().data());
            num.extend(numeric_grad(w, |v| {
                let mut ws = weights.clone();
                ws[i].1 = v.to_vec();
                eval(&ws, &x)
            }));
        }
        if !stable {
            continue 'attempt;
        }
        out.push(check("network chain conv-s2/relu/pool/conv-s4/relu", &analytic, &num));
        return;
    }
    panic!("could not find a kink-free network sample");
}

/// Every gradient check, in a fixed order.
pub fn run_all(seed: u64) -> Vec<Check> {
    let mut rng = Rng::new(seed);
    let mut out = Vec::new();
    conv_checks(&mut rng, &mut out);
    pool_checks(&mut rng, &mut out);
    relu_check(&mut rng, &mut out);
    ce_checks(&mut rng, &mut out);
    smooth_l1_check(&mut rng, &mut out);
    mse_check(&mut rng, &mut out);
    rpn2t_checks(&mut rng, &mut out);
    rpn_check(&mut rng, &mut out);
    network_check(&mut rng, &mut out);
    out
}

/// Smooth-L1 at the branch point `|d| = 1`: both one-sided analytic
/// gradients agree, and the central difference matches them up to the known
/// second-order term (about `eps / 4`) of this function.
pub fn smooth_l1_continuity() -> (f64, f64) {
    let grad_at = |d: f32| {
        let (_, g) = smooth_l1(&Tensor::from_vec(&[1], vec![d]).unwrap(), &Tensor::zeros(&[1])).unwrap();
        g.data()[0] as f64
    };
    let jump = (grad_at(1.0 + 1e-6) - grad_at(1.0 - 1e-6)).abs();
    let fd = numeric_grad(&[1.0], |v| smooth_l1_scalar(v[0] as f64))[0];
    // With steps e1 above and e2 below the kink the quotient is exactly
    // 1 - e2^2 / (2 (e1 + e2)).
    let e1 = (1.0f32 + EPS) as f64 - 1.0;
    let e2 = 1.0 - (1.0f32 - EPS) as f64;
    let predicted = 1.0 - e2 * e2 / (2.0 * (e1 + e2));
    (jump, (fd - predicted).abs().max((grad_at(1.0) - 1.0).abs()))
}
