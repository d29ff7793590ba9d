//! Scalar-loop oracles and fixtures shared by the integration targets.
#![allow(dead_code)]

use std::rc::Rc;

use distillgrasp::numerics::{concat, rel_err, Bound, Mode, ParamStore, RunningStats, Tape, Tensor, Var, LN_EPS};
use distillgrasp::rng::DetRng;
use distillgrasp::Result;

pub fn rand_tensor(rng: &mut DetRng, dims: &[usize], lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(dims, |_| rng.range(lo, hi))
}

/// Values with magnitude in `[lo, hi]` and random sign.
pub fn rand_signed(rng: &mut DetRng, dims: &[usize], lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(dims, |_| {
        let m = rng.range(lo, hi);
        if rng.bernoulli(0.5) {
            m
        } else {
            -m
        }
    })
}

pub fn dim(rng: &mut DetRng, lo: usize, hi: usize) -> usize {
    lo + rng.below((hi - lo + 1) as u64) as usize
}

pub fn matmul_oracle(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k, n) = (a.dims()[0], a.dims()[1], b.dims()[1]);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for p in 0..k {
                acc += a.at(&[i, p]) * b.at(&[p, j]);
            }
            out[i * n + j] = acc;
        }
    }
    Tensor::new(&[m, n], out).unwrap()
}

/// Direct cross-correlation of `[N, Ci, H, W]` with `[Co, Ci, k, k]`.
pub fn conv2d_oracle(x: &Tensor, w: &Tensor, b: Option<&Tensor>, stride: usize, pad: usize) -> Tensor {
    let (n, ci, h, wd) = (x.dims()[0], x.dims()[1], x.dims()[2], x.dims()[3]);
    let (co, k) = (w.dims()[0], w.dims()[2]);
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (wd + 2 * pad - k) / stride + 1;
    let mut out = Vec::with_capacity(n * co * ho * wo);
    for s in 0..n {
        for o in 0..co {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = b.map_or(0.0, |b| b.data()[o]);
                    for c in 0..ci {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += x.at(&[s, c, iy as usize, ix as usize]) * w.at(&[o, c, ky, kx]);
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    Tensor::new(&[n, co, ho, wo], out).unwrap()
}

pub fn softmax_oracle(x: &Tensor) -> Tensor {
    let c = *x.dims().last().unwrap();
    let mut out = Vec::with_capacity(x.numel());
    for row in x.data().chunks(c) {
        let denom: f64 = row.iter().map(|v| v.exp()).sum();
        out.extend(row.iter().map(|v| v.exp() / denom));
    }
    Tensor::new(x.dims(), out).unwrap()
}

pub fn layer_norm_oracle(x: &Tensor, g: &Tensor, b: &Tensor, eps: f64) -> Tensor {
    let c = *x.dims().last().unwrap();
    let mut out = Vec::with_capacity(x.numel());
    for row in x.data().chunks(c) {
        let mean = row.iter().sum::<f64>() / c as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c as f64;
        for (j, v) in row.iter().enumerate() {
            out.push(g.data()[j] * (v - mean) / (var + eps).sqrt() + b.data()[j]);
        }
    }
    Tensor::new(x.dims(), out).unwrap()
}

/// `[rmse, rel, mae, d105, d110, d125]` and the pixel count.
pub fn metrics_oracle(pred: &Tensor, gt: &Tensor, mask: &Tensor) -> ([f64; 6], u64) {
    let mut idx = Vec::new();
    for i in 0..gt.numel() {
        if mask.data()[i] == 1.0 && gt.data()[i] > 0.0 {
            idx.push(i);
        }
    }
    let n = idx.len() as f64;
    let (mut se, mut ae, mut re) = (0.0, 0.0, 0.0);
    let mut hits = [0.0; 3];
    for &i in &idx {
        let (p, g) = (pred.data()[i], gt.data()[i]);
        se += (p - g).powi(2);
        ae += (p - g).abs();
        re += (p - g).abs() / g;
        let ratio = if p > g { p / g } else { g / p };
        for (t, h) in [1.05, 1.10, 1.25].iter().zip(hits.iter_mut()) {
            if ratio < *t {
                *h += 1.0;
            }
        }
    }
    ([(se / n).sqrt(), re / n, ae / n, 100.0 * hits[0] / n, 100.0 * hits[1] / n, 100.0 * hits[2] / n], idx.len() as u64)
}

fn bhw(t: &Tensor) -> (usize, usize, usize) {
    let d = t.dims();
    let (h, w) = (d[d.len() - 2], d[d.len() - 1]);
    (t.numel() / (h * w), h, w)
}

/// Batch mean of `sqrt(mean(d^2) - lambda mean(d)^2)` over pixels with `valid == 1`.
pub fn silog_oracle(pred: &Tensor, target: &Tensor, valid: &Tensor, lambda: f64) -> f64 {
    let (b, h, w) = bhw(pred);
    let mut total = 0.0;
    for s in 0..b {
        let (mut sum, mut sq, mut k) = (0.0, 0.0, 0.0);
        for i in s * h * w..(s + 1) * h * w {
            if valid.data()[i] == 1.0 {
                let d = pred.data()[i].max(1e-6).ln() - target.data()[i].max(1e-6).ln();
                sum += d;
                sq += d * d;
                k += 1.0;
            }
        }
        total += (sq / k - lambda * (sum / k).powi(2)).max(0.0).sqrt();
    }
    total / b as f64
}

/// Flat `[B, H-k+1, W-k+1]` structural map with population moments.
pub fn structural_oracle(x: &Tensor, y: &Tensor, k: usize, theta: f64) -> Vec<f64> {
    let (b, h, w) = bhw(x);
    let mut out = Vec::new();
    for s in 0..b {
        for oy in 0..=h - k {
            for ox in 0..=w - k {
                let mut xs = Vec::new();
                let mut ys = Vec::new();
                for r in oy..oy + k {
                    for c in ox..ox + k {
                        xs.push(x.data()[s * h * w + r * w + c]);
                        ys.push(y.data()[s * h * w + r * w + c]);
                    }
                }
                let n = xs.len() as f64;
                let mx = xs.iter().sum::<f64>() / n;
                let my = ys.iter().sum::<f64>() / n;
                let vx = xs.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / n;
                let vy = ys.iter().map(|v| (v - my).powi(2)).sum::<f64>() / n;
                let cxy = xs.iter().zip(&ys).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n;
                out.push((cxy + theta) / ((vx * vy).sqrt() + theta));
            }
        }
    }
    out
}

pub fn mse_oracle(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

/// Masked horizontal and vertical absolute differences, flattened.
pub fn edge_oracle_maps(d: &Tensor, mask: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let (b, h, w) = bhw(d);
    let (v, m) = (d.data(), mask.data());
    let (mut vx, mut vy) = (Vec::new(), Vec::new());
    for s in 0..b {
        let o = s * h * w;
        for r in 0..h {
            for c in 0..w - 1 {
                let a = o + r * w + c;
                vx.push(if m[a] == 1.0 && m[a + 1] == 1.0 { (v[a] - v[a + 1]).abs() } else { 0.0 });
            }
        }
        for r in 0..h - 1 {
            for c in 0..w {
                let a = o + r * w + c;
                vy.push(if m[a] == 1.0 && m[a + w] == 1.0 { (v[a] - v[a + w]).abs() } else { 0.0 });
            }
        }
    }
    (vx, vy)
}

pub fn edge_oracle(a: &Tensor, b: &Tensor, mask: &Tensor) -> f64 {
    let (ax, ay) = edge_oracle_maps(a, mask);
    let (bx, by) = edge_oracle_maps(b, mask);
    mse_oracle(&ax, &bx) + mse_oracle(&ay, &by)
}

/// Fixed pseudo-random weights so that every coordinate of `v` matters.
pub fn probe<'t>(v: &Var<'t>) -> Result<Var<'t>> {
    let w = Tensor::from_fn(&v.dims(), |i| (0.7383 * i as f64 + 0.41).sin() + 0.3);
    v.mul(&v.tape().constant(w))?.sum()
}

pub type ScalarFn = Box<dyn for<'t> Fn(Var<'t>) -> Result<Var<'t>>>;

pub struct GradCase {
    pub primitive: &'static str,
    pub x: Tensor,
    pub f: ScalarFn,
}

fn case(primitive: &'static str, x: Tensor, f: ScalarFn) -> GradCase {
    GradCase { primitive, x, f }
}

/// One trial of every differentiable primitive (each operand position that
/// carries gradients gets its own case).
pub fn grad_cases(rng: &mut DetRng) -> Vec<GradCase> {
    let mut out = Vec::new();
    let (r, c) = (dim(rng, 2, 4), dim(rng, 2, 5));
    let a = rand_tensor(rng, &[r, c], -1.0, 1.0);
    let k = rand_tensor(rng, &[r, c], -1.0, 1.0);

    let kk = k.clone();
    out.push(case("add", a.clone(), Box::new(move |x| probe(&x.add(&x.tape().constant(kk.clone()))?))));
    let kk = k.clone();
    out.push(case("sub", a.clone(), Box::new(move |x| probe(&x.tape().constant(kk.clone()).sub(&x)?))));
    let kk = k.clone();
    out.push(case("mul", a.clone(), Box::new(move |x| probe(&x.mul(&x.tape().constant(kk.clone()))?))));
    let s = rng.range(-2.0, 2.0);
    out.push(case("scale", a.clone(), Box::new(move |x| probe(&x.scale(s)?))));
    out.push(case("add_scalar", a.clone(), Box::new(move |x| probe(&x.add_scalar(s)?.square()?))));
    let bias = rand_tensor(rng, &[c], -1.0, 1.0);
    let aa = a.clone();
    out.push(case("add_bias", bias.clone(), Box::new(move |b| probe(&x_const(&b, &aa).add_bias(&b)?.square()?))));
    out.push(case(
        "add_bias",
        a.clone(),
        Box::new(move |x| probe(&x.add_bias(&x.tape().constant(bias.clone()))?.square()?)),
    ));
    let bc = rand_tensor(rng, &[2, 1, r, c], -1.0, 1.0);
    let ch = dim(rng, 2, 4);
    out.push(case("broadcast_channels", bc, Box::new(move |x| probe(&x.broadcast_channels(ch)?))));

    let kinked = rand_signed(rng, &[r, c], 0.1, 1.5);
    out.push(case("relu", kinked.clone(), Box::new(|x| probe(&x.relu()?))));
    out.push(case("abs", kinked, Box::new(|x| probe(&x.abs()?))));
    let wide = rand_tensor(rng, &[r, c], -3.0, 3.0);
    out.push(case("gelu", wide.clone(), Box::new(|x| probe(&x.gelu()?))));
    out.push(case("sigmoid", wide.clone(), Box::new(|x| probe(&x.sigmoid()?))));
    out.push(case("softplus", wide.clone(), Box::new(|x| probe(&x.softplus()?))));
    out.push(case("square", wide.clone(), Box::new(|x| probe(&x.square()?))));
    let pos = rand_tensor(rng, &[r, c], 0.2, 2.0);
    out.push(case("log_clamped", pos.clone(), Box::new(|x| probe(&x.log_clamped(1e-6)?))));
    out.push(case("sqrt_clamped", pos, Box::new(|x| probe(&x.sqrt_clamped()?))));
    out.push(case("sum", a.clone(), Box::new(|x| x.square()?.sum()?.square())));
    out.push(case("mean", a.clone(), Box::new(|x| x.square()?.mean()?.square())));

    let t3 = rand_tensor(rng, &[2, r, c], -1.0, 1.0);
    out.push(case("reshape", t3.clone(), Box::new(move |x| probe(&x.reshape(&[r, 2 * c])?.square()?))));
    out.push(case("permute", t3.clone(), Box::new(|x| probe(&x.permute(&[2, 0, 1])?))));
    let sh = rng.below(5) as isize - 2;
    out.push(case("roll", t3.clone(), Box::new(move |x| probe(&x.roll(1, sh)?))));
    let start = rng.below((c - 1) as u64) as usize;
    out.push(case("narrow", t3.clone(), Box::new(move |x| probe(&x.narrow(2, start, c - start)?))));
    let n = t3.numel();
    let idx: Vec<usize> = (0..7).map(|_| rng.below(n as u64) as usize).collect();
    let idx = Rc::new(idx);
    out.push(case("gather", t3.clone(), Box::new(move |x| probe(&x.gather(Rc::clone(&idx), &[7])?))));
    let other = rand_tensor(rng, &[2, 3, c], -1.0, 1.0);
    out.push(case("concat", t3, Box::new(move |x| probe(&concat(&[x.tape().constant(other.clone()), x], 1)?))));

    let (m, kd, nn) = (dim(rng, 1, 4), dim(rng, 1, 5), dim(rng, 1, 4));
    let lhs = rand_tensor(rng, &[m, kd], -1.0, 1.0);
    let rhs = rand_tensor(rng, &[kd, nn], -1.0, 1.0);
    let rr = rhs.clone();
    out.push(case("matmul", lhs.clone(), Box::new(move |x| probe(&x.matmul(&x.tape().constant(rr.clone()))?))));
    let ll = lhs.clone();
    out.push(case("matmul", rhs, Box::new(move |y| probe(&x_const(&y, &ll).matmul(&y)?))));
    let bl = rand_tensor(rng, &[2, m, kd], -1.0, 1.0);
    let br = rand_tensor(rng, &[2, kd, nn], -1.0, 1.0);
    let brt = rand_tensor(rng, &[2, nn, kd], -1.0, 1.0);
    let (b1, b2) = (br.clone(), brt.clone());
    out.push(case("bmm", bl.clone(), Box::new(move |x| probe(&x.bmm(&x.tape().constant(b1.clone()), false)?))));
    out.push(case("bmm", bl.clone(), Box::new(move |x| probe(&x.bmm(&x.tape().constant(b2.clone()), true)?))));
    let l1 = bl.clone();
    out.push(case("bmm", br, Box::new(move |y| probe(&x_const(&y, &l1).bmm(&y, false)?))));
    out.push(case("bmm", brt, Box::new(move |y| probe(&x_const(&y, &bl).bmm(&y, true)?))));
    let logits = rand_tensor(rng, &[r, c + 1], -3.0, 3.0);
    out.push(case("softmax_last", logits, Box::new(|x| probe(&x.softmax_last()?))));

    let tokens = rand_tensor(rng, &[2, r, kd], -1.0, 1.0);
    let lw = rand_tensor(rng, &[kd, nn], -1.0, 1.0);
    let lb = rand_tensor(rng, &[nn], -1.0, 1.0);
    let (w1, b1) = (lw.clone(), lb.clone());
    out.push(case(
        "linear",
        tokens.clone(),
        Box::new(move |x| {
            let t = x.tape();
            probe(&x.linear(&t.constant(w1.clone()), Some(&t.constant(b1.clone())))?.square()?)
        }),
    ));
    let (t1, b1) = (tokens.clone(), lb.clone());
    out.push(case(
        "linear",
        lw.clone(),
        Box::new(move |w| probe(&x_const(&w, &t1).linear(&w, Some(&w.tape().constant(b1.clone())))?.square()?)),
    ));
    out.push(case(
        "linear",
        lb,
        Box::new(move |b| probe(&x_const(&b, &tokens).linear(&b.tape().constant(lw.clone()), Some(&b))?.square()?)),
    ));

    let (ci, co, kern) = (dim(rng, 1, 3), dim(rng, 1, 3), [1, 3][rng.below(2) as usize]);
    let stride = dim(rng, 1, 2);
    let pad = if kern == 3 { rng.below(2) as usize } else { 0 };
    let hw = dim(rng, 4, 6);
    let img = rand_tensor(rng, &[2, ci, hw, hw], -1.0, 1.0);
    let cw = rand_tensor(rng, &[co, ci, kern, kern], -1.0, 1.0);
    let cb = rand_tensor(rng, &[co], -1.0, 1.0);
    let (w1, b1) = (cw.clone(), cb.clone());
    out.push(case(
        "conv2d",
        img.clone(),
        Box::new(move |x| {
            let t = x.tape();
            probe(&x.conv2d(&t.constant(w1.clone()), Some(&t.constant(b1.clone())), stride, pad)?.square()?)
        }),
    ));
    let (i1, b1) = (img.clone(), cb.clone());
    out.push(case(
        "conv2d",
        cw.clone(),
        Box::new(move |w| {
            let t = w.tape();
            probe(&t.constant(i1.clone()).conv2d(&w, Some(&t.constant(b1.clone())), stride, pad)?.square()?)
        }),
    ));
    let i1 = img.clone();
    out.push(case(
        "conv2d",
        cb,
        Box::new(move |b| {
            let t = b.tape();
            probe(&t.constant(i1.clone()).conv2d(&t.constant(cw.clone()), Some(&b), stride, pad)?.square()?)
        }),
    ));

    let planes = rand_tensor(rng, &[2, 4 * ci, 3, hw], -1.0, 1.0);
    out.push(case("pixel_shuffle", planes, Box::new(|x| probe(&x.pixel_shuffle()?))));
    let even = rand_tensor(rng, &[2, ci, 4, 6], -1.0, 1.0);
    out.push(case("pixel_unshuffle", even, Box::new(|x| probe(&x.pixel_unshuffle()?))));
    let f = dim(rng, 2, 3);
    out.push(case("upsample_nearest", img.clone(), Box::new(move |x| probe(&x.upsample_nearest(f)?))));
    out.push(case("upsample_bilinear", img.clone(), Box::new(move |x| probe(&x.upsample_bilinear(f)?.square()?))));

    let lnx = rand_tensor(rng, &[r, c + 2], -2.0, 2.0);
    let g = rand_tensor(rng, &[c + 2], 0.5, 1.5);
    let beta = rand_tensor(rng, &[c + 2], -0.5, 0.5);
    let (g1, b1) = (g.clone(), beta.clone());
    out.push(case(
        "layer_norm",
        lnx.clone(),
        Box::new(move |x| {
            let t = x.tape();
            probe(&x.layer_norm(&t.constant(g1.clone()), &t.constant(b1.clone()), LN_EPS)?)
        }),
    ));
    let (x1, b1) = (lnx.clone(), beta.clone());
    out.push(case(
        "layer_norm",
        g.clone(),
        Box::new(move |gv| probe(&x_const(&gv, &x1).layer_norm(&gv, &gv.tape().constant(b1.clone()), LN_EPS)?)),
    ));
    let g1 = g.clone();
    out.push(case(
        "layer_norm",
        beta,
        Box::new(move |bv| {
            probe(&x_const(&bv, &lnx).layer_norm(&bv.tape().constant(g1.clone()), &bv, LN_EPS)?.square()?)
        }),
    ));

    let bnx = rand_tensor(rng, &[3, ci + 1, 2, 3], -2.0, 2.0);
    let bg = rand_tensor(rng, &[ci + 1], 0.5, 1.5);
    let bb = rand_tensor(rng, &[ci + 1], -0.5, 0.5);
    let chans = ci + 1;
    for mode in [Mode::Train, Mode::Eval] {
        let (g1, b1) = (bg.clone(), bb.clone());
        out.push(case(
            "batch_norm",
            bnx.clone(),
            Box::new(move |x| {
                let t = x.tape();
                let mut stats = RunningStats::new(chans);
                stats.var = Tensor::full(&[chans], 1.7);
                probe(&x.batch_norm(&t.constant(g1.clone()), &t.constant(b1.clone()), &mut stats, mode)?)
            }),
        ));
    }
    let (x1, b1) = (bnx.clone(), bb.clone());
    out.push(case(
        "batch_norm",
        bg.clone(),
        Box::new(move |g| {
            let mut stats = RunningStats::new(chans);
            probe(&x_const(&g, &x1).batch_norm(&g, &g.tape().constant(b1.clone()), &mut stats, Mode::Train)?)
        }),
    ));
    out.push(case(
        "batch_norm",
        bb,
        Box::new(move |b| {
            let mut stats = RunningStats::new(chans);
            probe(&x_const(&b, &bnx).batch_norm(&b.tape().constant(bg.clone()), &b, &mut stats, Mode::Train)?.square()?)
        }),
    ));
    out
}

fn x_const<'t>(on: &Var<'t>, t: &Tensor) -> Var<'t> {
    on.tape().constant(t.clone())
}

/// Worst relative error per primitive over `trials` random draws.
pub fn grad_check_all(seed: u64, trials: usize) -> Vec<(&'static str, usize, f64)> {
    use std::collections::BTreeMap;
    let mut rng = DetRng::new(seed);
    let mut worst: BTreeMap<&'static str, (usize, f64)> = BTreeMap::new();
    for _ in 0..trials {
        for c in grad_cases(&mut rng) {
            let err = distillgrasp::numerics::grad_check(&c.f, &c.x, 1e-6).expect("grad check runs");
            let e = worst.entry(c.primitive).or_insert((0, 0.0));
            e.0 += 1;
            e.1 = e.1.max(err);
        }
    }
    worst.into_iter().map(|(k, (n, e))| (k, n, e)).collect()
}

pub type LossFn = Box<dyn for<'t> Fn(&'t Tape, &Bound<'t>) -> Result<Var<'t>>>;

/// Central-difference check of `loss` against tape gradients for selected
/// store entries. For each name the coordinate with the largest analytic
/// gradient is probed. Returns the worst relative error and the probe list.
pub fn param_grad_check(store: &ParamStore, names: &[&str], h: f64, loss: &LossFn) -> (f64, Vec<(String, f64, f64)>) {
    let tape = Tape::new();
    let bound = store.bind(&tape, false);
    let y = loss(&tape, &bound).expect("loss evaluates");
    let grads = tape.backward(y).expect("backward");
    let eval = |s: &ParamStore| {
        let t = Tape::new();
        let b = s.bind(&t, true);
        loss(&t, &b).expect("loss evaluates").item()
    };
    let mut worst = 0.0f64;
    let mut probes = Vec::new();
    for &name in names {
        let g = grads.wrt(bound.var(name).expect("bound parameter"));
        let (i, &a) = g.data().iter().enumerate().max_by(|x, y| x.1.abs().total_cmp(&y.1.abs())).unwrap();
        let base = store.value(name).unwrap().clone();
        let mut shifted = store.clone();
        let mut plus = base.clone();
        plus.data_mut()[i] += h;
        shifted.set_value(name, plus).unwrap();
        let fp = eval(&shifted);
        let mut minus = base;
        minus.data_mut()[i] -= h;
        shifted.set_value(name, minus).unwrap();
        let fm = eval(&shifted);
        let numeric = (fp - fm) / (2.0 * h);
        worst = worst.max(rel_err(a, numeric));
        probes.push((name.to_string(), a, numeric));
    }
    (worst, probes)
}

/// One synthetic sample at `size` as batched network inputs
/// `(rgb [1,3,H,W], masked depth [1,1,H,W], gt [1,1,H,W], mask [1,1,H,W])`.
pub fn scene_batch(size: usize, seed: u64) -> (Tensor, Tensor, Tensor, Tensor) {
    use distillgrasp::data::{generate_scene, SceneConfig};
    use distillgrasp::networks::{mask_depth, stack};
    let s = generate_scene(&SceneConfig { size, seed, ..SceneConfig::default() }).unwrap();
    let masked = mask_depth(&s.raw_depth, &s.mask).unwrap();
    (stack(&[&s.rgb]).unwrap(), stack(&[&masked]).unwrap(), stack(&[&s.gt_depth]).unwrap(), stack(&[&s.mask]).unwrap())
}

pub const TEACHER_PROBES: [&str; 8] = [
    "teacher.embed_rgb.proj.weight",
    "teacher.embed_depth.proj.bias",
    "teacher.stage0.pcb.attn1.q.weight",
    "teacher.stage1.merge_depth.proj.weight",
    "teacher.stage2.pcb.attn2.bias_table",
    "teacher.stage3.pcb.mlp2.fc2.weight",
    "teacher.dec0.up.weight",
    "teacher.head.weight",
];

pub const STUDENT_PROBES: [&str; 8] = [
    "student.stem_rgb.weight",
    "student.stem_depth.bias",
    "student.stage0.cfcm.score_rgb.aggregate.weight",
    "student.stage1.cnn.bn.gamma",
    "student.stage2.cnn.conv.weight",
    "student.stage3.cfcm.score_depth.score.bias",
    "student.dec1.conv.weight",
    "student.head.weight",
];

/// Finite-difference probes of the 64x64 training objective of `variant`
/// (teacher loss for teachers, distilled objective for students).
pub fn network_grad_probe(variant: distillgrasp::networks::Variant, names: &[&str]) -> (f64, Vec<(String, f64, f64)>) {
    use distillgrasp::losses::{student_objective, teacher_loss, LossOptions, LossWeights, ValidMask};
    use distillgrasp::networks::{build_variant, DepthNet, NetConfig};
    let mut store = ParamStore::new();
    let net = build_variant(variant, &NetConfig::default(), &mut store, &mut DetRng::new(3)).unwrap();
    let (rgb, depth, gt, mask) = scene_batch(64, 5);
    let teacher_pred = gt.map(|g| g * 1.03 + 0.01);
    let valid = ValidMask::from_gt(&gt).unwrap();
    let loss: LossFn = Box::new(move |t, p| {
        let pred = net.forward(p, &t.constant(rgb.clone()), &t.constant(depth.clone()), Mode::Train)?;
        let w = LossWeights::default();
        let g = t.constant(gt.clone());
        if variant.is_teacher() {
            teacher_loss(&pred, &g, &valid, &w)
        } else {
            let dt = t.constant(teacher_pred.clone());
            Ok(student_objective(variant, &pred, Some(&dt), &g, &valid, &mask, &w, &LossOptions::default())?.total)
        }
    });
    param_grad_check(&store, names, 1e-5, &loss)
}

use distillgrasp::losses::{total_loss, LossOptions, LossWeights, ValidMask};

/// Random loss inputs: `(d_s, d_t, d_gt, mask)` of shape `[B, H, W]`, with
/// about a tenth of the ground truth missing.
pub fn loss_instance(rng: &mut DetRng) -> (Tensor, Tensor, Tensor, Tensor) {
    let dims = [dim(rng, 1, 2), dim(rng, 7, 14), dim(rng, 7, 14)];
    let s = rand_tensor(rng, &dims, 0.3, 2.0);
    let t = rand_tensor(rng, &dims, 0.3, 2.0);
    let mut gt = Tensor::from_fn(&dims, |_| if rng.bernoulli(0.1) { 0.0 } else { rng.range(0.3, 2.0) });
    let mask = Tensor::from_fn(&dims, |_| if rng.bernoulli(0.6) { 1.0 } else { 0.0 });
    let hw = dims[1] * dims[2];
    for b in 0..dims[0] {
        // Keep one valid pixel per sample.
        if gt.data()[b * hw] == 0.0 {
            gt.data_mut()[b * hw] = 1.0;
        }
    }
    (s, t, gt, mask)
}

pub fn random_weights(rng: &mut DetRng) -> LossWeights {
    LossWeights {
        alpha: rng.range(0.0, 5.0),
        beta: rng.range(0.0, 10.0),
        lambda: rng.range(0.0, 1.0),
        theta: rng.range(1e-5, 1e-2),
        lambda1: rng.range(0.0, 1.0),
        lambda2: rng.range(0.0, 1.0),
        lambda3: rng.range(0.0, 1.0),
    }
}

/// Largest `|total_loss - oracle sum|` over `trials` random instances.
pub fn recomposition_worst(seed: u64, trials: usize) -> f64 {
    let mut rng = DetRng::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let (s, t, gt, mask) = loss_instance(&mut rng);
        let w = random_weights(&mut rng);
        let valid = ValidMask::from_gt(&gt).unwrap();
        let tape = Tape::new();
        let parts = total_loss(
            &tape.constant(s.clone()),
            &tape.constant(t.clone()),
            &tape.constant(gt.clone()),
            &valid,
            &mask,
            &w,
            &LossOptions::default(),
        )
        .unwrap();
        let v = valid.tensor();
        let distance = w.alpha * silog_oracle(&s, &gt, v, w.lambda) + w.beta * silog_oracle(&s, &t, v, w.lambda);
        let structural = mse_oracle(&structural_oracle(&gt, &t, 7, w.theta), &structural_oracle(&t, &s, 7, w.theta));
        let want = distance
            + w.lambda1 * structural
            + w.lambda2 * edge_oracle(&gt, &s, &mask)
            + w.lambda3 * edge_oracle(&t, &s, &mask);
        worst = worst.max((parts.total.item() - want).abs());
    }
    worst
}

/// Random 16x16 `(pred, gt, mask)` with some missing ground truth and a
/// nonempty evaluation set.
pub fn metrics_instance(rng: &mut DetRng) -> (Tensor, Tensor, Tensor) {
    let gt = Tensor::from_fn(&[16, 16], |_| if rng.bernoulli(0.1) { 0.0 } else { rng.range(0.3, 2.0) });
    let spread = rng.range(0.01, 0.4);
    let pred = Tensor::from_fn(&[16, 16], |i| match gt.data()[i] {
        g if g > 0.0 => g * (1.0 + spread * (2.0 * rng.uniform() - 1.0)),
        _ => rng.range(0.3, 2.0),
    });
    let mut mask = Tensor::from_fn(&[16, 16], |_| if rng.bernoulli(0.5) { 1.0 } else { 0.0 });
    let first = gt.data().iter().position(|&g| g > 0.0).unwrap();
    mask.data_mut()[first] = 1.0;
    (pred, gt, mask)
}

pub struct MetricsCheck {
    pub worst: f64,
    pub monotone: bool,
    pub rmse_ge_mae: bool,
}

pub fn metrics_check(seed: u64, trials: usize) -> MetricsCheck {
    let mut rng = DetRng::new(seed);
    let mut out = MetricsCheck { worst: 0.0, monotone: true, rmse_ge_mae: true };
    for _ in 0..trials {
        let (p, g, m) = metrics_instance(&mut rng);
        let r = distillgrasp::metrics::depth_metrics(&p, &g, &m).unwrap();
        let (want, n) = metrics_oracle(&p, &g, &m);
        let got = [r.rmse, r.rel, r.mae, r.d105, r.d110, r.d125];
        for (a, b) in got.iter().zip(want) {
            out.worst = out.worst.max((a - b).abs());
        }
        if r.n != n {
            out.worst = f64::INFINITY;
        }
        out.monotone &= r.d105 <= r.d110 && r.d110 <= r.d125;
        out.rmse_ge_mae &= r.rmse >= r.mae;
    }
    out
}

/// Checks a metrics report against its JSON schema: exactly the seven keys
/// in order, finite nonnegative errors, percentages in `[0, 100]` and
/// ordered, and an integer pixel count.
pub fn report_schema_errors(text: &str) -> Vec<String> {
    let value: serde_json::Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) => return vec![format!("not JSON: {e}")],
    };
    let Some(obj) = value.as_object() else {
        return vec!["not an object".into()];
    };
    const KEYS: [&str; 7] = ["rmse", "rel", "mae", "d105", "d110", "d125", "n"];
    let mut errs = Vec::new();
    let mut keys: Vec<&str> = obj.keys().map(String::as_str).collect();
    keys.sort_unstable();
    let mut want = KEYS.to_vec();
    want.sort_unstable();
    if keys != want {
        errs.push(format!("keys {keys:?}"));
    }
    let at: Vec<Option<usize>> = KEYS.iter().map(|k| text.find(&format!("\"{k}\":"))).collect();
    if at.iter().any(Option::is_none) || at.windows(2).any(|w| w[0] > w[1]) {
        errs.push("keys out of order".into());
    }
    let num = |k: &str| obj.get(k).and_then(serde_json::Value::as_f64);
    for k in ["rmse", "rel", "mae"] {
        if !num(k).is_some_and(|v| v.is_finite() && v >= 0.0) {
            errs.push(format!("{k} not a finite nonnegative number"));
        }
    }
    let deltas: Vec<f64> = ["d105", "d110", "d125"].iter().filter_map(|k| num(k)).collect();
    if deltas.len() != 3
        || deltas.iter().any(|d| !(0.0..=100.0).contains(d))
        || deltas[0] > deltas[1]
        || deltas[1] > deltas[2]
    {
        errs.push(format!("deltas {deltas:?}"));
    }
    if !obj.get("n").is_some_and(|n| n.as_u64().is_some_and(|n| n > 0)) {
        errs.push("n not a positive integer".into());
    }
    errs
}
