//! Brute-force oracles: nested loops over plain `Vec`s, written without
//! calling any library kernel, plus one check per worked example whose
//! expected value must be computed.

#![allow(dead_code, clippy::needless_range_loop)]

use xhrnet_core::autograd::{finite_diff, grad_check, Ops, ScalarFn};
use xhrnet_core::blocks::{
    dw_sep_conv, fuse_branches, shuffle_block, stem, transition, x_shuffle_block, ConvUnit, DwSepParams, FuseParams,
    ShuffleParams, ShuffleUnit, StemParams, TransitionParams, XShuffleConfig, XShuffleParams,
};
use xhrnet_core::heatmap::{
    decode, flip_average, fusion_toy, gaussian_heatmap, project, reconstruction_error, Heatmap, COCO_FLIP_PAIRS,
};
use xhrnet_core::init::Initializer;
use xhrnet_core::susa::{
    gc_block, stripe_context, susa_apply, susa_apply_in, unidim_transform, Fusion, GcParams, StripeContext, SusaAxis,
    SusaBias, SusaConfig, SusaParams,
};
use xhrnet_core::tensor::{
    conv2d, elementwise, layer_norm_channels, reduce_mean, resize, softmax, Binary, ConvSpec, ResizeMode,
};
use xhrnet_core::{Result, Tensor};

pub type M3 = Vec<Vec<Vec<f64>>>;

/// Outcome of one oracle comparison.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub err: f64,
    pub tol: f64,
    pub pass: bool,
}

impl Check {
    pub fn within(name: &'static str, err: f64, tol: f64) -> Self {
        Check { name, err, tol, pass: err <= tol }
    }

    pub fn holds(name: &'static str, ok: bool) -> Self {
        Check { name, err: if ok { 0.0 } else { 1.0 }, tol: 0.0, pass: ok }
    }
}

pub fn rand(shape: &[usize], seed: u64) -> Tensor {
    Initializer::new(seed).uniform(shape, -1.0, 1.0).unwrap()
}

pub fn to_m3(t: &Tensor) -> M3 {
    let s = t.shape();
    (0..s[0]).map(|c| (0..s[1]).map(|i| (0..s[2]).map(|j| t.at(&[c, i, j])).collect()).collect()).collect()
}

pub fn m3_err(a: &M3, t: &Tensor) -> f64 {
    let s = t.shape();
    assert_eq!((a.len(), a[0].len(), a[0][0].len()), (s[0], s[1], s[2]), "oracle shape");
    let mut e = 0.0f64;
    for c in 0..s[0] {
        for i in 0..s[1] {
            for j in 0..s[2] {
                e = e.max((a[c][i][j] - t.at(&[c, i, j])).abs());
            }
        }
    }
    e
}

pub fn vec_of(t: &Option<Tensor>, n: usize) -> Vec<f64> {
    t.as_ref().map_or(vec![0.0; n], |b| b.data().to_vec())
}

/// Zero-padded cross-correlation, six nested loops.
pub fn conv(x: &M3, w: &Tensor, bias: Option<&[f64]>, stride: usize, pad: usize, groups: usize) -> M3 {
    let (cin, h, wd) = (x.len(), x[0].len(), x[0][0].len());
    let ws = w.shape();
    let (cout, kh, kw) = (ws[0], ws[2], ws[3]);
    let (gin, gout) = (cin / groups, cout / groups);
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (wd + 2 * pad - kw) / stride + 1;
    let mut y = vec![vec![vec![0.0; ow]; oh]; cout];
    for o in 0..cout {
        let g = o / gout;
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = bias.map_or(0.0, |b| b[o]);
                for ci in 0..gin {
                    for u in 0..kh {
                        for v in 0..kw {
                            let (r, c) =
                                ((i * stride + u) as isize - pad as isize, (j * stride + v) as isize - pad as isize);
                            if r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < wd {
                                acc += w.at(&[o, ci, u, v]) * x[g * gin + ci][r as usize][c as usize];
                            }
                        }
                    }
                }
                y[o][i][j] = acc;
            }
        }
    }
    y
}

pub fn affine(x: &M3, scale: &Tensor, shift: &Tensor) -> M3 {
    x.iter()
        .enumerate()
        .map(|(c, p)| p.iter().map(|r| r.iter().map(|v| v * scale.data()[c] + shift.data()[c]).collect()).collect())
        .collect()
}

pub fn relu(x: &M3) -> M3 {
    x.iter().map(|p| p.iter().map(|r| r.iter().map(|v| v.max(0.0)).collect()).collect()).collect()
}

/// A conv unit the long way: conv, affine, ReLU as configured.
pub fn unit(x: &M3, u: &ConvUnit<f64>) -> M3 {
    let s = u.spec;
    let b = u.bias.as_ref().map(|b| b.data().to_vec());
    let mut y = conv(x, &u.weight, b.as_deref(), s.stride.0, s.padding.0, s.groups);
    if let Some(n) = &u.norm {
        y = affine(&y, &n.scale, &n.shift);
    }
    if u.relu {
        y = relu(&y);
    }
    y
}

pub fn dw_sep(x: &M3, p: &DwSepParams<f64>) -> M3 {
    unit(&unit(x, &p.dw), &p.pw)
}

/// `reshape (2, C/2) -> transpose -> flatten`: output `k` takes input
/// `(k % 2) * C/2 + k / 2`.
pub fn shuffle2(x: &M3) -> M3 {
    let half = x.len() / 2;
    (0..x.len()).map(|k| x[(k % 2) * half + k / 2].clone()).collect()
}

pub fn cat(a: &M3, b: &M3) -> M3 {
    a.iter().chain(b.iter()).cloned().collect()
}

pub fn halves(x: &M3) -> (M3, M3) {
    let h = x.len() / 2;
    (x[..h].to_vec(), x[h..].to_vec())
}

pub fn add(a: &M3, b: &M3) -> M3 {
    a.iter()
        .zip(b)
        .map(|(p, q)| p.iter().zip(q).map(|(r, s)| r.iter().zip(s).map(|(u, v)| u + v).collect()).collect())
        .collect()
}

pub fn nearest(x: &M3, oh: usize, ow: usize) -> M3 {
    let (h, w) = (x[0].len(), x[0][0].len());
    x.iter().map(|p| (0..oh).map(|i| (0..ow).map(|j| p[i * h / oh][j * w / ow]).collect()).collect()).collect()
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Stripe context by loops. H-wise: mean over H, softmax over W, contract
/// W. Returns (grouping `C x L'`, context `C x L`).
pub fn stripe(x: &M3, p: &SusaParams<f64>, axis: SusaAxis) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let (c, h, w) = (x.len(), x[0].len(), x[0][0].len());
    let qb = vec_of(&p.q_bias, c);
    let (kept, other) = match axis {
        SusaAxis::HWise => (h, w),
        SusaAxis::WWise => (w, h),
    };
    let at = |ch: usize, k: usize, o: usize| match axis {
        SusaAxis::HWise => x[ch][k][o],
        SusaAxis::WWise => x[ch][o][k],
    };
    let mut grouping = vec![vec![0.0; other]; c];
    let mut context = vec![vec![0.0; kept]; c];
    for ch in 0..c {
        let logits: Vec<f64> = (0..other)
            .map(|o| {
                let mean = (0..kept).map(|k| at(ch, k, o)).sum::<f64>() / kept as f64;
                p.w_q.data()[ch] * mean + qb[ch]
            })
            .collect();
        let z: f64 = logits.iter().map(|l| l.exp()).sum();
        for o in 0..other {
            grouping[ch][o] = logits[o].exp() / z;
        }
        for k in 0..kept {
            context[ch][k] = (0..other).map(|o| at(ch, k, o) * grouping[ch][o]).sum();
        }
    }
    (grouping, context)
}

/// LayerNorm across the first index at each position, biased variance.
pub fn ln_channels(v: &[Vec<f64>], gamma: &[f64], beta: &[f64], eps: f64) -> Vec<Vec<f64>> {
    let (c, l) = (v.len(), v[0].len());
    let mut out = vec![vec![0.0; l]; c];
    for k in 0..l {
        let mean = (0..c).map(|ch| v[ch][k]).sum::<f64>() / c as f64;
        let var = (0..c).map(|ch| (v[ch][k] - mean).powi(2)).sum::<f64>() / c as f64;
        for ch in 0..c {
            out[ch][k] = gamma[ch] * (v[ch][k] - mean) / (var + eps).sqrt() + beta[ch];
        }
    }
    out
}

pub fn transform(ctx: &[Vec<f64>], p: &SusaParams<f64>) -> Vec<Vec<f64>> {
    let (c, l) = (ctx.len(), ctx[0].len());
    let vb = vec_of(&p.v_bias, c);
    let mixed: Vec<Vec<f64>> = (0..c)
        .map(|o| (0..l).map(|k| vb[o] + (0..c).map(|i| p.w_v.at(&[o, i, 0, 0]) * ctx[i][k]).sum::<f64>()).collect())
        .collect();
    let normed = ln_channels(&mixed, p.ln_gamma.data(), p.ln_beta.data(), p.ln_eps);
    normed.iter().map(|r| r.iter().map(|&v| sigmoid(v)).collect()).collect()
}

pub fn susa(x: &M3, p: &SusaParams<f64>, axis: SusaAxis, fusion: Fusion) -> M3 {
    let a = transform(&stripe(x, p, axis).1, p);
    x.iter()
        .enumerate()
        .map(|(c, plane)| {
            plane
                .iter()
                .enumerate()
                .map(|(i, row)| {
                    row.iter()
                        .enumerate()
                        .map(|(j, &v)| {
                            let av = match axis {
                                SusaAxis::HWise => a[c][i],
                                SusaAxis::WWise => a[c][j],
                            };
                            match fusion {
                                Fusion::Multiply => v * av,
                                Fusion::Add => v + av,
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

pub fn random_susa(c: usize, seed: u64) -> SusaParams<f64> {
    let init = &mut Initializer::new(seed);
    let mut p = SusaParams::init(c, SusaBias { grouping: true, transform: true }, init).unwrap();
    p.q_bias = Some(init.uniform(&[c], -0.5, 0.5).unwrap());
    p.v_bias = Some(init.uniform(&[c], -0.5, 0.5).unwrap());
    p.ln_gamma = init.uniform(&[c], 0.5, 1.5).unwrap();
    p.ln_beta = init.uniform(&[c], -0.5, 0.5).unwrap();
    p
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn flat2(v: &[Vec<f64>]) -> Vec<f64> {
    v.iter().flatten().copied().collect()
}

// ---- tensor core ----

pub fn broadcast_mul() -> Check {
    let a = rand(&[2, 3, 4], 1);
    let b = rand(&[2, 3, 1], 2);
    let y = elementwise(Binary::Mul, &a, &b).unwrap();
    let mut e = 0.0f64;
    for i in 0..2 {
        for j in 0..3 {
            for k in 0..4 {
                e = e.max((a.at(&[i, j, k]) * b.at(&[i, j, 0]) - y.at(&[i, j, k])).abs());
            }
        }
    }
    Check::within("elementwise: broadcast mul [2,3,4]x[2,3,1] vs loops", e, 1e-12)
}

pub fn mean_axis1() -> Check {
    let x = rand(&[3, 5, 7], 3);
    let y = reduce_mean(&x, 1).unwrap();
    let mut e = 0.0f64;
    for c in 0..3 {
        for k in 0..7 {
            let m = (0..5).map(|i| x.at(&[c, i, k])).sum::<f64>() / 5.0;
            e = e.max((m - y.at(&[c, 0, k])).abs());
        }
    }
    Check::within("reduce_mean: [3,5,7] axis 1 vs loops", e, 1e-12)
}

pub fn softmax_48() -> Check {
    let x = Initializer::new(4).uniform::<f64>(&[48], -5.0, 5.0).unwrap();
    let y = softmax(&x, 0).unwrap();
    let z: f64 = x.data().iter().map(|v| v.exp()).sum();
    let direct: Vec<f64> = x.data().iter().map(|v| v.exp() / z).collect();
    let e = max_diff(&direct, y.data()).max((y.sum() - 1.0).abs());
    Check::within("softmax: length 48 vs exp/sum, sums to 1", e, 1e-12)
}

pub fn layer_norm_formula() -> Check {
    let x = rand(&[4, 3], 5);
    let gamma = Tensor::new(vec![4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let beta = Tensor::ones(vec![4]).unwrap();
    let y = layer_norm_channels(&x, &gamma, &beta, 1e-5).unwrap();
    let rows: Vec<Vec<f64>> = (0..4).map(|c| (0..3).map(|k| x.at(&[c, k])).collect()).collect();
    let o = ln_channels(&rows, gamma.data(), beta.data(), 1e-5);
    Check::within("layer_norm_channels: [4,3] gamma 1..4 vs formula", max_diff(&flat2(&o), y.data()), 1e-10)
}

pub fn conv_strided() -> Check {
    let x = rand(&[2, 4, 5], 6);
    let spec = ConvSpec::standard(2, 3, 3, 2);
    let w = rand(&spec.weight_shape(), 7);
    let y = conv2d(&x, &w, None, &spec).unwrap();
    Check::within("conv2d: [2,4,5] 3x3 s2 p1 vs 6-loop", m3_err(&conv(&to_m3(&x), &w, None, 2, 1, 1), &y), 1e-10)
}

pub fn bilinear_2x() -> Check {
    let x = rand(&[1, 3, 3], 8);
    let y = resize(&x, (6, 6), ResizeMode::Bilinear).unwrap();
    let src = |o: usize| ((o as f64 + 0.5) * 0.5 - 0.5).max(0.0);
    let mut e = 0.0f64;
    for i in 0..6 {
        for j in 0..6 {
            let (sy, sx) = (src(i), src(j));
            let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
            let (y1, x1) = ((y0 + 1).min(2), (x0 + 1).min(2));
            let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
            let v = (1.0 - fy) * ((1.0 - fx) * x.at(&[0, y0, x0]) + fx * x.at(&[0, y0, x1]))
                + fy * ((1.0 - fx) * x.at(&[0, y1, x0]) + fx * x.at(&[0, y1, x1]));
            e = e.max((v - y.at(&[0, i, j])).abs());
        }
    }
    Check::within("resize: bilinear 2x [1,3,3] vs interpolation", e, 1e-10)
}

// ---- autograd ----

struct SusaSum(SusaParams<f64>, SusaConfig);

impl ScalarFn<f64> for SusaSum {
    fn eval<G: Ops<f64>>(&self, g: &mut G, x: G::V) -> Result<G::V> {
        let y = susa_apply_in(g, &x, &self.0, &self.1)?;
        Ok(g.sum_all(&y))
    }
}

pub fn susa_backward() -> Check {
    let x = rand(&[4, 6, 5], 9);
    let f = SusaSum(random_susa(4, 10), SusaConfig::new(SusaAxis::HWise, Fusion::Multiply, 4));
    let r = grad_check(&f, &x, 1e-4).unwrap();
    Check::within("backward: sum(susa_apply) [4,6,5] vs finite_diff", r.max_rel_err, 1e-4)
}

struct LnSum(Tensor, Tensor);

impl ScalarFn<f64> for LnSum {
    fn eval<G: Ops<f64>>(&self, g: &mut G, x: G::V) -> Result<G::V> {
        let gamma = g.constant(&self.0);
        let beta = g.constant(&self.1);
        let y = g.layer_norm_channels(&x, &gamma, &beta, 1e-5)?;
        Ok(g.sum_all(&y))
    }
}

/// Non-uniform gamma: with gamma = 1 the summed LayerNorm is constant and
/// its gradient vanishes.
pub fn layer_norm_backward() -> Check {
    let x = rand(&[3, 4], 11);
    let f = LnSum(Tensor::new(vec![3], vec![0.7, 1.3, 2.1]).unwrap(), Tensor::zeros(vec![3]).unwrap());
    let numeric = finite_diff(|t| f.value(t), &x, 1e-5).unwrap();
    let analytic = f.gradient(&x).unwrap();
    let rel = analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(1e-8))
        .fold(0.0, f64::max);
    Check::within("finite_diff: sum(layer_norm) [3,4] vs backward", rel, 1e-5)
}

struct ConvSum(Tensor, ConvSpec);

impl ScalarFn<f64> for ConvSum {
    fn eval<G: Ops<f64>>(&self, g: &mut G, x: G::V) -> Result<G::V> {
        let w = g.constant(&self.0);
        let y = g.conv2d(&x, &w, None, &self.1)?;
        Ok(g.sum_all(&y))
    }
}

pub fn conv_grad_check() -> Check {
    let spec = ConvSpec::standard(2, 3, 3, 1);
    let f = ConvSum(rand(&spec.weight_shape(), 12), spec);
    let r = grad_check(&f, &rand(&[2, 5, 5], 13), 1e-4).unwrap();
    Check::within("grad_check: sum(conv2d 3x3 p1) [2,5,5]", r.max_rel_err, 1e-4)
}

// ---- susa ----

pub fn stripe_hwise() -> Check {
    let x = rand(&[3, 4, 5], 14);
    let p = random_susa(3, 15);
    let (g, ctx) = stripe_context(&x, &p, SusaAxis::HWise).unwrap();
    let (og, octx) = stripe(&to_m3(&x), &p, SusaAxis::HWise);
    let e = max_diff(&flat2(&og), g.data()).max(max_diff(&flat2(&octx), ctx.values.data()));
    Check::within("stripe_context: [3,4,5] H-wise vs triple loop", e, 1e-10)
}

pub fn transform_formula() -> Check {
    let ctx = Initializer::new(16).uniform::<f64>(&[4, 6], -1.0, 1.0).unwrap();
    let p = random_susa(4, 17);
    let a = unidim_transform(&StripeContext { axis: SusaAxis::HWise, values: ctx.clone() }, &p).unwrap();
    let rows: Vec<Vec<f64>> = (0..4).map(|c| (0..6).map(|k| ctx.at(&[c, k])).collect()).collect();
    Check::within(
        "unidim_transform: C=4 L=6 vs matmul+LN+sigmoid",
        max_diff(&flat2(&transform(&rows, &p)), a.values.data()),
        1e-10,
    )
}

pub fn susa_composed() -> Check {
    let x = rand(&[4, 6, 5], 18);
    let p = random_susa(4, 19);
    let y = susa_apply(&x, &p, &SusaConfig::new(SusaAxis::HWise, Fusion::Multiply, 4)).unwrap();
    Check::within(
        "susa_apply: [4,6,5] H-wise mul vs x * oracle attention",
        m3_err(&susa(&to_m3(&x), &p, SusaAxis::HWise, Fusion::Multiply), &y),
        1e-10,
    )
}

pub fn gc_formula() -> Check {
    let x = rand(&[4, 3, 3], 20);
    let init = &mut Initializer::new(21);
    let mut p = GcParams::init(4, 2, init).unwrap();
    p.down_bias = init.uniform(&[2], -0.5, 0.5).unwrap();
    p.up_bias = init.uniform(&[4], -0.5, 0.5).unwrap();
    p.ln_gamma = init.uniform(&[2], 0.5, 1.5).unwrap();
    p.ln_beta = init.uniform(&[2], -0.5, 0.5).unwrap();
    let y = gc_block(&x, &p).unwrap();
    let xm = to_m3(&x);
    let logits: Vec<f64> =
        (0..9).map(|n| (0..4).map(|c| p.context_kernel.data()[c] * xm[c][n / 3][n % 3]).sum()).collect();
    let z: f64 = logits.iter().map(|l| l.exp()).sum();
    let ctx: Vec<f64> = (0..4).map(|c| (0..9).map(|n| xm[c][n / 3][n % 3] * logits[n].exp() / z).sum()).collect();
    let down: Vec<Vec<f64>> = (0..2)
        .map(|m| vec![p.down_bias.data()[m] + (0..4).map(|c| p.down.at(&[m, c, 0, 0]) * ctx[c]).sum::<f64>()])
        .collect();
    let normed = ln_channels(&down, p.ln_gamma.data(), p.ln_beta.data(), p.ln_eps);
    let t: Vec<f64> = (0..4)
        .map(|c| p.up_bias.data()[c] + (0..2).map(|m| p.up.at(&[c, m, 0, 0]) * normed[m][0].max(0.0)).sum::<f64>())
        .collect();
    let oracle: M3 = xm
        .iter()
        .enumerate()
        .map(|(c, pl)| pl.iter().map(|r| r.iter().map(|v| v + t[c]).collect()).collect())
        .collect();
    Check::within("gc_block: [4,3,3] r=2 vs formula", m3_err(&oracle, &y), 1e-10)
}

// ---- blocks ----

pub fn randomise(units: &mut [&mut ConvUnit<f64>], seed: u64) {
    let init = &mut Initializer::new(seed);
    for u in units {
        if let Some(n) = &mut u.norm {
            n.scale = init.uniform(n.scale.shape(), 0.5, 1.5).unwrap();
            n.shift = init.uniform(n.shift.shape(), -0.5, 0.5).unwrap();
        }
    }
}

pub fn shuffle_composed() -> Check {
    let x = rand(&[4, 6, 6], 22);
    let mut p = ShuffleParams::init(4, &mut Initializer::new(23)).unwrap();
    randomise(&mut [&mut p.pw1, &mut p.dw, &mut p.pw2], 24);
    let y = shuffle_block(&x, &ShuffleUnit::Stride1(p.clone())).unwrap();
    let (keep, mv) = halves(&to_m3(&x));
    let t = unit(&unit(&unit(&mv, &p.pw1), &p.dw), &p.pw2);
    Check::within("shuffle_block: [4,6,6] stride 1 vs composition", m3_err(&shuffle2(&cat(&keep, &t)), &y), 1e-10)
}

pub fn x_shuffle_composed() -> Check {
    let x = rand(&[4, 6, 5], 25);
    let mut p = XShuffleParams::init(4, SusaBias::default(), &mut Initializer::new(26)).unwrap();
    p.susa1 = random_susa(2, 27);
    p.susa2 = random_susa(2, 28);
    randomise(&mut [&mut p.dw], 29);
    let cfg = XShuffleConfig::default();
    let y = x_shuffle_block(&x, &p, &cfg).unwrap();
    let (keep, mv) = halves(&to_m3(&x));
    let t = susa(&unit(&susa(&mv, &p.susa1, cfg.order.0, cfg.fusion), &p.dw), &p.susa2, cfg.order.1, cfg.fusion);
    Check::within(
        "x_shuffle_block: [4,6,5] default order vs composition",
        m3_err(&shuffle2(&cat(&keep, &t)), &y),
        1e-10,
    )
}

pub fn dw_sep_composed() -> Check {
    let x = rand(&[3, 7, 6], 30);
    let mut p = DwSepParams::init(3, 5, 2, &mut Initializer::new(31)).unwrap();
    randomise(&mut [&mut p.dw, &mut p.pw], 32);
    let y = dw_sep_conv(&x, &p).unwrap();
    Check::within("dw_sep_conv: [3,7,6] s2 vs two-step conv", m3_err(&dw_sep(&to_m3(&x), &p), &y), 1e-10)
}

pub fn fuse_composed() -> Check {
    let xs = vec![rand(&[4, 8, 8], 33), rand(&[8, 4, 4], 34)];
    let p = FuseParams::init(&[4, 8], &mut Initializer::new(35)).unwrap();
    let y = fuse_branches(&xs, &p).unwrap();
    let (a, b) = (to_m3(&xs[0]), to_m3(&xs[1]));
    use xhrnet_core::blocks::FusePath;
    let (FusePath::Up(up), FusePath::Down(down)) = (&p.paths[0][1], &p.paths[1][0]) else {
        return Check::holds("fuse_branches: path layout", false);
    };
    let o0 = add(&a, &nearest(&dw_sep(&b, up), 8, 8));
    let o1 = add(&dw_sep(&a, &down[0]), &b);
    Check::within("fuse_branches: [4,8,8]+[8,4,4] vs composition", m3_err(&o0, &y[0]).max(m3_err(&o1, &y[1])), 1e-10)
}

pub fn stem_composed() -> Check {
    let x = rand(&[3, 8, 8], 36);
    let p = StemParams::init(3, 32, &mut Initializer::new(37)).unwrap();
    let y = stem(&x, &p).unwrap();
    let ShuffleUnit::Stride2(d) = &p.down else {
        return Check::holds("stem: stride-2 unit", false);
    };
    let s = unit(&to_m3(&x), &p.conv);
    let left = unit(&unit(&s, &d.branch1_dw), &d.branch1_pw);
    let right = unit(&unit(&unit(&s, &d.branch2_pw1), &d.branch2_dw), &d.branch2_pw2);
    Check::within("stem: [3,8,8] vs composition", m3_err(&shuffle2(&cat(&left, &right)), &y), 1e-10)
}

pub fn transition_composed() -> Check {
    let xs = vec![rand(&[4, 8, 8], 38), rand(&[8, 4, 4], 39)];
    let p = TransitionParams::init(&[4, 8], &[6, 8, 16], &mut Initializer::new(40)).unwrap();
    let y = transition(&xs, &p).unwrap();
    use xhrnet_core::blocks::TransitionPath;
    let (TransitionPath::Adapt(a), TransitionPath::Identity, TransitionPath::New(n)) =
        (&p.paths[0], &p.paths[1], &p.paths[2])
    else {
        return Check::holds("transition: path layout", false);
    };
    let e = m3_err(&dw_sep(&to_m3(&xs[0]), a), &y[0])
        .max(m3_err(&to_m3(&xs[1]), &y[1]))
        .max(m3_err(&dw_sep(&to_m3(&xs[1]), n), &y[2]));
    Check::within("transition: [4,8,8]+[8,4,4] -> 3 branches vs composition", e, 1e-10)
}

// ---- heatmap codec ----

pub fn gaussian_formula() -> Check {
    let g = gaussian_heatmap::<f64>((10.3, 20.7), 2.0, (64, 48)).unwrap().slice;
    let mut e = 0.0f64;
    for i in 0..64 {
        for j in 0..48 {
            let v = (-((j as f64 - 10.3).powi(2) + (i as f64 - 20.7).powi(2)) / 8.0).exp();
            e = e.max((v - g.at(&[i, j])).abs());
        }
    }
    Check::within("gaussian_heatmap: (10.3,20.7) s=2 64x48 vs formula", e, 1e-12)
}

pub fn projection_marginals() -> Check {
    let g = gaussian_heatmap::<f64>((10.0, 20.0), 2.0, (64, 48)).unwrap().slice;
    let pair = project(&g).unwrap();
    let gy: Vec<f64> = (0..64).map(|i| (-((i as f64 - 20.0).powi(2)) / 8.0).exp()).collect();
    let gx: Vec<f64> = (0..48).map(|j| (-((j as f64 - 10.0).powi(2)) / 8.0).exp()).collect();
    let (sy, sx): (f64, f64) = (gy.iter().sum(), gx.iter().sum());
    let hy: Vec<f64> = gy.iter().map(|v| v / sy).collect();
    let hx: Vec<f64> = gx.iter().map(|v| v / sx).collect();
    Check::within(
        "project: Gaussian (10,20) vs 1D marginals",
        max_diff(&hy, &pair.h_vec).max(max_diff(&hx, &pair.w_vec)),
        1e-10,
    )
}

pub fn two_peak_error() -> Check {
    let a = gaussian_heatmap::<f64>((8.0, 8.0), 2.0, (32, 32)).unwrap().slice;
    let b = gaussian_heatmap::<f64>((22.0, 24.0), 2.0, (32, 32)).unwrap().slice;
    let two = elementwise(Binary::Add, &a, &b).unwrap();
    // Direct: the product of marginals puts mass at (8, 24) where the input has none.
    let pair = project(&two).unwrap();
    let outer = pair.h_vec[24] * pair.w_vec[8];
    let peak = (0..32)
        .flat_map(|i| (0..32).map(move |j| (i, j)))
        .map(|(i, j)| pair.h_vec[i] * pair.w_vec[j])
        .fold(0.0, f64::max);
    let direct = (outer / peak - two.at(&[24, 8]) / two.max_value()).abs();
    let err = reconstruction_error(&two).unwrap();
    Check::holds(
        "reconstruct: two-peak slice has error > 0 (>= direct ghost-peak gap)",
        err > 0.1 && err >= direct - 1e-12,
    )
}

pub fn decode_offgrid() -> Check {
    let g = gaussian_heatmap::<f64>((10.3, 20.7), 2.0, (64, 48)).unwrap().slice;
    let kp = decode(&Heatmap::from_slices(&[g]).unwrap())[0];
    Check::within("decode: Gaussian (10.3,20.7) within 0.5 px", (kp.x - 10.3).abs().max((kp.y - 20.7).abs()), 0.5)
}

pub fn flip_oracle() -> Check {
    let a = Initializer::new(41).uniform::<f64>(&[17, 8, 6], 0.0, 1.0).unwrap();
    let b = Initializer::new(42).uniform::<f64>(&[17, 8, 6], 0.0, 1.0).unwrap();
    let out =
        flip_average(&Heatmap::new(a.clone()).unwrap(), &Heatmap::new(b.clone()).unwrap(), &COCO_FLIP_PAIRS).unwrap();
    let partner = |k: usize| {
        COCO_FLIP_PAIRS
            .iter()
            .find_map(|&(l, r)| {
                if l == k {
                    Some(r)
                } else if r == k {
                    Some(l)
                } else {
                    None
                }
            })
            .unwrap_or(k)
    };
    let mut e = 0.0f64;
    for k in 0..17 {
        for i in 0..8 {
            for j in 0..6 {
                let v = 0.5 * (a.at(&[k, i, j]) + b.at(&[partner(k), i, 5 - j]));
                e = e.max((v - out.values().at(&[k, i, j])).abs());
            }
        }
    }
    Check::within("flip_average: COCO pairs vs mirror-swap-average", e, 1e-12)
}

pub fn fusion_enumeration() -> Check {
    let (h, w) = (64, 48);
    let a = gaussian_heatmap::<f64>((24.0, 32.0), 2.0, (h, w)).unwrap().slice;
    let b = gaussian_heatmap::<f64>((25.0, 32.0), 2.0, (h, w)).unwrap().slice;
    let mut ok = true;
    for mode in [Fusion::Add, Fusion::Multiply] {
        let r = fusion_toy(&a, &b, mode).unwrap();
        let vals: Vec<f64> = (0..h * w)
            .map(|n| {
                let (x, y) = (a.data()[n], b.data()[n]);
                if mode == Fusion::Add {
                    x + y
                } else {
                    x * y
                }
            })
            .collect();
        let mut best = 0;
        for n in 0..vals.len() {
            if vals[n] > vals[best] {
                best = n;
            }
        }
        let area = vals.iter().filter(|&&v| v / vals[best] >= 0.5).count();
        ok &= r.peak == [best % w, best / w] && r.half_max_area == area;
    }
    Check::holds("fusion_toy: offset Gaussians vs pixel enumeration", ok)
}

// ---- analysis ----

pub fn dw_sep_reduction() -> Check {
    let c = 128.0;
    let r = xhrnet_core::analysis::cost_compare(128, 64, 64).unwrap();
    let closed = 1.0 - (9.0 * c + c * c) / (9.0 * c * c);
    let ok = (r.dw_sep_reduction - closed).abs() < 1e-12 && (0.86..=0.89).contains(&r.dw_sep_reduction);
    Check::holds("cost_compare: C=128 dw-sep reduction vs 1 - 1/C - 1/9", ok)
}

pub fn all() -> Vec<Check> {
    vec![
        broadcast_mul(),
        mean_axis1(),
        softmax_48(),
        layer_norm_formula(),
        conv_strided(),
        bilinear_2x(),
        susa_backward(),
        layer_norm_backward(),
        conv_grad_check(),
        stripe_hwise(),
        transform_formula(),
        susa_composed(),
        gc_formula(),
        shuffle_composed(),
        x_shuffle_composed(),
        dw_sep_composed(),
        fuse_composed(),
        stem_composed(),
        transition_composed(),
        gaussian_formula(),
        projection_marginals(),
        two_peak_error(),
        decode_offgrid(),
        flip_oracle(),
        fusion_enumeration(),
        dw_sep_reduction(),
    ]
}
