//! Named gradient-check suites over the differentiable building blocks.
//!
//! Each case compares reverse-mode gradients of `sum(f(x) * r)` (with a
//! fixed random `r`, so no gradient collapses to a constant) against central
//! differences, once for the input and once for every named parameter.

use serde::{Deserialize, Serialize};

use crate::autograd::{compare_gradients, finite_diff, Eager, GradCheckReport, Ops, Tape};
use crate::blocks::{
    dw_sep_conv_in, join, x_shuffle_block_in, DwSepParams, Parameterized, XShuffleConfig, XShuffleParams,
};
use crate::error::{Error, Result};
use crate::init::Initializer;
use crate::susa::{
    gc_block_in, stripe_context_in, susa_apply_in, unidim_transform_in, Fusion, GcParams, SusaAxis, SusaBias,
    SusaConfig, SusaParams,
};
use crate::tensor::{ConvSpec, Tensor};

pub const DEFAULT_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradTarget {
    /// `susa_apply` for both axes and both fusion modes.
    Susa,
    StripeContext,
    UnidimTransform,
    GcBlock,
    LayerNorm,
    Conv,
    DwSep,
    /// `x_shuffle_block` in both SUSA orders.
    XBlock,
}

impl GradTarget {
    pub const ALL: [GradTarget; 8] = [
        GradTarget::Susa,
        GradTarget::StripeContext,
        GradTarget::UnidimTransform,
        GradTarget::GcBlock,
        GradTarget::LayerNorm,
        GradTarget::Conv,
        GradTarget::DwSep,
        GradTarget::XBlock,
    ];

    pub fn label(self) -> &'static str {
        match self {
            GradTarget::Susa => "susa",
            GradTarget::StripeContext => "stripe_context",
            GradTarget::UnidimTransform => "unidim_transform",
            GradTarget::GcBlock => "gc_block",
            GradTarget::LayerNorm => "layernorm",
            GradTarget::Conv => "conv",
            GradTarget::DwSep => "dw_sep",
            GradTarget::XBlock => "xblock",
        }
    }
}

impl std::str::FromStr for GradTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_");
        Self::ALL.into_iter().find(|t| t.label() == norm).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|t| t.label()).collect();
            Error::Usage(format!("unknown gradcheck target '{s}' (expected one of {})", names.join(", ")))
        })
    }
}

/// One input or parameter checked within a target.
#[derive(Debug, Clone)]
pub struct GradCase {
    pub name: String,
    pub report: GradCheckReport<f64>,
}

/// A differentiable map with named parameters.
trait Model: Parameterized<f64> + Clone {
    fn forward_in<G: Ops<f64>>(&self, g: &mut G, x: &G::V) -> Result<G::V>;
}

fn weighted_loss<M: Model, G: Ops<f64>>(m: &M, g: &mut G, x: &G::V, r: &Tensor<f64>) -> Result<G::V> {
    let y = m.forward_in(g, x)?;
    let rv = g.constant(r);
    let prod = g.mul(&y, &rv)?;
    Ok(g.sum_all(&prod))
}

fn scalar(t: Tensor<f64>) -> f64 {
    t.data()[0]
}

fn with_param<M: Model>(m: &M, name: &str, value: &Tensor<f64>) -> M {
    let mut m = m.clone();
    let mut slots = Vec::new();
    m.visit_mut("", &mut slots);
    for (n, slot) in slots {
        if n == name {
            *slot = value.clone();
        }
    }
    m
}

/// Checks `x` and every parameter of `model`.
fn check_model<M: Model>(label: &str, model: &M, x: &Tensor<f64>, tol: f64, seed: u64) -> Result<Vec<GradCase>> {
    let y = model.forward_in(&mut Eager, x)?;
    let r: Tensor<f64> = Initializer::new(seed ^ 0x5eed).uniform(y.shape(), -1.0, 1.0)?;
    let mut out = Vec::new();

    let mut tape = Tape::new();
    let xv = tape.leaf(x);
    let loss = weighted_loss(model, &mut tape, &xv, &r)?;
    let grads = tape.backward(loss)?;
    let analytic = grads.wrt(xv).cloned().unwrap_or_else(|| x.zeros_like());
    let numeric = finite_diff(|t| Ok(scalar(weighted_loss(model, &mut Eager, t, &r)?)), x, DEFAULT_EPS)?;
    out.push(GradCase { name: format!("{label} wrt x"), report: compare_gradients(&analytic, &numeric, tol)? });

    let mut named = Vec::new();
    model.visit("", &mut named);
    for (name, p) in named {
        // Softmax ignores a per-channel shift, so the grouping bias has an
        // identically zero gradient; differences there are pure rounding.
        if name.ends_with("q_bias") {
            continue;
        }
        let analytic = grads.wrt_param(p).cloned().unwrap_or_else(|| p.zeros_like());
        let numeric = finite_diff(
            |t| {
                let m = with_param(model, &name, t);
                Ok(scalar(weighted_loss(&m, &mut Eager, x, &r)?))
            },
            p,
            DEFAULT_EPS,
        )?;
        out.push(GradCase {
            name: format!("{label} wrt {name}"),
            report: compare_gradients(&analytic, &numeric, tol)?,
        });
    }
    Ok(out)
}

#[derive(Clone)]
struct Susa(SusaParams<f64>, SusaConfig);

impl Parameterized<f64> for Susa {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<f64>)>) {
        self.0.visit(prefix, out)
    }
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<f64>)>) {
        self.0.visit_mut(prefix, out)
    }
}

impl Model for Susa {
    fn forward_in<G: Ops<f64>>(&self, g: &mut G, x: &G::V) -> Result<G::V> {
        susa_apply_in(g, x, &self.0, &self.1)
    }
}

#[derive(Clone)]
struct Stripe(SusaParams<f64>, SusaAxis);

impl Parameterized<f64> for Stripe {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<f64>)>) {
        out.push((join(prefix, "w_q"), &self.0.w_q));
        if let Some(b) = &self.0.q_bias {
            out.push((join(prefix, "q_bias"), b));
        }
    }
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<f64>)>) {
        out.push((join(prefix, "w_q"), &mut self.0.w_q));
        if let Some(b) = &mut self.0.q_bias {
            out.push((join(prefix, "q_bias"), b));
        }
    }
}

impl Model for Stripe {
    fn forward_in<G: Ops<f64>>(&self, g: &mut G, x: &G::V) -> Result<G::V> {
        Ok(stripe_context_in(g, x, &self.0, self.1)?.1)
    }
}

/// Transform only; `x` is a rank-3 stripe context.
#[derive(Clone)]
struct Unidim(SusaParams<f64>);

impl Parameterized<f64> for Unidim {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<f64>)>) {
        out.push((join(prefix, "w_v"), &self.0.w_v));
        out.push((join(prefix, "ln_gamma"), &self.0.ln_gamma));
        out.push((join(prefix, "ln_beta"), &self.0.ln_beta));
    }
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<f64>)>) {
        out.push((join(prefix, "w_v"), &mut self.0.w_v));
        out.push((join(prefix, "ln_gamma"), &mut self.0.ln_gamma));
        out.push((join(prefix, "ln_beta"), &mut self.0.ln_beta));
    }
}

impl Model for Unidim {
    fn forward_in<G: Ops<f64>>(&self, g: &mut G, x: &G::V) -> Result<G::V> {
        unidim_transform_in(g, x, &self.0)
    }
}

#[derive(Clone)]
struct Gc(GcParams<f64>);

impl Parameterized<f64> for Gc {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<f64>)>) {
        let p = &self.0;
        for (n, t) in [
            ("context_kernel", &p.context_kernel),
            ("down", &p.down),
            ("down_bias", &p.down_bias),
            ("ln_gamma", &p.ln_gamma),
            ("ln_beta", &p.ln_beta),
            ("up", &p.up),
            ("up_bias", &p.up_bias),
        ] {
            out.push((join(prefix, n), t));
        }
    }
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<f64>)>) {
        let p = &mut self.0;
        for (n, t) in [
            ("context_kernel", &mut p.context_kernel),
            ("down", &mut p.down),
            ("down_bias", &mut p.down_bias),
            ("ln_gamma", &mut p.ln_gamma),
            ("ln_beta", &mut p.ln_beta),
            ("up", &mut p.up),
            ("up_bias", &mut p.up_bias),
        ] {
            out.push((join(prefix, n), t));
        }
    }
}

impl Model for Gc {
    fn forward_in<G: Ops<f64>>(&self, g: &mut G, x: &G::V) -> Result<G::V> {
        gc_block_in(g, x, &self.0)
    }
}

#[derive(Clone)]
struct LayerNorm {
    gamma: Tensor<f64>,
    beta: Tensor<f64>,
}

impl Parameterized<f64> for LayerNorm {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<f64>)>) {
        out.push((join(prefix, "gamma"), &self.gamma));
        out.push((join(prefix, "beta"), &self.beta));
    }
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<f64>)>) {
        out.push((join(prefix, "gamma"), &mut self.gamma));
        out.push((join(prefix, "beta"), &mut self.beta));
    }
}

impl Model for LayerNorm {
    fn forward_in<G: Ops<f64>>(&self, g: &mut G, x: &G::V) -> Result<G::V> {
        let gamma = g.param(&self.gamma);
        let beta = g.param(&self.beta);
        g.layer_norm_channels(x, &gamma, &beta, 1e-5)
    }
}

#[derive(Clone)]
struct Conv {
    spec: ConvSpec,
    weight: Tensor<f64>,
    bias: Tensor<f64>,
}

impl Parameterized<f64> for Conv {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<f64>)>) {
        out.push((join(prefix, "weight"), &self.weight));
        out.push((join(prefix, "bias"), &self.bias));
    }
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<f64>)>) {
        out.push((join(prefix, "weight"), &mut self.weight));
        out.push((join(prefix, "bias"), &mut self.bias));
    }
}

impl Model for Conv {
    fn forward_in<G: Ops<f64>>(&self, g: &mut G, x: &G::V) -> Result<G::V> {
        let w = g.param(&self.weight);
        let b = g.param(&self.bias);
        g.conv2d(x, &w, Some(&b), &self.spec)
    }
}

#[derive(Clone)]
struct DwSep(DwSepParams<f64>);

impl Parameterized<f64> for DwSep {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<f64>)>) {
        self.0.visit(prefix, out)
    }
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<f64>)>) {
        self.0.visit_mut(prefix, out)
    }
}

impl Model for DwSep {
    fn forward_in<G: Ops<f64>>(&self, g: &mut G, x: &G::V) -> Result<G::V> {
        dw_sep_conv_in(g, x, &self.0)
    }
}

#[derive(Clone)]
struct XBlock(XShuffleParams<f64>, XShuffleConfig);

impl Parameterized<f64> for XBlock {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<f64>)>) {
        self.0.visit(prefix, out)
    }
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<f64>)>) {
        self.0.visit_mut(prefix, out)
    }
}

impl Model for XBlock {
    fn forward_in<G: Ops<f64>>(&self, g: &mut G, x: &G::V) -> Result<G::V> {
        x_shuffle_block_in(g, x, &self.0, &self.1)
    }
}

/// SUSA parameters with every tensor randomised, so no gradient sits at a
/// symmetric point (unit gamma, zero bias).
fn random_susa(c: usize, init: &mut Initializer) -> Result<SusaParams<f64>> {
    let mut p = SusaParams::init(c, SusaBias { grouping: true, transform: true }, init)?;
    p.q_bias = Some(init.uniform(&[c], -0.5, 0.5)?);
    p.v_bias = Some(init.uniform(&[c], -0.5, 0.5)?);
    p.ln_gamma = init.uniform(&[c], 0.5, 1.5)?;
    p.ln_beta = init.uniform(&[c], -0.5, 0.5)?;
    Ok(p)
}

fn randomise_affines(p: &mut impl Parameterized<f64>, init: &mut Initializer) -> Result<()> {
    let mut slots = Vec::new();
    p.visit_mut("", &mut slots);
    for (name, t) in slots {
        if name.ends_with("scale") {
            *t = init.uniform(t.shape(), 0.5, 1.5)?;
        } else if name.ends_with("shift") || name.ends_with("bias") {
            *t = init.uniform(t.shape(), -0.5, 0.5)?;
        }
    }
    Ok(())
}

/// Runs every case of `target` on seeded fixtures (C <= 8, H, W <= 8).
pub fn run_target(target: GradTarget, seed: u64, tol: f64) -> Result<Vec<GradCase>> {
    if !(tol > 0.0) {
        return Err(Error::Usage(format!("tolerance must be positive, got {tol}")));
    }
    let init = &mut Initializer::new(seed);
    let mut out = Vec::new();
    match target {
        GradTarget::Susa => {
            let x = init.uniform(&[4, 6, 5], -1.0, 1.0)?;
            for axis in [SusaAxis::HWise, SusaAxis::WWise] {
                for fusion in [Fusion::Multiply, Fusion::Add] {
                    let m = Susa(random_susa(4, init)?, SusaConfig::new(axis, fusion, 4));
                    let label = format!("susa[{}, {:?}]", axis.label(), fusion);
                    out.extend(check_model(&label, &m, &x, tol, seed)?);
                }
            }
        }
        GradTarget::StripeContext => {
            let x = init.uniform(&[4, 6, 5], -1.0, 1.0)?;
            for axis in [SusaAxis::HWise, SusaAxis::WWise] {
                let m = Stripe(random_susa(4, init)?, axis);
                out.extend(check_model(&format!("stripe_context[{}]", axis.label()), &m, &x, tol, seed)?);
            }
        }
        GradTarget::UnidimTransform => {
            let ctx = init.uniform(&[4, 6, 1], -1.0, 1.0)?;
            let m = Unidim(random_susa(4, init)?);
            out.extend(check_model("unidim_transform", &m, &ctx, tol, seed)?);
        }
        GradTarget::GcBlock => {
            let x = init.uniform(&[8, 3, 3], -1.0, 1.0)?;
            let mut p = GcParams::init(8, 2, init)?;
            p.down_bias = init.uniform(&[4], -0.5, 0.5)?;
            p.up_bias = init.uniform(&[8], -0.5, 0.5)?;
            p.ln_gamma = init.uniform(&[4], 0.5, 1.5)?;
            p.ln_beta = init.uniform(&[4], -0.5, 0.5)?;
            out.extend(check_model("gc_block", &Gc(p), &x, tol, seed)?);
        }
        GradTarget::LayerNorm => {
            let x = init.uniform(&[3, 4], -1.0, 1.0)?;
            let m = LayerNorm { gamma: init.uniform(&[3], 0.5, 1.5)?, beta: init.uniform(&[3], -0.5, 0.5)? };
            out.extend(check_model("layer_norm_channels", &m, &x, tol, seed)?);
        }
        GradTarget::Conv => {
            let x = init.uniform(&[2, 5, 5], -1.0, 1.0)?;
            let spec = ConvSpec::standard(2, 3, 3, 1).with_bias(true);
            let m = Conv { spec, weight: init.kaiming(&spec.weight_shape())?, bias: init.uniform(&[3], -0.5, 0.5)? };
            out.extend(check_model("conv2d", &m, &x, tol, seed)?);
        }
        GradTarget::DwSep => {
            let x = init.uniform(&[3, 8, 8], -1.0, 1.0)?;
            for stride in [1, 2] {
                let mut p = DwSepParams::init(3, 6, stride, init)?;
                randomise_affines(&mut p, init)?;
                out.extend(check_model(&format!("dw_sep_conv[stride {stride}]"), &DwSep(p), &x, tol, seed)?);
            }
        }
        GradTarget::XBlock => {
            // SUSA sees half the channels; a two-channel LayerNorm is nearly
            // flat, so keep four per unit.
            let x = init.uniform(&[8, 6, 5], -1.0, 1.0)?;
            for order in [(SusaAxis::WWise, SusaAxis::HWise), (SusaAxis::HWise, SusaAxis::WWise)] {
                let mut p = XShuffleParams::init(8, SusaBias::default(), init)?;
                p.susa1 = random_susa(4, init)?;
                p.susa2 = random_susa(4, init)?;
                randomise_affines(&mut p.dw, init)?;
                let cfg = XShuffleConfig { order, fusion: Fusion::Multiply };
                let label = format!("x_shuffle_block[{},{}]", order.0.label(), order.1.label());
                out.extend(check_model(&label, &XBlock(p, cfg), &x, tol, seed)?);
            }
        }
    }
    Ok(out)
}
