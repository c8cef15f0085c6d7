use crate::autograd::{Eager, Ops};
use crate::blocks::{
    fuse_branches_in, join, stem_in, transition_in, BranchBlock, ConvUnit, FuseParams, Parameterized, StemParams,
    TransitionParams,
};
use crate::error::{Error, Result};
use crate::init::Initializer;
use crate::scalar::Scalar;
use crate::tensor::{ConvSpec, Tensor};

use super::NetConfig;

/// One exchange module: per-branch block stacks followed by fusion.
#[derive(Debug, Clone, PartialEq)]
pub struct HrModule<T> {
    pub branches: Vec<Vec<BranchBlock<T>>>,
    pub fuse: FuseParams<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage<T> {
    pub transition: TransitionParams<T>,
    pub modules: Vec<HrModule<T>>,
}

/// An instantiated X-HRNet with a 1x1 heatmap head on the
/// highest-resolution branch.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    config: NetConfig,
    pub stem: StemParams<T>,
    pub stages: Vec<Stage<T>>,
    pub head: ConvUnit<T>,
}

/// Builds and initializes a network. Parameters are drawn in registry order
/// from one seeded stream.
pub fn build_network<T: Scalar>(config: &NetConfig, seed: u64) -> Result<Network<T>> {
    config.validate()?;
    let init = &mut Initializer::new(seed);
    let stem = StemParams::init(3, config.stem_channels, init)?;
    let xcfg = config.x_shuffle();
    let mut stages = Vec::with_capacity(config.stages.len());
    for (s, spec) in config.stages.iter().enumerate() {
        let widths = &spec.branch_channels;
        let transition = TransitionParams::init(&config.widths_before(s), widths, init)?;
        let mut modules = Vec::with_capacity(spec.num_modules);
        for _ in 0..spec.num_modules {
            let branches = widths
                .iter()
                .map(|&c| {
                    (0..spec.blocks_per_module)
                        .map(|_| BranchBlock::init(config.block_type, c, xcfg, config.susa_bias, init))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            let fuse = FuseParams::init(widths, init)?;
            modules.push(HrModule { branches, fuse });
        }
        stages.push(Stage { transition, modules });
    }
    let head = ConvUnit::plain(ConvSpec::pointwise(config.base_channels, config.num_joints).with_bias(true), init)?;
    Ok(Network { config: config.clone(), stem, stages, head })
}

impl<T: Scalar> Network<T> {
    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn forward_in<G: Ops<T>>(&self, g: &mut G, image: &G::V) -> Result<G::V> {
        let shape = g.shape(image);
        let stride = self.config.total_stride();
        if shape.len() != 3 || shape[0] != 3 {
            return Err(Error::Dimension(format!("network input must be [3, H, W], got {shape:?}")));
        }
        if shape[1] % stride != 0 || shape[2] % stride != 0 {
            return Err(Error::Dimension(format!(
                "input {}x{} is not divisible by the total stride {stride}",
                shape[1], shape[2]
            )));
        }
        let mut branches = vec![stem_in(g, image, &self.stem)?];
        for stage in &self.stages {
            branches = transition_in(g, &branches, &stage.transition)?;
            for module in &stage.modules {
                for (x, blocks) in branches.iter_mut().zip(&module.branches) {
                    for block in blocks {
                        *x = block.forward_in(g, x)?;
                    }
                }
                branches = fuse_branches_in(g, &branches, &module.fuse)?;
            }
        }
        self.head.forward_in(g, &branches[0])
    }

    /// Heatmaps `[K, H/4, W/4]` for a `[3, H, W]` image.
    pub fn forward(&self, image: &Tensor<T>) -> Result<Tensor<T>> {
        self.forward_in(&mut Eager, image)
    }

    pub fn param_count(&self) -> usize {
        self.named_parameters().iter().map(|(_, t)| t.numel()).sum()
    }

    /// Every parameter with its hierarchical name, in a fixed order.
    pub fn named_parameters(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        self.visit("", &mut out);
        out
    }

    pub fn named_parameters_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        self.visit_mut("", &mut out);
        out
    }
}

impl<T> Parameterized<T> for Network<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        self.stem.visit(&join(prefix, "stem"), out);
        for (s, stage) in self.stages.iter().enumerate() {
            let sp = join(prefix, &format!("stage{}", s + 1));
            stage.transition.visit(&join(&sp, "transition"), out);
            for (m, module) in stage.modules.iter().enumerate() {
                let mp = join(&sp, &format!("module{m}"));
                for (b, blocks) in module.branches.iter().enumerate() {
                    for (k, block) in blocks.iter().enumerate() {
                        block.visit(&format!("{mp}.branch{b}.block{k}"), out);
                    }
                }
                module.fuse.visit(&join(&mp, "fuse"), out);
            }
        }
        self.head.visit(&join(prefix, "head"), out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        self.stem.visit_mut(&join(prefix, "stem"), out);
        for (s, stage) in self.stages.iter_mut().enumerate() {
            let sp = join(prefix, &format!("stage{}", s + 1));
            stage.transition.visit_mut(&join(&sp, "transition"), out);
            for (m, module) in stage.modules.iter_mut().enumerate() {
                let mp = join(&sp, &format!("module{m}"));
                for (b, blocks) in module.branches.iter_mut().enumerate() {
                    for (k, block) in blocks.iter_mut().enumerate() {
                        block.visit_mut(&format!("{mp}.branch{b}.block{k}"), out);
                    }
                }
                module.fuse.visit_mut(&join(&mp, "fuse"), out);
            }
        }
        self.head.visit_mut(&join(prefix, "head"), out);
    }
}
