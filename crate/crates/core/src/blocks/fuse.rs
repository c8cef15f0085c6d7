use super::{dw_sep_conv_in, join, DwSepParams, Parameterized};
use crate::autograd::{Eager, Ops};
use crate::error::{Error, Result};
use crate::init::Initializer;
use crate::scalar::Scalar;
use crate::tensor::{ResizeMode, Tensor};

/// How input branch `j` reaches output branch `i` in a fusion module.
#[derive(Debug, Clone, PartialEq)]
pub enum FusePath<T> {
    Identity,
    /// Lower resolution to higher: dw-sep to the target width at the source
    /// resolution, then nearest upsampling.
    Up(DwSepParams<T>),
    /// Higher resolution to lower: one stride-2 dw-sep per octave, the width
    /// change happening on the last.
    Down(Vec<DwSepParams<T>>),
}

impl<T: Scalar> FusePath<T> {
    fn apply_in<G: Ops<T>>(&self, g: &mut G, x: &G::V, target_hw: (usize, usize)) -> Result<G::V> {
        match self {
            FusePath::Identity => Ok(x.clone()),
            FusePath::Up(p) => {
                let y = dw_sep_conv_in(g, x, p)?;
                g.resize(&y, target_hw, ResizeMode::Nearest)
            }
            FusePath::Down(chain) => {
                let mut y = x.clone();
                for p in chain {
                    y = dw_sep_conv_in(g, &y, p)?;
                }
                Ok(y)
            }
        }
    }
}

/// Cross-resolution exchange; `paths[i][j]` maps input `j` to output `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct FuseParams<T> {
    pub channels: Vec<usize>,
    pub paths: Vec<Vec<FusePath<T>>>,
}

impl<T: Scalar> FuseParams<T> {
    pub fn init(channels: &[usize], init: &mut Initializer) -> Result<Self> {
        let n = channels.len();
        let mut paths = Vec::with_capacity(n);
        for i in 0..n {
            let mut row = Vec::with_capacity(n);
            for j in 0..n {
                row.push(if i == j {
                    FusePath::Identity
                } else if j > i {
                    FusePath::Up(DwSepParams::init(channels[j], channels[i], 1, init)?)
                } else {
                    let steps = i - j;
                    let chain = (0..steps)
                        .map(|k| {
                            let out = if k + 1 == steps { channels[i] } else { channels[j] };
                            DwSepParams::init(channels[j], out, 2, init)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    FusePath::Down(chain)
                });
            }
            paths.push(row);
        }
        Ok(Self { channels: channels.to_vec(), paths })
    }
}

/// Checks that branch `b` has the declared width and that each branch halves
/// the previous one's extents. Returns the per-branch `(h, w)`.
fn check_branches(shapes: &[Vec<usize>], channels: &[usize]) -> Result<Vec<(usize, usize)>> {
    if shapes.len() != channels.len() {
        return Err(Error::Spec(format!("expected {} branches, got {}", channels.len(), shapes.len())));
    }
    let mut hws = Vec::with_capacity(shapes.len());
    for (b, (s, &c)) in shapes.iter().zip(channels).enumerate() {
        if s.len() != 3 || s[0] != c {
            return Err(Error::Spec(format!("branch {b} should be [{c}, H, W], got {s:?}")));
        }
        if let Some(&(ph, pw)) = hws.last() {
            if ph != 2 * s[1] || pw != 2 * s[2] {
                return Err(Error::Spec(format!(
                    "branch {b} is {}x{} but must be half of branch {} ({ph}x{pw})",
                    s[1],
                    s[2],
                    b - 1
                )));
            }
        }
        hws.push((s[1], s[2]));
    }
    Ok(hws)
}

pub fn fuse_branches_in<T: Scalar, G: Ops<T>>(g: &mut G, inputs: &[G::V], params: &FuseParams<T>) -> Result<Vec<G::V>> {
    let shapes: Vec<_> = inputs.iter().map(|x| g.shape(x)).collect();
    let hws = check_branches(&shapes, &params.channels)?;
    let mut outputs = Vec::with_capacity(inputs.len());
    for (i, row) in params.paths.iter().enumerate() {
        let mut acc: Option<G::V> = None;
        for (j, path) in row.iter().enumerate() {
            let term = path.apply_in(g, &inputs[j], hws[i])?;
            acc = Some(match acc {
                None => term,
                Some(a) => g.add(&a, &term)?,
            });
        }
        outputs.push(acc.expect("at least one branch"));
    }
    Ok(outputs)
}

/// Sums every branch mapped to each resolution. No activation follows.
pub fn fuse_branches<T: Scalar>(inputs: &[Tensor<T>], params: &FuseParams<T>) -> Result<Vec<Tensor<T>>> {
    fuse_branches_in(&mut Eager, inputs, params)
}

/// How an existing branch is carried into the next stage, or how the new
/// branch is grown.
#[derive(Debug, Clone, PartialEq)]
pub enum TransitionPath<T> {
    Identity,
    /// Width change at unchanged resolution (stride-1 dw-sep).
    Adapt(DwSepParams<T>),
    /// New half-resolution branch from the previous lowest (stride-2 dw-sep).
    New(DwSepParams<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionParams<T> {
    pub from: Vec<usize>,
    pub to: Vec<usize>,
    pub paths: Vec<TransitionPath<T>>,
}

impl<T: Scalar> TransitionParams<T> {
    /// `to` must extend `from` by exactly one branch.
    pub fn init(from: &[usize], to: &[usize], init: &mut Initializer) -> Result<Self> {
        if from.is_empty() || to.len() != from.len() + 1 {
            return Err(Error::Spec(format!(
                "a transition adds exactly one branch: {} -> {} branches",
                from.len(),
                to.len()
            )));
        }
        let mut paths = Vec::with_capacity(to.len());
        for (&cin, &cout) in from.iter().zip(to) {
            paths.push(if cin == cout {
                TransitionPath::Identity
            } else {
                TransitionPath::Adapt(DwSepParams::init(cin, cout, 1, init)?)
            });
        }
        let lowest = *from.last().expect("nonempty");
        paths.push(TransitionPath::New(DwSepParams::init(lowest, *to.last().expect("nonempty"), 2, init)?));
        Ok(Self { from: from.to_vec(), to: to.to_vec(), paths })
    }
}

pub fn transition_in<T: Scalar, G: Ops<T>>(
    g: &mut G,
    branches: &[G::V],
    params: &TransitionParams<T>,
) -> Result<Vec<G::V>> {
    let shapes: Vec<_> = branches.iter().map(|x| g.shape(x)).collect();
    check_branches(&shapes, &params.from)?;
    let mut out = Vec::with_capacity(params.paths.len());
    for (b, path) in params.paths.iter().enumerate() {
        out.push(match path {
            TransitionPath::Identity => branches[b].clone(),
            TransitionPath::Adapt(p) => dw_sep_conv_in(g, &branches[b], p)?,
            TransitionPath::New(p) => dw_sep_conv_in(g, branches.last().expect("nonempty"), p)?,
        });
    }
    Ok(out)
}

pub fn transition<T: Scalar>(branches: &[Tensor<T>], params: &TransitionParams<T>) -> Result<Vec<Tensor<T>>> {
    transition_in(&mut Eager, branches, params)
}

impl<T> Parameterized<T> for FuseParams<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        for (i, row) in self.paths.iter().enumerate() {
            for (j, path) in row.iter().enumerate() {
                let name = join(prefix, &format!("{j}_to_{i}"));
                match path {
                    FusePath::Identity => {}
                    FusePath::Up(p) => p.visit(&name, out),
                    FusePath::Down(chain) => {
                        for (k, p) in chain.iter().enumerate() {
                            p.visit(&join(&name, &format!("step{k}")), out);
                        }
                    }
                }
            }
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        for (i, row) in self.paths.iter_mut().enumerate() {
            for (j, path) in row.iter_mut().enumerate() {
                let name = join(prefix, &format!("{j}_to_{i}"));
                match path {
                    FusePath::Identity => {}
                    FusePath::Up(p) => p.visit_mut(&name, out),
                    FusePath::Down(chain) => {
                        for (k, p) in chain.iter_mut().enumerate() {
                            p.visit_mut(&join(&name, &format!("step{k}")), out);
                        }
                    }
                }
            }
        }
    }
}

impl<T> Parameterized<T> for TransitionParams<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        for (b, path) in self.paths.iter().enumerate() {
            if let TransitionPath::Adapt(p) | TransitionPath::New(p) = path {
                p.visit(&join(prefix, &format!("branch{b}")), out);
            }
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        for (b, path) in self.paths.iter_mut().enumerate() {
            if let TransitionPath::Adapt(p) | TransitionPath::New(p) = path {
                p.visit_mut(&join(prefix, &format!("branch{b}")), out);
            }
        }
    }
}
