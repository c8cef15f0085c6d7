use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Channel reorganisations used by shuffle-style blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelReorg {
    SplitHalf,
    Concat,
    Shuffle { groups: usize },
}

/// Dispatches a [`ChannelReorg`]. `SplitHalf` and `Shuffle` take exactly one
/// input; `Concat` takes one or more.
pub fn channel_reorg<T: Scalar>(kind: ChannelReorg, inputs: &[Tensor<T>]) -> Result<Vec<Tensor<T>>> {
    let single = || {
        if inputs.len() == 1 {
            Ok(&inputs[0])
        } else {
            Err(Error::Usage(format!("{kind:?} takes one input, got {}", inputs.len())))
        }
    };
    match kind {
        ChannelReorg::SplitHalf => {
            let (a, b) = split_half(single()?)?;
            Ok(vec![a, b])
        }
        ChannelReorg::Concat => Ok(vec![concat_channels(inputs)?]),
        ChannelReorg::Shuffle { groups } => Ok(vec![shuffle_channels(single()?, groups)?]),
    }
}

fn plane_len<T: Scalar>(x: &Tensor<T>) -> usize {
    x.numel() / x.shape()[0]
}

/// Channels `[start, start + len)` of a `[C, ...]` tensor.
pub fn slice_channels<T: Scalar>(x: &Tensor<T>, start: usize, len: usize) -> Result<Tensor<T>> {
    let c = x.shape()[0];
    if len == 0 || start + len > c {
        return Err(Error::Dimension(format!(
            "channel slice [{start}, {}) out of range for {c} channels",
            start + len
        )));
    }
    let p = plane_len(x);
    let mut shape = x.shape().to_vec();
    shape[0] = len;
    Ok(Tensor::from_parts(shape, x.data()[start * p..(start + len) * p].to_vec()))
}

pub fn split_half<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
    let c = x.shape()[0];
    if !c.is_multiple_of(2) {
        return Err(Error::Spec(format!("cannot split {c} channels in half")));
    }
    Ok((slice_channels(x, 0, c / 2)?, slice_channels(x, c / 2, c / 2)?))
}

/// Stacks tensors along the channel axis; trailing extents must agree.
pub fn concat_channels<T: Scalar>(xs: &[Tensor<T>]) -> Result<Tensor<T>> {
    let first = xs.first().ok_or_else(|| Error::Usage("concat needs at least one tensor".into()))?;
    let tail = &first.shape()[1..];
    let mut c = 0;
    for x in xs {
        if &x.shape()[1..] != tail {
            return Err(Error::Dimension(format!("concat: trailing extents {:?} vs {:?}", &x.shape()[1..], tail)));
        }
        c += x.shape()[0];
    }
    let mut data = Vec::with_capacity(c * plane_len(first));
    for x in xs {
        data.extend_from_slice(x.data());
    }
    let mut shape = first.shape().to_vec();
    shape[0] = c;
    Ok(Tensor::from_parts(shape, data))
}

/// Source channel for each output channel of a shuffle: reshape `C` into
/// `(groups, C / groups)`, transpose, flatten.
pub(crate) fn shuffle_permutation(c: usize, groups: usize) -> Result<Vec<usize>> {
    if groups == 0 || !c.is_multiple_of(groups) {
        return Err(Error::Spec(format!("shuffle groups {groups} must divide {c} channels")));
    }
    let per = c / groups;
    Ok((0..c).map(|k| (k % groups) * per + k / groups).collect())
}

pub fn shuffle_channels<T: Scalar>(x: &Tensor<T>, groups: usize) -> Result<Tensor<T>> {
    let perm = shuffle_permutation(x.shape()[0], groups)?;
    let p = plane_len(x);
    let d = x.data();
    let mut data = Vec::with_capacity(x.numel());
    for &src in &perm {
        data.extend_from_slice(&d[src * p..(src + 1) * p]);
    }
    Ok(Tensor::from_parts(x.shape().to_vec(), data))
}
