use serde::{Deserialize, Serialize};

use super::Heatmap;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Left/right joint pairs of the 17-joint COCO ordering.
pub const COCO_FLIP_PAIRS: [(usize, usize); 8] =
    [(1, 2), (3, 4), (5, 6), (7, 8), (9, 10), (11, 12), (13, 14), (15, 16)];

/// A decoded joint in heatmap pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub score: f64,
    /// False when the slice had no positive response.
    pub valid: bool,
}

/// Quarter-pixel step toward the strictly larger neighbour; none at a
/// border or on a tie.
fn quarter_shift(before: Option<f64>, after: Option<f64>) -> f64 {
    match (before, after) {
        (Some(b), Some(a)) if a > b => 0.25,
        (Some(b), Some(a)) if b > a => -0.25,
        _ => 0.0,
    }
}

/// Arg-max per joint refined by the quarter-pixel rule.
pub fn decode<T: Scalar>(hm: &Heatmap<T>) -> Vec<Keypoint> {
    let (h, w) = hm.hw();
    let data = hm.values().data();
    (0..hm.joints())
        .map(|k| {
            let s = &data[k * h * w..(k + 1) * h * w];
            let (best, peak) =
                s.iter().enumerate().fold((0, s[0]), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
            if !(peak > T::zero()) {
                return Keypoint { x: 0.0, y: 0.0, score: 0.0, valid: false };
            }
            let (i, j) = (best / w, best % w);
            let at = |ii: usize, jj: usize| s[ii * w + jj].to_f64_lossy();
            let dx =
                quarter_shift((j > 0 && j + 1 < w).then(|| at(i, j - 1)), (j > 0 && j + 1 < w).then(|| at(i, j + 1)));
            let dy =
                quarter_shift((i > 0 && i + 1 < h).then(|| at(i - 1, j)), (i > 0 && i + 1 < h).then(|| at(i + 1, j)));
            Keypoint { x: j as f64 + dx, y: i as f64 + dy, score: peak.to_f64_lossy(), valid: true }
        })
        .collect()
}

fn check_pairs(pairs: &[(usize, usize)], joints: usize) -> Result<()> {
    let mut seen = vec![false; joints];
    for (n, &(l, r)) in pairs.iter().enumerate() {
        for idx in [l, r] {
            if idx >= joints {
                return Err(Error::config(
                    format!("flip_pairs[{n}]"),
                    format!("joint {idx} out of range for {joints} joints"),
                ));
            }
            if std::mem::replace(&mut seen[idx], true) {
                return Err(Error::config(format!("flip_pairs[{n}]"), format!("joint {idx} appears twice")));
            }
        }
    }
    Ok(())
}

/// Mirrors `hm_flipped_input` along W, swaps each left/right pair, then
/// averages with `hm`. No sub-pixel realignment is applied.
pub fn flip_average<T: Scalar>(
    hm: &Heatmap<T>,
    hm_flipped_input: &Heatmap<T>,
    pairs: &[(usize, usize)],
) -> Result<Heatmap<T>> {
    if hm.values().shape() != hm_flipped_input.values().shape() {
        return Err(Error::Dimension(format!(
            "flip averaging needs equal shapes, got {:?} and {:?}",
            hm.values().shape(),
            hm_flipped_input.values().shape()
        )));
    }
    let k = hm.joints();
    check_pairs(pairs, k)?;
    let mut source: Vec<usize> = (0..k).collect();
    for &(l, r) in pairs {
        source.swap(l, r);
    }
    let (h, w) = hm.hw();
    let f = hm_flipped_input.values();
    let half = T::of(0.5);
    let out = Tensor::from_fn(vec![k, h, w], |idx| {
        let mirrored = f.at(&[source[idx[0]], idx[1], w - 1 - idx[2]]);
        (hm.values().at(idx) + mirrored) * half
    })?;
    Heatmap::new(out)
}
