use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::susa::Fusion;
use crate::tensor::{elementwise, Binary, Tensor};

/// Outcome of fusing two single-peak maps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FusionToy<T> {
    #[serde(skip)]
    pub fused: Tensor<T>,
    /// `(x, y)` of the first maximum in row-major order.
    pub peak: [usize; 2],
    /// Pixels at or above half the maximum.
    pub half_max_area: usize,
    #[serde(serialize_with = "fusion_label")]
    pub mode: Fusion,
    /// The fused map has no positive value (e.g. disjoint supports under
    /// multiplication); `fused` is then all zeros.
    #[serde(skip)]
    pub degenerate: bool,
}

fn fusion_label<S: Serializer>(mode: &Fusion, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(match mode {
        Fusion::Multiply => "mul",
        Fusion::Add => "add",
    })
}

impl<T: Scalar> FusionToy<T> {
    /// `{"peak":[x,y],"half_max_area":n,"mode":"mul"|"add"}`.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("toy result serializes")
    }
}

pub fn fusion_toy<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, mode: Fusion) -> Result<FusionToy<T>> {
    a.expect_rank(2, "fusion toy input")?;
    a.expect_same_shape(b)?;
    for (name, t) in [("a", a), ("b", b)] {
        if !(t.max_value() > T::zero()) {
            return Err(Error::Degenerate(format!("fusion toy input {name} has no positive value")));
        }
    }
    let kind = match mode {
        Fusion::Multiply => Binary::Mul,
        Fusion::Add => Binary::Add,
    };
    let raw = elementwise(kind, a, b)?;
    let w = a.shape()[1];
    let (best, peak) =
        raw.data().iter().enumerate().fold((0, raw.data()[0]), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    if !(peak > T::zero()) {
        return Ok(FusionToy {
            fused: raw.zeros_like(),
            peak: [best % w, best / w],
            half_max_area: 0,
            mode,
            degenerate: true,
        });
    }
    let fused = raw.scale(T::one() / peak);
    let half = T::of(0.5);
    let half_max_area = fused.data().iter().filter(|&&v| v >= half).count();
    Ok(FusionToy { fused, peak: [best % w, best / w], half_max_area, mode, degenerate: false })
}
