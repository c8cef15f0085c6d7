use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed-form MACs of standard, separable and SUSA mixing at one shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostComparison {
    pub c: u64,
    pub h: u64,
    pub w: u64,
    /// Dense 3x3, C -> C: `9 C^2 H W`.
    pub standard_3x3: u64,
    /// Depthwise 3x3 then pointwise: `9 C H W + C^2 H W`.
    pub dw_sep_3x3: u64,
    /// `C^2 H W`.
    pub pointwise: u64,
    pub pointwise_pair: u64,
    /// H-wise unit: grouping kernel with bias over W, transform over H.
    pub susa_h: u64,
    pub susa_w: u64,
    pub susa_pair: u64,
    /// Parameter-free inner and fusion products of both units, `4 C H W`.
    pub susa_pair_products: u64,
    /// `1 - dw_sep / standard`.
    pub dw_sep_reduction: f64,
    /// `susa_pair / pointwise_pair`.
    pub susa_pair_ratio: f64,
    /// Same ratio with the parameter-free products charged to SUSA.
    pub susa_pair_ratio_with_products: f64,
}

pub fn cost_compare(c: usize, h: usize, w: usize) -> Result<CostComparison> {
    if c == 0 || h == 0 || w == 0 {
        return Err(Error::Spec(format!("cost comparison needs positive C, H, W, got {c}, {h}, {w}")));
    }
    let (c, h, w) = (c as u64, h as u64, w as u64);
    let hw = h * w;
    let standard_3x3 = 9 * c * c * hw;
    let dw_sep_3x3 = 9 * c * hw + c * c * hw;
    let pointwise = c * c * hw;
    let susa_h = 2 * c * w + c * c * h;
    let susa_w = 2 * c * h + c * c * w;
    let susa_pair = susa_h + susa_w;
    let susa_pair_products = 4 * c * hw;
    let pointwise_pair = 2 * pointwise;
    Ok(CostComparison {
        c,
        h,
        w,
        standard_3x3,
        dw_sep_3x3,
        pointwise,
        pointwise_pair,
        susa_h,
        susa_w,
        susa_pair,
        susa_pair_products,
        dw_sep_reduction: 1.0 - dw_sep_3x3 as f64 / standard_3x3 as f64,
        susa_pair_ratio: susa_pair as f64 / pointwise_pair as f64,
        susa_pair_ratio_with_products: (susa_pair + susa_pair_products) as f64 / pointwise_pair as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_shapes() {
        let big = cost_compare(128, 64, 64).unwrap();
        assert!((big.dw_sep_reduction - (1.0 - 1.0 / 128.0 - 1.0 / 9.0)).abs() < 1e-12);
        let small = cost_compare(40, 64, 48).unwrap();
        assert!((small.susa_pair_ratio - 188_160.0 / 9_830_400.0).abs() < 1e-15);
        let unit = cost_compare(1, 1, 1).unwrap();
        assert!(cost_compare(0, 4, 4).is_err());
        assert!(unit.standard_3x3 >= 1 && unit.susa_pair_ratio.is_finite());
    }
}
