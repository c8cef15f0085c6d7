use super::{Eager, Ops, Tape};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// A scalar-valued function of one tensor, written once against [`Ops`] so
/// it can be both evaluated and differentiated.
pub trait ScalarFn<T: Scalar> {
    /// Returns a value with a single element.
    fn eval<G: Ops<T>>(&self, g: &mut G, x: G::V) -> Result<G::V>;

    /// Plain evaluation.
    fn value(&self, x: &Tensor<T>) -> Result<T> {
        let mut g = Eager;
        let y = self.eval(&mut g, x.clone())?;
        if y.numel() != 1 {
            return Err(Error::Usage(format!("scalar function returned shape {:?}", y.shape())));
        }
        Ok(y.data()[0])
    }

    /// Reverse-mode gradient with respect to `x`.
    fn gradient(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let xv = tape.leaf(x);
        let y = self.eval(&mut tape, xv)?;
        let grads = tape.backward(y)?;
        Ok(grads.wrt(xv).cloned().unwrap_or_else(|| x.zeros_like()))
    }
}

/// Central differences `(f(x + eps e_i) - f(x - eps e_i)) / (2 eps)`.
pub fn finite_diff<T: Scalar>(f: impl Fn(&Tensor<T>) -> Result<T>, x: &Tensor<T>, eps: T) -> Result<Tensor<T>> {
    if !(eps > T::zero()) {
        return Err(Error::Usage("finite difference step must be positive".into()));
    }
    let mut buf = x.to_vec();
    let mut out = Vec::with_capacity(buf.len());
    for i in 0..buf.len() {
        let orig = buf[i];
        let (hi, lo) = (orig + eps, orig - eps);
        buf[i] = hi;
        let plus = f(&Tensor::new(x.shape().to_vec(), buf.clone())?)?;
        buf[i] = lo;
        let minus = f(&Tensor::new(x.shape().to_vec(), buf.clone())?)?;
        buf[i] = orig;
        // divide by the step actually taken after rounding
        out.push((plus - minus) / (hi - lo));
    }
    Tensor::new(x.shape().to_vec(), out)
}

/// Agreement between an analytic and a numeric gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport<T> {
    pub max_abs_err: T,
    pub max_rel_err: T,
    pub element_count: usize,
    pub tolerance: T,
    pub pass: bool,
}

/// Element-wise comparison; relative error uses the denominator
/// `max(|a|, |b|, 1e-8)`.
pub fn compare_gradients<T: Scalar>(analytic: &Tensor<T>, numeric: &Tensor<T>, tol: T) -> Result<GradCheckReport<T>> {
    analytic.expect_same_shape(numeric)?;
    let floor = T::of(1e-8);
    let mut max_abs = T::zero();
    let mut max_rel = T::zero();
    for (&a, &b) in analytic.data().iter().zip(numeric.data()) {
        let abs = (a - b).abs();
        let rel = abs / a.abs().max(b.abs()).max(floor);
        max_abs = max_abs.max(abs);
        max_rel = max_rel.max(rel);
    }
    Ok(GradCheckReport {
        max_abs_err: max_abs,
        max_rel_err: max_rel,
        element_count: analytic.numel(),
        tolerance: tol,
        pass: max_rel <= tol,
    })
}

/// [`grad_check_with`] at the default step `1e-5`.
pub fn grad_check<T: Scalar, F: ScalarFn<T>>(f: &F, x: &Tensor<T>, tol: T) -> Result<GradCheckReport<T>> {
    grad_check_with(f, x, tol, T::of(1e-5))
}

/// Compares the reverse-mode gradient of `f` at `x` with central
/// differences at step `eps`.
pub fn grad_check_with<T: Scalar, F: ScalarFn<T>>(f: &F, x: &Tensor<T>, tol: T, eps: T) -> Result<GradCheckReport<T>> {
    if !(tol > T::zero()) {
        return Err(Error::Usage("gradient check tolerance must be positive".into()));
    }
    let analytic = f.gradient(x)?;
    let numeric = finite_diff(|t| f.value(t), x, eps)?;
    compare_gradients(&analytic, &numeric, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::UnaryFn;

    struct Sum;
    impl ScalarFn<f64> for Sum {
        fn eval<G: Ops<f64>>(&self, g: &mut G, x: G::V) -> Result<G::V> {
            Ok(g.sum_all(&x))
        }
    }

    struct SumSquares;
    impl ScalarFn<f64> for SumSquares {
        fn eval<G: Ops<f64>>(&self, g: &mut G, x: G::V) -> Result<G::V> {
            let sq = g.mul(&x, &x)?;
            Ok(g.sum_all(&sq))
        }
    }

    /// `sum(x^3)` with a deliberately wrong derivative (`2x` instead of `3x^2`).
    struct WrongCube;
    impl ScalarFn<f64> for WrongCube {
        fn eval<G: Ops<f64>>(&self, g: &mut G, x: G::V) -> Result<G::V> {
            let cube = g.unary(&x, UnaryFn { name: "cube", f: |v| v * v * v, df: |v, _| 2.0 * v });
            Ok(g.sum_all(&cube))
        }
    }

    #[test]
    fn finite_diff_of_sum_is_ones() {
        let x = Tensor::new(vec![2, 2], vec![0.3, -1.0, 2.0, 7.0]).unwrap();
        let d = finite_diff(|t| Sum.value(t), &x, 1e-5).unwrap();
        assert!(d.data().iter().all(|v| (v - 1.0).abs() < 1e-9));
    }

    #[test]
    fn finite_diff_of_quadratic() {
        let x = Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let d = finite_diff(|t| SumSquares.value(t), &x, 1e-5).unwrap();
        for (got, want) in d.data().iter().zip([2.0, 4.0, 6.0]) {
            assert!((got - want).abs() < 1e-8);
        }
    }

    #[test]
    fn sum_passes_tightly() {
        let x = Tensor::new(vec![5], vec![0.1, 0.2, -0.3, 4.0, -2.5]).unwrap();
        let r = grad_check(&Sum, &x, 1e-6).unwrap();
        assert!(r.pass);
        assert!(r.max_rel_err <= 1e-10, "{r:?}");
    }

    #[test]
    fn wrong_rule_is_caught() {
        let x = Tensor::new(vec![3], vec![0.5, -1.5, 2.0]).unwrap();
        let r = grad_check(&WrongCube, &x, 1e-4).unwrap();
        assert!(!r.pass);
    }

    #[test]
    fn rejects_bad_step_and_tolerance() {
        let x = Tensor::new(vec![1], vec![1.0]).unwrap();
        assert!(finite_diff(|t| Sum.value(t), &x, 0.0).is_err());
        assert!(grad_check(&Sum, &x, 0.0).is_err());
    }
}
