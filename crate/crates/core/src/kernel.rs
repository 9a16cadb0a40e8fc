//! HAC kernel functions.
//!
//! Both kernels have compact support on `[-1, 1]`, evaluate to one at the
//! origin, and are bounded — the conditions every estimator here relies on.
//! Disconnected pairs are fed `+inf` and get weight zero.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Kernel family used by the variance estimators.
///
/// For spatial arguments in dimension `d > 1` the kernel is applied as a
/// product across coordinates, see [`product_kernel_eval`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// Triangular taper `(1 - |x|) 1{|x| <= 1}`.
    #[default]
    Bartlett,
    /// Indicator `1{|x| <= 1}`.
    Uniform,
}

impl Kernel {
    /// Evaluate the kernel at a scalar argument.
    ///
    /// Returns 0 for any `|x| > 1`, including `x = +inf` (the convention for
    /// disconnected pairs in the network estimator).
    ///
    /// ```
    /// use nethac_core::Kernel;
    /// assert_eq!(Kernel::Bartlett.eval(0.5), 0.5);
    /// assert_eq!(Kernel::Bartlett.eval(f64::INFINITY), 0.0);
    /// ```
    #[inline]
    pub fn eval(self, x: f64) -> f64 {
        let ax = x.abs();
        if !(ax <= 1.0) {
            return 0.0;
        }
        match self {
            Kernel::Bartlett => 1.0 - ax,
            Kernel::Uniform => 1.0,
        }
    }
}

impl std::str::FromStr for Kernel {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bartlett" => Ok(Kernel::Bartlett),
            "uniform" => Ok(Kernel::Uniform),
            other => Err(CoreError::InvalidArgument(format!(
                "unknown kernel '{other}' (expected bartlett or uniform)"
            ))),
        }
    }
}

impl std::fmt::Display for Kernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Kernel::Bartlett => write!(f, "bartlett"),
            Kernel::Uniform => write!(f, "uniform"),
        }
    }
}

/// Product kernel over the coordinates of `v`: `prod_k K(v_k / h)`.
pub fn product_kernel_eval(kernel: Kernel, v: &[f64], h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(CoreError::NonPositiveBandwidth(h));
    }
    Ok(v.iter().map(|&x| kernel.eval(x / h)).product())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bartlett_pointwise() {
        assert_eq!(Kernel::Bartlett.eval(0.0), 1.0);
        assert_eq!(Kernel::Bartlett.eval(0.5), 0.5);
        assert_eq!(Kernel::Bartlett.eval(-0.5), 0.5);
        assert_eq!(Kernel::Bartlett.eval(1.2), 0.0);
        assert_eq!(Kernel::Bartlett.eval(f64::INFINITY), 0.0);
    }

    #[test]
    fn uniform_pointwise() {
        assert_eq!(Kernel::Uniform.eval(0.0), 1.0);
        assert_eq!(Kernel::Uniform.eval(1.0), 1.0);
        assert_eq!(Kernel::Uniform.eval(1.0001), 0.0);
        assert_eq!(Kernel::Uniform.eval(f64::INFINITY), 0.0);
    }

    #[test]
    fn product_kernel_examples() {
        assert_eq!(
            product_kernel_eval(Kernel::Bartlett, &[0.0, 0.0], 1.0).unwrap(),
            1.0
        );
        assert_eq!(
            product_kernel_eval(Kernel::Bartlett, &[0.5, 0.5], 1.0).unwrap(),
            0.25
        );
        assert_eq!(
            product_kernel_eval(Kernel::Bartlett, &[2.0, 0.0], 1.0).unwrap(),
            0.0
        );
        assert!(product_kernel_eval(Kernel::Bartlett, &[0.0], 0.0).is_err());
        assert!(product_kernel_eval(Kernel::Bartlett, &[0.0], -1.0).is_err());
    }

    #[test]
    fn kernel_conditions_on_grid() {
        // K(0) = 1, |K| <= 1, and K vanishes outside [-1, 1], on a dense grid.
        for kernel in [Kernel::Bartlett, Kernel::Uniform] {
            assert_eq!(kernel.eval(0.0), 1.0);
            for i in 0..10_000 {
                let x = -2.0 + 4.0 * (i as f64) / 9_999.0;
                let k = kernel.eval(x);
                assert!(k.abs() <= 1.0);
                if x.abs() > 1.0 {
                    assert_eq!(k, 0.0);
                }
            }
        }
    }
}
