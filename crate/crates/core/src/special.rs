//! Beta function through log-Gamma.

use crate::error::{Error, Result};

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// `B(a, b) = Γ(a)Γ(b)/Γ(a+b)` for `a, b > 0`.
pub fn beta_function(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(Error::BetaDomain { a, b });
    }
    Ok((ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn classical_values() {
        assert!((beta_function(1.0, 1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((beta_function(0.5, 0.5).unwrap() - PI).abs() < 1e-12 * PI);
        // B(x, 1−x) = π / sin(πx)
        let x = 0.3;
        let want = PI / (PI * x).sin();
        assert!((beta_function(x, 1.0 - x).unwrap() - want).abs() < 1e-12 * want);
        // B(1, x) = 1/x
        assert!((beta_function(1.0, 7.5).unwrap() - 1.0 / 7.5).abs() < 1e-14);
    }

    #[test]
    fn domain() {
        assert!(beta_function(0.0, 1.0).is_err());
        assert!(beta_function(1.0, -0.5).is_err());
        assert!(beta_function(f64::NAN, 1.0).is_err());
    }
}
