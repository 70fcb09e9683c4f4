use super::special::beta_reg_split;
use crate::error::{Error, Result};

fn check(x: f64, d1: f64, d2: f64) -> Result<()> {
    if !(d1 > 0.0 && d2 > 0.0) || !d1.is_finite() || !d2.is_finite() {
        return Err(Error::NonpositiveDegreesOfFreedom(d1, d2));
    }
    if x.is_nan() {
        return Err(Error::NonFiniteInput);
    }
    Ok(())
}

/// CDF of the F(d1, d2) distribution, `I_{d1 x / (d1 x + d2)}(d1/2, d2/2)`.
pub fn f_cdf(x: f64, d1: f64, d2: f64) -> Result<f64> {
    check(x, d1, d2)?;
    if x <= 0.0 {
        return Ok(0.0);
    }
    if x == f64::INFINITY {
        return Ok(1.0);
    }
    let denom = d1 * x + d2;
    Ok(beta_reg_split(0.5 * d1, 0.5 * d2, d1 * x / denom, d2 / denom))
}

/// Upper tail `1 - f_cdf(x, d1, d2)`, evaluated directly.
pub fn f_sf(x: f64, d1: f64, d2: f64) -> Result<f64> {
    check(x, d1, d2)?;
    if x <= 0.0 {
        return Ok(1.0);
    }
    if x == f64::INFINITY {
        return Ok(0.0);
    }
    let denom = d1 * x + d2;
    Ok(beta_reg_split(0.5 * d2, 0.5 * d1, d2 / denom, d1 * x / denom))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_and_symmetric_point() {
        assert_eq!(f_cdf(0.0, 3.0, 7.0).unwrap(), 0.0);
        assert!((f_cdf(1.0, 1.0, 1.0).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(f_cdf(f64::INFINITY, 2.0, 2.0).unwrap(), 1.0);
    }

    #[test]
    fn two_two_closed_form() {
        // F(2, 2) has CDF x / (1 + x)
        for &x in &[0.01, 0.5, 1.0, 3.0, 250.0] {
            assert!((f_cdf(x, 2.0, 2.0).unwrap() - x / (1.0 + x)).abs() < 1e-14);
            assert!((f_sf(x, 2.0, 2.0).unwrap() - 1.0 / (1.0 + x)).abs() < 1e-14);
        }
    }

    #[test]
    fn chi_square_limit() {
        // F(1, d2) -> chi2(1) as d2 grows; the chi2(1) 95% point is 3.8415
        let v = f_cdf(3.8415, 1.0, 1e6).unwrap();
        assert!((v - 0.95).abs() < 1e-3, "{v}");
    }

    #[test]
    fn rejects_bad_dof() {
        assert!(matches!(
            f_cdf(1.0, 0.0, 1.0),
            Err(Error::NonpositiveDegreesOfFreedom(..))
        ));
        assert!(f_sf(1.0, 1.0, -2.0).is_err());
    }

    #[test]
    fn reciprocal_symmetry() {
        for &(x, d1, d2) in &[(0.3, 2.0, 9.0), (4.0, 1.0, 30.0), (1.7, 12.5, 0.8)] {
            let lhs = f_cdf(x, d1, d2).unwrap();
            let rhs = 1.0 - f_cdf(1.0 / x, d2, d1).unwrap();
            assert!((lhs - rhs).abs() < 1e-12);
            assert!((f_sf(x, d1, d2).unwrap() + lhs - 1.0).abs() < 1e-14);
        }
    }
}
