//! Explicit constants of the model-problem estimate.

/// `c2(ell, theta0) = theta0^2 + (3/2) ell^2 e^{2 ell theta0}`.
pub fn constant_c2(ell: f64, theta0: f64) -> f64 {
    theta0 * theta0 + 1.5 * ell * ell * (2.0 * ell * theta0).exp()
}

/// `c3(ell, theta0) = ell e^{2 ell theta0}`.
pub fn constant_c3(ell: f64, theta0: f64) -> f64 {
    ell * (2.0 * ell * theta0).exp()
}

/// `c4` with `c4^2 = 3 c2 + (k^2 + 1)(2 + 9 c3)`, independent of `theta0`.
pub fn c4_general(ell: f64, theta0: f64, k: f64) -> f64 {
    (3.0 * constant_c2(ell, theta0) + (k * k + 1.0) * (2.0 + 9.0 * constant_c3(ell, theta0))).sqrt()
}

/// `c4(ell, theta0, k)`: `sqrt(2 max(1, k^2))` when `theta0 = 0`, otherwise
/// the general formula.
pub fn constant_c4(ell: f64, theta0: f64, k: f64) -> f64 {
    if theta0 == 0.0 {
        (2.0 * (k * k).max(1.0)).sqrt()
    } else {
        c4_general(ell, theta0, k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    #[test]
    fn c2_values() {
        assert_eq!(constant_c2(1.0, 0.0), 1.5);
        assert!((constant_c2(1.0, 0.5) - (0.25 + 1.5 * E)).abs() < 1e-14);
        assert!(constant_c2(1e-3, 0.0) < constant_c2(1e-2, 0.0));
        assert!(constant_c2(1e-8, 0.0) < 1e-15);
    }

    #[test]
    fn c3_values() {
        assert_eq!(constant_c3(1.0, 0.0), 1.0);
        assert_eq!(constant_c3(2.0, 0.0), 2.0);
        assert!((constant_c3(1.0, 0.5) - E).abs() < 1e-15);
    }

    #[test]
    fn c4_values() {
        assert!((constant_c4(0.7, 0.0, 0.0) - 2.0_f64.sqrt()).abs() < 1e-15);
        assert!((constant_c4(3.0, 0.0, 2.0) - 8.0_f64.sqrt()).abs() < 1e-15);
        // c2 = 0.25 + 1.5e, c3 = e
        let expect = (3.0 * (0.25 + 1.5 * E) + 2.0 * (2.0 + 9.0 * E)).sqrt();
        assert!((constant_c4(1.0, 0.5, 1.0) - expect).abs() < 1e-13);
        assert!((constant_c4(1.0, 0.5, 1.0) - 8.11856).abs() < 1e-4);
    }
}
