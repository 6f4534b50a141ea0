/// Distance from the boundary used when a logistic value feeds the recurrence.
pub const PROB_CLAMP: f64 = 1e-12;

/// Logistic function `1 / (1 + exp(-y))`.
///
/// Evaluated in the branch that never exponentiates a positive number, and
/// pinned to the open interval so saturation never yields exactly 0 or 1.
pub fn inv_logit(y: f64) -> f64 {
    let v = if y >= 0.0 {
        1.0 / (1.0 + (-y).exp())
    } else {
        let e = y.exp();
        e / (1.0 + e)
    };
    v.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// `log(x / (1 - x))`.
pub fn logit(x: f64) -> f64 {
    (x / (1.0 - x)).ln()
}

/// Logistic value clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]`.
pub fn clamped_inv_logit(y: f64) -> f64 {
    inv_logit(y).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetry_point() {
        assert_eq!(inv_logit(0.0), 0.5);
    }

    #[test]
    fn saturates_without_overflow() {
        let hi = inv_logit(50.0);
        assert!(hi > 1.0 - 1e-15 && hi < 1.0, "{hi}");
        let lo = inv_logit(-50.0);
        assert!(lo > 0.0 && lo < 1e-15);
        for y in [710.0, 1e300, f64::MAX] {
            assert!(inv_logit(y) < 1.0);
            assert!(inv_logit(-y) > 0.0);
        }
    }

    #[test]
    fn logit_round_trip() {
        assert!((inv_logit(logit(0.2)) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn reflection() {
        for y in [-7.5, -1.0, -0.1, 0.3, 2.0, 11.0] {
            assert!((inv_logit(-y) - (1.0 - inv_logit(y))).abs() < 1e-15);
        }
    }

    #[test]
    fn clamp_bounds() {
        assert_eq!(clamped_inv_logit(100.0), 1.0 - PROB_CLAMP);
        assert_eq!(clamped_inv_logit(-100.0), PROB_CLAMP);
        assert_eq!(clamped_inv_logit(0.0), 0.5);
    }
}
