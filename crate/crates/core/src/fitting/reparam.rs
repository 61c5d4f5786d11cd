/// Shrinkage bounded to `(0, rho_max)` through a scaled sigmoid of an
/// unbounded raw parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoReparam {
    pub raw: f64,
    pub rho_max: f64,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Keeps `sigmoid(raw)` away from exactly 0 or 1.
const LOGIT_CLAMP: f64 = 1e-12;

impl RhoReparam {
    pub fn new(raw: f64, rho_max: f64) -> Self {
        RhoReparam { raw, rho_max }
    }

    /// Raw parameter producing `rho`, clipped into the open interval.
    pub fn from_rho(rho: f64, rho_max: f64) -> Self {
        let p = (rho / rho_max).clamp(LOGIT_CLAMP, 1.0 - LOGIT_CLAMP);
        RhoReparam { raw: (p / (1.0 - p)).ln(), rho_max }
    }

    /// Starting point for unlocking the shrinkage: the prior, floored at
    /// 1% of `rho_max`.
    pub fn initial_for_prior(rho_prior: f64, rho_max: f64) -> Self {
        Self::from_rho(rho_prior.max(0.01 * rho_max), rho_max)
    }

    pub fn value(&self) -> f64 {
        self.rho_max * sigmoid(self.raw)
    }

    /// `d rho / d raw`.
    pub fn derivative(&self) -> f64 {
        let s = sigmoid(self.raw);
        self.rho_max * s * (1.0 - s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn round_trips_interior_values() {
        for rho in [0.05, 1.0, 3.0, 5.9] {
            assert!((RhoReparam::from_rho(rho, 6.0).value() - rho).abs() < 1e-12);
        }
    }

    #[test]
    fn initial_value_floors_at_one_percent() {
        assert!((RhoReparam::initial_for_prior(0.0, 6.0).value() - 0.06).abs() < 1e-12);
        assert!((RhoReparam::initial_for_prior(4.0, 6.0).value() - 4.0).abs() < 1e-12);
        let top = RhoReparam::initial_for_prior(9.0, 6.0);
        assert!(top.raw.is_finite() && top.value() < 6.0);
    }

    proptest! {
        #[test]
        fn value_is_bounded_and_increasing(raw in -30.0f64..30.0, rho_max in 0.1f64..20.0) {
            let r = RhoReparam::new(raw, rho_max);
            prop_assert!(r.value() > 0.0 && r.value() < rho_max);
            prop_assert!(r.derivative() > 0.0);
        }

        #[test]
        fn derivative_matches_finite_differences(raw in -5.0f64..5.0, rho_max in 0.5f64..10.0) {
            let h = 1e-5;
            let fd = (RhoReparam::new(raw + h, rho_max).value() - RhoReparam::new(raw - h, rho_max).value()) / (2.0 * h);
            let a = RhoReparam::new(raw, rho_max).derivative();
            prop_assert!((fd - a).abs() <= 1e-8 * a.abs(), "{} vs {}", fd, a);
        }
    }
}
