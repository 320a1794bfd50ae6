//! Rapp amplitude model with smoothness 2 and sign-symmetric extension:
//! `v_out = v_in / (1 + (|v_in| / v_sat)^4)^(1/4)`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RappParams {
    v_sat: f64,
}

impl RappParams {
    pub fn new(v_sat: f64) -> Result<Self> {
        if !(v_sat > 0.0 && v_sat.is_finite()) {
            return Err(Error::invalid("v_sat", format!("{v_sat} must be positive")));
        }
        Ok(Self { v_sat })
    }

    pub fn v_sat(&self) -> f64 {
        self.v_sat
    }

    #[inline]
    pub fn apply(&self, v: f64) -> f64 {
        let r = v / self.v_sat;
        let r2 = r * r;
        v / (1.0 + r2 * r2).sqrt().sqrt()
    }
}

pub fn rapp_amplify(v_in: &[f64], params: RappParams) -> Vec<f64> {
    v_in.iter().map(|&v| params.apply(v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn analytic_points() {
        let p = RappParams::new(1.7).unwrap();
        assert_eq!(p.apply(0.0), 0.0);
        assert!((p.apply(1.7) - 1.7 / 2f64.powf(0.25)).abs() < 1e-12);
        assert!((p.apply(1.7) / 1.7 - 0.840896).abs() < 1e-6);
        assert!((p.apply(170.0) - 1.7).abs() < 1e-4 * 1.7);
        assert!(RappParams::new(0.0).is_err());
        assert!(RappParams::new(-1.0).is_err());
    }

    proptest! {
        #[test]
        fn odd_bounded_monotone(a in 0.0f64..50.0, b in 0.0f64..50.0, vs in 0.1f64..5.0) {
            let p = RappParams::new(vs).unwrap();
            prop_assert_eq!(p.apply(-a), -p.apply(a));
            prop_assert!(p.apply(a).abs() <= vs);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(p.apply(lo) <= p.apply(hi));
        }
    }
}
