//! Sinusoidal IQ Mach-Zehnder field model with gain and phase imbalance on
//! the quadrature arm:
//! `E = sin(pi/2 * v_i/v_pi) + j (1 + eps) sin(pi/2 * v_q/v_pi) e^(j phi)`.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MzmParams {
    pub v_pi: f64,
    /// Amplitude ratio minus one (0.01 is a 1 % imbalance).
    pub gain_imbalance: f64,
    pub phase_imbalance_deg: f64,
}

impl Default for MzmParams {
    fn default() -> Self {
        Self {
            v_pi: 1.0,
            gain_imbalance: 0.01,
            phase_imbalance_deg: 1.0,
        }
    }
}

pub fn mzm_field(v_i: &[f64], v_q: &[f64], params: &MzmParams) -> Result<Vec<Complex64>> {
    if v_i.len() != v_q.len() {
        return Err(Error::LengthMismatch {
            what: "MZM drive tributaries",
            left: v_i.len(),
            right: v_q.len(),
        });
    }
    let rot = Complex64::from_polar(
        1.0 + params.gain_imbalance,
        params.phase_imbalance_deg.to_radians(),
    );
    let k = FRAC_PI_2 / params.v_pi;
    Ok(v_i
        .iter()
        .zip(v_q)
        .map(|(&a, &b)| Complex64::new((k * a).sin(), 0.0) + Complex64::i() * rot * (k * b).sin())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ideal() -> MzmParams {
        MzmParams {
            v_pi: 1.0,
            gain_imbalance: 0.0,
            phase_imbalance_deg: 0.0,
        }
    }

    #[test]
    fn zero_drive_zero_field() {
        let f = mzm_field(&[0.0], &[0.0], &ideal()).unwrap();
        assert_eq!(f[0], Complex64::new(0.0, 0.0));
        assert!(mzm_field(&[0.0], &[], &ideal()).is_err());
    }

    #[test]
    fn small_signal_is_linear() {
        // Taylor remainder: |sin a - a| / a <= a^2 / 6.
        let p = ideal();
        for &v in &[0.001, 0.01, 0.03, 0.049, 0.1, 0.2] {
            let f = mzm_field(&[v], &[-v], &p).unwrap()[0];
            let lin = Complex64::new(FRAC_PI_2 * v, -FRAC_PI_2 * v);
            let rel = (f - lin).norm() / lin.norm();
            let a = FRAC_PI_2 * v;
            assert!(rel <= a * a / 6.0 + 1e-15);
            if v < 0.05 {
                assert!(rel < 1e-3, "{v}: {rel}");
            }
        }
    }

    #[test]
    fn quadrature_leaks_into_inphase() {
        let p = MzmParams::default();
        let vq = 0.1;
        let f = mzm_field(&[0.0], &[vq], &p).unwrap()[0];
        let s = (FRAC_PI_2 * vq).sin();
        assert!((f.re.abs() - 1.01 * 1f64.to_radians().sin() * s).abs() < 1e-15);
        assert!((f.im - 1.01 * 1f64.to_radians().cos() * s).abs() < 1e-15);
    }
}
