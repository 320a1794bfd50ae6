//! Drive-level scaling and the DAC quantizer.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Dac,
    DriverAmp,
    Mzm,
}

/// Back-off of one stage. Positive values mean the rms drive sits below the
/// reference voltage: `v_rms = v_ref * 10^(-BO/20)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackOff {
    pub value_db: f64,
    pub applies_to: Stage,
}

impl BackOff {
    pub fn new(value_db: f64, applies_to: Stage) -> Result<Self> {
        if !value_db.is_finite() {
            return Err(Error::invalid("back-off", "must be finite"));
        }
        Ok(Self {
            value_db,
            applies_to,
        })
    }

    pub fn target_rms(&self, v_ref: f64) -> f64 {
        v_ref * 10f64.powf(-self.value_db / 20.0)
    }
}

/// Gain that brings a signal of rms `signal_rms` to the configured back-off
/// relative to `v_ref` (saturation, full-scale or operating-range voltage).
pub fn drive_scale(signal_rms: f64, backoff: BackOff, v_ref: f64) -> Result<f64> {
    if !(signal_rms > 0.0) {
        return Err(Error::ZeroPower);
    }
    if !(v_ref > 0.0) {
        return Err(Error::invalid("v_ref", "must be positive"));
    }
    Ok(backoff.target_rms(v_ref) / signal_rms)
}

/// Mid-rise uniform quantizer with `2^bits` levels over `[-fs, fs]`,
/// clipping to the outermost levels `±fs (1 - 2^-bits)`.
pub fn quantize(wave: &[f64], bits: u32, full_scale: f64) -> Result<Vec<f64>> {
    if !(1..=16).contains(&bits) {
        return Err(Error::invalid("bits", format!("{bits} outside [1, 16]")));
    }
    if !(full_scale > 0.0) {
        return Err(Error::invalid("full_scale", "must be positive"));
    }
    let half_levels = (1i64 << (bits - 1)) as f64;
    let step = full_scale / half_levels;
    Ok(wave
        .iter()
        .map(|&v| {
            let idx = (v / step).floor().clamp(-half_levels, half_levels - 1.0);
            (idx + 0.5) * step
        })
        .collect())
}
