use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dsp;
use crate::error::{Error, Result};
use crate::signal::{ComplexWaveform, WaveRole};

/// Circular complex Gaussian noise at `snr_db` relative to the measured
/// waveform power. `snr_db = +inf` returns the input untouched.
pub fn add_awgn(wave: &ComplexWaveform, snr_db: f64, seed: u64) -> Result<ComplexWaveform> {
    let mut out = wave.clone().with_role(WaveRole::Received);
    if snr_db == f64::INFINITY {
        return Ok(out);
    }
    if !snr_db.is_finite() {
        return Err(Error::invalid("snr_db", "must be finite or +inf"));
    }
    let power = dsp::mean_power(&wave.samples);
    if !(power > 0.0 && power.is_finite()) {
        return Err(Error::ZeroPower);
    }
    let sigma = (power / 10f64.powf(snr_db / 10.0) / 2.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for s in out.samples.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *s += Complex64::new(sigma * re, sigma * im);
    }
    Ok(out)
}
