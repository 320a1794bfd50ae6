use std::f64::consts::PI;

use num_complex::Complex64;

use super::qam::SymbolFrame;
use crate::dsp;
use crate::error::{Error, Result};

/// Role of a waveform within the transmit chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaveRole {
    /// Pulse-shaped transmit signal.
    Shaped,
    /// Output of a pre-distorter.
    Predistorted,
    /// Noisy transmitter output.
    Received,
    Other,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexWaveform {
    pub samples: Vec<Complex64>,
    pub sps: usize,
    pub role: WaveRole,
}

impl ComplexWaveform {
    pub fn new(samples: Vec<Complex64>, sps: usize, role: WaveRole) -> Result<Self> {
        if sps == 0 {
            return Err(Error::invalid("sps", "must be at least 1"));
        }
        Ok(Self { samples, sps, role })
    }

    pub fn from_parts(re: &[f64], im: &[f64], sps: usize, role: WaveRole) -> Result<Self> {
        if re.len() != im.len() {
            return Err(Error::LengthMismatch {
                what: "I/Q tributaries",
                left: re.len(),
                right: im.len(),
            });
        }
        Self::new(dsp::join(re, im), sps, role)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_symbol_aligned(&self) -> bool {
        self.samples.len().is_multiple_of(self.sps)
    }

    pub fn real(&self) -> Vec<f64> {
        self.samples.iter().map(|c| c.re).collect()
    }

    pub fn imag(&self) -> Vec<f64> {
        self.samples.iter().map(|c| c.im).collect()
    }

    pub fn mean_power(&self) -> f64 {
        dsp::mean_power(&self.samples)
    }

    pub fn with_role(mut self, role: WaveRole) -> Self {
        self.role = role;
        self
    }
}

/// Truncated root-raised-cosine pulse sampled at `sps` samples per symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct RrcFilter {
    pub taps: Vec<f64>,
    pub rolloff: f64,
    pub sps: usize,
}

impl RrcFilter {
    pub fn standard() -> Self {
        rrc_taps(64, 0.25, 2).expect("static parameters are valid")
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|h| h * h).sum()
    }
}

/// Continuous RRC impulse response at `t` (in symbol periods), unnormalized.
fn rrc_impulse(t: f64, beta: f64) -> f64 {
    const SINGULAR_TOL: f64 = 1e-10;
    if t.abs() < SINGULAR_TOL {
        return 1.0 - beta + 4.0 * beta / PI;
    }
    let quarter = 1.0 / (4.0 * beta);
    if (t.abs() - quarter).abs() < SINGULAR_TOL {
        let a = PI / (4.0 * beta);
        return beta / 2f64.sqrt() * ((1.0 + 2.0 / PI) * a.sin() + (1.0 - 2.0 / PI) * a.cos());
    }
    let num = (PI * t * (1.0 - beta)).sin() + 4.0 * beta * t * (PI * t * (1.0 + beta)).cos();
    let den = PI * t * (1.0 - (4.0 * beta * t).powi(2));
    num / den
}

/// Unit-energy RRC taps centred on `(num_taps - 1) / 2`. Even lengths have no
/// centre tap: the peak sits between samples `num_taps/2 - 1` and `num_taps/2`.
pub fn rrc_taps(num_taps: usize, rolloff: f64, sps: usize) -> Result<RrcFilter> {
    if num_taps < 2 {
        return Err(Error::invalid("num_taps", "need at least 2 taps"));
    }
    if !(rolloff > 0.0 && rolloff <= 1.0) {
        return Err(Error::invalid(
            "rolloff",
            format!("{rolloff} outside (0, 1]"),
        ));
    }
    if sps == 0 {
        return Err(Error::invalid("sps", "must be at least 1"));
    }
    let centre = (num_taps as f64 - 1.0) / 2.0;
    let mut taps: Vec<f64> = (0..num_taps)
        .map(|k| rrc_impulse((k as f64 - centre) / sps as f64, rolloff))
        .collect();
    let norm = taps.iter().map(|h| h * h).sum::<f64>().sqrt();
    taps.iter_mut().for_each(|h| *h /= norm);
    Ok(RrcFilter { taps, rolloff, sps })
}

/// Zero-stuff to `filter.sps` and apply the pulse ("same" length output).
pub fn upsample_and_shape(frame: &SymbolFrame, filter: &RrcFilter) -> Result<ComplexWaveform> {
    if frame.is_empty() {
        return Err(Error::Empty("symbol frame"));
    }
    if filter.sps != 2 {
        return Err(Error::invalid(
            "sps",
            "pulse shaper runs at 2 samples per symbol",
        ));
    }
    let mut up = vec![Complex64::new(0.0, 0.0); frame.len() * filter.sps];
    for (n, s) in frame.symbols.iter().enumerate() {
        up[n * filter.sps] = *s;
    }
    let shaped = dsp::convolve_same_complex(&up, &filter.taps);
    ComplexWaveform::new(shaped, filter.sps, WaveRole::Shaped)
}

/// Sampling phase chosen by [`matched_filter_downsample`].
pub fn best_phase(filtered: &[Complex64], sps: usize) -> usize {
    (0..sps)
        .map(|p| {
            let power: f64 = filtered
                .iter()
                .skip(p)
                .step_by(sps)
                .map(|c| c.norm_sqr())
                .sum();
            (p, power)
        })
        .fold((0, f64::NEG_INFINITY), |best, cur| {
            if cur.1 > best.1 {
                cur
            } else {
                best
            }
        })
        .0
}

/// Matched filter, then keep one sample per symbol at the power-maximizing
/// phase. With the shaper's "same" convolution, symbol `n` of an undistorted
/// waveform lands at filtered sample `2n + 1`, so `floor(sample / sps)` is the
/// symbol index for either phase.
pub fn matched_filter_downsample(
    wave: &ComplexWaveform,
    filter: &RrcFilter,
) -> Result<Vec<Complex64>> {
    if wave.sps != 2 || filter.sps != 2 {
        return Err(Error::invalid(
            "sps",
            "matched filter expects 2 samples per symbol",
        ));
    }
    if wave.len() < filter.taps.len() {
        return Err(Error::LengthMismatch {
            what: "waveform shorter than matched filter",
            left: wave.len(),
            right: filter.taps.len(),
        });
    }
    let reversed: Vec<f64> = filter.taps.iter().rev().copied().collect();
    let filtered = dsp::convolve_same_complex(&wave.samples, &reversed);
    let phase = best_phase(&filtered, wave.sps);
    Ok(filtered.into_iter().skip(phase).step_by(wave.sps).collect())
}
