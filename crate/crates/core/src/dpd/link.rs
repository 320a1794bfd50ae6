//! End-to-end link used for training data and evaluation: symbols, pulse
//! shaping, pre-distortion, transmitter, matched filter, alignment.

use num_complex::Complex64;

use super::DpdNetwork;
use crate::channel::{transmitter, ChannelConfig};
use crate::dsp;
use crate::error::Result;
use crate::metrics::{gmi_bits, nmse_db};
use crate::signal::{
    align_and_scale, generate_qam_frame, matched_filter_downsample, upsample_and_shape,
    ComplexWaveform, RrcFilter, SymbolFrame, BITS_PER_SYMBOL,
};

/// A symbol frame and its shaped 2-sps waveform.
#[derive(Debug, Clone)]
pub struct Frame {
    pub symbols: SymbolFrame,
    pub shaped: ComplexWaveform,
}

impl Frame {
    pub fn generate(num_symbols: usize, seed: u64, rrc: &RrcFilter) -> Result<Self> {
        let symbols = generate_qam_frame(num_symbols, seed)?;
        let shaped = upsample_and_shape(&symbols, rrc)?;
        Ok(Self { symbols, shaped })
    }
}

/// Send `z` through the transmitter with the given noise seed.
pub fn transmit(
    z: &ComplexWaveform,
    channel: &ChannelConfig,
    noise_seed: u64,
) -> Result<ComplexWaveform> {
    let cfg = ChannelConfig {
        noise_seed,
        ..channel.clone()
    };
    let (i, q) = dsp::split(&z.samples);
    transmitter(&i, &q, &cfg)
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub nmse_db: f64,
    pub gmi_bits: f64,
    /// Received symbols after alignment, paired with `reference`.
    pub aligned: Vec<Complex64>,
    pub reference: Vec<Complex64>,
}

/// Matched-filter `received`, align it onto the frame's symbols and score it.
pub fn score(frame: &Frame, received: &ComplexWaveform, rrc: &RrcFilter) -> Result<Evaluation> {
    let rx = matched_filter_downsample(received, rrc)?;
    let al = align_and_scale(&frame.symbols.symbols, &rx)?;
    let reference = al.reference(&frame.symbols.symbols).to_vec();
    let r = al.reference_range.clone();
    let bits = &frame.symbols.bits[r.start * BITS_PER_SYMBOL..r.end * BITS_PER_SYMBOL];
    Ok(Evaluation {
        nmse_db: nmse_db(&reference, &al.aligned)?,
        gmi_bits: gmi_bits(bits, &al.aligned)?,
        aligned: al.aligned,
        reference,
    })
}

/// Pre-distort the frame with `dpd`, transmit and score.
pub fn evaluate(
    dpd: &DpdNetwork,
    channel: &ChannelConfig,
    frame: &Frame,
    rrc: &RrcFilter,
    noise_seed: u64,
) -> Result<Evaluation> {
    let z = dpd.apply(&frame.shaped)?;
    let y = transmit(&z, channel, noise_seed)?;
    score(frame, &y, rrc)
}
