//! QAM symbol generation, pulse shaping, matched filtering and alignment.

mod align;
mod io;
mod pulse;
mod qam;

pub use align::{align_and_scale, Alignment, MAX_DELAY};
pub use io::{read_waveform, write_waveform};
pub use pulse::{
    best_phase, matched_filter_downsample, rrc_taps, upsample_and_shape, ComplexWaveform,
    RrcFilter, WaveRole,
};
pub use qam::{
    axis_level, axis_levels, generate_qam_frame, Constellation, ConstellationId, SymbolFrame,
    BITS_PER_AXIS, BITS_PER_SYMBOL, LEVELS_PER_AXIS, ORDER,
};
