use std::ops::Range;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const MAX_DELAY: isize = 256;

/// Received symbols re-timed and rescaled onto a reference.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    /// `scale * received[n + delay]` for every `n` in `reference_range`.
    pub aligned: Vec<Complex64>,
    pub reference_range: Range<usize>,
    pub scale: Complex64,
    pub delay: isize,
}

impl Alignment {
    /// The part of `reference` that `aligned` pairs with.
    pub fn reference<'a, T>(&self, reference: &'a [T]) -> &'a [T] {
        &reference[self.reference_range.clone()]
    }
}

fn overlap(ref_len: usize, rx_len: usize, delay: isize) -> Range<usize> {
    let start = (-delay).max(0) as usize;
    let end = (rx_len as isize - delay).clamp(0, ref_len as isize) as usize;
    start..end.max(start)
}

/// Find the integer delay (peak cross-correlation magnitude within ±256) and
/// the least-squares complex gain mapping `received` onto `reference`.
pub fn align_and_scale(reference: &[Complex64], received: &[Complex64]) -> Result<Alignment> {
    if reference.is_empty() || received.is_empty() {
        return Err(Error::Empty("alignment input"));
    }
    if received.iter().all(|c| c.norm_sqr() == 0.0) {
        return Err(Error::DegenerateScale);
    }
    let mut best = (0isize, f64::NEG_INFINITY);
    for delay in -MAX_DELAY..=MAX_DELAY {
        let range = overlap(reference.len(), received.len(), delay);
        if range.is_empty() {
            continue;
        }
        let corr: Complex64 = range
            .map(|n| reference[n].conj() * received[(n as isize + delay) as usize])
            .sum();
        if corr.norm() > best.1 {
            best = (delay, corr.norm());
        }
    }
    let delay = best.0;
    let range = overlap(reference.len(), received.len(), delay);
    let shifted =
        &received[(range.start as isize + delay) as usize..(range.end as isize + delay) as usize];
    let (num, den) = reference[range.clone()]
        .iter()
        .zip(shifted)
        .fold((Complex64::new(0.0, 0.0), 0.0), |(num, den), (r, x)| {
            (num + x.conj() * r, den + x.norm_sqr())
        });
    if den == 0.0 {
        return Err(Error::DegenerateScale);
    }
    let scale = num / den;
    Ok(Alignment {
        aligned: shifted.iter().map(|x| scale * x).collect(),
        reference_range: range,
        scale,
        delay,
    })
}
