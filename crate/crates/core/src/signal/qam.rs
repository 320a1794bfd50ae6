//! Gray-labelled square 64-QAM.
//!
//! Each axis carries 3 bits mapped with a reflected Gray code onto the eight
//! amplitudes {-7, -5, ..., 7}; the I-axis bits come first in the 6-bit label.
//! Points are scaled by 1/sqrt(42) so the constellation has unit mean power.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const BITS_PER_SYMBOL: usize = 6;
pub const BITS_PER_AXIS: usize = 3;
pub const LEVELS_PER_AXIS: usize = 8;
pub const ORDER: usize = 64;

/// Mean power of the unscaled {±1, ±3, ±5, ±7}² grid.
pub const RAW_MEAN_POWER: f64 = 42.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstellationId {
    Qam64Gray,
}

/// Amplitude of the axis level whose Gray label is `gray` (3 bits).
pub fn axis_level(gray: u8) -> f64 {
    let index = gray_decode(gray) as f64;
    (2.0 * index - 7.0) / RAW_MEAN_POWER.sqrt()
}

/// The eight normalized axis levels in ascending order.
pub fn axis_levels() -> [f64; LEVELS_PER_AXIS] {
    std::array::from_fn(|k| (2.0 * k as f64 - 7.0) / RAW_MEAN_POWER.sqrt())
}

fn gray_decode(mut g: u8) -> u8 {
    let mut b = g;
    while g > 0 {
        g >>= 1;
        b ^= g;
    }
    b
}

#[derive(Debug, Clone)]
pub struct Constellation {
    id: ConstellationId,
    /// Indexed by 6-bit label.
    points: [Complex64; ORDER],
}

impl Constellation {
    pub fn qam64_gray() -> Self {
        let points = std::array::from_fn(|label| {
            let label = label as u8;
            Complex64::new(
                axis_level(label >> BITS_PER_AXIS),
                axis_level(label & 0b111),
            )
        });
        Self {
            id: ConstellationId::Qam64Gray,
            points,
        }
    }

    pub fn id(&self) -> ConstellationId {
        self.id
    }

    pub fn points(&self) -> &[Complex64; ORDER] {
        &self.points
    }

    pub fn point(&self, label: u8) -> Complex64 {
        self.points[label as usize]
    }

    /// Bit `k` (0 = first transmitted bit) of `label`.
    pub fn label_bit(label: u8, k: usize) -> u8 {
        (label >> (BITS_PER_SYMBOL - 1 - k)) & 1
    }

    /// Label of the nearest constellation point. Square grid, so the decision
    /// separates per axis.
    pub fn decide(&self, r: Complex64) -> u8 {
        let nearest = |v: f64| -> u8 {
            let idx = ((v * RAW_MEAN_POWER.sqrt() + 7.0) / 2.0)
                .round()
                .clamp(0.0, 7.0) as u8;
            idx ^ (idx >> 1)
        };
        (nearest(r.re) << BITS_PER_AXIS) | nearest(r.im)
    }
}

/// Transmit symbols together with the bits that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolFrame {
    pub bits: Vec<u8>,
    pub symbols: Vec<Complex64>,
    pub constellation_id: ConstellationId,
}

impl SymbolFrame {
    pub fn from_labels(labels: &[u8]) -> Self {
        let c = Constellation::qam64_gray();
        let mut bits = Vec::with_capacity(labels.len() * BITS_PER_SYMBOL);
        for &l in labels {
            bits.extend((0..BITS_PER_SYMBOL).map(|k| Constellation::label_bit(l, k)));
        }
        Self {
            bits,
            symbols: labels.iter().map(|&l| c.point(l)).collect(),
            constellation_id: ConstellationId::Qam64Gray,
        }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.bits
            .chunks_exact(BITS_PER_SYMBOL)
            .map(|c| c.iter().fold(0u8, |acc, &b| (acc << 1) | b))
            .collect()
    }
}

/// Uniformly random Gray-labelled 64-QAM frame, reproducible from `seed`.
pub fn generate_qam_frame(num_symbols: usize, seed: u64) -> Result<SymbolFrame> {
    if num_symbols == 0 {
        return Err(Error::Empty("qam frame"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<u8> = (0..num_symbols)
        .map(|_| rng.random_range(0..ORDER as u8))
        .collect();
    Ok(SymbolFrame::from_labels(&labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unscaled_grid_power_is_42() {
        // brute force over the 8x8 integer grid
        let mut acc = 0.0;
        for i in (-7..=7).step_by(2) {
            for q in (-7..=7).step_by(2) {
                acc += (i * i + q * q) as f64;
            }
        }
        assert_eq!(acc / 64.0, RAW_MEAN_POWER);
    }

    #[test]
    fn constellation_unit_power_and_distinct() {
        let c = Constellation::qam64_gray();
        let p: f64 = c.points().iter().map(|s| s.norm_sqr()).sum::<f64>() / 64.0;
        assert!((p - 1.0).abs() < 1e-15);
        for a in 0..64 {
            for b in 0..a {
                assert!((c.points()[a] - c.points()[b]).norm() > 0.1);
            }
        }
    }

    #[test]
    fn axis_levels_are_odd_integers_over_sqrt42() {
        let s = 42f64.sqrt();
        let expected = [-7.0, -5.0, -3.0, -1.0, 1.0, 3.0, 5.0, 7.0].map(|v| v / s);
        assert_eq!(axis_levels(), expected);
    }

    #[test]
    fn neighbours_differ_in_one_bit() {
        let c = Constellation::qam64_gray();
        let spacing = 2.0 / 42f64.sqrt();
        for a in 0..64u8 {
            for b in 0..64u8 {
                let d = (c.point(a) - c.point(b)).norm();
                if (d - spacing).abs() < 1e-9 {
                    assert_eq!((a ^ b).count_ones(), 1, "{a:06b} {b:06b}");
                }
            }
        }
    }

    #[test]
    fn decide_inverts_mapping() {
        let c = Constellation::qam64_gray();
        for l in 0..64u8 {
            assert_eq!(c.decide(c.point(l) + Complex64::new(0.05, -0.05)), l);
        }
    }

    #[test]
    fn frame_generation() {
        assert!(matches!(generate_qam_frame(0, 1), Err(Error::Empty(_))));
        let f = generate_qam_frame(1 << 20, 3).unwrap();
        assert_eq!(f.bits.len(), 6 * f.symbols.len());
        let p = f.symbols.iter().map(|s| s.norm_sqr()).sum::<f64>() / f.len() as f64;
        assert!((p - 1.0).abs() < 0.01, "{p}");

        let mut seen: Vec<u8> = f.labels();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 64);

        let again = generate_qam_frame(1 << 20, 3).unwrap();
        assert_eq!(f, again);
        assert_ne!(f.bits, generate_qam_frame(1 << 20, 4).unwrap().bits);
    }
}
