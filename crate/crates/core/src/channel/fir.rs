//! Linear responses of the DAC and driver stages.
//!
//! The default is a synthetic 31-tap linear-phase low-pass: a cos² magnitude
//! roll-off combined with a linear-in-dB tilt of -2 dB at the signal band
//! edge, with the cos² corner chosen so the combined response is 3 dB down at
//! 0.375 of the symbol rate. Measured responses can be loaded from a text file
//! holding one tap per line.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const DEFAULT_TAPS: usize = 31;
/// 3-dB bandwidth as a fraction of the symbol rate.
pub const DEFAULT_BANDWIDTH: f64 = 0.375;
/// Tilt (dB) reached at the signal band edge, `(1 + rolloff)/2` of the symbol rate.
pub const DEFAULT_TILT_DB: f64 = -2.0;
const BAND_EDGE: f64 = 0.625;

/// Real FIR taps applied with centred ("same") convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct FirResponse {
    pub taps: Vec<f64>,
}

impl FirResponse {
    pub fn new(taps: Vec<f64>) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::Empty("FIR response"));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::Format("non-finite FIR tap".into()));
        }
        Ok(Self { taps })
    }

    pub fn identity() -> Self {
        Self { taps: vec![1.0] }
    }

    pub fn is_identity(&self) -> bool {
        self.taps == [1.0]
    }

    /// Magnitude response at `f` given in units of the symbol rate (2 sps grid).
    pub fn magnitude(&self, f: f64) -> f64 {
        let centre = (self.taps.len() as f64 - 1.0) / 2.0;
        let w = 2.0 * PI * f / 2.0;
        let (re, im) = self
            .taps
            .iter()
            .enumerate()
            .fold((0.0, 0.0), |(re, im), (k, h)| {
                let phase = w * (k as f64 - centre);
                (re + h * phase.cos(), im - h * phase.sin())
            });
        (re * re + im * im).sqrt()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut taps = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let v: f64 = line.parse().map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                reason: format!("bad tap `{line}`: {e}"),
            })?;
            taps.push(v);
        }
        Self::new(taps)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.taps {
            let _ = writeln!(s, "{t:e}");
        }
        s
    }
}

fn target_db(f: f64, corner: f64) -> f64 {
    let c = (PI * f / (2.0 * corner)).cos().max(1e-6);
    20.0 * (c * c).log10() + DEFAULT_TILT_DB * f / BAND_EDGE
}

/// Parametric low-pass used for both the DAC and the driver when no measured
/// response is supplied.
pub fn default_response() -> FirResponse {
    // corner of the cos² part such that the full target is -3 dB at the bandwidth
    let (mut lo, mut hi) = (DEFAULT_BANDWIDTH, 4.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if target_db(DEFAULT_BANDWIDTH, mid) < -3.0103 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let corner = 0.5 * (lo + hi);

    // frequency sampling on a dense grid, Hamming window, unit DC gain
    const GRID: usize = 4096;
    let half = (DEFAULT_TAPS / 2) as isize;
    let mut taps: Vec<f64> = (-half..=half)
        .map(|n| {
            let mut acc = 0.0;
            for k in 0..GRID {
                // f in symbol-rate units over [0, 1) (Nyquist of the 2 sps grid)
                let f = (k as f64 + 0.5) / GRID as f64;
                let mag = if f < corner {
                    10f64.powf(target_db(f, corner) / 20.0)
                } else {
                    0.0
                };
                acc += mag * (PI * f * n as f64).cos();
            }
            acc / GRID as f64
        })
        .collect();
    let m = taps.len() as f64 - 1.0;
    for (k, t) in taps.iter_mut().enumerate() {
        *t *= 0.54 - 0.46 * (2.0 * PI * k as f64 / m).cos();
    }
    let dc: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= dc);
    FirResponse { taps }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_shape() {
        let h = default_response();
        assert_eq!(h.taps.len(), DEFAULT_TAPS);
        for k in 0..DEFAULT_TAPS {
            assert!((h.taps[k] - h.taps[DEFAULT_TAPS - 1 - k]).abs() < 1e-14);
        }
        assert!((h.magnitude(0.0) - 1.0).abs() < 1e-12);
        let db = |f| 20.0 * h.magnitude(f).log10();
        assert!(
            (db(DEFAULT_BANDWIDTH) + 3.0).abs() < 0.5,
            "{}",
            db(DEFAULT_BANDWIDTH)
        );
        // monotone decreasing across the signal band
        let mut prev = f64::INFINITY;
        for k in 0..=25 {
            let m = h.magnitude(k as f64 * 0.025);
            assert!(m < prev + 1e-9);
            prev = m;
        }
    }

    #[test]
    fn text_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("taps.txt");
        let h = default_response();
        std::fs::write(&p, format!("# dac\n{}\n", h.to_text())).unwrap();
        assert_eq!(FirResponse::load(&p).unwrap(), h);
        std::fs::write(&p, "0.5\nabc\n").unwrap();
        match FirResponse::load(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        std::fs::write(&p, "\n").unwrap();
        assert!(FirResponse::load(&p).is_err());
    }
}
