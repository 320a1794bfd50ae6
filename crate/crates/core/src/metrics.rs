//! Symbol-domain figures of merit: NMSE, BMD-GMI and real-part histograms.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signal::{axis_level, axis_levels, BITS_PER_AXIS, BITS_PER_SYMBOL, LEVELS_PER_AXIS};

pub const NMSE_FLOOR_DB: f64 = -100.0;

/// `10 log10(sum |rx - tx|^2 / sum |tx|^2)`, floored at -100 dB.
pub fn nmse_db(tx: &[Complex64], rx: &[Complex64]) -> Result<f64> {
    if tx.is_empty() {
        return Err(Error::Empty("nmse input"));
    }
    if tx.len() != rx.len() {
        return Err(Error::LengthMismatch {
            what: "nmse tx vs rx",
            left: tx.len(),
            right: rx.len(),
        });
    }
    let err: f64 = tx.iter().zip(rx).map(|(t, r)| (r - t).norm_sqr()).sum();
    let sig: f64 = tx.iter().map(|t| t.norm_sqr()).sum();
    if sig == 0.0 {
        return Err(Error::ZeroPower);
    }
    if err == 0.0 {
        return Ok(NMSE_FLOOR_DB);
    }
    Ok((10.0 * (err / sig).log10()).max(NMSE_FLOOR_DB))
}

fn nearest_level(v: f64, levels: &[f64; LEVELS_PER_AXIS]) -> f64 {
    let step = levels[1] - levels[0];
    let idx = ((v - levels[0]) / step)
        .round()
        .clamp(0.0, (LEVELS_PER_AXIS - 1) as f64);
    levels[idx as usize]
}

fn ln_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `log2(1 + e^x)` without overflow.
fn log2_1p_exp(x: f64) -> f64 {
    if x > 30.0 {
        x / std::f64::consts::LN_2
    } else {
        x.exp().ln_1p() / std::f64::consts::LN_2
    }
}

/// Bit-metric-decoding GMI of 64-QAM in bits per symbol.
///
/// The auxiliary channel is circular Gaussian with variance equal to the mean
/// squared distance to hard decisions. LLRs are exact log-sum-exps over the
/// constellation; for the square Gray grid they factor per axis. The estimate
/// is clamped at zero, which a badly distorted link can otherwise undershoot.
pub fn gmi_bits(tx_bits: &[u8], rx: &[Complex64]) -> Result<f64> {
    if rx.is_empty() {
        return Err(Error::Empty("gmi input"));
    }
    if tx_bits.len() != rx.len() * BITS_PER_SYMBOL {
        return Err(Error::LengthMismatch {
            what: "gmi bits vs symbols",
            left: tx_bits.len(),
            right: rx.len() * BITS_PER_SYMBOL,
        });
    }
    let levels = axis_levels();
    let sigma2 = rx
        .iter()
        .map(|r| {
            let d = Complex64::new(nearest_level(r.re, &levels), nearest_level(r.im, &levels));
            (r - d).norm_sqr()
        })
        .sum::<f64>()
        / rx.len() as f64;
    if sigma2 == 0.0 {
        return Ok(BITS_PER_SYMBOL as f64);
    }
    // levels indexed by gray label, so bit tests read straight off the label
    let by_label: [f64; LEVELS_PER_AXIS] = std::array::from_fn(|g| axis_level(g as u8));
    let mut penalty = 0.0;
    for (n, r) in rx.iter().enumerate() {
        let bits = &tx_bits[n * BITS_PER_SYMBOL..(n + 1) * BITS_PER_SYMBOL];
        for (axis, v) in [r.re, r.im].into_iter().enumerate() {
            let metric: [f64; LEVELS_PER_AXIS] =
                std::array::from_fn(|g| -(v - by_label[g]).powi(2) / sigma2);
            for k in 0..BITS_PER_AXIS {
                let shift = BITS_PER_AXIS - 1 - k;
                let half = |b: usize| {
                    ln_sum_exp(
                        (0..LEVELS_PER_AXIS)
                            .filter(|g| (g >> shift) & 1 == b)
                            .map(|g| metric[g]),
                    )
                };
                let llr = half(0) - half(1);
                let b = bits[axis * BITS_PER_AXIS + k];
                penalty += log2_1p_exp(if b == 0 { -llr } else { llr });
            }
        }
    }
    Ok((BITS_PER_SYMBOL as f64 - penalty / rx.len() as f64).max(0.0))
}

/// Histogram of the real part of received symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

/// Half-width of the histogram range; the outer levels sit at 7/sqrt(42).
pub const HISTOGRAM_RANGE: f64 = 1.5;

impl Histogram {
    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    pub fn centre(&self, bin: usize) -> f64 {
        self.lo + (bin as f64 + 0.5) * self.bin_width()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn bin_of(&self, v: f64) -> usize {
        (((v - self.lo) / self.bin_width()).floor().max(0.0) as usize).min(self.counts.len() - 1)
    }

    /// Worst valley-to-peak ratio between neighbouring levels: for each pair,
    /// the lowest bin between the two level positions over the smaller of the
    /// two peaks (tallest bin within a quarter spacing of each level). Values
    /// below 0.5 mean all eight modes are resolvable.
    pub fn valley_to_peak(&self) -> f64 {
        let levels = axis_levels();
        let quarter = (levels[1] - levels[0]) / 4.0;
        let peak = |l: f64| -> u64 {
            (self.bin_of(l - quarter)..=self.bin_of(l + quarter))
                .map(|b| self.counts[b])
                .max()
                .unwrap_or(0)
        };
        let mut worst: f64 = 0.0;
        for w in levels.windows(2) {
            let valley = (self.bin_of(w[0])..=self.bin_of(w[1]))
                .map(|b| self.counts[b])
                .min()
                .unwrap_or(0);
            let p = peak(w[0]).min(peak(w[1]));
            let ratio = if p == 0 {
                1.0
            } else {
                valley as f64 / p as f64
            };
            worst = worst.max(ratio);
        }
        worst
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["bin_centre", "count"])?;
        for (b, c) in self.counts.iter().enumerate() {
            out.write_record([format!("{:.6}", self.centre(b)), c.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Inverse of [`write_csv`](Self::write_csv); the range is recovered from
    /// the bin centres.
    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rows = csv::Reader::from_reader(r);
        let mut centres = Vec::new();
        let mut counts = Vec::new();
        for rec in rows.records() {
            let rec = rec?;
            let field = |k: usize| {
                rec.get(k)
                    .ok_or_else(|| Error::Format(format!("short histogram row {rec:?}")))
            };
            let bad = || Error::Format(format!("bad histogram row {rec:?}"));
            centres.push(field(0)?.parse::<f64>().map_err(|_| bad())?);
            counts.push(field(1)?.parse::<u64>().map_err(|_| bad())?);
        }
        if counts.len() < LEVELS_PER_AXIS {
            return Err(Error::Format(format!(
                "histogram has {} bins",
                counts.len()
            )));
        }
        let w = (centres[counts.len() - 1] - centres[0]) / (counts.len() - 1) as f64;
        if !(w > 0.0) {
            return Err(Error::Format("histogram bin centres not increasing".into()));
        }
        Ok(Self {
            lo: centres[0] - w / 2.0,
            hi: centres[counts.len() - 1] + w / 2.0,
            counts,
        })
    }
}

/// Uniform bins over `[-HISTOGRAM_RANGE, HISTOGRAM_RANGE]`; samples outside
/// the range land in the end bins so every symbol is counted.
pub fn histogram_real(rx: &[Complex64], bins: usize) -> Result<Histogram> {
    if bins < LEVELS_PER_AXIS {
        return Err(Error::invalid(
            "bins",
            format!("{bins} < {LEVELS_PER_AXIS}"),
        ));
    }
    let mut h = Histogram {
        lo: -HISTOGRAM_RANGE,
        hi: HISTOGRAM_RANGE,
        counts: vec![0; bins],
    };
    for r in rx {
        let b = h.bin_of(r.re);
        h.counts[b] += 1;
    }
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DpdKind {
    None,
    Linear,
    VolterraIla,
    VolterraDla,
}

impl DpdKind {
    pub const ALL: [DpdKind; 4] = [
        DpdKind::None,
        DpdKind::Linear,
        DpdKind::VolterraIla,
        DpdKind::VolterraDla,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DpdKind::None => "none",
            DpdKind::Linear => "linear",
            DpdKind::VolterraIla => "volterra_ila",
            DpdKind::VolterraDla => "volterra_dla",
        }
    }
}

impl fmt::Display for DpdKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DpdKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(DpdKind::None),
            "linear" => Ok(DpdKind::Linear),
            "ila" | "volterra_ila" => Ok(DpdKind::VolterraIla),
            "dla" | "volterra_dla" => Ok(DpdKind::VolterraDla),
            other => Err(Error::UnknownMethod(other.to_string())),
        }
    }
}

/// One evaluated grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub backoff_db: f64,
    pub snr_db: f64,
    pub dpd: DpdKind,
    pub nmse_db: f64,
    pub gmi_bits: f64,
    pub train_seed: u64,
    pub eval_seed: u64,
    pub config_hash: String,
}
