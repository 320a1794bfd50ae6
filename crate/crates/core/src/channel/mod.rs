//! Coherent transmitter model: DAC, driver amplifier, IQ Mach-Zehnder
//! modulator and AWGN, applied per tributary in that order.

mod converter;
mod fir;
mod mzm;
mod noise;
mod rapp;

pub use converter::{drive_scale, quantize, BackOff, Stage};
pub use fir::{default_response, FirResponse};
pub use mzm::{mzm_field, MzmParams};
pub use noise::add_awgn;
pub use rapp::{rapp_amplify, RappParams};

use num_complex::Complex64;

use crate::dsp;
use crate::error::{Error, Result};
use crate::signal::{ComplexWaveform, WaveRole};

/// DAC full scale, driver saturation voltage and MZM v_pi are all 1.
const V_REF: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    pub da_backoff_db: f64,
    pub dac_backoff_db: f64,
    pub mzm_backoff_db: f64,
    /// `f64::INFINITY` disables the noise source.
    pub snr_db: f64,
    pub dac_bits: u32,
    pub dac_response: FirResponse,
    pub da_response: FirResponse,
    pub mzm_gain_imbalance: f64,
    pub mzm_phase_imbalance_deg: f64,
    pub noise_seed: u64,
    /// Skip the quantizer and the Rapp stage and linearize the MZM sine.
    pub bypass_nonlinearities: bool,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            da_backoff_db: 5.0,
            dac_backoff_db: 10.0,
            mzm_backoff_db: 20.0,
            snr_db: 18.0,
            dac_bits: 8,
            dac_response: default_response(),
            da_response: default_response(),
            mzm_gain_imbalance: 0.01,
            mzm_phase_imbalance_deg: 1.0,
            noise_seed: 0,
            bypass_nonlinearities: false,
        }
    }
}

impl ChannelConfig {
    /// Every stage driven 40 dB below its reference with a 16-bit DAC; the
    /// cascade is then linear to well below -60 dB.
    pub fn linearized(mut self) -> Self {
        self.da_backoff_db = 40.0;
        self.dac_backoff_db = 40.0;
        self.mzm_backoff_db = 40.0;
        self.dac_bits = 16;
        self
    }

    pub fn noiseless(mut self) -> Self {
        self.snr_db = f64::INFINITY;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=16).contains(&self.dac_bits) {
            return Err(Error::invalid(
                "dac_bits",
                format!("{} outside [1, 16]", self.dac_bits),
            ));
        }
        for (name, v) in [
            ("da_backoff_db", self.da_backoff_db),
            ("dac_backoff_db", self.dac_backoff_db),
            ("mzm_backoff_db", self.mzm_backoff_db),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(name, "must be finite"));
            }
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::invalid("snr_db", "must be finite or +inf"));
        }
        if self.dac_response.taps.is_empty() || self.da_response.taps.is_empty() {
            return Err(Error::Empty("FIR response"));
        }
        Ok(())
    }

    pub fn mzm_params(&self) -> MzmParams {
        MzmParams {
            v_pi: V_REF,
            gain_imbalance: self.mzm_gain_imbalance,
            phase_imbalance_deg: self.mzm_phase_imbalance_deg,
        }
    }
}

/// Blocks of the transmit cascade. The real transmitter always runs
/// [`Block::CASCADE`]; other orders exist only for regression tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Block {
    Dac,
    DriverAmp,
    Mzm,
    Awgn,
}

impl Block {
    pub(crate) const CASCADE: [Block; 4] = [Block::Dac, Block::DriverAmp, Block::Mzm, Block::Awgn];
}

/// Scale both tributaries by one gain so their joint per-tributary rms sits
/// at the back-off. A common gain keeps the I/Q amplitude ratio intact.
fn scale_pair(i: &mut [f64], q: &mut [f64], backoff: BackOff) -> Result<()> {
    let joint = ((dsp::rms(i).powi(2) + dsp::rms(q).powi(2)) / 2.0).sqrt();
    let g = drive_scale(joint, backoff, V_REF)?;
    i.iter_mut().chain(q.iter_mut()).for_each(|v| *v *= g);
    Ok(())
}

fn remove_mean(x: &mut [f64]) {
    let m = dsp::mean(x);
    x.iter_mut().for_each(|v| *v -= m);
}

fn dac(i: &[f64], q: &[f64], cfg: &ChannelConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    // AC-coupled inputs: DC is removed before the drive is set.
    let (mut vi, mut vq) = (i.to_vec(), q.to_vec());
    remove_mean(&mut vi);
    remove_mean(&mut vq);
    scale_pair(
        &mut vi,
        &mut vq,
        BackOff::new(cfg.dac_backoff_db, Stage::Dac)?,
    )?;
    let convert = |v: Vec<f64>| -> Result<Vec<f64>> {
        let v = if cfg.bypass_nonlinearities {
            v
        } else {
            quantize(&v, cfg.dac_bits, V_REF)?
        };
        Ok(dsp::convolve_same(&v, &cfg.dac_response.taps))
    };
    Ok((convert(vi)?, convert(vq)?))
}

fn driver(i: &[f64], q: &[f64], cfg: &ChannelConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    // The drive gain commutes with the linear response; it is set from the
    // rms reaching the Rapp stage, which is the v_in of the back-off.
    let mut vi = dsp::convolve_same(i, &cfg.da_response.taps);
    let mut vq = dsp::convolve_same(q, &cfg.da_response.taps);
    scale_pair(
        &mut vi,
        &mut vq,
        BackOff::new(cfg.da_backoff_db, Stage::DriverAmp)?,
    )?;
    if cfg.bypass_nonlinearities {
        return Ok((vi, vq));
    }
    let rapp = RappParams::new(V_REF)?;
    Ok((rapp_amplify(&vi, rapp), rapp_amplify(&vq, rapp)))
}

fn mzm(i: &[f64], q: &[f64], cfg: &ChannelConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let (mut vi, mut vq) = (i.to_vec(), q.to_vec());
    scale_pair(
        &mut vi,
        &mut vq,
        BackOff::new(cfg.mzm_backoff_db, Stage::Mzm)?,
    )?;
    if cfg.bypass_nonlinearities {
        let p = cfg.mzm_params();
        let k = std::f64::consts::FRAC_PI_2 / p.v_pi;
        let rot = Complex64::from_polar(1.0 + p.gain_imbalance, p.phase_imbalance_deg.to_radians());
        let field: Vec<Complex64> = vi
            .iter()
            .zip(&vq)
            .map(|(&a, &b)| Complex64::new(k * a, 0.0) + Complex64::i() * rot * (k * b))
            .collect();
        return Ok(dsp::split(&field));
    }
    Ok(dsp::split(&mzm_field(&vi, &vq, &cfg.mzm_params())?))
}

pub(crate) fn run_blocks(
    z_i: &[f64],
    z_q: &[f64],
    cfg: &ChannelConfig,
    blocks: &[Block],
) -> Result<ComplexWaveform> {
    if z_i.len() != z_q.len() {
        return Err(Error::LengthMismatch {
            what: "transmitter tributaries",
            left: z_i.len(),
            right: z_q.len(),
        });
    }
    cfg.validate()?;
    let (mut i, mut q) = (z_i.to_vec(), z_q.to_vec());
    for block in blocks {
        match block {
            Block::Dac => (i, q) = dac(&i, &q, cfg)?,
            Block::DriverAmp => (i, q) = driver(&i, &q, cfg)?,
            Block::Mzm => (i, q) = mzm(&i, &q, cfg)?,
            Block::Awgn => {
                let w = ComplexWaveform::from_parts(&i, &q, 2, WaveRole::Other)?;
                (i, q) = dsp::split(&add_awgn(&w, cfg.snr_db, cfg.noise_seed)?.samples);
            }
        }
    }
    ComplexWaveform::from_parts(&i, &q, 2, WaveRole::Received)
}

/// Full transmitter: DAC (AC coupling, drive to back-off,
/// quantization, linear response), driver (drive to back-off, linear
/// response, Rapp), then the MZM and the AWGN source.
pub fn transmitter(z_i: &[f64], z_q: &[f64], cfg: &ChannelConfig) -> Result<ComplexWaveform> {
    run_blocks(z_i, z_q, cfg, &Block::CASCADE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{generate_qam_frame, upsample_and_shape, RrcFilter};

    fn shaped(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let f = generate_qam_frame(n, seed).unwrap();
        let x = upsample_and_shape(&f, &RrcFilter::standard()).unwrap();
        (x.real(), x.imag())
    }

    fn nmse_db_ls(reference: &[num_complex::Complex64], y: &[num_complex::Complex64]) -> f64 {
        let a = crate::signal::align_and_scale(reference, y).unwrap();
        let r = a.reference(reference);
        let e: f64 = a
            .aligned
            .iter()
            .zip(r)
            .map(|(p, q)| (p - q).norm_sqr())
            .sum();
        let s: f64 = r.iter().map(|p| p.norm_sqr()).sum();
        10.0 * (e / s).log10()
    }

    fn ideal() -> ChannelConfig {
        ChannelConfig {
            dac_response: FirResponse::identity(),
            da_response: FirResponse::identity(),
            mzm_gain_imbalance: 0.0,
            mzm_phase_imbalance_deg: 0.0,
            ..ChannelConfig::default()
        }
        .linearized()
        .noiseless()
    }

    #[test]
    fn linear_cascade_is_proportional() {
        let (i, q) = shaped(4096, 1);
        let y = transmitter(&i, &q, &ideal()).unwrap();
        // the DAC input is AC coupled
        let (mi, mq) = (dsp::mean(&i), dsp::mean(&q));
        let x: Vec<_> = i
            .iter()
            .zip(&q)
            .map(|(a, b)| Complex64::new(a - mi, b - mq))
            .collect();
        let nmse = nmse_db_ls(&x, &y.samples);
        assert!(nmse < -60.0, "{nmse}");
    }

    #[test]
    fn superposition_without_nonlinearity() {
        // Every stage is linear up to its rms-dependent drive gain, so the
        // response to a sum is an exact two-gain combination of the parts.
        let cfg = ChannelConfig {
            bypass_nonlinearities: true,
            ..ChannelConfig::default()
        }
        .noiseless();
        let (a_i, a_q) = shaped(2048, 2);
        let (b_i, b_q) = shaped(2048, 3);
        let y_a = transmitter(&a_i, &a_q, &cfg).unwrap();
        let y_b = transmitter(&b_i, &b_q, &cfg).unwrap();
        let s_i: Vec<f64> = a_i.iter().zip(&b_i).map(|(x, y)| x + y).collect();
        let s_q: Vec<f64> = a_q.iter().zip(&b_q).map(|(x, y)| x + y).collect();
        let y_s = transmitter(&s_i, &s_q, &cfg).unwrap();
        let parts = |w: &ComplexWaveform| (w.real(), w.imag());
        let (ai, aq) = parts(&y_a);
        let (bi, bq) = parts(&y_b);
        let (si, sq) = parts(&y_s);
        // I carries only a_i/b_i; Q mixes into I through the phase imbalance,
        // so fit I on all four components and Q on its own pair.
        use faer::linalg::solvers::SolveLstsq;
        let fit = |cols: &[&[f64]], t: &[f64]| {
            let m = faer::Mat::<f64>::from_fn(t.len(), cols.len(), |r, c| cols[c][r]);
            let rhs = faer::Mat::<f64>::from_fn(t.len(), 1, |r, _| t[r]);
            let w = m.qr().solve_lstsq(&rhs);
            let pred = &m * &w;
            let e: f64 = (0..t.len()).map(|r| (pred[(r, 0)] - t[r]).powi(2)).sum();
            (e / t.iter().map(|v| v * v).sum::<f64>()).sqrt()
        };
        assert!(fit(&[&ai, &bi, &aq, &bq], &si) < 1e-10);
        assert!(fit(&[&aq, &bq], &sq) < 1e-10);
    }

    #[test]
    fn compression_at_low_backoff() {
        let (i, q) = shaped(1 << 14, 4);
        let cfg = ChannelConfig {
            da_backoff_db: 3.0,
            ..ChannelConfig::default()
        }
        .noiseless();
        let y = transmitter(&i, &q, &cfg).unwrap();
        let papr = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs())) / dsp::rms(v);
        assert!(papr(&y.real()) < papr(&i));
    }

    #[test]
    fn seeds_only_change_noise() {
        let (i, q) = shaped(2048, 5);
        let base = ChannelConfig::default();
        let a = transmitter(
            &i,
            &q,
            &ChannelConfig {
                noise_seed: 1,
                ..base.clone()
            },
        )
        .unwrap();
        let b = transmitter(
            &i,
            &q,
            &ChannelConfig {
                noise_seed: 2,
                ..base.clone()
            },
        )
        .unwrap();
        assert_ne!(a, b);
        let quiet = base.noiseless();
        let a = transmitter(
            &i,
            &q,
            &ChannelConfig {
                noise_seed: 1,
                ..quiet.clone()
            },
        )
        .unwrap();
        let b = transmitter(
            &i,
            &q,
            &ChannelConfig {
                noise_seed: 2,
                ..quiet
            },
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cascade_order_matters() {
        let (i, q) = shaped(2048, 6);
        let cfg = ChannelConfig {
            da_backoff_db: 3.0,
            snr_db: 25.0,
            ..ChannelConfig::default()
        };
        let reference = run_blocks(&i, &q, &cfg, &Block::CASCADE).unwrap();
        for a in 0..4 {
            for b in a + 1..4 {
                let mut order = Block::CASCADE;
                order.swap(a, b);
                let y = run_blocks(&i, &q, &cfg, &order).unwrap();
                let diff: f64 = y
                    .samples
                    .iter()
                    .zip(&reference.samples)
                    .map(|(p, r)| (p - r).norm_sqr())
                    .sum();
                assert!(diff > 1e-9, "swapping {a} and {b} left output unchanged");
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(transmitter(&[0.1, 0.2], &[0.1], &ChannelConfig::default()).is_err());
        let bad = ChannelConfig {
            dac_bits: 0,
            ..ChannelConfig::default()
        };
        assert!(transmitter(&[0.1, -0.2], &[0.1, 0.3], &bad).is_err());
    }
}
