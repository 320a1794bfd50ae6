//! Little-endian waveform dump.
//!
//! ```text
//! offset  size  field
//! 0       8     magic  b"VDPDWAVE"
//! 8       4     sps    u32
//! 12      8     length u64 (complex samples)
//! 20      16*n  samples, interleaved re/im f64
//! ```

use std::io::{Read, Write};

use num_complex::Complex64;

use super::pulse::{ComplexWaveform, WaveRole};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"VDPDWAVE";

pub fn write_waveform<W: Write>(mut w: W, wave: &ComplexWaveform) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(wave.sps as u32).to_le_bytes())?;
    w.write_all(&(wave.len() as u64).to_le_bytes())?;
    for s in &wave.samples {
        w.write_all(&s.re.to_le_bytes())?;
        w.write_all(&s.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_waveform<R: Read>(mut r: R) -> Result<ComplexWaveform> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a waveform dump (bad magic)".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let sps = u32::from_le_bytes(b4) as usize;
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let len = u64::from_le_bytes(b8) as usize;
    let mut samples = Vec::with_capacity(len.min(1 << 24));
    for _ in 0..len {
        r.read_exact(&mut b8)?;
        let re = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        samples.push(Complex64::new(re, f64::from_le_bytes(b8)));
    }
    ComplexWaveform::new(samples, sps, WaveRole::Other)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let w = ComplexWaveform::new(vec![Complex64::new(1.5, -2.0)], 2, WaveRole::Shaped).unwrap();
        let mut buf = Vec::new();
        write_waveform(&mut buf, &w).unwrap();
        assert_eq!(buf.len(), 20 + 16);
        assert_eq!(&buf[..8], MAGIC);
        assert_eq!(&buf[8..12], &[2, 0, 0, 0]);
        assert_eq!(&buf[12..20], &[1, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&buf[20..28], &1.5f64.to_le_bytes());
        assert!(read_waveform(&b"NOTMAGIC0000"[..]).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip(v in proptest::collection::vec((-1e6f64..1e6, -1e6f64..1e6), 0..64), sps in 1usize..5) {
            let w = ComplexWaveform::new(v.iter().map(|&(a, b)| Complex64::new(a, b)).collect(), sps, WaveRole::Other).unwrap();
            let mut buf = Vec::new();
            write_waveform(&mut buf, &w).unwrap();
            let back = read_waveform(&buf[..]).unwrap();
            prop_assert_eq!(back, w);
        }
    }
}
