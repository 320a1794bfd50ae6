//! Binary model checkpoint. All integers and floats little-endian:
//!
//! ```text
//! magic "VDPDNNET" | u32 version (1) | u32 layer count
//! per layer, a u8 kind then:
//!   0 conv1d     u32 in, u32 out, u32 kernel, f64 weight[out*in*kernel], f64 bias[out]
//!   1 dense      u32 in, u32 out, f64 weight[out*in], f64 bias[out]
//!   2 batchnorm  u32 channels, f64 momentum, f64 eps, u8 affine_trainable,
//!                f64 gamma[c], beta[c], running_mean[c], running_var[c]
//!   3 activation u8 (0 identity, 1 tanh)
//! ```
//!
//! Loaded models are frozen; call `unfreeze` to keep training.

use std::io::{Read, Write};
use std::path::Path;

use super::{Activation, BatchNorm, Conv1d, Dense, Layer, Sequential};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"VDPDNNET";
const VERSION: u32 = 1;
/// Sanity bound on any single dimension read from a file.
const MAX_DIM: u32 = 1 << 20;

fn put_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    w.write_all(&(v as u32).to_le_bytes())?;
    Ok(())
}

fn put_f64s<W: Write>(w: &mut W, v: &[f64]) -> Result<()> {
    for x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_checkpoint<W: Write>(mut w: W, model: &Sequential) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    put_u32(&mut w, VERSION as usize)?;
    put_u32(&mut w, model.layers().len())?;
    for layer in model.layers() {
        match layer {
            Layer::Conv1d(c) => {
                w.write_all(&[0])?;
                put_u32(&mut w, c.in_channels)?;
                put_u32(&mut w, c.out_channels)?;
                put_u32(&mut w, c.kernel)?;
                put_f64s(&mut w, &c.weight)?;
                put_f64s(&mut w, &c.bias)?;
            }
            Layer::Dense(d) => {
                w.write_all(&[1])?;
                put_u32(&mut w, d.in_features)?;
                put_u32(&mut w, d.out_features)?;
                put_f64s(&mut w, &d.weight)?;
                put_f64s(&mut w, &d.bias)?;
            }
            Layer::BatchNorm(b) => {
                w.write_all(&[2])?;
                put_u32(&mut w, b.channels)?;
                put_f64s(&mut w, &[b.momentum, b.eps])?;
                w.write_all(&[b.affine_trainable as u8])?;
                for v in [&b.gamma, &b.beta, &b.running_mean, &b.running_var] {
                    put_f64s(&mut w, v)?;
                }
            }
            Layer::Activation(a) => {
                w.write_all(&[3, matches!(a, Activation::Tanh) as u8])?;
            }
        }
    }
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn u8(&mut self) -> Result<u8> {
        let mut b = [0u8; 1];
        self.inner.read_exact(&mut b)?;
        Ok(b[0])
    }

    fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.inner.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    fn dim(&mut self, what: &str) -> Result<usize> {
        let v = self.u32()?;
        if v == 0 || v > MAX_DIM {
            return Err(Error::Format(format!(
                "checkpoint {what} = {v} out of range"
            )));
        }
        Ok(v as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(n);
        let mut b = [0u8; 8];
        for _ in 0..n {
            self.inner.read_exact(&mut b)?;
            out.push(f64::from_le_bytes(b));
        }
        Ok(out)
    }
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<Sequential> {
    let mut r = Reader { inner: r };
    let mut magic = [0u8; 8];
    r.inner.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a model checkpoint".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let count = r.dim("layer count")?;
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let layer = match r.u8()? {
            0 => {
                let (i, o, k) = (
                    r.dim("in channels")?,
                    r.dim("out channels")?,
                    r.dim("kernel")?,
                );
                let mut c = Conv1d::zeros(i, o, k);
                c.weight = r.f64s(i * o * k)?;
                c.bias = r.f64s(o)?;
                Layer::Conv1d(c)
            }
            1 => {
                let (i, o) = (r.dim("in features")?, r.dim("out features")?);
                let mut d = Dense::zeros(i, o);
                d.weight = r.f64s(i * o)?;
                d.bias = r.f64s(o)?;
                Layer::Dense(d)
            }
            2 => {
                let c = r.dim("channels")?;
                let mut b = BatchNorm::new(c);
                let me = r.f64s(2)?;
                b.momentum = me[0];
                b.eps = me[1];
                if !(b.eps > 0.0) {
                    return Err(Error::Format(format!(
                        "batchnorm eps {} must be > 0",
                        b.eps
                    )));
                }
                b.affine_trainable = r.u8()? != 0;
                b.gamma = r.f64s(c)?;
                b.beta = r.f64s(c)?;
                b.running_mean = r.f64s(c)?;
                b.running_var = r.f64s(c)?;
                Layer::BatchNorm(b)
            }
            3 => Layer::Activation(match r.u8()? {
                0 => Activation::Identity,
                1 => Activation::Tanh,
                other => return Err(Error::Format(format!("unknown activation {other}"))),
            }),
            other => return Err(Error::Format(format!("unknown layer kind {other}"))),
        };
        layers.push(layer);
    }
    let mut model = Sequential::new(layers)?;
    model.freeze();
    Ok(model)
}

pub fn save_checkpoint(path: &Path, model: &Sequential) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, model)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Sequential> {
    let bytes = std::fs::read(path)?;
    read_checkpoint(bytes.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mixed_model() -> Sequential {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut bn = BatchNorm::new(3);
        bn.running_mean = vec![0.1, 0.2, 0.3];
        bn.running_var = vec![1.5, 2.5, 3.5];
        bn.affine_trainable = false;
        Sequential::new(vec![
            Layer::Conv1d(Conv1d::uniform(1, 3, 6, &mut rng)),
            Layer::BatchNorm(bn),
            Layer::Activation(Activation::Tanh),
            Layer::Dense(Dense::uniform(3, 2, &mut rng)),
            Layer::Activation(Activation::Identity),
        ])
        .unwrap()
    }

    #[test]
    fn round_trip() {
        let m = mixed_model();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &m).unwrap();
        let back = read_checkpoint(buf.as_slice()).unwrap();
        assert!(back.is_frozen());
        assert_eq!(back.layers(), m.layers());
        assert_eq!(back.checksum(), m.checksum());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.bin");
        let m = Sequential::surrogate(5);
        save_checkpoint(&p, &m).unwrap();
        assert_eq!(load_checkpoint(&p).unwrap().layers(), m.layers());
    }

    #[test]
    fn rejects_corruption() {
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &mixed_model()).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(
            read_checkpoint(bad.as_slice()),
            Err(Error::Format(_))
        ));
        assert!(read_checkpoint(&buf[..buf.len() - 3]).is_err());
        let mut kind = buf.clone();
        kind[16] = 9;
        assert!(matches!(
            read_checkpoint(kind.as_slice()),
            Err(Error::Format(_))
        ));
    }
}
