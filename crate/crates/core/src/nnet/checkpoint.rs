//! Binary model checkpoints.
//!
//! Layout (all integers `u32` little-endian, all reals `f64` little-endian):
//!
//! | offset | content                                   |
//! |--------|-------------------------------------------|
//! | 0      | 8-byte tag `b"UDPLMLP\0"`                  |
//! | 8      | format version (currently 1)              |
//! | 12     | hidden activation (0 = ReLU, 1 = identity)|
//! | 16     | encoder split                             |
//! | 20     | number of widths `n` (= layers + 1)       |
//! | 24     | `n` widths, input first                   |
//! | ...    | per layer: weights row-major `out × in`, then `out` biases |

use std::path::Path;

use crate::error::{Error, ParseErrorKind, Result};
use crate::linalg::Matrix;

use super::model::{Activation, Layer, MlpModel};

pub const CHECKPOINT_TAG: [u8; 8] = *b"UDPLMLP\0";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_model(model: &MlpModel) -> Vec<u8> {
    let dims = model.layer_dims();
    let mut out = Vec::with_capacity(24 + 4 * dims.len() + 8 * model.param_count());
    out.extend_from_slice(&CHECKPOINT_TAG);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let act: u32 = match model.activation() {
        Activation::Relu => 0,
        Activation::Identity => 1,
    };
    out.extend_from_slice(&act.to_le_bytes());
    out.extend_from_slice(&(model.encoder_split() as u32).to_le_bytes());
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for d in &dims {
        out.extend_from_slice(&(*d as u32).to_le_bytes());
    }
    for p in model.params() {
        for v in p {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Parse {
                path: self.path.to_path_buf(),
                offset: self.pos as u64,
                kind: ParseErrorKind::Truncated {
                    needed: (self.pos + n) as u64,
                    available: self.bytes.len() as u64,
                },
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn fail(&self, offset: usize, kind: ParseErrorKind) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            offset: offset as u64,
            kind,
        }
    }
}

/// Decodes a checkpoint produced by [`encode_model`]; `path` is only used in errors.
pub fn decode_model(bytes: &[u8], path: &Path) -> Result<MlpModel> {
    let mut r = Reader { bytes, pos: 0, path };
    let tag = r.take(8)?;
    if tag != CHECKPOINT_TAG {
        let found = u32::from_be_bytes(tag[..4].try_into().expect("4 bytes"));
        let expected = u32::from_be_bytes(CHECKPOINT_TAG[..4].try_into().expect("4 bytes"));
        return Err(r.fail(0, ParseErrorKind::BadMagic { expected, found }));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(r.fail(8, ParseErrorKind::UnsupportedVersion(version)));
    }
    let act = match r.u32()? {
        0 => Activation::Relu,
        1 => Activation::Identity,
        other => return Err(r.fail(12, ParseErrorKind::Malformed(format!("activation code {other}")))),
    };
    let split = r.u32()? as usize;
    let n = r.u32()? as usize;
    if !(2..=1024).contains(&n) {
        return Err(r.fail(20, ParseErrorKind::BadDimensions(format!("{n} layer widths"))));
    }
    let mut dims = Vec::with_capacity(n);
    for _ in 0..n {
        let at = r.pos;
        let d = r.u32()? as usize;
        if d == 0 {
            return Err(r.fail(at, ParseErrorKind::BadDimensions("zero width".into())));
        }
        dims.push(d);
    }
    let mut layers = Vec::with_capacity(n - 1);
    for w in dims.windows(2) {
        let (inp, outp) = (w[0], w[1]);
        let mut weights = Vec::with_capacity(inp * outp);
        for _ in 0..inp * outp {
            weights.push(r.f64()?);
        }
        let mut bias = Vec::with_capacity(outp);
        for _ in 0..outp {
            bias.push(r.f64()?);
        }
        layers.push(Layer {
            weights: Matrix::from_vec(outp, inp, weights),
            bias,
        });
    }
    if r.pos != bytes.len() {
        return Err(r.fail(r.pos, ParseErrorKind::Malformed("trailing bytes".into())));
    }
    if split > layers.len() {
        return Err(r.fail(16, ParseErrorKind::Malformed(format!("encoder split {split}"))));
    }
    MlpModel::from_layers(layers, act, split)
}

pub fn save_model(model: &MlpModel, path: &Path) -> Result<()> {
    std::fs::write(path, encode_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<MlpModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_bits() {
        let mut m = MlpModel::new(&[3, 7, 2]).unwrap().with_encoder_split(1).unwrap();
        m.init_params(42);
        let bytes = encode_model(&m);
        assert_eq!(&bytes[..8], b"UDPLMLP\0");
        assert_eq!(bytes.len(), 24 + 3 * 4 + 8 * m.param_count());
        let back = decode_model(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn corrupt_checkpoints_are_rejected() {
        let m = MlpModel::new(&[2, 2]).unwrap();
        let good = encode_model(&m);
        let p = Path::new("mem");

        let mut bad_tag = good.clone();
        bad_tag[0] = b'X';
        assert!(matches!(
            decode_model(&bad_tag, p),
            Err(Error::Parse { kind: ParseErrorKind::BadMagic { .. }, offset: 0, .. })
        ));

        let mut bad_version = good.clone();
        bad_version[8] = 9;
        assert!(matches!(
            decode_model(&bad_version, p),
            Err(Error::Parse { kind: ParseErrorKind::UnsupportedVersion(9), .. })
        ));

        let truncated = &good[..good.len() - 3];
        assert!(matches!(
            decode_model(truncated, p),
            Err(Error::Parse { kind: ParseErrorKind::Truncated { .. }, .. })
        ));
    }
}
