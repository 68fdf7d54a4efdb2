//! Binary network file.
//!
//! Layout, all integers little-endian:
//!
//! | field            | type                  |
//! |------------------|-----------------------|
//! | magic            | `b"TDNN"`             |
//! | version          | `u32`                 |
//! | layer count `L`  | `u32` (weight layers) |
//! | layer dims       | `u32 × (L + 1)`       |
//! | activation tags  | `u8` hidden, `u8` output |
//! | weights          | `f64 × Σ out·in`, layer order, row-major |
//! | biases           | `f64 × Σ out`, layer order |

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{Activation, Mlp, NnError, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"TDNN";
pub const CHECKPOINT_VERSION: u32 = 1;

const MAX_LAYERS: u32 = 1024;
const MAX_DIM: u32 = 1 << 20;

impl Mlp {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(self.layers.len() as u32).to_le_bytes())?;
        for &d in &self.dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        w.write_all(&[self.hidden.tag(), self.output.tag()])?;
        for layer in &self.layers {
            for v in &layer.weights {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        for layer in &self.layers {
            for v in &layer.biases {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(NnError::Checkpoint(format!("bad magic {magic:?}")));
        }
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(NnError::Checkpoint(format!(
                "unsupported version {version}"
            )));
        }
        let layer_count = read_u32(&mut r)?;
        if layer_count == 0 || layer_count > MAX_LAYERS {
            return Err(NnError::Checkpoint(format!(
                "implausible layer count {layer_count}"
            )));
        }
        let mut dims = Vec::with_capacity(layer_count as usize + 1);
        for _ in 0..=layer_count {
            let d = read_u32(&mut r)?;
            if d == 0 || d > MAX_DIM {
                return Err(NnError::Checkpoint(format!("implausible layer dim {d}")));
            }
            dims.push(d as usize);
        }
        let mut tags = [0u8; 2];
        read_exact(&mut r, &mut tags)?;
        let hidden = Activation::from_tag(tags[0])
            .ok_or_else(|| NnError::Checkpoint(format!("unknown activation tag {}", tags[0])))?;
        let output = Activation::from_tag(tags[1])
            .ok_or_else(|| NnError::Checkpoint(format!("unknown activation tag {}", tags[1])))?;

        let mut net = Mlp::zeros(&dims, hidden, output)?;
        for layer in &mut net.layers {
            for v in &mut layer.weights {
                *v = read_f64(&mut r)?;
            }
        }
        for layer in &mut net.layers {
            for v in &mut layer.biases {
                *v = read_f64(&mut r)?;
            }
        }
        Ok(net)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(16 + 4 * self.dims.len() + 8 * self.param_count());
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    /// Parses a complete checkpoint; trailing bytes are an error.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = bytes;
        let net = Self::read_from(&mut cursor)?;
        if !cursor.is_empty() {
            return Err(NnError::Checkpoint(format!(
                "{} trailing bytes after network data",
                cursor.len()
            )));
        }
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            NnError::Checkpoint("truncated file".into())
        } else {
            NnError::Io(e)
        }
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(f64::from_le_bytes(b))
}
