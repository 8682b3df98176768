//! `model.bin` layout, all integers u32le:
//!
//! ```text
//! bytes 0..8    magic "SCABMODL"
//! bytes 8..12   format version (1)
//! bytes 12..16  reserved, zero
//! d_input, latent_dim, conditioning kind (0 none, 1 discrete, 2 continuous),
//! categories (0 unless discrete), output head (0 identity, 1 sigmoid),
//! hidden layer count H, then H hidden widths
//! parameter blocks as f32le: encoder layers, decoder layers, fusion;
//! per layer the row-major (inputs x outputs) weight then the bias
//! ```

use std::path::Path;

use super::model::{Conditioning, ModelShape, ModelState, OutputHead};
use crate::binio;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SCABMODL";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn save_checkpoint(state: &ModelState<f32>, path: &Path) -> Result<()> {
    let s = &state.shape;
    let mut bytes = Vec::with_capacity(64 + 4 * state.parameter_count());
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    bytes.extend(binio::encode_u32([CHECKPOINT_VERSION, 0]));
    let (kind, categories) = match s.conditioning {
        Conditioning::None => (0, 0),
        Conditioning::Discrete { categories } => (1, categories as u32),
        Conditioning::Continuous => (2, 0),
    };
    let head = match s.output {
        OutputHead::Identity => 0,
        OutputHead::Sigmoid => 1,
    };
    bytes.extend(binio::encode_u32([
        s.d_input as u32,
        s.latent_dim as u32,
        kind,
        categories,
        head,
        s.hidden.len() as u32,
    ]));
    bytes.extend(binio::encode_u32(s.hidden.iter().map(|&h| h as u32)));
    for block in state.param_blocks() {
        bytes.extend(binio::encode_f32(block.iter().copied()));
    }
    binio::write_bytes(path, &bytes)
}

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(self.path, "unexpected end of checkpoint"));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<ModelState<f32>> {
    let bytes = binio::read_bytes(path)?;
    let mut r = Reader {
        path,
        bytes: &bytes,
        pos: 0,
    };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::format(path, "bad checkpoint magic"));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(
            path,
            format!("unsupported checkpoint version {version}"),
        ));
    }
    r.u32()?;
    let d_input = r.u32()? as usize;
    let latent_dim = r.u32()? as usize;
    let kind = r.u32()?;
    let categories = r.u32()? as usize;
    let conditioning = match kind {
        0 => Conditioning::None,
        1 => Conditioning::Discrete { categories },
        2 => Conditioning::Continuous,
        other => {
            return Err(Error::format(
                path,
                format!("unknown conditioning kind {other}"),
            ))
        }
    };
    let output = match r.u32()? {
        0 => OutputHead::Identity,
        1 => OutputHead::Sigmoid,
        other => return Err(Error::format(path, format!("unknown output head {other}"))),
    };
    let layers = r.u32()? as usize;
    let hidden = (0..layers)
        .map(|_| r.u32().map(|h| h as usize))
        .collect::<Result<Vec<_>>>()?;
    let shape = ModelShape {
        d_input,
        latent_dim,
        hidden,
        conditioning,
        output,
    };
    let mut state = ModelState::zeros(shape).map_err(|e| Error::format(path, e.to_string()))?;
    for block in state.param_blocks_mut() {
        let raw = r.take(4 * block.len())?;
        for (dst, c) in block.iter_mut().zip(raw.chunks_exact(4)) {
            *dst = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::format(path, "trailing bytes after parameter blocks"));
    }
    Ok(state)
}
