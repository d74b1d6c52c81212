//! Portable policy file: header, layer table, `f32` parameter arrays, and a
//! trailing SHA-256 of everything before it.
//!
//! ```text
//! magic "TERLPOL\0" | u32 version | u32 concepts | u32 layers
//! per layer: u32 in, u32 out, u32 ea_rank, u32 rl_rank
//! f32 data: base W, b per layer; EA B, A per layer; RL B, A per layer
//! [u8; 32] sha256
//! ```
//! All integers and floats are little-endian; matrices are row-major.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{AdapterSet, BaseLayer, BaseNetwork, LoraPair, PolicyDims, PolicyError};

pub const MAGIC: &[u8; 8] = b"TERLPOL\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a policy checkpoint")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint truncated")]
    Truncated,
    #[error("checksum mismatch")]
    Checksum,
    #[error("inconsistent layer table: {0}")]
    Layout(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_matrix(buf: &mut Vec<u8>, m: &DMatrix<f64>) {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            buf.extend_from_slice(&(m[(r, c)] as f32).to_le_bytes());
        }
    }
}

pub fn encode(adapters: &AdapterSet) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    put_u32(&mut buf, adapters.dims().concepts);
    put_u32(&mut buf, adapters.layer_count());
    for l in 0..adapters.layer_count() {
        let (out, inp) = adapters.ea[l].shape();
        put_u32(&mut buf, inp);
        put_u32(&mut buf, out);
        put_u32(&mut buf, adapters.ea[l].rank());
        put_u32(&mut buf, adapters.rl.get(l).map_or(0, LoraPair::rank));
    }
    for layer in adapters.base().layers() {
        put_matrix(&mut buf, &layer.weight);
        for b in layer.bias.iter() {
            buf.extend_from_slice(&(*b as f32).to_le_bytes());
        }
    }
    for pair in adapters.ea.iter().chain(&adapters.rl) {
        put_matrix(&mut buf, &pair.b);
        put_matrix(&mut buf, &pair.a);
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let s = self.bytes.get(self.pos..end).ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f32(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from(f32::from_le_bytes(self.take(4)?.try_into().unwrap())))
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>, CheckpointError> {
        let data = (0..rows * cols).map(|_| self.f32()).collect::<Result<Vec<_>, _>>()?;
        Ok(DMatrix::from_row_slice(rows, cols, &data))
    }
}

pub fn decode(bytes: &[u8]) -> Result<AdapterSet, CheckpointError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if bytes.len() < MAGIC.len() + 4 + 32 {
        return Err(CheckpointError::Truncated);
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    let mut r = Reader { bytes: body, pos: MAGIC.len() };
    let version = r.u32()? as u32;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    if Sha256::digest(body).as_slice() != digest {
        return Err(CheckpointError::Checksum);
    }
    let concepts = r.u32()?;
    let layers = r.u32()?;
    if layers != 3 {
        return Err(CheckpointError::Layout(format!("{layers} layers")));
    }
    let table = (0..layers)
        .map(|_| Ok([r.u32()?, r.u32()?, r.u32()?, r.u32()?]))
        .collect::<Result<Vec<_>, CheckpointError>>()?;
    let dims = PolicyDims {
        input: table[0][0],
        hidden: table[0][1],
        concepts,
    };
    let expected = dims.layer_shapes();
    let rl_rank = table[0][3];
    for (l, row) in table.iter().enumerate() {
        if (row[1], row[0]) != expected[l] || row[2] == 0 || row[3] != rl_rank {
            return Err(CheckpointError::Layout(format!("layer {l}")));
        }
    }
    let mut base_layers = Vec::with_capacity(layers);
    for row in &table {
        let weight = r.matrix(row[1], row[0])?;
        let bias = DVector::from_column_slice(r.matrix(row[1], 1)?.as_slice());
        base_layers.push(BaseLayer { weight, bias });
    }
    let mut read_pairs = |rank_col: usize| -> Result<Vec<LoraPair>, CheckpointError> {
        table
            .iter()
            .map(|row| {
                let b = r.matrix(row[1], row[rank_col])?;
                let a = r.matrix(row[rank_col], row[0])?;
                Ok(LoraPair::new(b, a)?)
            })
            .collect()
    };
    let ea = read_pairs(2)?;
    let rl = if rl_rank == 0 { Vec::new() } else { read_pairs(3)? };
    if r.pos != body.len() {
        return Err(CheckpointError::Layout("trailing bytes".into()));
    }
    let base = Arc::new(BaseNetwork::from_layers(dims, base_layers)?);
    Ok(AdapterSet::from_parts(base, ea, rl)?)
}

pub fn save(adapters: &AdapterSet, path: &Path) -> Result<(), CheckpointError> {
    std::fs::write(path, encode(adapters))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<AdapterSet, CheckpointError> {
    decode(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::ParamGroup;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn adapters(rl: usize) -> AdapterSet {
        let dims = PolicyDims {
            input: 5,
            hidden: 6,
            concepts: 3,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let base = Arc::new(BaseNetwork::init(dims, -0.5, &mut rng));
        AdapterSet::init(base, 2, rl, 0.1, 0.1, &mut rng)
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn round_trip_to_f32_precision() {
        for rl in [0, 2] {
            let a = adapters(rl);
            let back = decode(&encode(&a)).unwrap();
            assert_eq!(back.dims(), a.dims());
            assert_eq!(back.has_rl(), rl > 0);
            for g in [ParamGroup::Ea, ParamGroup::Rl] {
                assert!(max_abs_diff(&back.flatten(g), &a.flatten(g)) < 1e-6);
            }
            // a second trip is exact
            assert_eq!(encode(&back), encode(&decode(&encode(&back)).unwrap()));
        }
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = encode(&adapters(2));
        let mut flipped = bytes.clone();
        flipped[60] ^= 1;
        assert!(matches!(decode(&flipped), Err(CheckpointError::Checksum)));
        assert!(matches!(decode(&bytes[..bytes.len() - 5]), Err(CheckpointError::Checksum)));
        assert!(matches!(decode(b"nope"), Err(CheckpointError::BadMagic)));
        let mut v2 = bytes.clone();
        v2[8] = 2;
        assert!(matches!(decode(&v2), Err(CheckpointError::Version(2))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.bin");
        let a = adapters(2);
        save(&a, &path).unwrap();
        assert_eq!(encode(&load(&path).unwrap()), encode(&decode(&encode(&a)).unwrap()));
    }
}
