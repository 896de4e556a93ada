//! Binary model checkpoints plus a JSON sidecar.
//!
//! Layout (all little-endian):
//!
//! ```text
//! b"CFMF" | version: u32 | n: u64 | m: u64 | d: u64 | lambda: f64 | mu: f64 | seed: u64
//! P (n·d f64, row-major) | Q (m·d f64, row-major) | b (m f64) | c (n f64)
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorize::FactorModel;
use crate::linalg::FactorMatrix;

pub const MAGIC: &[u8; 4] = b"CFMF";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 * 6;

pub fn encode(model: &FactorModel) -> Vec<u8> {
    let (n, m, d) = (model.n_users(), model.n_items(), model.d());
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * ((n + m) * (d + 1)));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for v in [n as u64, m as u64, d as u64] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&model.lambda().to_le_bytes());
    out.extend_from_slice(&model.mu().to_le_bytes());
    out.extend_from_slice(&model.seed().to_le_bytes());
    let arrays: [&[f64]; 4] = [
        model.user_factors().as_slice(),
        model.item_factors().as_slice(),
        model.item_bias(),
        model.user_bias(),
    ];
    for x in arrays.into_iter().flatten() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl Reader<'_> {
    fn take(&mut self, k: usize) -> Result<&[u8]> {
        if self.buf.len() < k {
            return Err(Error::Checkpoint("truncated".into()));
        }
        let (head, tail) = self.buf.split_at(k);
        self.buf = tail;
        Ok(head)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, k: usize) -> Result<Vec<f64>> {
        let bytes = self.take(k.checked_mul(8).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn decode(bytes: &[u8]) -> Result<FactorModel> {
    let mut r = Reader { buf: bytes };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let n = r.u64()? as usize;
    let m = r.u64()? as usize;
    let d = r.u64()? as usize;
    let lambda = r.f64()?;
    let mu = r.f64()?;
    let seed = r.u64()?;
    let expected = n
        .checked_add(m)
        .and_then(|k| k.checked_mul(d + 1))
        .and_then(|k| k.checked_mul(8))
        .ok_or_else(|| Error::Checkpoint("size overflow".into()))?;
    if r.buf.len() != expected {
        return Err(Error::Checkpoint(format!(
            "payload is {} bytes, header implies {expected}",
            r.buf.len()
        )));
    }
    let p = FactorMatrix::from_row_major(n, d, r.f64s(n * d)?).unwrap();
    let q = FactorMatrix::from_row_major(m, d, r.f64s(m * d)?).unwrap();
    let b = r.f64s(m)?;
    let c = r.f64s(n)?;
    FactorModel::from_parts(p, q, b, c, mu, lambda, seed)
}

/// Metadata written next to each checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub n_users: usize,
    pub n_items: usize,
    pub d: usize,
    pub lambda: f64,
    pub mu: f64,
    pub seed: u64,
    pub test_rmse: Option<f64>,
}

impl CheckpointMeta {
    pub fn of(model: &FactorModel, test_rmse: Option<f64>) -> Self {
        CheckpointMeta {
            format_version: FORMAT_VERSION,
            n_users: model.n_users(),
            n_items: model.n_items(),
            d: model.d(),
            lambda: model.lambda(),
            mu: model.mu(),
            seed: model.seed(),
            test_rmse,
        }
    }
}

/// Sidecar path for a checkpoint: `model.bin` → `model.json`.
pub fn sidecar_path(checkpoint: &Path) -> std::path::PathBuf {
    checkpoint.with_extension("json")
}

pub fn save(model: &FactorModel, test_rmse: Option<f64>, path: &Path) -> Result<()> {
    fs::write(path, encode(model)).map_err(|e| Error::io(path, e))?;
    let meta = serde_json::to_string_pretty(&CheckpointMeta::of(model, test_rmse))?;
    let side = sidecar_path(path);
    fs::write(&side, meta + "\n").map_err(|e| Error::io(&side, e))
}

pub fn load(path: &Path) -> Result<(FactorModel, Option<CheckpointMeta>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let model = decode(&bytes)?;
    let side = sidecar_path(path);
    let meta = match fs::read_to_string(&side) {
        Ok(text) => Some(serde_json::from_str(&text)?),
        Err(_) => None,
    };
    Ok((model, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> FactorModel {
        FactorModel::from_parts(
            FactorMatrix::from_rows(&[vec![0.5, -1.0], vec![2.0, 0.25], vec![0.0, 1.0]]).unwrap(),
            FactorMatrix::from_rows(&[vec![1.5, 0.0], vec![-0.1, 0.3]]).unwrap(),
            vec![0.1, -0.2],
            vec![0.3, 0.0, -0.4],
            3.5,
            0.1,
            42,
        )
        .unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&model());
        assert_eq!(&bytes[..4], b"CFMF");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[24..32].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(bytes[40..48].try_into().unwrap()), 3.5);
        // first user factor entry follows the header
        assert_eq!(f64::from_le_bytes(bytes[56..64].try_into().unwrap()), 0.5);
        assert_eq!(bytes.len(), HEADER_LEN + 8 * (3 * 2 + 2 * 2 + 2 + 3));
    }

    #[test]
    fn decode_inverts_encode() {
        assert_eq!(decode(&encode(&model())).unwrap(), model());
    }

    #[test]
    fn rejects_corruption() {
        let mut bytes = encode(&model());
        bytes.pop();
        assert!(decode(&bytes).is_err());
        let mut bytes = encode(&model());
        bytes[0] = b'X';
        assert!(decode(&bytes).is_err());
    }

    #[test]
    fn save_and_load_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save(&model(), Some(0.9), &path).unwrap();
        let (back, meta) = load(&path).unwrap();
        assert_eq!(back, model());
        assert_eq!(meta.unwrap().test_rmse, Some(0.9));
    }
}
