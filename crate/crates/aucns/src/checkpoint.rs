//! Binary model checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "AUCNSMF1"
//! num_users    u64
//! num_items    u64
//! dim          u64
//! seed         u64
//! config_hash  32 bytes (SHA-256)
//! user factors num_users * dim f64, row-major
//! item factors num_items * dim f64, row-major
//! ```

use std::path::Path;

use aucns_core::model::FactorModel;

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"AUCNSMF1";
const HEADER_LEN: usize = 8 + 4 * 8 + 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub config_hash: [u8; 32],
    pub model: FactorModel,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let m = &self.model;
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * (m.user_factors().len() + m.item_factors().len()));
        out.extend_from_slice(MAGIC);
        for v in [m.num_users() as u64, m.num_items() as u64, m.dim() as u64, self.seed] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.config_hash);
        for v in m.user_factors().iter().chain(m.item_factors()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        if bytes.len() < HEADER_LEN {
            return Err(format!("file is {} bytes, shorter than the header", bytes.len()));
        }
        if &bytes[..8] != MAGIC {
            return Err("bad magic".into());
        }
        let word = |k: usize| u64::from_le_bytes(bytes[8 + 8 * k..16 + 8 * k].try_into().unwrap());
        let (nu, ni, dim, seed) = (word(0) as usize, word(1) as usize, word(2) as usize, word(3));
        let mut config_hash = [0u8; 32];
        config_hash.copy_from_slice(&bytes[40..72]);
        let body = &bytes[HEADER_LEN..];
        let expected = nu
            .checked_add(ni)
            .and_then(|n| n.checked_mul(dim))
            .and_then(|n| n.checked_mul(8))
            .ok_or("header sizes overflow")?;
        if body.len() != expected {
            return Err(format!("expected {expected} bytes of factors, found {}", body.len()));
        }
        let floats: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let (users, items) = floats.split_at(nu * dim);
        let model = FactorModel::from_factors(nu, ni, dim, users.to_vec(), items.to_vec()).map_err(|e| e.to_string())?;
        Ok(Checkpoint { seed, config_hash, model })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|reason| Error::Checkpoint { path: path.to_path_buf(), reason })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use aucns_core::model::init_model;

    #[test]
    fn round_trip_is_exact() {
        let c = Checkpoint { seed: 7, config_hash: [3; 32], model: init_model(4, 9, 3, 1).unwrap() };
        assert_eq!(Checkpoint::from_bytes(&c.to_bytes()).unwrap(), c);
    }

    #[test]
    fn truncated_and_foreign_files_are_rejected() {
        let c = Checkpoint { seed: 0, config_hash: [0; 32], model: init_model(2, 2, 2, 0).unwrap() };
        let bytes = c.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(Checkpoint::from_bytes(&bytes[..10]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
    }
}
