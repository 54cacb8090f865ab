//! Binary world snapshots.
//!
//! Layout: 8-byte magic `AVSIMSNP`, `u32` LE format version, bincode payload
//! of the [`WorldState`], then the SHA-256 of the payload.

use super::WorldState;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const MAGIC: &[u8; 8] = b"AVSIMSNP";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum SnapshotError {
    #[error("not a snapshot (bad magic)")]
    BadMagic,
    #[error("snapshot version {found}, expected {SNAPSHOT_VERSION}")]
    Version { found: u32 },
    #[error("snapshot payload corrupt: {0}")]
    Corrupt(String),
}

impl SnapshotError {
    pub fn code(&self) -> &'static str {
        match self {
            SnapshotError::Version { .. } => "version_mismatch",
            _ => "snapshot_corrupt",
        }
    }
}

pub fn snapshot(world: &WorldState) -> Vec<u8> {
    let payload = bincode::serialize(world).expect("world state is always serializable");
    let mut out = Vec::with_capacity(payload.len() + 44);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&Sha256::digest(&payload));
    out
}

pub fn restore(bytes: &[u8]) -> Result<WorldState, SnapshotError> {
    if bytes.len() < 12 + 32 || &bytes[..8] != MAGIC {
        return Err(SnapshotError::BadMagic);
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != SNAPSHOT_VERSION {
        return Err(SnapshotError::Version { found: version });
    }
    let (payload, digest) = bytes[12..].split_at(bytes.len() - 12 - 32);
    if Sha256::digest(payload).as_slice() != digest {
        return Err(SnapshotError::Corrupt("checksum mismatch".into()));
    }
    bincode::deserialize(payload).map_err(|e| SnapshotError::Corrupt(e.to_string()))
}

/// Hex SHA-256 of a snapshot, used as a compact state digest.
pub fn digest(snapshot: &[u8]) -> String {
    hex::encode(Sha256::digest(snapshot))
}
