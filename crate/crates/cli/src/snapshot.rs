//! Binary field snapshots.
//!
//! Layout, little-endian: the 8-byte magic `SQGSNAP\0`, `u32` version,
//! `u32` n, `f64` s, `f64` kappa, `f64` t, then `n²` `f64` values in
//! row-major order.

use std::path::Path;

use sqg_core::spectral::{Grid, RealField};
use thiserror::Error;

pub const MAGIC: &[u8; 8] = b"SQGSNAP\0";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 4 + 3 * 8;
/// Refuses to decode grids larger than this per side.
pub const MAX_N: usize = 1 << 14;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("not a snapshot (bad magic)")]
    BadMagic,
    #[error("unsupported snapshot version {0}")]
    Version(u32),
    #[error("truncated snapshot: expected {expected} bytes, got {got}")]
    Length { expected: usize, got: usize },
    #[error("invalid snapshot header: {0}")]
    Header(String),
    #[error("invalid field data: {0}")]
    Field(#[from] sqg_core::spectral::SpectralError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub s: f64,
    pub kappa: f64,
    pub t: f64,
    pub theta: RealField,
}

impl Snapshot {
    pub fn encode(&self) -> Vec<u8> {
        let values = self.theta.values();
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.theta.grid().n() as u32).to_le_bytes());
        for x in [self.s, self.kappa, self.t] {
            out.extend_from_slice(&x.to_le_bytes());
        }
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, SnapshotError> {
        if bytes.len() < HEADER_LEN {
            if bytes.len() >= 8 && &bytes[..8] != MAGIC {
                return Err(SnapshotError::BadMagic);
            }
            return Err(SnapshotError::Length {
                expected: HEADER_LEN,
                got: bytes.len(),
            });
        }
        if &bytes[..8] != MAGIC {
            return Err(SnapshotError::BadMagic);
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let f64_at = |i: usize| f64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
        let version = u32_at(8);
        if version != VERSION {
            return Err(SnapshotError::Version(version));
        }
        let n = u32_at(12) as usize;
        if n > MAX_N {
            return Err(SnapshotError::Header(format!("n = {n} exceeds {MAX_N}")));
        }
        let (s, kappa, t) = (f64_at(16), f64_at(24), f64_at(32));
        if !(s.is_finite() && kappa.is_finite() && t.is_finite()) {
            return Err(SnapshotError::Header("non-finite s, kappa or t".into()));
        }
        let expected = HEADER_LEN + 8 * n * n;
        if bytes.len() != expected {
            return Err(SnapshotError::Length {
                expected,
                got: bytes.len(),
            });
        }
        let grid = Grid::periodic(n)?;
        let values = bytes[HEADER_LEN..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            s,
            kappa,
            t,
            theta: RealField::new(grid, values)?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), SnapshotError> {
        Ok(std::fs::write(path, self.encode())?)
    }

    pub fn load(path: &Path) -> Result<Self, SnapshotError> {
        Self::decode(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(n: usize, t: f64) -> Snapshot {
        let grid = Grid::periodic(n).unwrap();
        Snapshot {
            s: 0.25,
            kappa: 1.0,
            t,
            theta: RealField::from_fn(grid, |x, y| (x - 2.0 * y).sin() * 1e-3).unwrap(),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let snap = sample(16, 0.3);
        let bytes = snap.encode();
        assert_eq!(bytes.len(), HEADER_LEN + 8 * 256);
        let back = Snapshot::decode(&bytes).unwrap();
        assert_eq!(back, snap);
        assert_eq!(back.encode(), bytes);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.bin");
        let snap = sample(8, 1.0);
        snap.save(&path).unwrap();
        assert_eq!(Snapshot::load(&path).unwrap(), snap);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample(8, 0.0).encode();
        assert!(matches!(Snapshot::decode(&bytes[..20]), Err(SnapshotError::Length { .. })));
        assert!(matches!(
            Snapshot::decode(&bytes[..bytes.len() - 1]),
            Err(SnapshotError::Length { .. })
        ));
        let mut b = bytes.clone();
        b[0] = b'X';
        assert!(matches!(Snapshot::decode(&b), Err(SnapshotError::BadMagic)));
        let mut b = bytes.clone();
        b[8] = 2;
        assert!(matches!(Snapshot::decode(&b), Err(SnapshotError::Version(2))));
        let mut b = bytes.clone();
        b[12..16].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(Snapshot::decode(&b), Err(SnapshotError::Header(_))));
        let mut b = bytes.clone();
        b[HEADER_LEN..HEADER_LEN + 8].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(Snapshot::decode(&b), Err(SnapshotError::Field(_))));
        let mut b = bytes;
        b[12..16].copy_from_slice(&3u32.to_le_bytes());
        assert!(Snapshot::decode(&b).is_err());
    }

    proptest! {
        #[test]
        fn decode_never_panics(data in proptest::collection::vec(any::<u8>(), 0..200)) {
            let _ = Snapshot::decode(&data);
        }

        #[test]
        fn values_round_trip(values in proptest::collection::vec(-1e300f64..1e300, 64), t in -1e9f64..1e9) {
            let theta = RealField::new(Grid::periodic(8).unwrap(), values).unwrap();
            let snap = Snapshot { s: 0.1, kappa: 2.0, t, theta };
            prop_assert_eq!(Snapshot::decode(&snap.encode()).unwrap(), snap);
        }
    }
}
