use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Mlp, TrainConfig, TrainError};
use crate::scalar::Real;

const MAGIC: &[u8; 8] = b"WKLBMLP1";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub scalar: String,
    pub dim: usize,
    pub hidden: usize,
    pub classes: usize,
    pub seed: u64,
    pub config_hash: String,
}

/// SHA-256 of the config's canonical JSON.
pub fn config_hash(cfg: &TrainConfig) -> String {
    let json = serde_json::to_vec(cfg).expect("config serializes");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}

/// Layout: magic, u32 LE header length, header JSON, then every parameter
/// (`w1`, `b1`, `w2`, `b2`) as little-endian `f64`.
pub fn save_checkpoint<F: Real>(path: &Path, params: &Mlp<F>, cfg: &TrainConfig) -> Result<(), TrainError> {
    let header = CheckpointHeader {
        version: VERSION,
        scalar: F::NAME.to_string(),
        dim: params.dim,
        hidden: params.hidden,
        classes: params.classes,
        seed: cfg.seed,
        config_hash: config_hash(cfg),
    };
    let head = serde_json::to_vec(&header).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
    let mut buf = Vec::with_capacity(12 + head.len() + 8 * params.n_params());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(head.len() as u32).to_le_bytes());
    buf.extend_from_slice(&head);
    for v in params.w1.iter().chain(&params.b1).chain(&params.w2).chain(&params.b2) {
        buf.extend_from_slice(&v.to_f64().expect("finite").to_le_bytes());
    }
    let io = |e: std::io::Error| TrainError::Checkpoint(format!("{}: {e}", path.display()));
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(&buf).map_err(io)?;
    Ok(())
}

/// Loads parameters, refusing a checkpoint written under a different config.
pub fn load_checkpoint<F: Real>(path: &Path, cfg: &TrainConfig) -> Result<(Mlp<F>, CheckpointHeader), TrainError> {
    let bad = |m: String| TrainError::Checkpoint(format!("{}: {m}", path.display()));
    let bytes = fs::read(path).map_err(|e| bad(e.to_string()))?;
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file".into()));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = bytes.get(12..12 + len).ok_or_else(|| bad("truncated header".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(body).map_err(|e| bad(e.to_string()))?;
    if header.version != VERSION {
        return Err(bad(format!("unsupported version {}", header.version)));
    }
    let expected = config_hash(cfg);
    if header.config_hash != expected {
        return Err(bad(format!(
            "config hash {} does not match current config {expected}",
            header.config_hash
        )));
    }
    let mut m = Mlp::<F>::zeros(header.dim, header.hidden, header.classes);
    let data = &bytes[12 + len..];
    if data.len() != 8 * m.n_params() {
        return Err(bad(format!("expected {} parameters, found {} bytes", m.n_params(), data.len())));
    }
    let mut values = data
        .chunks_exact(8)
        .map(|c| F::lit(f64::from_le_bytes(c.try_into().expect("8 bytes"))));
    for slot in m
        .w1
        .iter_mut()
        .chain(m.b1.iter_mut())
        .chain(m.w2.iter_mut())
        .chain(m.b2.iter_mut())
    {
        *slot = values.next().expect("length checked");
    }
    Ok((m, header))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::rng_for;

    #[test]
    fn round_trip_and_hash_guard() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.bin");
        let cfg = TrainConfig {
            dim: 32,
            hidden: 4,
            ..TrainConfig::default()
        };
        let m = Mlp::<f64>::random(32, 4, 3, 0.5, &mut rng_for(1, 0));
        save_checkpoint(&path, &m, &cfg).unwrap();
        let (back, header) = load_checkpoint::<f64>(&path, &cfg).unwrap();
        assert_eq!(back, m);
        assert_eq!(header.scalar, "f64");
        assert_eq!(back.checksum(), m.checksum());

        let other = TrainConfig { seed: 9, ..cfg.clone() };
        assert!(matches!(load_checkpoint::<f64>(&path, &other), Err(TrainError::Checkpoint(_))));

        fs::write(&path, b"garbage").unwrap();
        assert!(load_checkpoint::<f64>(&path, &cfg).is_err());
    }

    #[test]
    fn hash_is_stable() {
        let a = config_hash(&TrainConfig::default());
        assert_eq!(a, config_hash(&TrainConfig::default()));
        assert_eq!(a.len(), 64);
        assert_ne!(a, config_hash(&TrainConfig { rounds: 6, ..TrainConfig::default() }));
    }
}
