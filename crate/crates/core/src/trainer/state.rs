use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::TrainerError;
use crate::evo::Individual;
use crate::ppo::PpoLearner;

const MAGIC: &[u8; 8] = b"TERLRUN\0";
pub const RUN_STATE_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Genotype {
    pub id: u64,
    pub parents: Vec<u64>,
    pub ea_params: Vec<f64>,
}

impl From<&Individual> for Genotype {
    fn from(ind: &Individual) -> Self {
        Self {
            id: ind.id,
            parents: ind.parents.clone(),
            ea_params: ind.ea_params.clone(),
        }
    }
}

impl Genotype {
    pub fn individual(&self) -> Individual {
        let mut ind = Individual::new(self.id, self.ea_params.clone());
        ind.parents = self.parents.clone();
        ind
    }
}

/// Policy and optimizer state carried across generations when evolution is
/// disabled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Carry {
    pub ea: Vec<f64>,
    pub rl: Vec<f64>,
    pub learner: PpoLearner,
}

/// Everything needed to continue a run at a generation boundary. Floats go
/// through JSON with exact round-tripping, so a resumed run is bitwise
/// identical to an uninterrupted one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub seed: u64,
    pub base_fingerprint: String,
    pub completed: usize,
    pub next_id: u64,
    pub population: Vec<Genotype>,
    pub carry: Option<Carry>,
}

impl RunState {
    pub fn encode(&self) -> Result<Vec<u8>, TrainerError> {
        let body = serde_json::to_vec(self).map_err(|e| TrainerError::RunState(e.to_string()))?;
        let mut out = Vec::with_capacity(body.len() + 52);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&RUN_STATE_VERSION.to_le_bytes());
        out.extend_from_slice(&(body.len() as u64).to_le_bytes());
        out.extend_from_slice(&body);
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TrainerError> {
        let err = |m: &str| TrainerError::RunState(m.into());
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(err("not a run state file"));
        }
        if bytes.len() < 20 + DIGEST_LEN {
            return Err(err("run state truncated"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != RUN_STATE_VERSION {
            return Err(TrainerError::RunState(format!("unsupported run state version {version}")));
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        if bytes.len() != 20 + len + DIGEST_LEN {
            return Err(err("run state truncated"));
        }
        let (payload, digest) = bytes.split_at(20 + len);
        if Sha256::digest(payload).as_slice() != digest {
            return Err(err("run state checksum mismatch"));
        }
        serde_json::from_slice(&payload[20..]).map_err(|e| TrainerError::RunState(e.to_string()))
    }

    /// Written to a temporary file and renamed, so a crash never leaves a
    /// partial state behind.
    pub fn save(&self, path: &Path) -> Result<(), TrainerError> {
        let tmp = path.with_extension("bin.tmp");
        let io = |e| TrainerError::Io {
            path: path.display().to_string(),
            source: e,
        };
        std::fs::write(&tmp, self.encode()?).map_err(io)?;
        std::fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, TrainerError> {
        let bytes = std::fs::read(path).map_err(|e| TrainerError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::decode(&bytes)
    }
}
