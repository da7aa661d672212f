use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_LAYERS: u8 = 10;

/// Axial band 1..=10; 1 is caudal-most, 10 rostral-most.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct LayerId(u8);

impl LayerId {
    pub fn new(index: u8) -> Result<Self> {
        if (1..=NUM_LAYERS).contains(&index) {
            Ok(LayerId(index))
        } else {
            Err(Error::invalid(format!("layer {index} outside [1, {NUM_LAYERS}]")))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = LayerId> {
        (1..=NUM_LAYERS).map(LayerId)
    }

    /// Decile rule for position `rank` of an `n`-slice volume: `floor(rank/n * 10) + 1`, capped at 10.
    pub fn from_position(rank: usize, n: usize) -> LayerId {
        assert!(n > 0 && rank < n, "rank {rank} out of range for {n} slices");
        let idx = (rank * NUM_LAYERS as usize) / n + 1;
        LayerId(idx.min(NUM_LAYERS as usize) as u8)
    }
}

impl TryFrom<u8> for LayerId {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        LayerId::new(v)
    }
}

impl From<LayerId> for u8 {
    fn from(l: LayerId) -> u8 {
        l.0
    }
}

impl fmt::Display for LayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Manual layer assignments: volume id → slice index → layer.
/// On disk: `{"volA": {"5": 10}}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LayerOverrides(pub BTreeMap<String, BTreeMap<u32, LayerId>>);

impl LayerOverrides {
    pub fn insert(&mut self, volume_id: impl Into<String>, slice_index: u32, layer: LayerId) {
        self.0.entry(volume_id.into()).or_default().insert(slice_index, layer);
    }

    pub fn get(&self, volume_id: &str, slice_index: u32) -> Option<LayerId> {
        self.0.get(volume_id)?.get(&slice_index).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.0.values().all(BTreeMap::is_empty)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u32, LayerId)> {
        self.0
            .iter()
            .flat_map(|(v, m)| m.iter().map(move |(i, l)| (v.as_str(), *i, *l)))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::malformed(path, "layer overrides", e.to_string()))
    }
}
