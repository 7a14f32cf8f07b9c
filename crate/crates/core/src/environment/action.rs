use serde::{Deserialize, Serialize};

/// Joint offloading and cache-replacement decision for one slot.
///
/// `offload`, `store_local` and `store_mec` are indexed by FoV position (the
/// z-th tile of the requested FoV in ascending id order); `delete_local` and
/// `delete_mec` by cache slot (the m-th cached tile in ascending id order).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HybridAction {
    pub offload: Vec<bool>,
    pub store_local: Vec<bool>,
    pub delete_local: Vec<bool>,
    pub store_mec: Vec<bool>,
    pub delete_mec: Vec<bool>,
}

impl HybridAction {
    /// Given offload pattern with no cache replacement.
    pub fn idle(offload: Vec<bool>, local_capacity: usize, mec_capacity: usize) -> Self {
        let z = offload.len();
        Self {
            offload,
            store_local: vec![false; z],
            delete_local: vec![false; local_capacity],
            store_mec: vec![false; z],
            delete_mec: vec![false; mec_capacity],
        }
    }

    pub fn has_replacement(&self) -> bool {
        [
            &self.store_local,
            &self.delete_local,
            &self.store_mec,
            &self.delete_mec,
        ]
        .iter()
        .any(|g| g.iter().any(|&b| b))
    }

    /// All bits in group order: offload, store_local, delete_local, store_mec, delete_mec.
    pub fn bits(&self) -> impl Iterator<Item = bool> + '_ {
        self.offload
            .iter()
            .chain(&self.store_local)
            .chain(&self.delete_local)
            .chain(&self.store_mec)
            .chain(&self.delete_mec)
            .copied()
    }

    pub fn bit_string(&self) -> String {
        self.bits().map(|b| if b { '1' } else { '0' }).collect()
    }

    pub fn offload_count(&self) -> usize {
        self.offload.iter().filter(|&&o| o).count()
    }
}
