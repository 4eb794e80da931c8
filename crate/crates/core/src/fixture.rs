//! JSON form of site configurations and pair states, shared by golden tests
//! and the `simulate` command.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Boundary, LatticeSpec};
use crate::model::{LineSegmentation, PairStates, SiteConfig};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteFixture {
    pub d: usize,
    pub extent: Vec<usize>,
    pub boundary: Boundary,
    /// Coordinates of occupied sites, in increasing site order.
    pub occupied: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatesFixture {
    /// Ids of open pairs in the canonical pair order.
    pub open: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelFixture {
    pub sites: SiteFixture,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<StatesFixture>,
}

impl SiteFixture {
    pub fn from_config(sites: &SiteConfig) -> Self {
        let spec = sites.spec();
        Self {
            d: spec.d(),
            extent: spec.extent().to_vec(),
            boundary: spec.boundary(),
            occupied: (0..spec.num_sites())
                .filter(|&s| sites.is_occupied(s))
                .map(|s| spec.coords(s))
                .collect(),
        }
    }

    /// The configuration; occupied-frame lattices get their frame added.
    pub fn to_config(&self) -> Result<SiteConfig> {
        if self.extent.len() != self.d {
            return Err(Error::Structural(format!(
                "extent has {} axes, d = {}",
                self.extent.len(),
                self.d
            )));
        }
        let spec = LatticeSpec::new(self.extent.clone(), self.boundary)?;
        let mut occ = vec![false; spec.num_sites()];
        for c in &self.occupied {
            if c.len() != self.d || c.iter().zip(&self.extent).any(|(x, e)| x >= e) {
                return Err(Error::Structural(format!("occupied site {c:?} outside extent {:?}", self.extent)));
            }
            occ[spec.index(c)] = true;
        }
        SiteConfig::from_occupancy(&spec, occ)
    }
}

impl StatesFixture {
    pub fn from_states(states: &PairStates) -> Self {
        Self {
            open: (0..states.states().len()).filter(|&i| states.is_open(i)).collect(),
        }
    }

    pub fn to_states(&self, seg: &LineSegmentation) -> Result<PairStates> {
        let mut state = vec![false; seg.num_pairs()];
        for &id in &self.open {
            *state.get_mut(id).ok_or_else(|| {
                Error::Structural(format!("pair id {id} out of range ({} pairs)", seg.num_pairs()))
            })? = true;
        }
        PairStates::from_states(seg, state)
    }
}

impl ModelFixture {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}
