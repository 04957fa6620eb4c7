//! Detector models: the k-photon resolving and nonresolving POVMs.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DetectorFlavor {
    /// Clicks iff exactly k photons are absorbed.
    Resolving,
    /// Clicks whenever k or more photons are absorbed. The single-photon
    /// on/off detector is the nonresolving k = 1 case.
    Nonresolving,
}

/// A k-photon detector; post-selection requires k >= 1, the no-click branch
/// is handled internally by the partition helpers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DetectorModel {
    flavor: DetectorFlavor,
    k: u32,
}

impl DetectorModel {
    pub fn new(flavor: DetectorFlavor, k: u32) -> Result<Self> {
        if k == 0 {
            return Err(Error::Domain(
                "detector threshold k must be >= 1; post-selection is on a click".into(),
            ));
        }
        Ok(DetectorModel { flavor, k })
    }

    pub fn resolving(k: u32) -> Result<Self> {
        Self::new(DetectorFlavor::Resolving, k)
    }

    pub fn nonresolving(k: u32) -> Result<Self> {
        Self::new(DetectorFlavor::Nonresolving, k)
    }

    pub fn flavor(&self) -> DetectorFlavor {
        self.flavor
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    /// Acceptance weight of the |l><l| ancilla projector.
    pub fn upsilon(&self, l: u64) -> u8 {
        let k = self.k as u64;
        match self.flavor {
            DetectorFlavor::Resolving => u8::from(l == k),
            DetectorFlavor::Nonresolving => u8::from(l >= k),
        }
    }
}

impl fmt::Display for DetectorModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.flavor {
            DetectorFlavor::Resolving => 'r',
            DetectorFlavor::Nonresolving => 'n',
        };
        write!(f, "{tag}:{}", self.k)
    }
}

impl FromStr for DetectorModel {
    type Err = Error;

    /// CLI spelling: `r:K` (resolving) or `n:K` (nonresolving).
    fn from_str(s: &str) -> Result<Self> {
        let (tag, k) = s
            .split_once(':')
            .ok_or_else(|| Error::Domain(format!("detector spec '{s}' needs r:K or n:K")))?;
        let k: u32 = k
            .parse()
            .map_err(|_| Error::Domain(format!("cannot parse detector threshold '{k}'")))?;
        match tag {
            "r" => DetectorModel::resolving(k),
            "n" => DetectorModel::nonresolving(k),
            other => Err(Error::Domain(format!("unknown detector flavor '{other}'"))),
        }
    }
}
