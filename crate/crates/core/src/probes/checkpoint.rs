use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Family, InputRegime, Probe};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "factprobe-probe";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Self-describing on-disk form of a [`Probe`]. The header repeats the
/// identity fields so they can be checked before the body is trusted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub family: Family,
    pub regime: InputRegime,
    pub scheme: String,
    pub scheme_fingerprint: String,
    pub asset_hash: String,
    pub train_hash: String,
    pub probe: Probe,
}

impl Checkpoint {
    pub fn new(probe: Probe) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            family: probe.family(),
            regime: probe.regime,
            scheme: probe.scheme.name.clone(),
            scheme_fingerprint: probe.scheme.fingerprint(),
            asset_hash: probe.asset_hash().to_string(),
            train_hash: probe.train_hash.clone(),
            probe,
        }
    }

    pub fn verify(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Checkpoint(format!("{what} does not match the stored probe")));
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!(
                "not a probe checkpoint (format '{}')",
                self.format
            )));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {}",
                self.version
            )));
        }
        if self.family != self.probe.family() {
            return bad("family");
        }
        if self.regime != self.probe.regime {
            return bad("regime");
        }
        if self.scheme_fingerprint != self.probe.scheme.fingerprint() {
            return bad("scheme fingerprint");
        }
        if self.asset_hash != self.probe.asset_hash() {
            return bad("asset hash");
        }
        if self.train_hash != self.probe.train_hash {
            return bad("training data hash");
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let text = serde_json::to_string(self).map_err(|e| Error::Checkpoint(e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let c: Checkpoint =
            serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        c.verify()?;
        Ok(c)
    }
}
