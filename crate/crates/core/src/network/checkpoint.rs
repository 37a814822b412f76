use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::KinnConfig;
use super::params::KinnParams;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "kinn-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    config: KinnConfig,
    params: KinnParams,
}

/// JSON checkpoint; floats are written with round-trip precision.
pub fn save_checkpoint(path: &Path, cfg: &KinnConfig, params: &KinnParams) -> Result<()> {
    let ck = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        config: cfg.clone(),
        params: params.clone(),
    };
    let text = serde_json::to_string(&ck).map_err(|e| Error::Data(format!("cannot serialize checkpoint: {e}")))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(KinnConfig, KinnParams)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
    if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
        return Err(Error::Data(format!(
            "{}: unsupported checkpoint {} v{}",
            path.display(),
            ck.format,
            ck.version
        )));
    }
    if !ck.params.matches(&ck.config) || !ck.params.is_finite() {
        return Err(Error::Data(format!("{}: checkpoint parameters are inconsistent", path.display())));
    }
    Ok((ck.config, ck.params))
}
