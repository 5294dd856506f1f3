//! Versioned model checkpoint files.
//!
//! JSON with shortest-round-trip float formatting: parameters written with
//! 64-bit precision read back bit-for-bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Mlp;
use crate::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    model: Mlp,
}

pub fn save_model(model: &Mlp, path: &Path) -> Result<()> {
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        model: model.clone(),
    };
    fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Mlp> {
    let text = fs::read_to_string(path)?;
    let file: CheckpointFile = serde_json::from_str(&text)?;
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::Config(format!(
            "unsupported checkpoint version {}",
            file.version
        )));
    }
    // Re-validate invariants on the way in.
    Mlp::from_layers(file.model.layers().to_vec(), file.model.dropout_prob())
}
