//! Versioned TOML representation of a [`ProgramModel`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BranchAnnotation, BranchId, ConditionalGroup, ProgramModel};
use crate::error::{Error, Result};

pub const PROGRAM_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProgramFile {
    format_version: u32,
    name: String,
    gen_seed: u64,
    entry: BranchId,
    successors: Vec<Vec<BranchId>>,
    groups: Vec<ConditionalGroup>,
    branches: Vec<BranchAnnotation>,
}

pub fn to_toml_string(model: &ProgramModel) -> Result<String> {
    let file = ProgramFile {
        format_version: PROGRAM_FORMAT_VERSION,
        name: model.name.clone(),
        gen_seed: model.gen_seed,
        entry: model.entry,
        successors: model.successors.clone(),
        groups: model.groups.clone(),
        branches: model.branches.clone(),
    };
    toml::to_string(&file).map_err(|e| Error::ProgramFile(e.to_string()))
}

/// Parses and validates a program file. The stored `reachable_labels`
/// annotations are recomputed from the graph rather than trusted.
pub fn from_toml_str(text: &str) -> Result<ProgramModel> {
    let file: ProgramFile = toml::from_str(text).map_err(|e| Error::ProgramFile(e.to_string()))?;
    if file.format_version != PROGRAM_FORMAT_VERSION {
        return Err(Error::ProgramFile(format!(
            "unsupported format_version {} (expected {PROGRAM_FORMAT_VERSION})",
            file.format_version
        )));
    }
    for (i, b) in file.branches.iter().enumerate() {
        if let super::Hardness::Hard { magic_width } = b.hardness {
            if magic_width == 0 || magic_width > 64 {
                return Err(Error::InvalidProgram(format!(
                    "b{i}: magic_width {magic_width} outside [1, 64]"
                )));
            }
        }
    }
    ProgramModel::new(
        file.name,
        file.gen_seed,
        file.branches,
        file.groups,
        file.successors,
        file.entry,
    )
}

pub fn save_program(model: &ProgramModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_toml_string(model)?)?;
    Ok(())
}

pub fn load_program(path: impl AsRef<Path>) -> Result<ProgramModel> {
    from_toml_str(&std::fs::read_to_string(path)?)
}
