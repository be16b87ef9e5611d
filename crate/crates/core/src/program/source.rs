use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use super::{generate_program, load_program, preset, GenParams, ProgramModel};
use crate::error::{Error, Result};

/// Where a program model comes from.
///
/// Textual forms:
///
/// * `preset:<name>` or `preset:<name>@<seed>`
/// * `gen:<key>=<value>,...@<seed>` with keys `name`, `branches`, `hard`,
///   `labels`, `bias`, `recent`, `cross` and `groups=<lo>-<hi>`
/// * anything else is a path to a program file
#[derive(Clone, Debug, PartialEq)]
pub enum ProgramSource {
    Path(PathBuf),
    Preset { name: String, seed: Option<u64> },
    Generated { params: GenParams, seed: u64 },
}

impl ProgramSource {
    pub fn resolve(&self) -> Result<ProgramModel> {
        match self {
            ProgramSource::Path(p) => load_program(p),
            ProgramSource::Preset { name, seed } => {
                let preset = preset(name)?;
                generate_program(&preset.params(), seed.unwrap_or(preset.seed))
            }
            ProgramSource::Generated { params, seed } => generate_program(params, *seed),
        }
    }
}

fn split_seed<'a>(s: &'a str, full: &str) -> Result<(&'a str, Option<u64>)> {
    match s.rsplit_once('@') {
        None => Ok((s, None)),
        Some((body, seed)) => {
            let seed = seed.parse::<u64>().map_err(|e| Error::InvalidSource {
                source_str: full.to_string(),
                reason: format!("bad seed `{seed}`: {e}"),
            })?;
            if seed > i64::MAX as u64 {
                return Err(Error::InvalidSource {
                    source_str: full.to_string(),
                    reason: "seed must fit in a signed 64-bit integer".into(),
                });
            }
            Ok((body, Some(seed)))
        }
    }
}

impl FromStr for ProgramSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let invalid = |reason: String| Error::InvalidSource {
            source_str: s.to_string(),
            reason,
        };
        if let Some(rest) = s.strip_prefix("preset:") {
            let (name, seed) = split_seed(rest, s)?;
            preset(name)?;
            return Ok(ProgramSource::Preset {
                name: name.to_string(),
                seed,
            });
        }
        if let Some(rest) = s.strip_prefix("gen:") {
            let (body, seed) = split_seed(rest, s)?;
            let seed = seed.ok_or_else(|| invalid("generated sources need an `@<seed>` suffix".into()))?;
            let mut params = GenParams::default();
            for kv in body.split(',').filter(|kv| !kv.is_empty()) {
                let (key, value) = kv
                    .split_once('=')
                    .ok_or_else(|| invalid(format!("expected key=value, got `{kv}`")))?;
                let num = |v: &str| {
                    v.parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| invalid(format!("bad number `{v}` for `{key}`")))
                };
                let int = |v: &str| {
                    v.parse::<usize>()
                        .map_err(|_| invalid(format!("bad integer `{v}` for `{key}`")))
                };
                match key {
                    "name" => params.name = value.to_string(),
                    "branches" => params.branch_count = int(value)?,
                    "hard" => params.hard_fraction = num(value)?,
                    "labels" => params.label_density = num(value)?,
                    "bias" => params.guarded_label_bias = num(value)?,
                    "recent" => params.attach_recent = num(value)?,
                    "cross" => params.cross_edge_rate = num(value)?,
                    "groups" => {
                        let (lo, hi) = value
                            .split_once('-')
                            .ok_or_else(|| invalid(format!("groups expects lo-hi, got `{value}`")))?;
                        params.group_size_range = (int(lo)?, int(hi)?);
                    }
                    other => return Err(invalid(format!("unknown key `{other}`"))),
                }
            }
            return Ok(ProgramSource::Generated { params, seed });
        }
        if s.is_empty() {
            return Err(invalid("empty program source".into()));
        }
        Ok(ProgramSource::Path(PathBuf::from(s)))
    }
}

impl fmt::Display for ProgramSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProgramSource::Path(p) => write!(f, "{}", p.display()),
            ProgramSource::Preset { name, seed: None } => write!(f, "preset:{name}"),
            ProgramSource::Preset { name, seed: Some(s) } => write!(f, "preset:{name}@{s}"),
            ProgramSource::Generated { params, seed } => write!(
                f,
                "gen:name={},branches={},hard={},labels={},bias={},recent={},cross={},groups={}-{}@{seed}",
                params.name,
                params.branch_count,
                params.hard_fraction,
                params.label_density,
                params.guarded_label_bias,
                params.attach_recent,
                params.cross_edge_rate,
                params.group_size_range.0,
                params.group_size_range.1,
            ),
        }
    }
}
