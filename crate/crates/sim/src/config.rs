//! Configuration files: TOML documents laid over the shipped preset.

use std::path::{Path, PathBuf};

use swipt_core::config::{ConfigError, SystemConfig};
use thiserror::Error;
use toml::{Table, Value};

/// The evaluation defaults, two users and eight antennas.
pub const PRESET: &str = include_str!("../presets/default.toml");

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("{0}")]
    Invalid(#[from] ConfigError),
}

pub fn preset() -> SystemConfig {
    toml::from_str(PRESET).expect("shipped preset parses")
}

/// Keys of `over` replace those of `base`; nested tables merge key by key.
fn merge(base: &mut Table, over: Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

/// Parses a possibly partial document. Missing keys keep their preset values. When the
/// document changes `num_users` without listing `users`, every user gets the preset's
/// first user parameters.
pub fn parse(text: &str) -> Result<SystemConfig, toml::de::Error> {
    let mut base: Table = toml::from_str(PRESET).expect("shipped preset parses");
    let over: Table = toml::from_str(text)?;
    let lists_users = over.contains_key("users");
    merge(&mut base, over);
    let mut config: SystemConfig = base.try_into()?;
    if !lists_users && config.users.len() != config.num_users {
        let first = config.users[0].clone();
        config.users = vec![first; config.num_users];
    }
    Ok(config)
}

pub fn load(path: &Path) -> Result<SystemConfig, LoadError> {
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Read { path: path.into(), source })?;
    let config = parse(&text).map_err(|source| LoadError::Parse { path: path.into(), source })?;
    config.validate()?;
    Ok(config)
}
