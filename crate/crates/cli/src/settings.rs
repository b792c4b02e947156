//! Flag values with config-file fallback.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nuq::config::KeyValueConfig;
use nuq::{NuqError, Result};

#[derive(Debug, Default)]
pub struct Settings {
    file: KeyValueConfig,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let file = match path {
            Some(p) => KeyValueConfig::load(p)?,
            None => KeyValueConfig::default(),
        };
        Ok(Settings { file })
    }

    /// The flag if given, else the config value for `key`.
    pub fn pick<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.file.get(key),
        }
    }

    pub fn pick_or<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.pick(flag, key)?.unwrap_or(default))
    }

    pub fn require<T>(&self, flag: Option<T>, key: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.pick(flag, key)?.ok_or_else(|| {
            NuqError::Config(format!(
                "missing required setting --{}",
                key.replace('_', "-")
            ))
        })
    }

    pub fn path(&self, flag: Option<PathBuf>, key: &str) -> Result<PathBuf> {
        self.require(flag, key)
    }

    /// A boolean switch: set by the flag, or by `key = true` in the file.
    pub fn switch(&self, flag: bool, key: &str) -> Result<bool> {
        Ok(flag || self.file.get::<bool>(key)?.unwrap_or(false))
    }

    /// Parses a string setting through `T::from_str` reporting config errors.
    pub fn parsed<T>(&self, flag: Option<String>, key: &str, default: T) -> Result<T>
    where
        T: FromStr<Err = NuqError>,
    {
        match self.pick::<String>(flag, key)? {
            Some(s) => s.parse(),
            None => Ok(default),
        }
    }
}
