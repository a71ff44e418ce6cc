//! Config file with one table per command. Keys use the long flag names;
//! a flag given on the command line replaces the file's value.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

const SECTIONS: &[&str] =
    &["prep", "train", "refs-build", "refs-audit", "explain", "tree-sev", "topt", "optimize", "report"];

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    sevkit::Error::InvalidArgument(msg.into()).into()
}

/// Unwraps a setting that has no default.
pub fn require<T>(value: Option<T>, name: &str) -> anyhow::Result<T> {
    value.ok_or_else(|| config_error(format!("missing required setting `{name}` (flag --{name} or config key)")))
}

#[derive(Debug, Default)]
pub struct ConfigFile {
    pub jobs: Option<usize>,
    sections: toml::Table,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| config_error(format!("{}: {e:#}", path.display())))
    }

    fn parse(text: &str) -> anyhow::Result<Self> {
        let mut table: toml::Table = text.parse()?;
        let jobs = match table.remove("jobs") {
            None => None,
            Some(v) => Some(
                v.as_integer()
                    .and_then(|j| usize::try_from(j).ok())
                    .ok_or_else(|| config_error("`jobs` must be a non-negative integer"))?,
            ),
        };
        for (key, value) in &table {
            if !SECTIONS.contains(&key.as_str()) {
                return Err(config_error(format!("unknown section `{key}`")));
            }
            if !value.is_table() {
                return Err(config_error(format!("`{key}` must be a table")));
            }
        }
        Ok(Self { jobs, sections: table })
    }

    /// Overlays the flags that were given onto the command's section.
    pub fn resolve<T: Serialize + DeserializeOwned>(&self, section: &str, flags: T) -> anyhow::Result<T> {
        let mut merged = match self.sections.get(section) {
            Some(toml::Value::Table(t)) => t.clone(),
            _ => toml::Table::new(),
        };
        let given = toml::Table::try_from(&flags).map_err(|e| config_error(e.to_string()))?;
        merged.extend(given);
        merged.try_into().map_err(|e: toml::de::Error| config_error(format!("[{section}]: {}", e.message())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Default, PartialEq, Serialize, Deserialize)]
    #[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
    struct Opts {
        seed: Option<u64>,
        k_max: Option<usize>,
    }

    #[test]
    fn flags_override_section_values() {
        let file = ConfigFile::parse("jobs = 3\n[explain]\nseed = 5\nk-max = 4\n").unwrap();
        assert_eq!(file.jobs, Some(3));
        let opts = file.resolve("explain", Opts { seed: Some(9), k_max: None }).unwrap();
        assert_eq!(opts, Opts { seed: Some(9), k_max: Some(4) });
        assert_eq!(file.resolve("train", Opts::default()).unwrap(), Opts::default());
    }

    #[test]
    fn unknown_keys_and_sections_are_config_errors() {
        let file = ConfigFile::parse("[explain]\nbogus = 1\n").unwrap();
        let err = file.resolve("explain", Opts::default()).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        assert!(ConfigFile::parse("[nope]\nx = 1\n").is_err());
        assert!(ConfigFile::parse("jobs = -1\n").is_err());
    }
}
