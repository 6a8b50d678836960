//! Cost table files: `--table`, then `HFPM_TABLE`, then the built-in table.

use std::fs;
use std::path::{Path, PathBuf};

use hfpm_core::cost::ComponentCostTable;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const TABLE_ENV: &str = "HFPM_TABLE";
pub const BUILTIN_TABLE: &str = include_str!("../tables/hybrid_65nm.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableFile {
    pub name: String,
    #[serde(default)]
    pub notes: Vec<String>,
    /// Entries computed from the table rather than printed in it.
    #[serde(default)]
    pub derived: Vec<String>,
    pub table: ComponentCostTable,
}

impl TableFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let f: Self = serde_json::from_str(text).map_err(|e| CliError::config(format!("cost table: {e}")))?;
        f.table
            .validate()
            .map_err(|e| CliError::config(format!("cost table: {e}")))?;
        Ok(f)
    }

    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_TABLE).expect("built-in cost table is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Resolves the table from an explicit path, the environment fallback or
    /// the built-in default.
    pub fn resolve(flag: Option<&Path>, env: Option<PathBuf>) -> Result<Self> {
        match flag.map(Path::to_path_buf).or(env) {
            Some(p) => Self::load(&p),
            None => Ok(Self::builtin()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_matches_core_default() {
        assert_eq!(TableFile::builtin().table, ComponentCostTable::default());
    }

    #[test]
    fn resolution_order() {
        let dir = tempfile::tempdir().unwrap();
        let mut alt = TableFile::builtin();
        alt.name = "alt".into();
        alt.table.timing.adc_rate_gsps = 2.0;
        let p = dir.path().join("t.json");
        fs::write(&p, serde_json::to_string(&alt).unwrap()).unwrap();
        assert_eq!(TableFile::resolve(Some(&p), None).unwrap().name, "alt");
        assert_eq!(TableFile::resolve(None, Some(p.clone())).unwrap().name, "alt");
        assert_ne!(TableFile::resolve(None, None).unwrap().name, "alt");
        assert!(matches!(
            TableFile::resolve(Some(&dir.path().join("missing.json")), None),
            Err(CliError::Io { .. })
        ));
    }
}
