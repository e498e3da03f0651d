//! Plain `key=value` run-configuration files and the training loss CSV.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::error::SemvoxError;
use crate::losses::LossBreakdown;
use crate::Result;

/// Parsed key=value file with typed getters. Lines starting with `#` and
/// blank lines are skipped; unknown keys are the caller's business.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    map: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(SemvoxError::Format {
                    format: "runcfg",
                    detail: format!("line {}: expected key=value", i + 1),
                });
            };
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Self { map })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|s| s.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(|s| s.as_str())
    }

    pub fn get_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| SemvoxError::InvalidConfig(format!("bad value for {key}: {v}"))),
        }
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| SemvoxError::InvalidConfig(format!("missing required key {key}")))
    }
}

pub fn loss_csv_header() -> &'static str {
    "step,geo2d,app,sem,geo3d,total\n"
}

/// Appends one CSV row per breakdown, creating the file (with header) on
/// first use.
pub fn append_loss_csv(path: &Path, start_step: usize, rows: &[LossBreakdown]) -> Result<()> {
    let new = !path.exists();
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    if new {
        f.write_all(loss_csv_header().as_bytes())?;
    }
    for (i, r) in rows.iter().enumerate() {
        writeln!(
            f,
            "{},{},{},{},{},{}",
            start_step + i,
            r.geo_2d,
            r.app,
            r.sem,
            r.geo_3d,
            r.total
        )?;
    }
    Ok(())
}
