use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

/// Resolved options of one run, written next to every output file as flat
/// `key=value` text. Passing the file back through `--config` repeats the
/// run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub subcommand: String,
    pub options: Vec<(String, String)>,
    pub tool_version: String,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(subcommand: &str, options: Vec<(String, String)>) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            options,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }

    pub fn render(&self) -> String {
        let mut s = format!("subcommand={}\n", self.subcommand);
        for (k, v) in &self.options {
            s.push_str(&format!("{k}={v}\n"));
        }
        s.push_str(&format!(
            "tool_version={}\ntimestamp={}\n",
            self.tool_version, self.timestamp
        ));
        s
    }

    pub fn write_beside(&self, output: &Path) -> Result<PathBuf> {
        let path = sibling(output, "manifest");
        fs::write(&path, self.render()).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// `dir/name.ext` becomes `dir/name.ext.<suffix>`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name: OsString = path.file_name().map(OsString::from).unwrap_or_default();
    name.push(".");
    name.push(suffix);
    path.with_file_name(name)
}
