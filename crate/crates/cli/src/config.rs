//! Flat `key=value` files. Each key names a long flag of the subcommand; the
//! pairs are spliced in ahead of the user's own flags so that explicit flags
//! win.

use std::path::Path;

use anyhow::{bail, Context, Result};

/// Manifest keys that describe a run rather than configure one.
pub const RESERVED: [&str; 3] = ["subcommand", "tool_version", "timestamp"];

pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("line {}: expected key=value, found '{line}'", lineno + 1);
        };
        let k = k.trim();
        if k.is_empty() {
            bail!("line {}: empty key", lineno + 1);
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn load(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    parse(&text).with_context(|| format!("in config {}", path.display()))
}

/// Removes `--config FILE` (or `--config=FILE`) from `args`, returning the
/// file if present.
pub fn take_config_flag(args: &mut Vec<String>) -> Result<Option<String>> {
    let mut found = None;
    let mut i = 0;
    while i < args.len() {
        if args[i] == "--" {
            break;
        }
        if args[i] == "--config" {
            if i + 1 >= args.len() {
                bail!("--config needs a file argument");
            }
            found = Some(args.remove(i + 1));
            args.remove(i);
        } else if let Some(v) = args[i].strip_prefix("--config=") {
            found = Some(v.to_string());
            args.remove(i);
        } else {
            i += 1;
        }
    }
    Ok(found)
}

/// Builds the argument vector `[program, subcommand, config flags.., user
/// flags..]`. `args` must already have had `--config` removed.
pub fn splice(args: &[String], pairs: &[(String, String)]) -> Result<Vec<String>> {
    let Some(sub) = args.get(1) else {
        bail!("--config needs a subcommand");
    };
    let mut out = vec![args[0].clone(), sub.clone()];
    for (k, v) in pairs {
        if k == "subcommand" {
            if v != sub {
                bail!("config was written for '{v}', not '{sub}'");
            }
            continue;
        }
        if RESERVED.contains(&k.as_str()) {
            continue;
        }
        out.push(format!("--{k}"));
        out.push(v.clone());
    }
    out.extend_from_slice(&args[2..]);
    Ok(out)
}
