//! `key = value` defaults for the command line.
//!
//! Each non-empty, non-`#` line names a long flag of the chosen subcommand
//! (without the leading dashes). The file is expanded into flags placed
//! before the user's own arguments, and because every option keeps its last
//! occurrence, flags given on the command line win. `key = true` expands to a
//! bare switch and `key = false` is dropped.

use std::ffi::OsString;
use std::path::Path;

use crate::error::{LabError, Result};

/// Parses a config file into `--key value` arguments.
pub fn parse_config(text: &str) -> Result<Vec<OsString>> {
    let mut args = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            LabError::param(format!(
                "config line {}: expected key = value, got `{line}`",
                lineno + 1
            ))
        })?;
        let key = key.trim().trim_start_matches("--");
        let value = value.trim();
        if key.is_empty() || key == "config" {
            return Err(LabError::param(format!(
                "config line {}: invalid key `{key}`",
                lineno + 1
            )));
        }
        match value {
            "true" => args.push(format!("--{key}").into()),
            "false" => {}
            _ => {
                args.push(format!("--{key}").into());
                args.push(value.into());
            }
        }
    }
    Ok(args)
}

/// Finds `--config <path>` or `--config=<path>` in the raw arguments.
fn find_config(args: &[OsString]) -> Option<OsString> {
    let mut iter = args.iter();
    while let Some(arg) = iter.next() {
        let s = arg.to_string_lossy();
        if s == "--config" {
            return iter.next().cloned();
        }
        if let Some(path) = s.strip_prefix("--config=") {
            return Some(path.into());
        }
    }
    None
}

/// Expands a `--config` file into flags inserted right after the
/// subcommand name, so that explicit flags override file values.
pub fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = find_config(&args) else {
        return Ok(args);
    };
    let is_subcommand = args
        .get(1)
        .is_some_and(|a| !a.to_string_lossy().starts_with('-'));
    if !is_subcommand {
        return Ok(args);
    }
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    let extra = parse_config(&text)?;
    let mut out = Vec::with_capacity(args.len() + extra.len());
    out.extend(args[..2].iter().cloned());
    out.extend(extra);
    out.extend(args[2..].iter().cloned());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn parses_pairs_switches_and_comments() {
        let args =
            parse_config("# defaults\nbeta1 = 0.5\n\nbias-correction = true\nresume=false\n")
                .unwrap();
        assert_eq!(args, os(&["--beta1", "0.5", "--bias-correction"]));
        assert!(parse_config("beta1 0.5").is_err());
    }

    #[test]
    fn file_values_precede_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lab.conf");
        std::fs::write(&path, "beta2 = 0.9\n").unwrap();
        let args = os(&[
            "adam-lab",
            "run",
            "--config",
            path.to_str().unwrap(),
            "--beta2",
            "0.5",
        ]);
        let out = expand_config(args).unwrap();
        assert_eq!(&out[..4], &os(&["adam-lab", "run", "--beta2", "0.9"])[..]);
        assert_eq!(out.last().unwrap(), "0.5");
    }
}
