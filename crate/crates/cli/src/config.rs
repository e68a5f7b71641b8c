//! Flat `key = value` config files.
//!
//! A config is spliced into the argument list right after the subcommand as
//! `--key value` pairs, so anything given on the command line overrides it.
//! Blank lines and lines starting with `#` are skipped.

use std::path::Path;

pub fn read(path: &Path) -> Result<Vec<(String, String)>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| format!("config line {}: expected key = value", n + 1))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() || key == "config" {
            return Err(format!("config line {}: invalid key '{}'", n + 1, k.trim()));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

/// Expand `--config FILE` (or `--config=FILE`) into flags placed before the
/// user's own flags.
pub fn expand(args: Vec<String>) -> Result<Vec<String>, String> {
    let mut file = None;
    let mut rest = Vec::with_capacity(args.len());
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            file = Some(it.next().ok_or("--config needs a file")?);
        } else if let Some(f) = a.strip_prefix("--config=") {
            file = Some(f.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(file) = file else { return Ok(rest) };
    let pairs = read(Path::new(&file))?;
    // binary name and subcommand come first
    let split = rest.len().min(2);
    let mut out: Vec<String> = rest[..split].to_vec();
    for (k, v) in pairs {
        out.push(format!("--{k}"));
        out.push(v);
    }
    out.extend_from_slice(&rest[split..]);
    Ok(out)
}
