//! Config resolution: preset keys, then the config file, then `--set` overrides.

use std::path::Path;

use anyhow::Context;
use ecg_jepa::config::RunConfig;

use crate::usage;

/// Builds a run config from `first` (applied before the file), the optional
/// config file and `KEY=VALUE` overrides. File lines whose key appears in
/// `first` are skipped so explicit flags win over the file.
pub fn resolve(first: &[(&str, String)], file: Option<&Path>, overrides: &[String]) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::default();
    for (k, v) in first {
        cfg.set(k, v).map_err(|e| usage(e.to_string()))?;
    }
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("{}:{}: expected key = value", path.display(), no + 1)))?;
            let k = k.trim();
            if first.iter().any(|(f, _)| *f == k) {
                continue;
            }
            cfg.set(k, v.trim())
                .map_err(|e| usage(format!("{}:{}: {e}", path.display(), no + 1)))?;
        }
    }
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got {o:?}")))?;
        cfg.set(k.trim(), v.trim()).map_err(|e| usage(e.to_string()))?;
    }
    Ok(cfg)
}

/// Writes `config.resolved` into `dir`.
pub fn echo(cfg: &RunConfig, dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    cfg.write(&dir.join("config.resolved"))?;
    Ok(())
}
