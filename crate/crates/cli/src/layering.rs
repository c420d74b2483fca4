//! Flag layering: built-in defaults < `--from-manifest` config < `--config`
//! file < command-line flags.
//!
//! Lower layers are spliced into argv as `--key=value` tokens ahead of the
//! user's own flags, and clap keeps the last occurrence of each flag.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde_json::Value;

use crate::manifest::Manifest;
use crate::usage;

pub const COMMANDS: [&str; 4] = ["synth", "pca", "graph", "oracle"];

#[derive(Debug, Default)]
pub struct Layered {
    pub argv: Vec<String>,
    pub config_file: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
}

/// Removes `flag value` or `flag=value` from `args`, returning the value.
fn take_flag(args: &mut Vec<String>, flag: &str) -> anyhow::Result<Option<String>> {
    let prefix = format!("{flag}=");
    let mut found = None;
    let mut i = 0;
    while i < args.len() {
        if args[i] == flag {
            if i + 1 >= args.len() {
                return Err(usage(format!("{flag} needs a value")));
            }
            found = Some(args.remove(i + 1));
            args.remove(i);
        } else if let Some(v) = args[i].strip_prefix(&prefix) {
            found = Some(v.to_string());
            args.remove(i);
        } else {
            i += 1;
        }
    }
    Ok(found)
}

fn flag_token(key: &str, value: &str) -> anyhow::Result<String> {
    let key = key.trim().replace('_', "-");
    if key.is_empty() || key.starts_with('-') {
        return Err(usage(format!("bad configuration key {key:?}")));
    }
    if key == "config" || key == "from-manifest" {
        return Err(usage(format!("{key} cannot be set from a configuration layer")));
    }
    Ok(format!("--{key}={}", value.trim()))
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_config(text: &str, origin: &Path) -> anyhow::Result<Vec<String>> {
    let mut tokens = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            usage(format!("{}:{}: expected key=value, got {line:?}", origin.display(), n + 1))
        })?;
        tokens.push(flag_token(key, value)?);
    }
    Ok(tokens)
}

fn manifest_tokens(manifest: &Manifest) -> anyhow::Result<Vec<String>> {
    let mut tokens = Vec::new();
    for (key, value) in &manifest.config {
        let text = match value {
            Value::Null => continue,
            Value::String(s) => s.clone(),
            Value::Bool(_) | Value::Number(_) => value.to_string(),
            other => return Err(usage(format!("manifest entry {key} has unsupported value {other}"))),
        };
        tokens.push(flag_token(key, &text)?);
    }
    Ok(tokens)
}

pub fn layer_args(argv: &[String]) -> anyhow::Result<Layered> {
    let Some((program, rest)) = argv.split_first() else {
        return Ok(Layered::default());
    };
    let mut rest = rest.to_vec();
    let config_file = take_flag(&mut rest, "--config")?.map(PathBuf::from);
    let manifest_path = take_flag(&mut rest, "--from-manifest")?.map(PathBuf::from);

    let manifest = match &manifest_path {
        Some(p) => Some(Manifest::load(p).with_context(|| format!("reading manifest {}", p.display()))?),
        None => None,
    };
    let position = rest.iter().position(|a| COMMANDS.contains(&a.as_str()));
    let (before, command, after) = match (position, &manifest) {
        (Some(i), _) => (rest[..i].to_vec(), rest[i].clone(), rest[i + 1..].to_vec()),
        (None, Some(m)) => (Vec::new(), m.command.clone(), rest.clone()),
        (None, None) => {
            let mut argv = vec![program.clone()];
            argv.extend(rest);
            return Ok(Layered {
                argv,
                config_file,
                manifest: None,
            });
        }
    };
    if let Some(m) = &manifest {
        if m.command != command {
            return Err(usage(format!(
                "manifest records a {} run, not {command}",
                m.command
            )));
        }
    }

    let mut out = vec![program.clone()];
    out.extend(before);
    out.push(command);
    if let Some(m) = &manifest {
        out.extend(manifest_tokens(m)?);
    }
    if let Some(path) = &config_file {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))
            .map_err(|e| usage(format!("{e:#}")))?;
        out.extend(parse_config(&text, path)?);
    }
    out.extend(after);
    Ok(Layered {
        argv: out,
        config_file,
        manifest: manifest_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn config_lines_become_flags() {
        let tokens = parse_config("# comment\nsteps=10\n\nbatch_size = 4\n", Path::new("c")).unwrap();
        assert_eq!(tokens, strings(&["--steps=10", "--batch-size=4"]));
        assert!(parse_config("steps\n", Path::new("c")).is_err());
        assert!(parse_config("config=x\n", Path::new("c")).is_err());
    }

    #[test]
    fn take_flag_handles_both_spellings() {
        let mut args = strings(&["pca", "--config", "a", "--k", "2"]);
        assert_eq!(take_flag(&mut args, "--config").unwrap().as_deref(), Some("a"));
        assert_eq!(args, strings(&["pca", "--k", "2"]));
        let mut args = strings(&["--config=b", "pca"]);
        assert_eq!(take_flag(&mut args, "--config").unwrap().as_deref(), Some("b"));
        let mut args = strings(&["pca", "--config"]);
        assert!(take_flag(&mut args, "--config").is_err());
    }

    #[test]
    fn config_tokens_precede_user_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "steps=10\n").unwrap();
        let argv = strings(&["eg", "pca", "--steps", "5", "--config", path.to_str().unwrap()]);
        let layered = layer_args(&argv).unwrap();
        assert_eq!(layered.argv, strings(&["eg", "pca", "--steps=10", "--steps", "5"]));
        assert_eq!(layered.config_file.as_deref(), Some(path.as_path()));
    }
}
