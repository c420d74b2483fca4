use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Record of one invocation, written next to its outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    /// Every flag with defaults filled in, keyed by flag name.
    pub config: BTreeMap<String, Value>,
    pub seed: Option<u64>,
    pub inputs: Vec<InputDigest>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub artifacts: Vec<PathBuf>,
}

impl Manifest {
    pub fn start<T: Serialize>(command: &str, config: &T, seed: Option<u64>) -> anyhow::Result<Self> {
        let config = match serde_json::to_value(config)? {
            Value::Object(map) => map.into_iter().collect(),
            other => anyhow::bail!("configuration serialized to {other}, expected an object"),
        };
        Ok(Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            seed,
            inputs: Vec::new(),
            started_unix_ms: unix_ms(),
            finished_unix_ms: 0,
            artifacts: Vec::new(),
        })
    }

    pub fn input(&mut self, path: &Path) -> anyhow::Result<()> {
        let sha256 = sha256_file(path)?;
        self.inputs.push(InputDigest {
            path: path.to_path_buf(),
            sha256,
        });
        Ok(())
    }

    pub fn artifact(&mut self, path: PathBuf) {
        self.artifacts.push(path);
    }

    /// Stamps the end time and writes `manifest.json` into `dir`.
    pub fn finish(mut self, dir: &Path) -> anyhow::Result<PathBuf> {
        self.finished_unix_ms = unix_ms();
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&self)?;
        fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn unix_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let mut file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    #[serde(rename_all = "kebab-case")]
    struct Example {
        batch_size: usize,
        truth: Option<String>,
    }

    #[test]
    fn round_trip_and_digest() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.txt");
        fs::write(&input, "abc").unwrap();
        let mut m = Manifest::start(
            "pca",
            &Example {
                batch_size: 4,
                truth: None,
            },
            Some(3),
        )
        .unwrap();
        m.input(&input).unwrap();
        assert_eq!(
            m.inputs[0].sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        let path = m.finish(dir.path()).unwrap();
        let back = Manifest::load(&path).unwrap();
        assert_eq!(back.command, "pca");
        assert_eq!(back.config["batch-size"], Value::from(4));
        assert_eq!(back.config["truth"], Value::Null);
        assert!(back.finished_unix_ms >= back.started_unix_ms);
    }
}
