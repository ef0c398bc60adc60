use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Record of one invocation, written as `manifest.json` next to the outputs.
#[derive(Debug)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub ensemble: usize,
    pub config: Option<PathBuf>,
    pub config_sha256: Option<String>,
    pub settings: Value,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, ensemble: usize, config: Option<&Path>) -> Self {
        let config_sha256 = config.and_then(|p| fs::read(p).ok()).map(|b| sha256_hex(&b));
        Manifest {
            command: command.to_string(),
            seed,
            ensemble,
            config: config.map(Path::to_path_buf),
            config_sha256,
            settings: Value::Null,
        }
    }

    /// Hashes every file under `out` except the manifest itself and writes
    /// the manifest. `error` is `(category, message)` for a failed run.
    pub fn write(&self, out: &Path, error: Option<(&str, String)>) -> std::io::Result<PathBuf> {
        let mut files = Vec::new();
        collect(out, out, &mut files)?;
        files.sort();
        let outputs: Vec<Value> = files
            .iter()
            .map(|rel| {
                let bytes = fs::read(out.join(rel)).unwrap_or_default();
                json!({ "file": rel, "bytes": bytes.len(), "sha256": sha256_hex(&bytes) })
            })
            .collect();
        let status = match &error {
            None => json!({ "ok": true }),
            Some((category, message)) => json!({ "ok": false, "category": category, "message": message }),
        };
        let doc = json!({
            "tool": "lobscale",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "seed": self.seed,
            "ensemble": self.ensemble,
            "config": self.config.as_ref().map(|p| p.display().to_string()),
            "config_sha256": self.config_sha256,
            "settings": self.settings,
            "status": status,
            "outputs": outputs,
        });
        let path = out.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&doc).expect("manifest serialises") + "\n")?;
        Ok(path)
    }
}

fn collect(root: &Path, dir: &Path, files: &mut Vec<String>) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect(root, &path, files)?;
        } else if path.file_name().is_some_and(|n| n != "manifest.json") {
            let rel = path.strip_prefix(root).unwrap_or(&path);
            files.push(rel.to_string_lossy().replace('\\', "/"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
