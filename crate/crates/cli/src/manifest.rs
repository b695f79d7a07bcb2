//! Reproducibility record of one command invocation. The manifest
//! snapshots the tool version, the command, the seed and thread count,
//! the hashes of any input files, and the full resolved configuration.
//! Its hash is stamped as a `# manifest <hash>` comment into every
//! output file, and the manifest itself can be fed back through
//! `--config` to rerun the identical configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::Fail;

/// The part of the manifest that determines the run; its serialization
/// is what gets hashed. Scalar fields come first so the TOML tables
/// (`inputs`, `config`) follow them.
#[derive(Serialize)]
struct ManifestCore<'a> {
    tool: String,
    command: String,
    seed: u64,
    threads: usize,
    inputs: BTreeMap<String, String>,
    config: &'a Config,
}

pub struct Manifest {
    core_text: String,
    hash: String,
    outputs: BTreeMap<String, String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

fn hash_file(path: &Path) -> Result<String, Fail> {
    let bytes = std::fs::read(path)
        .map_err(|e| Fail::run(format!("cannot hash {}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| {
        path.to_string_lossy().into_owned()
    })
}

impl Manifest {
    /// Builds the manifest core and its hash. Input files are recorded
    /// by name and content hash, so the hash does not depend on where
    /// the files happen to live.
    pub fn new(
        command: &str,
        seed: u64,
        threads: usize,
        inputs: &[&Path],
        config: &Config,
    ) -> Result<Manifest, Fail> {
        let mut input_map = BTreeMap::new();
        for p in inputs {
            input_map.insert(file_name(p), hash_file(p)?);
        }
        let core = ManifestCore {
            tool: format!("oam {}", env!("CARGO_PKG_VERSION")),
            command: command.to_string(),
            seed,
            threads,
            inputs: input_map,
            config,
        };
        let core_text = toml::to_string(&core)
            .map_err(|e| Fail::run(format!("manifest serialization: {e}")))?;
        let hash = sha256_hex(core_text.as_bytes());
        Ok(Manifest { core_text, hash, outputs: BTreeMap::new() })
    }

    /// Header comment for output files.
    pub fn comment(&self) -> String {
        format!("manifest {}", self.hash)
    }

    /// Hashes a finished output file into the provenance table.
    pub fn record_output(&mut self, path: &Path) -> Result<(), Fail> {
        let digest = hash_file(path)?;
        self.outputs.insert(file_name(path), digest);
        Ok(())
    }

    /// Writes `manifest.toml` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf, Fail> {
        let path = dir.join("manifest.toml");
        let mut text = format!(
            "# manifest {}\nmanifest_hash = \"{}\"\n{}",
            self.hash, self.hash, self.core_text
        );
        if !self.outputs.is_empty() {
            text.push_str("\n[outputs]\n");
            for (name, digest) in &self.outputs {
                text.push_str(&format!("\"{name}\" = \"{digest}\"\n"));
            }
        }
        std::fs::write(&path, text)
            .map_err(|e| Fail::run(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}
