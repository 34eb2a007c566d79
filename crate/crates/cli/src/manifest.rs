use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use cadmr::pipeline::TrainConfig;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Manifests are per verb so pipeline stages can share a run directory.
pub fn manifest_name(verb: &str) -> String {
    format!("manifest-{verb}.json")
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Record of one run: what went in, what came out, and the settings needed to
/// repeat it.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub verb: &'static str,
    pub args: Vec<String>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub config: Option<TrainConfig>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

/// Collects inputs and outputs while a verb runs.
pub struct Run {
    pub dir: PathBuf,
    manifest: Manifest,
}

impl Run {
    pub fn new(dir: &Path, verb: &'static str, args: Vec<String>) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest: Manifest {
                tool: "cadmr",
                version: env!("CARGO_PKG_VERSION"),
                verb,
                args,
                seed: None,
                threads: None,
                config: None,
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
            },
        })
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.manifest.seed = Some(seed);
    }

    pub fn set_threads(&mut self, threads: usize) {
        self.manifest.threads = Some(threads);
    }

    pub fn set_config(&mut self, cfg: &TrainConfig) {
        self.manifest.seed = Some(cfg.seed);
        self.manifest.config = Some(cfg.clone());
    }

    /// Hashes a file, or every file directly inside a directory.
    pub fn input(&mut self, path: &Path) -> Result<()> {
        if path.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(path)
                .with_context(|| format!("listing {}", path.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            entries.sort();
            for p in entries {
                let h = sha256_file(&p)?;
                self.manifest.inputs.insert(p.display().to_string(), h);
            }
        } else {
            let h = sha256_file(path)?;
            self.manifest.inputs.insert(path.display().to_string(), h);
        }
        Ok(())
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.path(name);
        fs::write(&path, contents.as_ref()).with_context(|| format!("writing {}", path.display()))?;
        self.record(name)?;
        Ok(path)
    }

    /// Registers a file some other writer already put in the run directory.
    pub fn record(&mut self, name: &str) -> Result<()> {
        let h = sha256_file(&self.path(name))?;
        self.manifest.outputs.insert(name.to_string(), h);
        Ok(())
    }

    /// Registers every file in the run directory except the manifest itself.
    pub fn record_all(&mut self) -> Result<()> {
        let mut names: Vec<String> = fs::read_dir(&self.dir)?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_file())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| !n.starts_with("manifest-"))
            .collect();
        names.sort();
        for n in names {
            self.record(&n)?;
        }
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.manifest)?;
        let path = self.dir.join(manifest_name(self.manifest.verb));
        fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}
