//! Output directories, stage fingerprints and the run manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use inpars_core::synth::{file_sha256, RunManifest, StageRecord};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::CliConfig;

pub const MANIFEST: &str = "manifest.json";

pub type Counters = BTreeMap<String, u64>;

/// Hash of a stage name, its parameters and the bytes of every input file.
/// A stage whose fingerprint and outputs are unchanged has nothing to do.
pub fn fingerprint(stage: &str, params: &impl Serialize, inputs: &[&Path]) -> Result<String> {
    let mut h = Sha256::new();
    h.update(stage.as_bytes());
    h.update([0]);
    h.update(serde_json::to_vec(params).context("serialize stage parameters")?);
    for input in inputs {
        let sum = file_sha256(input).with_context(|| format!("read input {}", input.display()))?;
        h.update([0]);
        h.update(sum.as_bytes());
    }
    Ok(hex::encode(h.finalize()))
}

/// The settings as stored in the manifest, with secrets blanked.
fn manifest_config(config: &CliConfig) -> serde_json::Value {
    let mut shown = config.clone();
    if shown.gateway.bearer_token.is_some() {
        shown.gateway.bearer_token = Some("<redacted>".into());
    }
    serde_json::to_value(shown).expect("config serializes")
}

pub struct Workspace {
    dir: PathBuf,
    manifest: RunManifest,
    skip_current: bool,
}

impl Workspace {
    /// Opens `dir`, creating it if needed. With `skip_current`, stages whose
    /// recorded fingerprint and outputs still match are not rerun.
    pub fn open(dir: &Path, config: &CliConfig, skip_current: bool) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("create {}", dir.display()))?;
        let mut manifest = RunManifest::load(dir.join(MANIFEST))?.unwrap_or_default();
        manifest.config = manifest_config(config);
        manifest.seed = config.pipeline.rng_seed;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            skip_current,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Runs `body` unless the stage is current. `body` gets the output
    /// directory and returns counters for the manifest; `outputs` are the
    /// file names it writes there. Returns whether the stage ran.
    pub fn stage(
        &mut self,
        name: &str,
        fingerprint: &str,
        outputs: &[&str],
        body: impl FnOnce(&Path) -> Result<Counters>,
    ) -> Result<bool> {
        if self.skip_current {
            if let Some(rec) = self.manifest.stages.get(name) {
                if rec.is_current(fingerprint, &self.dir) {
                    log::info!("{name}: up to date");
                    return Ok(false);
                }
            }
        }
        log::info!("{name}: running");
        let counters = body(&self.dir).with_context(|| format!("stage {name}"))?;
        for (k, v) in counters {
            self.manifest.counters.insert(k, v);
        }
        let record = StageRecord::capture(fingerprint, &self.dir, outputs)?;
        self.manifest.stages.insert(name.to_string(), record);
        self.manifest.save(self.dir.join(MANIFEST))?;
        Ok(true)
    }
}

pub fn counters<const N: usize>(items: [(&str, usize); N]) -> Counters {
    items.into_iter().map(|(k, v)| (k.to_string(), v as u64)).collect()
}

/// Short stable tag for a string, used in file names.
pub fn short_hash(s: &str) -> String {
    hex::encode(Sha256::digest(s.as_bytes()))[..12].to_string()
}
