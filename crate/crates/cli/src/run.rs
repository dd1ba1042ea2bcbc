//! Run directory layout and manifest bookkeeping.

use std::path::{Path, PathBuf};

use anyhow::Result;
use counterarg_core::artifact::{ensure_dir, write_json};
use counterarg_core::config::{Manifest, RunConfig};

pub struct RunContext {
    pub dir: PathBuf,
    pub config: RunConfig,
}

impl RunContext {
    pub fn open(dir: &Path, config: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let config = RunConfig::load(config, overrides)?;
        Ok(RunContext {
            dir: dir.to_path_buf(),
            config,
        })
    }

    pub fn artifacts(&self) -> PathBuf {
        self.dir.join("artifacts")
    }

    pub fn artifact(&self, name: &str) -> PathBuf {
        self.artifacts().join(name)
    }

    fn manifest_path(&self) -> PathBuf {
        self.dir.join("manifest.json")
    }

    /// Creates the layout and writes the effective config.
    pub fn prepare(&self) -> Result<Manifest> {
        for d in [self.dir.clone(), self.artifacts(), self.dir.join("logs")] {
            ensure_dir(&d)?;
        }
        write_json(&self.dir.join("config.json"), &self.config)?;
        Ok(Manifest::load_or_new(&self.manifest_path(), &self.config)?)
    }

    /// True when `command` already ran under this config with intact outputs.
    pub fn skip(&self, command: &str, force: bool) -> Result<bool> {
        let manifest = self.prepare()?;
        if !force && manifest.is_complete(command, &self.dir) {
            log::info!("{command}: outputs are current in {}, skipping (use --force to rerun)", self.dir.display());
            return Ok(true);
        }
        Ok(false)
    }

    pub fn finish(&self, command: &str, seed: u64, outputs: &[PathBuf]) -> Result<()> {
        let mut manifest = self.prepare()?;
        manifest.record(command, seed, &self.dir, outputs)?;
        manifest.save(&self.manifest_path())?;
        let log_line = format!("{command}: {} output(s)\n", outputs.len());
        let log_path = self.dir.join("logs").join("commands.log");
        let mut text = std::fs::read_to_string(&log_path).unwrap_or_default();
        text.push_str(&log_line);
        std::fs::write(&log_path, text)?;
        Ok(())
    }
}
