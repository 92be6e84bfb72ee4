//! Output planning: every file a command will write is known before any work
//! starts, so an existing file aborts the run early unless `--force` is given.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

pub struct OutputPlan {
    dir: PathBuf,
    force: bool,
}

impl OutputPlan {
    /// Fails if any of `names` already exists in `dir` and `force` is off.
    pub fn new(dir: &Path, force: bool, names: &[String]) -> Result<Self> {
        if !force {
            let existing: Vec<String> = names
                .iter()
                .filter(|n| dir.join(n).exists())
                .map(|n| dir.join(n).display().to_string())
                .collect();
            if !existing.is_empty() {
                bail!("refusing to overwrite {} (use --force)", existing.join(", "));
            }
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            force,
        })
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.dir).with_context(|| format!("cannot create {}", self.dir.display()))?;
        let path = self.dir.join(name);
        if !self.force && path.exists() {
            bail!("refusing to overwrite {} (use --force)", path.display());
        }
        fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }
}
