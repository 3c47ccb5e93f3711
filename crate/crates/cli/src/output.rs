//! All-or-nothing writing of a run's output files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{CliError, CliResult};

/// Files produced by one run, written together.
#[derive(Debug, Default)]
pub struct OutputSet {
    files: Vec<(String, Vec<u8>)>,
}

impl OutputSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.into(), bytes.into()));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    /// Write every file to a temporary name, then rename into place. On any failure
    /// the temporaries and any already renamed files are removed.
    pub fn commit(&self, dir: &Path) -> CliResult<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let mut staged: Vec<(PathBuf, PathBuf)> = Vec::new();
        let cleanup = |staged: &[(PathBuf, PathBuf)], placed: &[PathBuf]| {
            for (tmp, _) in staged {
                let _ = fs::remove_file(tmp);
            }
            for p in placed {
                let _ = fs::remove_file(p);
            }
        };
        for (name, bytes) in &self.files {
            let dest = dir.join(name);
            let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
            let res = fs::File::create(&tmp).and_then(|mut f| {
                f.write_all(bytes)?;
                f.sync_all()
            });
            staged.push((tmp.clone(), dest));
            if let Err(e) = res {
                cleanup(&staged, &[]);
                return Err(CliError::io(tmp, e));
            }
        }
        let mut placed = Vec::new();
        for (i, (tmp, dest)) in staged.iter().enumerate() {
            if let Err(e) = fs::rename(tmp, dest) {
                cleanup(&staged[i..], &placed);
                return Err(CliError::io(dest, e));
            }
            placed.push(dest.clone());
        }
        Ok(placed)
    }
}
