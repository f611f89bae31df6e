//! Reference solutions, cached on disk when `HBPC_REF_CACHE` is set.

use std::path::{Path, PathBuf};

use hbpc::reference::reference_solution;
use hbpc::{ProblemSpec, State};

use crate::csv::{parse_reference, write_reference};
use crate::error::{HarnessError, Result};

pub const REF_CACHE_ENV: &str = "HBPC_REF_CACHE";

#[derive(Debug, Clone, Default)]
pub struct ReferenceCache {
    dir: Option<PathBuf>,
}

impl ReferenceCache {
    pub fn new(dir: Option<PathBuf>) -> Self {
        Self { dir }
    }

    pub fn from_env() -> Self {
        Self::new(std::env::var_os(REF_CACHE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn path_for(&self, spec: &ProblemSpec, fine_steps: usize) -> Option<PathBuf> {
        self.dir
            .as_ref()
            .map(|d| d.join(format!("ref_{spec}_N{fine_steps}.csv")))
    }

    /// Closed-form references bypass the cache. A cached file whose step
    /// count does not match is recomputed.
    pub fn reference(&self, spec: &ProblemSpec, fine_steps: usize) -> Result<State> {
        if let Some(r) = spec.closed_form_reference() {
            return Ok(r);
        }
        let path = self.path_for(spec, fine_steps);
        if let Some(path) = &path {
            if let Ok(text) = std::fs::read_to_string(path) {
                let (n, w) = parse_reference(&text)?;
                if n == fine_steps && w.len() == spec.build().dim() {
                    return Ok(w);
                }
            }
        }
        let w = reference_solution(spec, fine_steps)?;
        if let Some(path) = &path {
            std::fs::create_dir_all(path.parent().expect("file inside cache dir"))
                .map_err(|e| HarnessError::io(path, e))?;
            std::fs::write(path, write_reference(fine_steps, &w)).map_err(|e| HarnessError::io(path, e))?;
        }
        Ok(w)
    }
}
