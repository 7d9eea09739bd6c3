//! Turns an extracted update directory (`classes*.dex` plus
//! `AndroidManifest.xml`, optional `lib/`) into an [`AppUpdate`].

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::dex::{parse_dex_with, DexError, DexOptions};
use super::manifest::{parse_manifest, ManifestError};
use crate::diag::{Diagnostic, DiagnosticKind};
use crate::model::AppUpdate;

pub const MANIFEST_FILE: &str = "AndroidManifest.xml";

#[derive(Debug, Error)]
pub enum FrontendError {
    #[error("{0}: no classes*.dex file")]
    NoDexFound(PathBuf),
    #[error("{0}: no {MANIFEST_FILE}")]
    MissingManifest(PathBuf),
    #[error("{path}: {source}")]
    Dex {
        path: PathBuf,
        #[source]
        source: DexError,
    },
    #[error("{path}: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: ManifestError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// An update plus the warnings raised while assembling it.
#[derive(Debug, Clone)]
pub struct ParsedUpdate {
    pub update: AppUpdate,
    pub warnings: Vec<Diagnostic>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FrontendError + '_ {
    move |source| FrontendError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Multidex order: `classes.dex`, `classes2.dex`, `classes3.dex`, ...
/// Any other `classes*.dex` name sorts after the numbered ones.
pub fn dex_files(dir: &Path) -> Result<Vec<PathBuf>, FrontendError> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let Some(middle) = name.strip_prefix("classes").and_then(|n| n.strip_suffix(".dex")) else {
            continue;
        };
        let rank = match middle {
            "" => Some(1),
            digits => digits.parse::<u64>().ok().filter(|&n| n >= 2),
        };
        found.push((rank.unwrap_or(u64::MAX), name, entry.path()));
    }
    found.sort();
    Ok(found.into_iter().map(|(_, _, p)| p).collect())
}

fn contains_shared_object(dir: &Path) -> bool {
    let Ok(entries) = fs::read_dir(dir) else {
        return false;
    };
    entries.flatten().any(|e| {
        let path = e.path();
        if path.is_dir() {
            contains_shared_object(&path)
        } else {
            path.extension().is_some_and(|x| x == "so")
        }
    })
}

/// Parses one update directory. Metadata fields that are not recoverable
/// from the binaries (category, downloads, timestamp) are left at their
/// defaults for the caller to fill.
pub fn parse_update_dir(
    dir: &Path,
    app_id: &str,
    version_code: u64,
    options: DexOptions,
) -> Result<ParsedUpdate, FrontendError> {
    let dex_paths = dex_files(dir)?;
    if dex_paths.is_empty() {
        return Err(FrontendError::NoDexFound(dir.to_owned()));
    }
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Err(FrontendError::MissingManifest(dir.to_owned()));
    }
    let manifest_bytes = fs::read(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest = parse_manifest(&manifest_bytes).map_err(|source| FrontendError::Manifest {
        path: manifest_path.clone(),
        source,
    })?;

    let mut update = AppUpdate::new(app_id, version_code);
    update.activities = manifest.activities.into_iter().collect();
    update.has_native_code = contains_shared_object(&dir.join("lib"));

    let mut warnings = Vec::new();
    for path in &dex_paths {
        let bytes = fs::read(path).map_err(io_err(path))?;
        let classes = parse_dex_with(&bytes, options).map_err(|source| FrontendError::Dex {
            path: path.clone(),
            source,
        })?;
        for class in classes {
            if let Err(dup) = update.insert_class(class) {
                let file = path.file_name().unwrap_or_default().to_string_lossy();
                warnings.push(
                    Diagnostic::new(
                        DiagnosticKind::DuplicateClass,
                        format!("{} redefined in {file}; first definition kept", dup.fqn),
                    )
                    .for_update(app_id, version_code),
                );
            }
        }
    }
    Ok(ParsedUpdate { update, warnings })
}
