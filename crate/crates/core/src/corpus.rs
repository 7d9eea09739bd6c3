//! Directory layout of a corpus on disk:
//!
//! ```text
//! <root>/<app_id>/app.meta
//! <root>/<app_id>/<version_code>/update.ir.jsonl
//! <root>/<app_id>/<version_code>/classes.dex [classes2.dex ...] + AndroidManifest.xml [+ lib/]
//! ```
//!
//! `app.meta` holds `key=value` lines (`category`, `download_count`,
//! `observed_at`); a `<version_code>.<key>=` line overrides the value for
//! one update. Values in an IR header take precedence over `app.meta`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::diag::{Diagnostic, DiagnosticKind};
use crate::frontend::dex::DexOptions;
use crate::frontend::update_dir::{parse_update_dir, FrontendError};
use crate::ir::{load_ir, store_ir, IrError, UpdateDefaults, IR_FILE_NAME};
use crate::model::{AppLineage, AppUpdate, Corpus, ModelError};

pub const META_FILE: &str = "app.meta";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed corpus layout at {path}: {reason}")]
    MalformedLayout { path: PathBuf, reason: String },
    #[error("app {app_id}: version_code {version_code} appears twice")]
    DuplicateVersion { app_id: String, version_code: u64 },
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error("{path}: {source}")]
    Ir {
        path: PathBuf,
        #[source]
        source: IrError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn malformed(path: &Path, reason: impl Into<String>) -> CorpusError {
    CorpusError::MalformedLayout {
        path: path.to_owned(),
        reason: reason.into(),
    }
}

fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_owned(),
        source,
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    pub dex: DexOptions,
}

#[derive(Debug, Clone, Default)]
pub struct LoadedCorpus {
    pub corpus: Corpus,
    /// Sorted, so identical inputs give identical warning lists.
    pub warnings: Vec<Diagnostic>,
}

/// Parsed `app.meta`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AppMeta {
    pub base: BTreeMap<String, String>,
    pub per_version: BTreeMap<u64, BTreeMap<String, String>>,
}

impl AppMeta {
    pub fn parse(text: &str, path: &Path) -> Result<Self, CorpusError> {
        let mut meta = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| malformed(path, format!("line {}: expected key=value", i + 1)))?;
            let (key, value) = (key.trim(), value.trim().to_owned());
            match key.split_once('.') {
                Some((ver, k)) => {
                    let ver: u64 = ver
                        .parse()
                        .map_err(|_| malformed(path, format!("line {}: bad version prefix {ver:?}", i + 1)))?;
                    meta.per_version.entry(ver).or_default().insert(k.to_owned(), value);
                }
                None => {
                    meta.base.insert(key.to_owned(), value);
                }
            }
        }
        Ok(meta)
    }

    fn get(&self, version: u64, key: &str) -> Option<&str> {
        self.per_version
            .get(&version)
            .and_then(|m| m.get(key))
            .or_else(|| self.base.get(key))
            .map(String::as_str)
    }

    pub fn defaults_for(&self, version: u64, path: &Path) -> Result<UpdateDefaults, CorpusError> {
        let number = |key: &str| -> Result<Option<String>, CorpusError> { Ok(self.get(version, key).map(str::to_owned)) };
        let parse_u64 = |key: &str| -> Result<Option<u64>, CorpusError> {
            number(key)?
                .map(|v| v.parse().map_err(|_| malformed(path, format!("{key}={v} is not an integer"))))
                .transpose()
        };
        let observed_at = number("observed_at")?
            .map(|v| v.parse::<i64>().map_err(|_| malformed(path, format!("observed_at={v} is not an integer"))))
            .transpose()?;
        Ok(UpdateDefaults {
            observed_at,
            category: self.get(version, "category").map(str::to_owned),
            download_count: parse_u64("download_count")?,
        })
    }

    /// Renders metadata for a lineage: the latest update's values as base
    /// lines, and overrides for earlier updates that differ.
    pub fn for_lineage(lineage: &AppLineage) -> String {
        let latest = lineage.latest();
        let mut out = format!(
            "category={}\ndownload_count={}\nobserved_at={}\n",
            latest.category, latest.download_count, latest.observed_at
        );
        for u in lineage.updates() {
            if u.category != latest.category {
                out.push_str(&format!("{}.category={}\n", u.version_code, u.category));
            }
            if u.download_count != latest.download_count {
                out.push_str(&format!("{}.download_count={}\n", u.version_code, u.download_count));
            }
            if u.observed_at != latest.observed_at {
                out.push_str(&format!("{}.observed_at={}\n", u.version_code, u.observed_at));
            }
        }
        out
    }
}

struct Job {
    app_id: String,
    version_code: u64,
    dir: PathBuf,
    defaults: UpdateDefaults,
}

fn sorted_entries(dir: &Path) -> Result<Vec<fs::DirEntry>, CorpusError> {
    let mut entries = fs::read_dir(dir)
        .map_err(io_at(dir))?
        .collect::<Result<Vec<_>, _>>()
        .map_err(io_at(dir))?;
    entries.sort_by_key(|e| e.file_name());
    Ok(entries)
}

fn is_hidden(entry: &fs::DirEntry) -> bool {
    entry.file_name().to_string_lossy().starts_with('.')
}

fn collect_jobs(root: &Path) -> Result<(Vec<String>, Vec<Job>), CorpusError> {
    if !root.is_dir() {
        return Err(malformed(root, "corpus root is not a directory"));
    }
    let mut apps = Vec::new();
    let mut jobs = Vec::new();
    for app_entry in sorted_entries(root)? {
        if is_hidden(&app_entry) || !app_entry.path().is_dir() {
            continue;
        }
        let app_dir = app_entry.path();
        let app_id = app_entry.file_name().to_string_lossy().into_owned();
        let meta_path = app_dir.join(META_FILE);
        if !meta_path.is_file() {
            return Err(malformed(&app_dir, format!("missing {META_FILE}")));
        }
        let meta = AppMeta::parse(&fs::read_to_string(&meta_path).map_err(io_at(&meta_path))?, &meta_path)?;
        let mut seen = BTreeMap::new();
        for version_entry in sorted_entries(&app_dir)? {
            let path = version_entry.path();
            if is_hidden(&version_entry) || !path.is_dir() {
                continue;
            }
            let name = version_entry.file_name().to_string_lossy().into_owned();
            let version_code: u64 = name
                .parse()
                .map_err(|_| malformed(&path, "update directory name is not a version code"))?;
            if seen.insert(version_code, ()).is_some() {
                return Err(CorpusError::DuplicateVersion {
                    app_id: app_id.clone(),
                    version_code,
                });
            }
            jobs.push(Job {
                app_id: app_id.clone(),
                version_code,
                defaults: meta.defaults_for(version_code, &meta_path)?,
                dir: path,
            });
        }
        apps.push(app_id);
    }
    Ok((apps, jobs))
}

fn load_one(job: &Job, options: LoadOptions) -> Result<(AppUpdate, Vec<Diagnostic>), CorpusError> {
    let ir_path = job.dir.join(IR_FILE_NAME);
    if ir_path.is_file() {
        let update = load_ir(&ir_path, &job.defaults).map_err(|source| CorpusError::Ir {
            path: ir_path.clone(),
            source,
        })?;
        if update.app_id != job.app_id || update.version_code != job.version_code {
            return Err(malformed(
                &ir_path,
                format!(
                    "header names {}@{}, directory is {}@{}",
                    update.app_id, update.version_code, job.app_id, job.version_code
                ),
            ));
        }
        return Ok((update, Vec::new()));
    }
    let parsed = parse_update_dir(&job.dir, &job.app_id, job.version_code, options.dex)?;
    let mut update = parsed.update;
    update.observed_at = job.defaults.observed_at.unwrap_or(0);
    update.category = job
        .defaults
        .category
        .clone()
        .ok_or_else(|| malformed(&job.dir, "no category in app.meta"))?;
    update.download_count = job
        .defaults
        .download_count
        .ok_or_else(|| malformed(&job.dir, "no download_count in app.meta"))?;
    Ok((update, parsed.warnings))
}

/// Loads every lineage under `root`, parsing update directories in
/// parallel. The first error in (app, version) order is reported.
pub fn load_corpus(root: &Path, options: LoadOptions) -> Result<LoadedCorpus, CorpusError> {
    let (apps, jobs) = collect_jobs(root)?;
    let results: Vec<_> = jobs.par_iter().map(|job| load_one(job, options)).collect();

    let mut by_app: BTreeMap<String, Vec<AppUpdate>> = apps.into_iter().map(|a| (a, Vec::new())).collect();
    let mut warnings = Vec::new();
    for (job, result) in jobs.iter().zip(results) {
        let (update, mut w) = result?;
        warnings.append(&mut w);
        for missing in update.missing_activity_classes() {
            warnings.push(
                Diagnostic::new(
                    DiagnosticKind::MissingActivityClass,
                    format!("activity {missing} has no class definition"),
                )
                .for_update(&update.app_id, update.version_code),
            );
        }
        by_app.get_mut(&job.app_id).expect("app registered").push(update);
    }

    let mut corpus = Corpus::new();
    for (app_id, updates) in by_app {
        if updates.is_empty() {
            return Err(malformed(&root.join(&app_id), "app has no update directories"));
        }
        corpus.insert(AppLineage::new(app_id, updates)?);
    }
    warnings.sort();
    Ok(LoadedCorpus { corpus, warnings })
}

/// Writes a corpus in IR form under `root`.
pub fn store_corpus(corpus: &Corpus, root: &Path) -> Result<(), CorpusError> {
    for lineage in corpus.iter() {
        let app_dir = root.join(lineage.app_id());
        fs::create_dir_all(&app_dir).map_err(io_at(&app_dir))?;
        let meta_path = app_dir.join(META_FILE);
        fs::write(&meta_path, AppMeta::for_lineage(lineage)).map_err(io_at(&meta_path))?;
        for update in lineage.updates() {
            let dir = app_dir.join(update.version_code.to_string());
            fs::create_dir_all(&dir).map_err(io_at(&dir))?;
            let path = dir.join(IR_FILE_NAME);
            store_ir(update, &path).map_err(|source| CorpusError::Ir { path, source })?;
        }
    }
    Ok(())
}
