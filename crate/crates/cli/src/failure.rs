use std::path::{Component, Path};

use adstrat::corpus::CorpusError;
use adstrat::frontend::FrontendError;
use serde_json::json;

use crate::{EXIT_ANALYSIS, EXIT_USAGE};

/// A failed run, classified for the exit code, with the app and update it
/// concerns when known.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Analysis {
        error: anyhow::Error,
        app_id: Option<String>,
        version_code: Option<u64>,
    },
}

impl Failure {
    pub fn usage(error: anyhow::Error) -> Self {
        Failure::Usage(error)
    }

    pub fn analysis(error: anyhow::Error) -> Self {
        Failure::Analysis {
            error,
            app_id: None,
            version_code: None,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Analysis { .. } => EXIT_ANALYSIS,
        }
    }

    /// Maps a corpus loading error, recovering the app and version from
    /// the offending path relative to the corpus root.
    pub fn from_corpus(root: &Path, err: CorpusError) -> Self {
        let (app_id, version_code) = match &err {
            CorpusError::DuplicateVersion { app_id, version_code } => (Some(app_id.clone()), Some(*version_code)),
            CorpusError::MalformedLayout { path, .. } | CorpusError::Ir { path, .. } | CorpusError::Io { path, .. } => {
                locate(root, path)
            }
            CorpusError::Frontend(
                FrontendError::NoDexFound(path)
                | FrontendError::MissingManifest(path)
                | FrontendError::Dex { path, .. }
                | FrontendError::Manifest { path, .. }
                | FrontendError::Io { path, .. },
            ) => locate(root, path),
            CorpusError::Model(_) => (None, None),
        };
        Failure::Analysis {
            error: anyhow::Error::new(err),
            app_id,
            version_code,
        }
    }

    pub fn to_json(&self, command: &str) -> String {
        let (class, error, app_id, version_code) = match self {
            Failure::Usage(e) => ("usage", e, None, None),
            Failure::Analysis {
                error,
                app_id,
                version_code,
            } => ("analysis", error, app_id.as_deref(), *version_code),
        };
        let mut v = json!({
            "level": "error",
            "class": class,
            "command": command,
            "message": format!("{error:#}"),
        });
        if let Some(app) = app_id {
            v["app_id"] = json!(app);
        }
        if let Some(ver) = version_code {
            v["version_code"] = json!(ver);
        }
        v.to_string()
    }
}

fn locate(root: &Path, path: &Path) -> (Option<String>, Option<u64>) {
    let Ok(rel) = path.strip_prefix(root) else {
        return (None, None);
    };
    let mut parts = rel.components().filter_map(|c| match c {
        Component::Normal(s) => Some(s.to_string_lossy().into_owned()),
        _ => None,
    });
    let app = parts.next();
    let version = parts.next().and_then(|v| v.parse().ok());
    (app, version)
}
