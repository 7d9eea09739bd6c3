//! Non-fatal findings collected during loading and analysis.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    DuplicateClass,
    MissingActivityClass,
    AmbiguousRole,
    UnreachableShowCall,
    UnclassifiableUpdate,
    EmptyBucket,
    TooShortLineage,
    UndefinedStatistic,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub app_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub version_code: Option<u64>,
    pub message: String,
}

impl Diagnostic {
    pub fn new(kind: DiagnosticKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            app_id: None,
            version_code: None,
            message: message.into(),
        }
    }

    pub fn for_app(mut self, app_id: impl Into<String>) -> Self {
        self.app_id = Some(app_id.into());
        self
    }

    pub fn for_update(mut self, app_id: impl Into<String>, version_code: u64) -> Self {
        self.app_id = Some(app_id.into());
        self.version_code = Some(version_code);
        self
    }
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = serde_json::to_value(self.kind).ok();
        let kind = kind.as_ref().and_then(|v| v.as_str()).unwrap_or("diagnostic");
        write!(f, "{kind}")?;
        match (&self.app_id, self.version_code) {
            (Some(app), Some(v)) => write!(f, " [{app}@{v}]")?,
            (Some(app), None) => write!(f, " [{app}]")?,
            _ => {}
        }
        write!(f, ": {}", self.message)
    }
}
