//! Immutable data model shared by every analysis.
//!
//! Class names are always in dotted canonical form (`com.foo.Bar`, inner
//! classes as `com.foo.Bar$Inner`). Binary frontends convert DEX type
//! descriptors into this form before anything else sees them.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("invalid class name {0:?}")]
    InvalidClassName(String),
    #[error("invalid method name {0:?} on {1}")]
    InvalidMethodName(String, String),
    #[error("call site in {class} has caller owner {owner}")]
    ForeignCaller { class: String, owner: String },
    #[error("duplicate ordinal {ordinal} for caller {caller} in {class}")]
    DuplicateOrdinal {
        class: String,
        caller: String,
        ordinal: u32,
    },
    #[error("lineage {0} has no updates")]
    EmptyLineage(String),
    #[error("lineage {app_id} repeats version_code {version_code}")]
    DuplicateVersion { app_id: String, version_code: u64 },
    #[error("update {found} does not belong to lineage {expected}")]
    ForeignUpdate { expected: String, found: String },
}

/// A reference to a method by owner class, name and arity.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MethodRef {
    pub owner_class: String,
    pub method_name: String,
    pub param_count: u32,
}

impl MethodRef {
    pub fn new(owner_class: impl Into<String>, method_name: impl Into<String>, param_count: u32) -> Self {
        Self {
            owner_class: owner_class.into(),
            method_name: method_name.into(),
            param_count,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !is_valid_class_name(&self.owner_class) {
            return Err(ModelError::InvalidClassName(self.owner_class.clone()));
        }
        if self.method_name.is_empty() || self.method_name.chars().any(char::is_whitespace) {
            return Err(ModelError::InvalidMethodName(
                self.method_name.clone(),
                self.owner_class.clone(),
            ));
        }
        Ok(())
    }
}

impl std::fmt::Display for MethodRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}.{}/{}", self.owner_class, self.method_name, self.param_count)
    }
}

/// One invoke instruction: `caller` contains it, `callee` is its target.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CallSite {
    pub caller: MethodRef,
    pub callee: MethodRef,
    /// Position of the invoke among the caller's invokes.
    pub ordinal: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassRecord {
    pub fqn: String,
    pub package_path: String,
    pub declared_methods: Vec<MethodRef>,
    pub call_sites: Vec<CallSite>,
}

impl ClassRecord {
    pub fn new(fqn: impl Into<String>) -> Result<Self, ModelError> {
        let fqn = fqn.into();
        if !is_valid_class_name(&fqn) {
            return Err(ModelError::InvalidClassName(fqn));
        }
        Ok(Self {
            package_path: package_of(&fqn).to_owned(),
            fqn,
            declared_methods: Vec::new(),
            call_sites: Vec::new(),
        })
    }

    pub fn declare_method(&mut self, name: impl Into<String>, param_count: u32) -> &mut Self {
        self.declared_methods
            .push(MethodRef::new(self.fqn.clone(), name, param_count));
        self
    }

    /// Appends a call from `caller_method` to `callee`, assigning the next
    /// free ordinal for that caller.
    pub fn add_call(&mut self, caller_method: &str, caller_params: u32, callee: MethodRef) -> u32 {
        let caller = MethodRef::new(self.fqn.clone(), caller_method, caller_params);
        let ordinal = self
            .call_sites
            .iter()
            .filter(|c| c.caller == caller)
            .map(|c| c.ordinal + 1)
            .max()
            .unwrap_or(0);
        self.call_sites.push(CallSite {
            caller,
            callee,
            ordinal,
        });
        ordinal
    }

    pub fn simple_name(&self) -> &str {
        simple_name(&self.fqn)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !is_valid_class_name(&self.fqn) || self.package_path != package_of(&self.fqn) {
            return Err(ModelError::InvalidClassName(self.fqn.clone()));
        }
        for m in &self.declared_methods {
            m.validate()?;
            if m.owner_class != self.fqn {
                return Err(ModelError::ForeignCaller {
                    class: self.fqn.clone(),
                    owner: m.owner_class.clone(),
                });
            }
        }
        let mut seen = BTreeSet::new();
        for c in &self.call_sites {
            c.caller.validate()?;
            c.callee.validate()?;
            if c.caller.owner_class != self.fqn {
                return Err(ModelError::ForeignCaller {
                    class: self.fqn.clone(),
                    owner: c.caller.owner_class.clone(),
                });
            }
            if !seen.insert((&c.caller, c.ordinal)) {
                return Err(ModelError::DuplicateOrdinal {
                    class: self.fqn.clone(),
                    caller: c.caller.to_string(),
                    ordinal: c.ordinal,
                });
            }
        }
        Ok(())
    }
}

/// One deployed version of an app.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppUpdate {
    pub app_id: String,
    pub version_code: u64,
    /// UTC seconds. Stored, never used by the metrics.
    pub observed_at: i64,
    pub category: String,
    pub download_count: u64,
    pub classes: BTreeMap<String, ClassRecord>,
    pub activities: BTreeSet<String>,
    pub has_native_code: bool,
}

impl AppUpdate {
    pub fn new(app_id: impl Into<String>, version_code: u64) -> Self {
        Self {
            app_id: app_id.into(),
            version_code,
            observed_at: 0,
            category: String::new(),
            download_count: 0,
            classes: BTreeMap::new(),
            activities: BTreeSet::new(),
            has_native_code: false,
        }
    }

    /// Inserts a class unless one with the same name exists; the existing
    /// record wins and the rejected one is handed back.
    pub fn insert_class(&mut self, class: ClassRecord) -> Result<(), ClassRecord> {
        match self.classes.entry(class.fqn.clone()) {
            std::collections::btree_map::Entry::Occupied(_) => Err(class),
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(class);
                Ok(())
            }
        }
    }

    pub fn call_sites(&self) -> impl Iterator<Item = &CallSite> {
        self.classes.values().flat_map(|c| c.call_sites.iter())
    }

    /// Activities declared in the manifest without a matching class.
    pub fn missing_activity_classes(&self) -> impl Iterator<Item = &str> {
        self.activities
            .iter()
            .filter(|a| !self.classes.contains_key(a.as_str()))
            .map(String::as_str)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (key, class) in &self.classes {
            if key != &class.fqn {
                return Err(ModelError::InvalidClassName(key.clone()));
            }
            class.validate()?;
        }
        for a in &self.activities {
            if !is_valid_class_name(a) {
                return Err(ModelError::InvalidClassName(a.clone()));
            }
        }
        Ok(())
    }
}

/// All updates of one app, strictly ordered by version code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppLineage {
    app_id: String,
    updates: Vec<AppUpdate>,
}

impl AppLineage {
    pub fn new(app_id: impl Into<String>, mut updates: Vec<AppUpdate>) -> Result<Self, ModelError> {
        let app_id = app_id.into();
        if updates.is_empty() {
            return Err(ModelError::EmptyLineage(app_id));
        }
        if let Some(u) = updates.iter().find(|u| u.app_id != app_id) {
            return Err(ModelError::ForeignUpdate {
                expected: app_id,
                found: u.app_id.clone(),
            });
        }
        updates.sort_by_key(|u| u.version_code);
        if let Some(w) = updates.windows(2).find(|w| w[0].version_code == w[1].version_code) {
            return Err(ModelError::DuplicateVersion {
                app_id,
                version_code: w[0].version_code,
            });
        }
        Ok(Self { app_id, updates })
    }

    pub fn app_id(&self) -> &str {
        &self.app_id
    }

    pub fn updates(&self) -> &[AppUpdate] {
        &self.updates
    }

    pub fn latest(&self) -> &AppUpdate {
        self.updates.last().expect("lineage is never empty")
    }

    pub fn len(&self) -> usize {
        self.updates.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Consecutive `(previous, next)` pairs.
    pub fn transitions(&self) -> impl Iterator<Item = (&AppUpdate, &AppUpdate)> {
        self.updates.windows(2).map(|w| (&w[0], &w[1]))
    }

    pub fn into_updates(self) -> Vec<AppUpdate> {
        self.updates
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    pub lineages: BTreeMap<String, AppLineage>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, lineage: AppLineage) -> Option<AppLineage> {
        self.lineages.insert(lineage.app_id.clone(), lineage)
    }

    pub fn iter(&self) -> impl Iterator<Item = &AppLineage> {
        self.lineages.values()
    }

    pub fn len(&self) -> usize {
        self.lineages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lineages.is_empty()
    }
}

/// All segments of a dotted name except the last; `""` for a bare name.
pub fn package_of(fqn: &str) -> &str {
    fqn.rsplit_once('.').map_or("", |(pkg, _)| pkg)
}

pub fn simple_name(fqn: &str) -> &str {
    fqn.rsplit_once('.').map_or(fqn, |(_, name)| name)
}

/// Segment-aware prefix test: `com.foo` covers `com.foo`, `com.foo.Bar` and
/// `com.foo$Inner`, but not `com.foobar`.
pub fn under_prefix(name: &str, prefix: &str) -> bool {
    if prefix.is_empty() {
        return true;
    }
    match name.strip_prefix(prefix) {
        Some("") => true,
        Some(rest) => rest.starts_with('.') || rest.starts_with('$'),
        None => false,
    }
}

pub fn under_any<'a, I>(name: &str, prefixes: I) -> bool
where
    I: IntoIterator<Item = &'a String>,
{
    prefixes.into_iter().any(|p| under_prefix(name, p))
}

fn is_valid_class_name(name: &str) -> bool {
    !name.is_empty()
        && !name.chars().any(char::is_whitespace)
        && !name.starts_with('.')
        && !name.ends_with('.')
        && !name.contains("..")
}
