//! Curated registry of ad libraries, analytics libraries and other known
//! third-party package prefixes (`catalog v1`, one JSON object per line).

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{under_any, under_prefix, MethodRef};

pub const CATALOG_SCHEMA: &str = "catalog v1";

/// The bundled starting catalog: the ten most integrated ad libraries,
/// the analytics packages known to use the AdMob device identifier, and a
/// list of common non-ad framework prefixes.
pub const SEED_CATALOG: &str = include_str!("../data/catalog-seed.jsonl");

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("unsupported catalog schema {0:?}")]
    Schema(String),
    #[error("duplicate library name {0:?}")]
    DuplicateName(String),
    #[error("library {name:?}: {what} prefix {prefix:?} is not under any of its package prefixes")]
    NotNested {
        name: String,
        what: &'static str,
        prefix: String,
    },
    #[error("package prefix {0:?} of {1:?} overlaps {2:?} of {3:?}")]
    Overlap(String, String, String, String),
    #[error("library {0:?} has no package prefixes")]
    NoPrefixes(String),
    #[error("empty prefix in {0:?}")]
    EmptyPrefix(String),
}

/// A show-ad method pattern. `params: None` matches any arity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShowAdPattern {
    pub owner_prefix: String,
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<u32>,
}

impl ShowAdPattern {
    pub fn matches(&self, callee: &MethodRef) -> bool {
        callee.method_name == self.method
            && under_prefix(&callee.owner_class, &self.owner_prefix)
            && self.params.is_none_or(|p| p == callee.param_count)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdLibraryEntry {
    pub name: String,
    pub package_prefixes: Vec<String>,
    #[serde(default)]
    pub mediator_prefixes: Vec<String>,
    #[serde(default)]
    pub show_ad_methods: Vec<ShowAdPattern>,
    #[serde(default)]
    pub identifier_prefixes: Vec<String>,
}

impl AdLibraryEntry {
    pub fn owns(&self, fqn: &str) -> bool {
        under_any(fqn, &self.package_prefixes)
    }

    pub fn is_mediator_class(&self, fqn: &str) -> bool {
        under_any(fqn, &self.mediator_prefixes)
    }

    pub fn is_identifier_class(&self, fqn: &str) -> bool {
        under_any(fqn, &self.identifier_prefixes)
    }

    pub fn is_show_call(&self, callee: &MethodRef) -> bool {
        self.show_ad_methods.iter().any(|p| p.matches(callee))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalyticsPrefix {
    pub prefix: String,
    pub name: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AdLibraryCatalog {
    pub entries: Vec<AdLibraryEntry>,
    pub analytics_prefixes: Vec<AnalyticsPrefix>,
    /// Known non-ad third-party code (frameworks, support libraries).
    pub third_party_prefixes: Vec<String>,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum CatalogLine {
    AdLibrary(AdLibraryEntry),
    Analytics(AnalyticsPrefix),
    ThirdParty { prefixes: Vec<String> },
}

#[derive(Deserialize)]
struct SchemaLine {
    schema: String,
}

impl AdLibraryCatalog {
    pub fn seed() -> Self {
        Self::parse(SEED_CATALOG).expect("bundled catalog is valid")
    }

    pub fn load(path: &Path) -> Result<Self, CatalogError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Parses catalog text. Lines without a `kind` field are read as ad
    /// library entries; a leading `{"schema": ...}` line is optional.
    pub fn parse(text: &str) -> Result<Self, CatalogError> {
        let mut catalog = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let value: serde_json::Value =
                serde_json::from_str(trimmed).map_err(|source| CatalogError::Json { line, source })?;
            if value.get("schema").is_some() && value.get("kind").is_none() {
                let header: SchemaLine =
                    serde_json::from_value(value).map_err(|source| CatalogError::Json { line, source })?;
                if header.schema != CATALOG_SCHEMA {
                    return Err(CatalogError::Schema(header.schema));
                }
                continue;
            }
            let parsed = if value.get("kind").is_some() {
                serde_json::from_value(value)
            } else {
                serde_json::from_value(value).map(CatalogLine::AdLibrary)
            }
            .map_err(|source| CatalogError::Json { line, source })?;
            match parsed {
                CatalogLine::AdLibrary(entry) => catalog.entries.push(entry),
                CatalogLine::Analytics(a) => catalog.analytics_prefixes.push(a),
                CatalogLine::ThirdParty { prefixes } => catalog.third_party_prefixes.extend(prefixes),
            }
        }
        catalog.validate()?;
        Ok(catalog)
    }

    /// Serializes back to `catalog v1` text.
    pub fn to_jsonl(&self) -> String {
        let mut out = format!("{{\"schema\":\"{CATALOG_SCHEMA}\"}}\n");
        for e in &self.entries {
            let mut v = serde_json::to_value(e).expect("entry serializes");
            v.as_object_mut()
                .expect("object")
                .insert("kind".into(), "ad_library".into());
            out.push_str(&v.to_string());
            out.push('\n');
        }
        for a in &self.analytics_prefixes {
            let v = serde_json::json!({"kind": "analytics", "prefix": a.prefix, "name": a.name});
            out.push_str(&v.to_string());
            out.push('\n');
        }
        if !self.third_party_prefixes.is_empty() {
            let v = serde_json::json!({"kind": "third_party", "prefixes": self.third_party_prefixes});
            out.push_str(&v.to_string());
            out.push('\n');
        }
        out
    }

    pub fn validate(&self) -> Result<(), CatalogError> {
        let mut names = BTreeSet::new();
        for e in &self.entries {
            if !names.insert(e.name.as_str()) {
                return Err(CatalogError::DuplicateName(e.name.clone()));
            }
            if e.package_prefixes.is_empty() {
                return Err(CatalogError::NoPrefixes(e.name.clone()));
            }
            let nested = [
                ("mediator", &e.mediator_prefixes),
                ("identifier", &e.identifier_prefixes),
            ];
            for p in e.package_prefixes.iter().chain(nested.iter().flat_map(|(_, v)| v.iter())) {
                if p.is_empty() {
                    return Err(CatalogError::EmptyPrefix(e.name.clone()));
                }
            }
            for (what, prefixes) in nested {
                for p in prefixes {
                    if !e.owns(p) {
                        return Err(CatalogError::NotNested {
                            name: e.name.clone(),
                            what,
                            prefix: p.clone(),
                        });
                    }
                }
            }
            for s in &e.show_ad_methods {
                if !e.owns(&s.owner_prefix) {
                    return Err(CatalogError::NotNested {
                        name: e.name.clone(),
                        what: "show-ad owner",
                        prefix: s.owner_prefix.clone(),
                    });
                }
            }
        }
        for (i, a) in self.entries.iter().enumerate() {
            for b in &self.entries[i + 1..] {
                for pa in &a.package_prefixes {
                    for pb in &b.package_prefixes {
                        if under_prefix(pa, pb) || under_prefix(pb, pa) {
                            return Err(CatalogError::Overlap(
                                pa.clone(),
                                a.name.clone(),
                                pb.clone(),
                                b.name.clone(),
                            ));
                        }
                    }
                }
            }
        }
        if self.analytics_prefixes.iter().any(|a| a.prefix.is_empty())
            || self.third_party_prefixes.iter().any(|p| p.is_empty())
        {
            return Err(CatalogError::EmptyPrefix("non-ad prefixes".into()));
        }
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    pub fn entry(&self, name: &str) -> Option<&AdLibraryEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// The library owning `fqn`. Prefix disjointness makes this unique.
    pub fn library_of(&self, fqn: &str) -> Option<&AdLibraryEntry> {
        self.entries.iter().find(|e| e.owns(fqn))
    }

    pub fn analytics_library_of(&self, fqn: &str) -> Option<&AnalyticsPrefix> {
        self.analytics_prefixes.iter().find(|a| under_prefix(fqn, &a.prefix))
    }

    /// True for any class that is not app-authored: ad libraries,
    /// analytics libraries, and the known third-party list.
    pub fn is_third_party(&self, fqn: &str) -> bool {
        self.library_of(fqn).is_some()
            || self.analytics_library_of(fqn).is_some()
            || under_any(fqn, &self.third_party_prefixes)
    }

    /// Replaces the known non-ad prefix list.
    pub fn with_third_party_prefixes(mut self, prefixes: Vec<String>) -> Self {
        self.third_party_prefixes = prefixes;
        self
    }
}
