//! How ad-related code changes across an app's update lineage.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;
use xxhash_rust::xxh3::Xxh3;

use crate::catalog::AdLibraryCatalog;
use crate::detection::UpdateView;
use crate::diag::{Diagnostic, DiagnosticKind};
use crate::model::{package_of, simple_name, AppLineage, AppUpdate};
use crate::strategy::IntegrationStrategy;

/// Identifier of the digest function recorded next to every signature.
pub const DIGEST_ALGORITHM: &str = "xxh3-128";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvolutionError {
    #[error("library {0:?} is not integrated in this update")]
    LibraryNotIntegrated(String),
    #[error("lineage of {app_id} has {len} update(s); at least 2 are needed")]
    TooShortLineage { app_id: String, len: usize },
}

// Obfuscation heuristics. A name is considered machine-generated when,
// ignoring digits, at most two characters remain.

pub fn is_obfuscated_identifier(name: &str) -> bool {
    if name == "<init>" || name == "<clinit>" {
        return false;
    }
    name.chars().filter(|c| !c.is_ascii_digit()).count() <= 2
}

/// A package is obfuscated if its last segment is, or if it contains two
/// consecutive single-letter segments (`a.b`).
pub fn is_obfuscated_package(package: &str) -> bool {
    if package.is_empty() {
        return false;
    }
    let segs: Vec<&str> = package.split('.').collect();
    if segs.last().is_some_and(|s| is_obfuscated_identifier(s)) {
        return true;
    }
    segs.windows(2).any(|w| w[0].chars().count() == 1 && w[1].chars().count() == 1)
}

/// Class check on the outer simple name (before any `$`) and the package.
pub fn is_obfuscated_class(fqn: &str) -> bool {
    let outer = simple_name(fqn).split('$').next().unwrap_or_default();
    is_obfuscated_identifier(outer) || is_obfuscated_package(package_of(fqn))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObfuscationStats {
    pub packages: usize,
    pub obfuscated_packages: usize,
    pub methods: usize,
    pub obfuscated_methods: usize,
}

impl ObfuscationStats {
    pub fn pct_packages(&self) -> f64 {
        pct(self.obfuscated_packages, self.packages)
    }

    pub fn pct_methods(&self) -> f64 {
        pct(self.obfuscated_methods, self.methods)
    }
}

fn pct(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// Percentages of distinct (non-default) packages and of declared
/// methods that look obfuscated. Constructors are not counted.
pub fn obfuscation_stats(update: &AppUpdate) -> ObfuscationStats {
    let packages: BTreeSet<&str> = update
        .classes
        .keys()
        .map(|f| package_of(f))
        .filter(|p| !p.is_empty())
        .collect();
    let methods: Vec<&str> = update
        .classes
        .values()
        .flat_map(|c| c.declared_methods.iter())
        .map(|m| m.method_name.as_str())
        .filter(|m| *m != "<init>" && *m != "<clinit>")
        .collect();
    ObfuscationStats {
        packages: packages.len(),
        obfuscated_packages: packages.iter().filter(|p| is_obfuscated_package(p)).count(),
        methods: methods.len(),
        obfuscated_methods: methods.iter().filter(|m| is_obfuscated_identifier(m)).count(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Digest(pub u128);

impl std::fmt::Display for Digest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:032x}", self.0)
    }
}

impl Serialize for CallSiteSignature {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("CallSiteSignature", 4)?;
        st.serialize_field("library", &self.library)?;
        st.serialize_field("algorithm", DIGEST_ALGORITHM)?;
        st.serialize_field("digest", &self.digest.to_string())?;
        st.serialize_field("call_sites", &self.call_sites)?;
        st.end()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallSiteSignature {
    pub library: String,
    pub digest: Digest,
    /// Number of tuples hashed.
    pub call_sites: usize,
}

fn put_str(h: &mut Xxh3, s: &str) {
    h.update(&(s.len() as u64).to_le_bytes());
    h.update(s.as_bytes());
}

impl<'a> UpdateView<'a> {
    /// Canonically sorted tuples (caller class, callee class, callee
    /// method, arity) of non-obfuscated app-code calls into `library`.
    pub fn call_site_tuples(&self, library: &str) -> Vec<(&'a str, &'a str, &'a str, u32)> {
        let mut tuples: Vec<_> = self
            .app_code_calls()
            .filter(|s| !is_obfuscated_class(&s.caller.owner_class))
            .filter(|s| self.callee_library(s).is_some_and(|e| e.name == library))
            .map(|s| {
                (
                    s.caller.owner_class.as_str(),
                    s.callee.owner_class.as_str(),
                    s.callee.method_name.as_str(),
                    s.callee.param_count,
                )
            })
            .collect();
        tuples.sort_unstable();
        tuples
    }

    pub fn signature(&self, library: &str) -> Result<CallSiteSignature, EvolutionError> {
        if !self.is_integrated(library) {
            return Err(EvolutionError::LibraryNotIntegrated(library.to_owned()));
        }
        let tuples = self.call_site_tuples(library);
        let mut h = Xxh3::new();
        h.update(&(tuples.len() as u64).to_le_bytes());
        for (caller, owner, method, params) in &tuples {
            put_str(&mut h, caller);
            put_str(&mut h, owner);
            put_str(&mut h, method);
            h.update(&params.to_le_bytes());
        }
        Ok(CallSiteSignature {
            library: library.to_owned(),
            digest: Digest(h.digest128()),
            call_sites: tuples.len(),
        })
    }

    /// Digest of the library's own classes and their declared methods.
    pub fn library_digest(&self, library: &str) -> Result<Digest, EvolutionError> {
        if !self.is_integrated(library) {
            return Err(EvolutionError::LibraryNotIntegrated(library.to_owned()));
        }
        let mut h = Xxh3::new();
        for fqn in self.library_classes(library) {
            put_str(&mut h, fqn);
            let mut methods: Vec<_> = self.update.classes[fqn]
                .declared_methods
                .iter()
                .map(|m| (m.method_name.as_str(), m.param_count))
                .collect();
            methods.sort_unstable();
            h.update(&(methods.len() as u64).to_le_bytes());
            for (name, params) in methods {
                put_str(&mut h, name);
                h.update(&params.to_le_bytes());
            }
        }
        Ok(Digest(h.digest128()))
    }
}

pub fn signature(
    update: &AppUpdate,
    library: &str,
    catalog: &AdLibraryCatalog,
) -> Result<CallSiteSignature, EvolutionError> {
    UpdateView::new(update, catalog).signature(library)
}

/// Whether app-code call sites into `library` differ. False when the
/// library is missing from either update, since no diff is defined.
pub fn call_site_modified(prev: &AppUpdate, next: &AppUpdate, library: &str, catalog: &AdLibraryCatalog) -> bool {
    match (signature(prev, library, catalog), signature(next, library, catalog)) {
        (Ok(a), Ok(b)) => a.digest != b.digest,
        _ => false,
    }
}

pub fn library_version_changed(
    prev: &AppUpdate,
    next: &AppUpdate,
    library: &str,
    catalog: &AdLibraryCatalog,
) -> bool {
    let a = UpdateView::new(prev, catalog).library_digest(library);
    let b = UpdateView::new(next, catalog).library_digest(library);
    matches!((a, b), (Ok(a), Ok(b)) if a != b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ChangeKind {
    AdCallSiteModified,
    LibraryAdded,
    LibraryRemoved,
    LibraryVersionChanged,
}

impl ChangeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ChangeKind::AdCallSiteModified => "AdCallSiteModified",
            ChangeKind::LibraryAdded => "LibraryAdded",
            ChangeKind::LibraryRemoved => "LibraryRemoved",
            ChangeKind::LibraryVersionChanged => "LibraryVersionChanged",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct ChangeEvent {
    pub app_id: String,
    pub from_version: u64,
    pub to_version: u64,
    pub library: String,
    pub kind: ChangeKind,
}

/// Per-update facts needed for transition diffs.
struct UpdateFacts {
    version_code: u64,
    integrated: BTreeSet<String>,
    signatures: BTreeMap<String, Digest>,
    library_digests: BTreeMap<String, Digest>,
}

fn facts(update: &AppUpdate, catalog: &AdLibraryCatalog) -> UpdateFacts {
    let view = UpdateView::new(update, catalog);
    let integrated = view.integrated();
    let mut signatures = BTreeMap::new();
    let mut library_digests = BTreeMap::new();
    for lib in &integrated {
        signatures.insert(lib.clone(), view.signature(lib).expect("integrated").digest);
        library_digests.insert(lib.clone(), view.library_digest(lib).expect("integrated"));
    }
    UpdateFacts {
        version_code: update.version_code,
        integrated,
        signatures,
        library_digests,
    }
}

/// Counts of (library, transition) pairs, split by whether the library's
/// own code changed in that transition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SplitCounts {
    pub updated_pairs: usize,
    pub updated_modified: usize,
    pub not_updated_pairs: usize,
    pub not_updated_modified: usize,
}

impl SplitCounts {
    /// Percentage of modified pairs among pairs where the library changed;
    /// `None` if there were no such pairs.
    pub fn pct_when_updated(&self) -> Option<f64> {
        (self.updated_pairs > 0).then(|| pct(self.updated_modified, self.updated_pairs))
    }

    pub fn pct_when_not_updated(&self) -> Option<f64> {
        (self.not_updated_pairs > 0).then(|| pct(self.not_updated_modified, self.not_updated_pairs))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineageMetrics {
    pub app_id: String,
    pub updates: usize,
    /// Label of the latest update; `None` when it is unclassifiable.
    pub strategy: Option<IntegrationStrategy>,
    pub modified_transitions: usize,
    /// `None` for single-update lineages.
    pub modification_probability: Option<f64>,
    pub add_remove_updates: usize,
    pub add_remove_ratio: f64,
    pub split: SplitCounts,
}

impl LineageMetrics {
    /// Split percentages with empty partitions reported as 0.0.
    pub fn modified_proportion_split(&self) -> (f64, f64) {
        (
            self.split.pct_when_updated().unwrap_or(0.0),
            self.split.pct_when_not_updated().unwrap_or(0.0),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineageAnalysis {
    pub metrics: LineageMetrics,
    pub events: Vec<ChangeEvent>,
    pub diagnostics: Vec<Diagnostic>,
}

pub fn analyze_lineage(
    lineage: &AppLineage,
    catalog: &AdLibraryCatalog,
    strategy: Option<IntegrationStrategy>,
) -> LineageAnalysis {
    let all: Vec<UpdateFacts> = lineage.updates().iter().map(|u| facts(u, catalog)).collect();
    let app_id = lineage.app_id().to_owned();
    let mut events = Vec::new();
    let mut modified_transitions = 0;
    let mut add_remove_updates = 0;
    let mut split = SplitCounts::default();
    for pair in all.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let mut event = |library: &str, kind| {
            events.push(ChangeEvent {
                app_id: app_id.clone(),
                from_version: a.version_code,
                to_version: b.version_code,
                library: library.to_owned(),
                kind,
            })
        };
        if a.integrated != b.integrated {
            add_remove_updates += 1;
        }
        for lib in b.integrated.difference(&a.integrated) {
            event(lib, ChangeKind::LibraryAdded);
        }
        for lib in a.integrated.difference(&b.integrated) {
            event(lib, ChangeKind::LibraryRemoved);
        }
        let mut any_modified = false;
        for lib in a.integrated.intersection(&b.integrated) {
            let modified = a.signatures[lib] != b.signatures[lib];
            let updated = a.library_digests[lib] != b.library_digests[lib];
            if updated {
                event(lib, ChangeKind::LibraryVersionChanged);
                split.updated_pairs += 1;
                split.updated_modified += usize::from(modified);
            } else {
                split.not_updated_pairs += 1;
                split.not_updated_modified += usize::from(modified);
            }
            if modified {
                event(lib, ChangeKind::AdCallSiteModified);
                any_modified = true;
            }
        }
        modified_transitions += usize::from(any_modified);
    }
    let n = all.len();
    let mut diagnostics = Vec::new();
    let modification_probability = if n >= 2 {
        Some(modified_transitions as f64 / (n - 1) as f64)
    } else {
        diagnostics.push(
            Diagnostic::new(
                DiagnosticKind::TooShortLineage,
                "single update; modification probability undefined",
            )
            .for_app(&app_id),
        );
        None
    };
    events.sort();
    LineageAnalysis {
        metrics: LineageMetrics {
            app_id,
            updates: n,
            strategy,
            modified_transitions,
            modification_probability,
            add_remove_updates,
            add_remove_ratio: add_remove_updates as f64 / n as f64,
            split,
        },
        events,
        diagnostics,
    }
}

pub fn modification_probability(lineage: &AppLineage, catalog: &AdLibraryCatalog) -> Result<f64, EvolutionError> {
    analyze_lineage(lineage, catalog, None)
        .metrics
        .modification_probability
        .ok_or_else(|| EvolutionError::TooShortLineage {
            app_id: lineage.app_id().to_owned(),
            len: lineage.len(),
        })
}

pub fn add_remove_ratio(lineage: &AppLineage, catalog: &AdLibraryCatalog) -> f64 {
    analyze_lineage(lineage, catalog, None).metrics.add_remove_ratio
}

pub fn modified_proportion_split(lineage: &AppLineage, catalog: &AdLibraryCatalog) -> Result<(f64, f64), EvolutionError> {
    if lineage.len() < 2 {
        return Err(EvolutionError::TooShortLineage {
            app_id: lineage.app_id().to_owned(),
            len: lineage.len(),
        });
    }
    Ok(analyze_lineage(lineage, catalog, None).metrics.modified_proportion_split())
}

/// Per-strategy medians across lineages.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyEvolutionSummary {
    pub strategy: IntegrationStrategy,
    pub apps: usize,
    pub median_modification_probability: Option<f64>,
    pub median_add_remove_ratio: Option<f64>,
    pub median_pct_when_updated: Option<f64>,
    pub median_pct_when_not_updated: Option<f64>,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

/// Summaries for the four multi-library strategies, in fixed order.
/// Each median is taken over lineages where the value is defined.
pub fn summarize_by_strategy(metrics: &[LineageMetrics]) -> Vec<StrategyEvolutionSummary> {
    IntegrationStrategy::MULTI
        .iter()
        .map(|&s| {
            let group: Vec<&LineageMetrics> = metrics.iter().filter(|m| m.strategy == Some(s)).collect();
            let collect = |f: &dyn Fn(&LineageMetrics) -> Option<f64>| -> Vec<f64> {
                group.iter().filter_map(|m| f(m)).collect()
            };
            StrategyEvolutionSummary {
                strategy: s,
                apps: group.len(),
                median_modification_probability: median(&collect(&|m| m.modification_probability)),
                median_add_remove_ratio: median(&collect(&|m| Some(m.add_remove_ratio))),
                median_pct_when_updated: median(&collect(&|m| m.split.pct_when_updated())),
                median_pct_when_not_updated: median(&collect(&|m| m.split.pct_when_not_updated())),
            }
        })
        .collect()
}
