//! Integration strategy labelling for apps that display ads from more than
//! one library.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::AdLibraryCatalog;
use crate::detection::{AppRole, UpdateView};
use crate::diag::{Diagnostic, DiagnosticKind};
use crate::model::{package_of, under_prefix, AppUpdate, Corpus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IntegrationStrategy {
    ExternalMediation,
    SelfMediation,
    Scattered,
    Mixed,
    SingleLibrary,
    NotAdDisplaying,
}

impl IntegrationStrategy {
    /// The four labels given to multi-library ad-displaying apps.
    pub const MULTI: [IntegrationStrategy; 4] = [
        IntegrationStrategy::ExternalMediation,
        IntegrationStrategy::SelfMediation,
        IntegrationStrategy::Scattered,
        IntegrationStrategy::Mixed,
    ];

    pub const ALL: [IntegrationStrategy; 6] = [
        IntegrationStrategy::ExternalMediation,
        IntegrationStrategy::SelfMediation,
        IntegrationStrategy::Scattered,
        IntegrationStrategy::Mixed,
        IntegrationStrategy::SingleLibrary,
        IntegrationStrategy::NotAdDisplaying,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            IntegrationStrategy::ExternalMediation => "ExternalMediation",
            IntegrationStrategy::SelfMediation => "SelfMediation",
            IntegrationStrategy::Scattered => "Scattered",
            IntegrationStrategy::Mixed => "Mixed",
            IntegrationStrategy::SingleLibrary => "SingleLibrary",
            IntegrationStrategy::NotAdDisplaying => "NotAdDisplaying",
        }
    }

    pub fn is_multi(self) -> bool {
        Self::MULTI.contains(&self)
    }
}

impl std::fmt::Display for IntegrationStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for IntegrationStrategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown strategy {s:?}"))
    }
}

/// Label used in reports for updates the rules cannot place.
pub const UNCLASSIFIABLE: &str = "Unclassifiable";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{app_id}@{version_code}: {accessed} of {integrated} integrated libraries accessed and no mediator covers the rest")]
pub struct UnclassifiableUpdate {
    pub app_id: String,
    pub version_code: u64,
    pub integrated: usize,
    pub accessed: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum MediatorKind {
    External,
    #[serde(rename = "Self")]
    SelfMediator,
    None,
}

impl MediatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MediatorKind::External => "External",
            MediatorKind::SelfMediator => "Self",
            MediatorKind::None => "None",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MediatorFinding {
    pub kind: MediatorKind,
    pub package: Option<String>,
    pub covered_libraries: BTreeSet<String>,
}

impl MediatorFinding {
    pub fn none() -> Self {
        Self {
            kind: MediatorKind::None,
            package: None,
            covered_libraries: BTreeSet::new(),
        }
    }
}

impl<'a> UpdateView<'a> {
    /// Mediator packages shipped with any integrated library, with the
    /// other integrated libraries their classes call. Ordered by package.
    pub fn present_mediators(&self) -> Vec<MediatorFinding> {
        let mut found = Vec::new();
        for entry in &self.catalog.entries {
            if !self.is_integrated(&entry.name) {
                continue;
            }
            for prefix in &entry.mediator_prefixes {
                let classes: Vec<_> = self.library_classes(&entry.name).filter(|c| under_prefix(c, prefix)).collect();
                if classes.is_empty() {
                    continue;
                }
                let covered = classes
                    .iter()
                    .flat_map(|c| self.update.classes[*c].call_sites.iter())
                    .filter_map(|s| self.callee_library(s))
                    .filter(|e| e.name != entry.name)
                    .map(|e| e.name.clone())
                    .collect();
                found.push(MediatorFinding {
                    kind: MediatorKind::External,
                    package: Some(prefix.clone()),
                    covered_libraries: covered,
                });
            }
        }
        found.sort_by(|a, b| a.package.cmp(&b.package));
        found
    }

    /// The external mediator that app code calls into. With several, the
    /// one covering most libraries wins, then the smallest package name.
    pub fn external_mediator(&self) -> MediatorFinding {
        let called: BTreeSet<&str> = self
            .app_code_calls()
            .map(|s| s.callee.owner_class.as_str())
            .collect();
        self.present_mediators()
            .into_iter()
            .filter(|m| {
                let p = m.package.as_deref().unwrap_or_default();
                called.iter().any(|c| under_prefix(c, p))
            })
            .min_by(|a, b| {
                b.covered_libraries
                    .len()
                    .cmp(&a.covered_libraries.len())
                    .then_with(|| a.package.cmp(&b.package))
            })
            .unwrap_or_else(MediatorFinding::none)
    }

    /// An app-code package through which every app-code call into an ad
    /// library passes: the deepest package containing all such callers,
    /// provided it is not the default package and holds no activity.
    pub fn self_mediator(&self) -> MediatorFinding {
        let callers: BTreeSet<&str> = self
            .app_code_calls()
            .filter(|s| self.callee_library(s).is_some())
            .map(|s| s.caller.owner_class.as_str())
            .collect();
        let Some(package) = common_package(callers.iter().map(|c| package_of(c))) else {
            return MediatorFinding::none();
        };
        if package.is_empty() || self.update.activities.iter().any(|a| under_prefix(a, &package)) {
            return MediatorFinding::none();
        }
        MediatorFinding {
            kind: MediatorKind::SelfMediator,
            package: Some(package),
            covered_libraries: self.accessed(),
        }
    }

    pub fn assess_strategy(&self) -> StrategyAssessment {
        let role = self.assess_role();
        let integrated = role.integrated.len();
        let accessed = self.accessed();
        let mut out = StrategyAssessment {
            app_id: self.update.app_id.clone(),
            version_code: self.update.version_code,
            role: role.role,
            integrated_count: integrated,
            accessed_count: accessed.len(),
            mediator: MediatorFinding::none(),
            strategy: None,
            diagnostics: role.diagnostics,
        };
        if role.role != AppRole::AdDisplaying {
            out.strategy = Some(IntegrationStrategy::NotAdDisplaying);
            return out;
        }
        if integrated == 1 {
            out.strategy = Some(IntegrationStrategy::SingleLibrary);
            return out;
        }
        let external = self.external_mediator();
        if accessed.len() == 1 && external.kind == MediatorKind::External {
            out.mediator = external;
            out.strategy = Some(IntegrationStrategy::ExternalMediation);
        } else if accessed.len() == integrated {
            let own = self.self_mediator();
            out.strategy = Some(if own.kind == MediatorKind::SelfMediator {
                IntegrationStrategy::SelfMediation
            } else {
                IntegrationStrategy::Scattered
            });
            out.mediator = own;
        } else if let Some(m) = self
            .present_mediators()
            .into_iter()
            .filter(|m| !m.covered_libraries.is_empty())
            .min_by(|a, b| {
                b.covered_libraries
                    .len()
                    .cmp(&a.covered_libraries.len())
                    .then_with(|| a.package.cmp(&b.package))
            })
        {
            out.mediator = m;
            out.strategy = Some(IntegrationStrategy::Mixed);
        } else {
            out.mediator = external;
            out.diagnostics.push(
                Diagnostic::new(DiagnosticKind::UnclassifiableUpdate, out.unclassifiable().to_string())
                    .for_update(&out.app_id, out.version_code),
            );
        }
        out
    }
}

fn common_package<'s>(mut packages: impl Iterator<Item = &'s str>) -> Option<String> {
    let first = packages.next()?;
    let mut common: Vec<&str> = first.split('.').filter(|s| !s.is_empty()).collect();
    for p in packages {
        let segs: Vec<&str> = p.split('.').filter(|s| !s.is_empty()).collect();
        let keep = common.iter().zip(&segs).take_while(|(a, b)| a == b).count();
        common.truncate(keep);
    }
    Some(common.join("."))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StrategyAssessment {
    pub app_id: String,
    pub version_code: u64,
    pub role: AppRole,
    pub integrated_count: usize,
    pub accessed_count: usize,
    pub mediator: MediatorFinding,
    /// `None` when the update is multi-library and ad-displaying but
    /// matches none of the rules.
    pub strategy: Option<IntegrationStrategy>,
    pub diagnostics: Vec<Diagnostic>,
}

impl StrategyAssessment {
    pub fn label(&self) -> &'static str {
        self.strategy.map_or(UNCLASSIFIABLE, IntegrationStrategy::as_str)
    }

    fn unclassifiable(&self) -> UnclassifiableUpdate {
        UnclassifiableUpdate {
            app_id: self.app_id.clone(),
            version_code: self.version_code,
            integrated: self.integrated_count,
            accessed: self.accessed_count,
        }
    }

    pub fn result(&self) -> Result<IntegrationStrategy, UnclassifiableUpdate> {
        self.strategy.ok_or_else(|| self.unclassifiable())
    }

    /// True for ad-displaying updates with two or more libraries.
    pub fn is_multi_library(&self) -> bool {
        self.role == AppRole::AdDisplaying && self.integrated_count > 1
    }
}

pub fn app_code_classes(update: &AppUpdate, catalog: &AdLibraryCatalog) -> BTreeSet<String> {
    UpdateView::new(update, catalog)
        .app_code_classes()
        .iter()
        .map(|s| s.to_string())
        .collect()
}

pub fn accessed_libraries(update: &AppUpdate, catalog: &AdLibraryCatalog) -> BTreeSet<String> {
    UpdateView::new(update, catalog).accessed()
}

pub fn detect_external_mediator(update: &AppUpdate, catalog: &AdLibraryCatalog) -> MediatorFinding {
    UpdateView::new(update, catalog).external_mediator()
}

pub fn detect_self_mediator(update: &AppUpdate, catalog: &AdLibraryCatalog) -> MediatorFinding {
    UpdateView::new(update, catalog).self_mediator()
}

pub fn assess_strategy(update: &AppUpdate, catalog: &AdLibraryCatalog) -> StrategyAssessment {
    UpdateView::new(update, catalog).assess_strategy()
}

pub fn classify_strategy(
    update: &AppUpdate,
    catalog: &AdLibraryCatalog,
) -> Result<IntegrationStrategy, UnclassifiableUpdate> {
    assess_strategy(update, catalog).result()
}

/// Assessment of each app's latest update, keyed by app id.
pub fn latest_assessments(corpus: &Corpus, catalog: &AdLibraryCatalog) -> BTreeMap<String, StrategyAssessment> {
    use rayon::prelude::*;
    let lineages: Vec<_> = corpus.iter().collect();
    lineages
        .par_iter()
        .map(|l| (l.app_id().to_owned(), assess_strategy(l.latest(), catalog)))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionRow {
    pub label: String,
    pub count: usize,
    pub percent: f64,
}

/// Counts of multi-library ad-displaying apps per strategy. All four
/// strategy rows are present for a non-empty population; an extra
/// `Unclassifiable` row appears only when needed.
pub fn strategy_distribution<'a>(assessments: impl IntoIterator<Item = &'a StrategyAssessment>) -> Vec<DistributionRow> {
    let mut counts: BTreeMap<&'static str, usize> = BTreeMap::new();
    let mut total = 0usize;
    for a in assessments.into_iter().filter(|a| a.is_multi_library()) {
        *counts.entry(a.label()).or_default() += 1;
        total += 1;
    }
    if total == 0 {
        return Vec::new();
    }
    let mut labels: Vec<&str> = IntegrationStrategy::MULTI.iter().map(|s| s.as_str()).collect();
    if counts.contains_key(UNCLASSIFIABLE) {
        labels.push(UNCLASSIFIABLE);
    }
    labels
        .into_iter()
        .map(|label| {
            let count = counts.get(label).copied().unwrap_or(0);
            DistributionRow {
                label: label.to_owned(),
                count,
                percent: 100.0 * count as f64 / total as f64,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiveNumberSummary {
    pub n: usize,
    pub mean: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Sample quantile by linear interpolation between closest ranks
/// (R's default, "type 7"). `sorted` must be ascending and non-empty.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn five_number_summary(values: &[f64]) -> Option<FiveNumberSummary> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(FiveNumberSummary {
        n: v.len(),
        mean: v.iter().sum::<f64>() / v.len() as f64,
        min: v[0],
        q1: quantile_type7(&v, 0.25),
        median: quantile_type7(&v, 0.5),
        q3: quantile_type7(&v, 0.75),
        max: v[v.len() - 1],
    })
}

/// Mean and five-number summary of integrated library counts per strategy,
/// over multi-library ad-displaying apps.
pub fn integrated_count_summary<'a>(
    assessments: impl IntoIterator<Item = &'a StrategyAssessment>,
) -> Vec<(IntegrationStrategy, FiveNumberSummary)> {
    let mut groups: BTreeMap<IntegrationStrategy, Vec<f64>> = BTreeMap::new();
    for a in assessments.into_iter().filter(|a| a.is_multi_library()) {
        if let Some(s) = a.strategy {
            groups.entry(s).or_default().push(a.integrated_count as f64);
        }
    }
    IntegrationStrategy::MULTI
        .iter()
        .filter_map(|s| Some((*s, five_number_summary(groups.get(s)?)?)))
        .collect()
}
