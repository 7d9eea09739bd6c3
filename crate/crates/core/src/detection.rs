//! Ad library detection, ad-displaying screens, and app roles.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::catalog::{AdLibraryCatalog, AdLibraryEntry};
use crate::diag::{Diagnostic, DiagnosticKind};
use crate::model::{AppUpdate, CallSite};

/// Candidate filter applied to fully qualified class names.
pub const AD_NAME_PATTERN: &str = "[aA][dD]";

static AD_NAME_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(AD_NAME_PATTERN).expect("valid pattern"));

pub fn is_candidate_ad_name(fqn: &str) -> bool {
    AD_NAME_RE.is_match(fqn)
}

/// Classes whose qualified name contains an `ad` in any letter case.
/// Used for recall auditing only; the catalog decides membership.
pub fn candidate_ad_classes(update: &AppUpdate) -> BTreeSet<String> {
    update
        .classes
        .keys()
        .filter(|fqn| is_candidate_ad_name(fqn))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AppRole {
    AdDisplaying,
    NonIntegrating,
    AnalyticsOnly,
    InertAdCode,
}

impl AppRole {
    pub const ALL: [AppRole; 4] = [
        AppRole::AdDisplaying,
        AppRole::NonIntegrating,
        AppRole::AnalyticsOnly,
        AppRole::InertAdCode,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AppRole::AdDisplaying => "AdDisplaying",
            AppRole::NonIntegrating => "NonIntegrating",
            AppRole::AnalyticsOnly => "AnalyticsOnly",
            AppRole::InertAdCode => "InertAdCode",
        }
    }
}

impl std::fmt::Display for AppRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AppRole {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        AppRole::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown app role {s:?}"))
    }
}

/// Per-update facts shared by detection, strategy labelling and evolution.
/// Built once per update; all sets are ordered for deterministic output.
#[derive(Debug)]
pub struct UpdateView<'a> {
    pub update: &'a AppUpdate,
    pub catalog: &'a AdLibraryCatalog,
    /// Ad library owning each class, if any.
    class_library: BTreeMap<&'a str, &'a AdLibraryEntry>,
    /// Classes that are neither ad libraries, analytics, nor known
    /// third-party code.
    app_code: BTreeSet<&'a str>,
    integrated: BTreeSet<&'a str>,
}

impl<'a> UpdateView<'a> {
    pub fn new(update: &'a AppUpdate, catalog: &'a AdLibraryCatalog) -> Self {
        let mut class_library = BTreeMap::new();
        let mut app_code = BTreeSet::new();
        for fqn in update.classes.keys() {
            if let Some(entry) = catalog.library_of(fqn) {
                class_library.insert(fqn.as_str(), entry);
            } else if !catalog.is_third_party(fqn) {
                app_code.insert(fqn.as_str());
            }
        }
        let integrated = class_library.values().map(|e| e.name.as_str()).collect();
        Self {
            update,
            catalog,
            class_library,
            app_code,
            integrated,
        }
    }

    pub fn app_code_classes(&self) -> &BTreeSet<&'a str> {
        &self.app_code
    }

    pub fn is_app_code(&self, fqn: &str) -> bool {
        self.app_code.contains(fqn)
    }

    pub fn integrated(&self) -> BTreeSet<String> {
        self.integrated.iter().map(|s| s.to_string()).collect()
    }

    pub fn is_integrated(&self, name: &str) -> bool {
        self.integrated.contains(name)
    }

    /// Classes of one library present in the update.
    pub fn library_classes(&self, name: &str) -> impl Iterator<Item = &'a str> + '_ {
        let name = name.to_owned();
        self.class_library
            .iter()
            .filter(move |(_, e)| e.name == name)
            .map(|(fqn, _)| *fqn)
    }

    /// Call sites whose caller class is app code.
    pub fn app_code_calls(&self) -> impl Iterator<Item = &'a CallSite> + '_ {
        self.app_code
            .iter()
            .flat_map(|fqn| self.update.classes[*fqn].call_sites.iter())
    }

    /// The integrated library a callee belongs to.
    pub fn callee_library(&self, site: &CallSite) -> Option<&'a AdLibraryEntry> {
        let entry = self.catalog.library_of(&site.callee.owner_class)?;
        self.is_integrated(&entry.name).then_some(entry)
    }

    pub fn is_show_call(&self, site: &CallSite) -> bool {
        self.callee_library(site).is_some_and(|e| e.is_show_call(&site.callee))
    }

    pub fn accessed(&self) -> BTreeSet<String> {
        self.app_code_calls()
            .filter_map(|s| self.callee_library(s))
            .map(|e| e.name.clone())
            .collect()
    }

    /// Activity classes from which a show-ad call is reachable through
    /// app-code calls. An activity's own inner classes count as part of
    /// the activity.
    pub fn ad_screens(&self) -> BTreeSet<String> {
        let mut shows: BTreeSet<&str> = BTreeSet::new();
        let mut edges: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for &fqn in &self.app_code {
            for site in &self.update.classes[fqn].call_sites {
                if self.is_show_call(site) {
                    shows.insert(fqn);
                }
                if let Some(target) = self.app_code.get(site.callee.owner_class.as_str()) {
                    if *target != fqn {
                        edges.entry(fqn).or_default().insert(*target);
                    }
                }
            }
        }
        if shows.is_empty() {
            return BTreeSet::new();
        }
        let mut screens = BTreeSet::new();
        for activity in &self.update.activities {
            if !self.app_code.contains(activity.as_str()) {
                continue;
            }
            let inner = format!("{activity}$");
            let mut seen: BTreeSet<&str> = self
                .app_code
                .iter()
                .copied()
                .filter(|c| *c == activity || c.starts_with(&inner))
                .collect();
            let mut queue: VecDeque<&str> = seen.iter().copied().collect();
            let mut found = false;
            while let Some(c) = queue.pop_front() {
                if shows.contains(c) {
                    found = true;
                    break;
                }
                for &next in edges.get(c).into_iter().flatten() {
                    if seen.insert(next) {
                        queue.push_back(next);
                    }
                }
            }
            if found {
                screens.insert(activity.clone());
            }
        }
        screens
    }

    /// Whether an analytics library calls a device-identifier package of
    /// an integrated ad library.
    pub fn analytics_uses_identifier(&self) -> bool {
        self.update.classes.values().any(|c| {
            self.catalog.analytics_library_of(&c.fqn).is_some()
                && c.call_sites.iter().any(|s| {
                    self.callee_library(s)
                        .is_some_and(|e| e.is_identifier_class(&s.callee.owner_class))
                })
        })
    }

    pub fn assess_role(&self) -> RoleAssessment {
        let integrated = self.integrated();
        let ad_screens = self.ad_screens();
        let mut diagnostics = Vec::new();
        let diag = |kind, msg: String| {
            Diagnostic::new(kind, msg).for_update(&self.update.app_id, self.update.version_code)
        };
        let role = if integrated.is_empty() {
            AppRole::NonIntegrating
        } else if !ad_screens.is_empty() {
            AppRole::AdDisplaying
        } else if let Some(site) = self.app_code_calls().find(|s| self.is_show_call(s)) {
            diagnostics.push(diag(
                DiagnosticKind::UnreachableShowCall,
                format!(
                    "{} is called from {} but from no declared activity",
                    site.callee, site.caller.owner_class
                ),
            ));
            AppRole::AdDisplaying
        } else if self.analytics_uses_identifier() {
            AppRole::AnalyticsOnly
        } else {
            if let Some(site) = self.app_code_calls().find(|s| self.callee_library(s).is_some()) {
                diagnostics.push(diag(
                    DiagnosticKind::AmbiguousRole,
                    format!(
                        "app code calls {} but never a show-ad method; labelled InertAdCode",
                        site.callee
                    ),
                ));
            }
            AppRole::InertAdCode
        };
        RoleAssessment {
            role,
            integrated,
            ad_screens,
            diagnostics,
        }
    }

    pub fn profile(&self) -> (AdIntegrationProfile, Vec<Diagnostic>) {
        let r = self.assess_role();
        let profile = AdIntegrationProfile {
            app_id: self.update.app_id.clone(),
            version_code: self.update.version_code,
            integrated: r.integrated,
            accessed: self.accessed(),
            ad_screens: r.ad_screens,
            role: r.role,
            candidate_count: candidate_ad_classes(self.update).len(),
        };
        (profile, r.diagnostics)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoleAssessment {
    pub role: AppRole,
    pub integrated: BTreeSet<String>,
    pub ad_screens: BTreeSet<String>,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AdIntegrationProfile {
    pub app_id: String,
    pub version_code: u64,
    pub integrated: BTreeSet<String>,
    pub accessed: BTreeSet<String>,
    pub ad_screens: BTreeSet<String>,
    pub role: AppRole,
    /// Number of classes passing the name filter, for recall auditing.
    pub candidate_count: usize,
}

pub fn integrated_libraries(update: &AppUpdate, catalog: &AdLibraryCatalog) -> BTreeSet<String> {
    UpdateView::new(update, catalog).integrated()
}

pub fn ad_screens(update: &AppUpdate, catalog: &AdLibraryCatalog) -> BTreeSet<String> {
    UpdateView::new(update, catalog).ad_screens()
}

pub fn assess_role(update: &AppUpdate, catalog: &AdLibraryCatalog) -> RoleAssessment {
    UpdateView::new(update, catalog).assess_role()
}

pub fn classify_role(update: &AppUpdate, catalog: &AdLibraryCatalog) -> AppRole {
    assess_role(update, catalog).role
}

pub fn profile(update: &AppUpdate, catalog: &AdLibraryCatalog) -> (AdIntegrationProfile, Vec<Diagnostic>) {
    UpdateView::new(update, catalog).profile()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ClassRecord, MethodRef};

    fn class(fqn: &str, calls: &[(&str, &str)]) -> ClassRecord {
        let mut c = ClassRecord::new(fqn).unwrap();
        c.declare_method("run", 0);
        for (owner, method) in calls {
            c.add_call("run", 0, MethodRef::new(*owner, *method, 0));
        }
        c
    }

    fn update(classes: Vec<ClassRecord>, activities: &[&str]) -> AppUpdate {
        let mut u = AppUpdate::new("com.x", 1);
        for c in classes {
            u.insert_class(c).unwrap();
        }
        u.activities = activities.iter().map(|s| s.to_string()).collect();
        u
    }

    const ADMOB_INTER: &str = "com.google.android.gms.ads.InterstitialAd";

    #[test]
    fn regex_examples() {
        assert!(is_candidate_ad_name("com.google.android.gms.ads.AdView"));
        assert!(is_candidate_ad_name("com.fbox.load.ImageLoad"));
        assert!(!is_candidate_ad_name("org.example.Button"));
        assert!(is_candidate_ad_name("x.aD") && is_candidate_ad_name("x.AD"));
    }

    #[test]
    fn roles() {
        let cat = AdLibraryCatalog::seed();
        let shows = update(
            vec![
                class("com.x.Main", &[(ADMOB_INTER, "show")]),
                class(ADMOB_INTER, &[]),
            ],
            &["com.x.Main"],
        );
        assert_eq!(classify_role(&shows, &cat), AppRole::AdDisplaying);
        assert_eq!(ad_screens(&shows, &cat), ["com.x.Main".to_string()].into());

        let none = update(vec![class("com.x.Main", &[])], &["com.x.Main"]);
        assert_eq!(classify_role(&none, &cat), AppRole::NonIntegrating);

        let analytics = update(
            vec![
                class("com.x.Main", &[("com.google.android.gms.analytics.Tracker", "send")]),
                class(
                    "com.google.android.gms.analytics.Tracker",
                    &[("com.google.android.gms.ads.identifier.AdvertisingIdClient", "getAdvertisingIdInfo")],
                ),
                class("com.google.android.gms.ads.identifier.AdvertisingIdClient", &[]),
            ],
            &["com.x.Main"],
        );
        assert_eq!(classify_role(&analytics, &cat), AppRole::AnalyticsOnly);

        let inert = update(
            vec![class("com.x.Main", &[]), class(ADMOB_INTER, &[])],
            &["com.x.Main"],
        );
        let r = assess_role(&inert, &cat);
        assert_eq!(r.role, AppRole::InertAdCode);
        assert!(r.diagnostics.is_empty());

        let ambiguous = update(
            vec![class("com.x.Main", &[(ADMOB_INTER, "setAdUnitId")]), class(ADMOB_INTER, &[])],
            &["com.x.Main"],
        );
        let r = assess_role(&ambiguous, &cat);
        assert_eq!(r.role, AppRole::InertAdCode);
        assert_eq!(r.diagnostics[0].kind, DiagnosticKind::AmbiguousRole);
    }

    #[test]
    fn screens_follow_app_code_calls_and_inner_classes() {
        let cat = AdLibraryCatalog::seed();
        let u = update(
            vec![
                class("com.x.Main", &[("com.x.ads.AdManager", "showInterstitial")]),
                class("com.x.Settings$1", &[(ADMOB_INTER, "show")]),
                class("com.x.Settings", &[]),
                class("com.x.About", &[]),
                class("com.x.ads.AdManager", &[(ADMOB_INTER, "show")]),
                class(ADMOB_INTER, &[]),
            ],
            &["com.x.Main", "com.x.Settings", "com.x.About", "com.x.Gone"],
        );
        let screens = ad_screens(&u, &cat);
        assert_eq!(
            screens,
            ["com.x.Main".to_string(), "com.x.Settings".to_string()].into()
        );
    }

    #[test]
    fn orphan_show_call_is_flagged() {
        let cat = AdLibraryCatalog::seed();
        let u = update(
            vec![class("com.x.Service", &[(ADMOB_INTER, "show")]), class(ADMOB_INTER, &[])],
            &[],
        );
        let r = assess_role(&u, &cat);
        assert_eq!(r.role, AppRole::AdDisplaying);
        assert!(r.ad_screens.is_empty());
        assert_eq!(r.diagnostics[0].kind, DiagnosticKind::UnreachableShowCall);
    }
}
