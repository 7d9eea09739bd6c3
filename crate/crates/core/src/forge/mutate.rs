use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ForgeError;
use crate::catalog::AdLibraryCatalog;
use crate::detection::UpdateView;
use crate::evolution::is_obfuscated_class;
use crate::model::{AppUpdate, ClassRecord, MethodRef};

/// A single structural edit applied to one update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MutationKind {
    /// One more app-code call into an integrated library.
    AddCallSite,
    /// One app-code call into an integrated library removed.
    RemoveCallSite,
    /// One library class that app code never calls is renamed.
    RenameLibraryInternal,
    /// One catalog library not yet present is added.
    AddLibrary,
    /// Every class of one integrated library is removed.
    RemoveLibrary,
}

impl MutationKind {
    pub const ALL: [MutationKind; 5] = [
        MutationKind::AddCallSite,
        MutationKind::RemoveCallSite,
        MutationKind::RenameLibraryInternal,
        MutationKind::AddLibrary,
        MutationKind::RemoveLibrary,
    ];
}

impl std::fmt::Display for MutationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        std::fmt::Debug::fmt(self, f)
    }
}

/// Applies `kind` to a copy of `update`. Choices among eligible targets
/// are driven by `seed`.
pub fn mutate_update(
    update: &AppUpdate,
    kind: MutationKind,
    catalog: &AdLibraryCatalog,
    seed: u64,
) -> Result<AppUpdate, ForgeError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let view = UpdateView::new(update, catalog);
    let not_applicable = |reason: &str| ForgeError::NotApplicable {
        kind,
        reason: reason.to_owned(),
    };
    let mut out = update.clone();
    match kind {
        MutationKind::AddCallSite => {
            let callers: Vec<&str> = view
                .app_code_classes()
                .iter()
                .copied()
                .filter(|c| !is_obfuscated_class(c))
                .collect();
            let targets: Vec<MethodRef> = update
                .classes
                .values()
                .filter(|c| catalog.library_of(&c.fqn).is_some())
                .flat_map(|c| {
                    let fallback = MethodRef::new(c.fqn.clone(), "call", 0);
                    let declared = c.declared_methods.clone();
                    if declared.is_empty() { vec![fallback] } else { declared }
                })
                .collect();
            let caller = callers.choose(&mut rng).ok_or_else(|| not_applicable("no named app-code class"))?;
            let target = targets.choose(&mut rng).ok_or_else(|| not_applicable("no integrated library"))?;
            let class = out.classes.get_mut(*caller).expect("present");
            let (method, params) = class
                .declared_methods
                .first()
                .map_or(("mutated".to_owned(), 0), |m| (m.method_name.clone(), m.param_count));
            class.add_call(&method, params, target.clone());
        }
        MutationKind::RemoveCallSite => {
            let sites: Vec<(String, usize)> = view
                .app_code_classes()
                .iter()
                .filter(|c| !is_obfuscated_class(c))
                .flat_map(|c| {
                    update.classes[*c]
                        .call_sites
                        .iter()
                        .enumerate()
                        .filter(|(_, s)| view.callee_library(s).is_some())
                        .map(|(i, _)| (c.to_string(), i))
                })
                .collect();
            let (class, index) = sites
                .choose(&mut rng)
                .ok_or_else(|| not_applicable("no app-code call into a library"))?;
            out.classes.get_mut(class).expect("present").call_sites.remove(*index);
        }
        MutationKind::RenameLibraryInternal => {
            let called: std::collections::BTreeSet<&str> =
                view.app_code_calls().map(|s| s.callee.owner_class.as_str()).collect();
            let mut candidates = Vec::new();
            for (fqn, class) in &update.classes {
                let Some(entry) = catalog.library_of(fqn) else { continue };
                if called.contains(fqn.as_str()) {
                    continue;
                }
                let renamed = fresh_name(update, fqn);
                let same_owner = catalog.library_of(&renamed).is_some_and(|e| e.name == entry.name);
                let same_status = entry.is_mediator_class(fqn) == entry.is_mediator_class(&renamed)
                    && entry.is_identifier_class(fqn) == entry.is_identifier_class(&renamed)
                    && catalog.analytics_library_of(fqn).is_none();
                if same_owner && same_status {
                    candidates.push((class, renamed));
                }
            }
            let (class, renamed) = candidates
                .choose(&mut rng)
                .ok_or_else(|| not_applicable("no library class outside app-code reach"))?;
            rename_class(&mut out, &class.fqn, renamed);
        }
        MutationKind::AddLibrary => {
            let absent: Vec<_> = catalog
                .entries
                .iter()
                .filter(|e| !view.is_integrated(&e.name) && !e.package_prefixes.is_empty())
                .collect();
            let entry = absent.choose(&mut rng).ok_or_else(|| not_applicable("every library is present"))?;
            let mut c = ClassRecord::new(format!("{}.AdSdk", entry.package_prefixes[0])).expect("valid");
            c.declare_method("initialize", 1);
            out.classes.insert(c.fqn.clone(), c);
        }
        MutationKind::RemoveLibrary => {
            let present: Vec<String> = view.integrated().into_iter().collect();
            let name = present.choose(&mut rng).ok_or_else(|| not_applicable("no integrated library"))?;
            out.classes
                .retain(|fqn, _| catalog.library_of(fqn).is_none_or(|e| &e.name != name));
        }
    }
    Ok(out)
}

fn fresh_name(update: &AppUpdate, fqn: &str) -> String {
    let mut i = 0;
    loop {
        let candidate = if i == 0 { format!("{fqn}Impl") } else { format!("{fqn}Impl{i}") };
        if !update.classes.contains_key(&candidate) {
            return candidate;
        }
        i += 1;
    }
}

/// Renames a class and every reference to it.
fn rename_class(update: &mut AppUpdate, from: &str, to: &str) {
    let mut class = update.classes.remove(from).expect("present");
    class.fqn = to.to_owned();
    for m in &mut class.declared_methods {
        m.owner_class = to.to_owned();
    }
    for s in &mut class.call_sites {
        s.caller.owner_class = to.to_owned();
    }
    update.classes.insert(to.to_owned(), class);
    for c in update.classes.values_mut() {
        for s in &mut c.call_sites {
            if s.callee.owner_class == from {
                s.callee.owner_class = to.to_owned();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::integrated_libraries;
    use crate::evolution::{call_site_modified, library_version_changed};

    fn sample() -> AppUpdate {
        let mut u = AppUpdate::new("com.example.app", 1);
        let mut act = ClassRecord::new("com.example.app.MainActivity").unwrap();
        act.declare_method("onCreate", 1);
        act.add_call("onCreate", 1, MethodRef::new("com.inmobi.InterstitialAd", "show", 0));
        u.activities.insert(act.fqn.clone());
        u.insert_class(act).unwrap();
        for fqn in ["com.inmobi.InterstitialAd", "com.inmobi.internal.Core"] {
            let mut c = ClassRecord::new(fqn).unwrap();
            c.declare_method("show", 0);
            u.insert_class(c).unwrap();
        }
        u
    }

    #[test]
    fn each_kind_has_its_effect() {
        let cat = AdLibraryCatalog::seed();
        let base = sample();
        let lib = "InMobi";
        for seed in 0..20 {
            let m = mutate_update(&base, MutationKind::AddCallSite, &cat, seed).unwrap();
            assert!(call_site_modified(&base, &m, lib, &cat));
            let m = mutate_update(&base, MutationKind::RemoveCallSite, &cat, seed).unwrap();
            assert!(call_site_modified(&base, &m, lib, &cat));
            let m = mutate_update(&base, MutationKind::RenameLibraryInternal, &cat, seed).unwrap();
            assert!(!call_site_modified(&base, &m, lib, &cat));
            assert!(library_version_changed(&base, &m, lib, &cat));
            let m = mutate_update(&base, MutationKind::AddLibrary, &cat, seed).unwrap();
            assert_eq!(integrated_libraries(&m, &cat).len(), 2);
            let m = mutate_update(&base, MutationKind::RemoveLibrary, &cat, seed).unwrap();
            assert!(integrated_libraries(&m, &cat).is_empty());
        }
    }

    #[test]
    fn not_applicable_without_libraries() {
        let cat = AdLibraryCatalog::seed();
        let u = AppUpdate::new("com.example.app", 1);
        let err = mutate_update(&u, MutationKind::RemoveLibrary, &cat, 0).unwrap_err();
        assert!(matches!(err, ForgeError::NotApplicable { .. }));
    }
}
