use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::spec::{allocate, FixtureSpec, FIXTURE_SCHEMA};
use super::ForgeError;
use crate::catalog::{AdLibraryCatalog, AdLibraryEntry};
use crate::detection::AppRole;
use crate::evolution::{ChangeEvent, ChangeKind, SplitCounts};
use crate::model::{simple_name, AppLineage, AppUpdate, ClassRecord, Corpus, MethodRef};
use crate::strategy::IntegrationStrategy;

const COMPANIES: &[&str] = &[
    "brightsoft", "lumenlabs", "pinecrest", "northwind", "quillworks", "tidewater", "sunbeam", "ironbark",
    "maplewave", "cobaltbay", "redfern", "silverline",
];

const PRODUCTS: &[&str] = &[
    "weather", "radio", "notes", "gallery", "puzzle", "fitness", "recipes", "compass", "scanner", "flashlight",
    "metronome", "wallpaper", "chess", "sudoku", "reader", "translate",
];

// Several of these contain "ad" on purpose (Reader, Download, Thread, Gradient, Headline).
const ACTIVITIES: &[&str] = &[
    "MainActivity", "SettingsActivity", "DetailActivity", "GalleryActivity", "PlayerActivity", "ReaderActivity",
    "SearchActivity", "AboutActivity", "ProfileActivity", "DownloadsActivity",
];

const HELPERS: &[(&str, &str)] = &[
    ("util.ImageLoader", "load"),
    ("widget.GradientView", "draw"),
    ("concurrent.ThreadPool", "submit"),
    ("net.Downloader", "fetch"),
    ("data.HeadlineStore", "refresh"),
    ("util.Preferences", "read"),
];

const THIRD_PARTY: &[(&str, &str)] = &[
    ("androidx.appcompat.app.AppCompatActivity", "setContentView"),
    ("com.squareup.okhttp.OkHttpClient", "newCall"),
    ("com.google.gson.Gson", "toJson"),
];

/// 2015-01-01T00:00:00Z
const EPOCH: i64 = 1_420_070_400;
const DAY: i64 = 86_400;

/// How app code reaches a library.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LibUse {
    /// Activities call its show method.
    Direct,
    /// Activities call its mediation router and show method.
    Mediator,
    /// Only the mediator's router calls it.
    Covered,
    /// An app-code provider class behind the app's own ad manager calls it.
    Provider,
    /// Shipped but never called from app code.
    Inert,
}

impl LibUse {
    fn accessed(self) -> bool {
        matches!(self, LibUse::Direct | LibUse::Mediator | LibUse::Provider)
    }
}

type LibSet = BTreeMap<String, LibUse>;

/// What the generator did between two consecutive updates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionTruth {
    pub from_version: u64,
    pub to_version: u64,
    /// Libraries present on both sides.
    pub retained: Vec<String>,
    pub added: Vec<String>,
    pub removed: Vec<String>,
    /// Retained libraries whose app-code call sites were changed.
    pub modified: Vec<String>,
    /// Retained libraries whose own code was changed.
    pub version_changed: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthLabel {
    pub app_id: String,
    pub role: AppRole,
    /// `NotAdDisplaying` for every role other than AdDisplaying.
    pub strategy: IntegrationStrategy,
    pub category: String,
    pub download_count: u64,
    pub version_codes: Vec<u64>,
    /// Libraries of the latest update.
    pub integrated: Vec<String>,
    /// Libraries app code calls in the latest update.
    pub accessed: Vec<String>,
    pub has_native_code: bool,
    pub transitions: Vec<TransitionTruth>,
}

impl GroundTruthLabel {
    pub fn updates(&self) -> usize {
        self.version_codes.len()
    }

    pub fn modified_transitions(&self) -> usize {
        self.transitions.iter().filter(|t| !t.modified.is_empty()).count()
    }

    /// Exact `(modified transitions, transitions)`; `None` for a single update.
    pub fn modification_probability(&self) -> Option<(usize, usize)> {
        (!self.transitions.is_empty()).then(|| (self.modified_transitions(), self.transitions.len()))
    }

    pub fn add_remove_updates(&self) -> usize {
        self.transitions
            .iter()
            .filter(|t| !t.added.is_empty() || !t.removed.is_empty())
            .count()
    }

    /// Exact `(add/remove updates, updates)`.
    pub fn add_remove_ratio(&self) -> (usize, usize) {
        (self.add_remove_updates(), self.updates())
    }

    pub fn split(&self) -> SplitCounts {
        let mut s = SplitCounts::default();
        for t in &self.transitions {
            for lib in &t.retained {
                let modified = usize::from(t.modified.contains(lib));
                if t.version_changed.contains(lib) {
                    s.updated_pairs += 1;
                    s.updated_modified += modified;
                } else {
                    s.not_updated_pairs += 1;
                    s.not_updated_modified += modified;
                }
            }
        }
        s
    }

    pub fn events(&self) -> Vec<ChangeEvent> {
        let mut out = Vec::new();
        for t in &self.transitions {
            let groups = [
                (&t.added, ChangeKind::LibraryAdded),
                (&t.removed, ChangeKind::LibraryRemoved),
                (&t.modified, ChangeKind::AdCallSiteModified),
                (&t.version_changed, ChangeKind::LibraryVersionChanged),
            ];
            for (libs, kind) in groups {
                out.extend(libs.iter().map(|lib| ChangeEvent {
                    app_id: self.app_id.clone(),
                    from_version: t.from_version,
                    to_version: t.to_version,
                    library: lib.clone(),
                    kind,
                }));
            }
        }
        out.sort();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForgedCorpus {
    pub corpus: Corpus,
    /// One label per app, ordered by app id.
    pub truth: Vec<GroundTruthLabel>,
}

impl ForgedCorpus {
    pub fn truth_jsonl(&self) -> String {
        self.truth
            .iter()
            .map(|t| serde_json::to_string(t).expect("label serializes") + "\n")
            .collect()
    }
}

/// A spec reproducing a four-role split of 1837 single-update apps
/// (1076 / 530 / 154 / 77).
pub fn role_corpus_spec(seed: u64) -> FixtureSpec {
    const TOTAL: f64 = 1837.0;
    let mut spec = FixtureSpec::parse(&format!("schema={FIXTURE_SCHEMA}\napp_count=1837")).expect("valid");
    spec.seed = Some(seed);
    spec.role_mix = [
        (AppRole::AdDisplaying, 1076.0 / TOTAL),
        (AppRole::NonIntegrating, 530.0 / TOTAL),
        (AppRole::AnalyticsOnly, 154.0 / TOTAL),
        (AppRole::InertAdCode, 77.0 / TOTAL),
    ]
    .into();
    spec.strategy_mix = [
        (IntegrationStrategy::SingleLibrary, 0.6),
        (IntegrationStrategy::Mixed, 0.2),
        (IntegrationStrategy::SelfMediation, 0.1),
        (IntegrationStrategy::ExternalMediation, 0.05),
        (IntegrationStrategy::Scattered, 0.05),
    ]
    .into();
    spec
}

struct Pools<'c> {
    all: Vec<&'c AdLibraryEntry>,
    display: Vec<&'c AdLibraryEntry>,
    mediators: Vec<&'c AdLibraryEntry>,
    id_hosts: Vec<&'c AdLibraryEntry>,
    analytics: Vec<&'c str>,
}

impl<'c> Pools<'c> {
    fn new(spec: &FixtureSpec, catalog: &'c AdLibraryCatalog) -> Self {
        let all: Vec<&AdLibraryEntry> = catalog
            .entries
            .iter()
            .filter(|e| spec.library_pool.is_empty() || spec.library_pool.contains(&e.name))
            .filter(|e| !e.package_prefixes.is_empty())
            .collect();
        let display: Vec<_> = all.iter().copied().filter(|e| !e.show_ad_methods.is_empty()).collect();
        Pools {
            mediators: display.iter().copied().filter(|e| !e.mediator_prefixes.is_empty()).collect(),
            id_hosts: all.iter().copied().filter(|e| !e.identifier_prefixes.is_empty()).collect(),
            analytics: catalog.analytics_prefixes.iter().map(|a| a.prefix.as_str()).collect(),
            display,
            all,
        }
    }

    fn entry(&self, name: &str) -> &'c AdLibraryEntry {
        self.all.iter().copied().find(|e| e.name == name).expect("pool library")
    }

    fn check(
        &self,
        roles: &BTreeMap<AppRole, usize>,
        strategies: &BTreeMap<IntegrationStrategy, usize>,
        spec: &FixtureSpec,
    ) -> Result<(), ForgeError> {
        let infeasible = |m: String| Err(ForgeError::InfeasibleSpec(m));
        for (&s, &n) in strategies {
            if n == 0 {
                continue;
            }
            let need = match s {
                IntegrationStrategy::SingleLibrary => 1,
                IntegrationStrategy::Mixed => spec.libraries_per_app[0].max(3),
                _ => spec.libraries_per_app[0],
            };
            if self.display.len() < need {
                return infeasible(format!(
                    "{s} needs {need} show-capable libraries, the pool has {}",
                    self.display.len()
                ));
            }
            let needs_mediator = matches!(s, IntegrationStrategy::ExternalMediation | IntegrationStrategy::Mixed);
            if needs_mediator && self.mediators.is_empty() {
                return infeasible(format!("{s} needs a library with a mediator package"));
            }
        }
        let count = |r| roles.get(&r).copied().unwrap_or(0);
        if count(AppRole::AnalyticsOnly) > 0 && (self.id_hosts.is_empty() || self.analytics.is_empty()) {
            return infeasible("AnalyticsOnly needs an identifier-capable library and an analytics prefix".into());
        }
        if count(AppRole::InertAdCode) > 0 && self.all.is_empty() {
            return infeasible("InertAdCode needs at least one library".into());
        }
        Ok(())
    }
}

struct Skeleton {
    app_id: String,
    package: String,
    category: String,
    downloads: u64,
    role: AppRole,
    strategy: IntegrationStrategy,
    activities: Vec<String>,
    helpers: Vec<(String, &'static str)>,
    third_party: Vec<(&'static str, &'static str)>,
    obfuscated: bool,
    /// Designated calling activities per library.
    callers: BTreeMap<String, (usize, usize)>,
    tracker: Option<String>,
    id_host: Option<String>,
    native: bool,
    base_versions: BTreeMap<String, u32>,
}

fn slug(name: &str) -> String {
    name.chars().filter(char::is_ascii_alphanumeric).collect()
}

fn round_count(rate: f64, n: usize) -> usize {
    (rate * n as f64).round() as usize
}

fn log_uniform(rng: &mut ChaCha8Rng, [lo, hi]: [u64; 2]) -> u64 {
    if lo == hi {
        return lo;
    }
    let (a, b) = ((lo.max(1) as f64).ln(), (hi as f64).ln());
    (rng.random_range(a..=b).exp().round() as u64).clamp(lo, hi)
}

pub fn generate(spec: &FixtureSpec, catalog: &AdLibraryCatalog) -> Result<ForgedCorpus, ForgeError> {
    spec.validate(catalog)?;
    let seed = spec.seed.ok_or(ForgeError::MissingSeed)?;
    let pools = Pools::new(spec, catalog);
    let roles = allocate(spec.app_count, &spec.role_mix);
    let displaying = roles.get(&AppRole::AdDisplaying).copied().unwrap_or(0);
    let strategies = allocate(displaying, &spec.strategy_mix);
    pools.check(&roles, &strategies, spec)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels = Vec::with_capacity(spec.app_count);
    for (&s, &n) in &strategies {
        labels.extend(std::iter::repeat_n((AppRole::AdDisplaying, s), n));
    }
    for (&r, &n) in roles.iter().filter(|(r, _)| **r != AppRole::AdDisplaying) {
        labels.extend(std::iter::repeat_n((r, IntegrationStrategy::NotAdDisplaying), n));
    }
    labels.shuffle(&mut rng);
    let inert = roles.get(&AppRole::InertAdCode).copied().unwrap_or(0);
    let mut native_left = round_count(spec.native_code_rate, inert);

    let width = spec.app_count.max(1).to_string().len();
    let mut corpus = Corpus::new();
    let mut truth = Vec::with_capacity(spec.app_count);
    for (i, &(role, strategy)) in labels.iter().enumerate() {
        let mut app_rng = ChaCha8Rng::seed_from_u64(rng.random());
        let native = if role == AppRole::InertAdCode && native_left > 0 {
            native_left -= 1;
            true
        } else {
            role != AppRole::InertAdCode && app_rng.random_bool(0.25)
        };
        let skel = skeleton(i, width, role, strategy, native, spec, &pools, &mut app_rng);
        let (lineage, label) = forge_app(&skel, spec, &pools, &mut app_rng);
        corpus.insert(lineage);
        truth.push(label);
    }
    truth.sort_by(|a, b| a.app_id.cmp(&b.app_id));
    Ok(ForgedCorpus { corpus, truth })
}

#[allow(clippy::too_many_arguments)]
fn skeleton(
    index: usize,
    width: usize,
    role: AppRole,
    strategy: IntegrationStrategy,
    native: bool,
    spec: &FixtureSpec,
    pools: &Pools,
    rng: &mut ChaCha8Rng,
) -> Skeleton {
    let company = COMPANIES.choose(rng).expect("non-empty");
    let product = PRODUCTS.choose(rng).expect("non-empty");
    let app_id = format!("com.{company}.{product}{index:0width$}");
    let package = app_id.clone();
    let n_activities = rng.random_range(2..=5);
    let activities: Vec<String> = ACTIVITIES
        .choose_multiple(rng, n_activities)
        .map(|a| format!("{package}.screens.{a}"))
        .collect();
    let n_helpers = rng.random_range(2..=4);
    let helpers = HELPERS
        .choose_multiple(rng, n_helpers)
        .map(|(c, m)| (format!("{package}.{c}"), *m))
        .collect();
    let third_party = THIRD_PARTY.iter().copied().filter(|_| rng.random_bool(0.6)).collect();
    let mut callers = BTreeMap::new();
    let mut base_versions = BTreeMap::new();
    for e in &pools.all {
        let a1 = rng.random_range(0..activities.len());
        let a2 = (a1 + rng.random_range(1..activities.len())) % activities.len();
        callers.insert(e.name.clone(), (a1, a2));
        base_versions.insert(e.name.clone(), rng.random_range(1..=9));
    }
    let tracker_wanted = match role {
        AppRole::AnalyticsOnly => true,
        AppRole::InertAdCode => false,
        _ => rng.random_bool(0.3),
    };
    let tracker = tracker_wanted
        .then(|| pools.analytics.choose(rng).map(|p| format!("{p}.Tracker")))
        .flatten();
    let id_host = (role == AppRole::AnalyticsOnly)
        .then(|| pools.id_hosts.choose(rng).map(|e| e.name.clone()))
        .flatten();
    Skeleton {
        app_id,
        package,
        category: spec.categories.choose(rng).expect("non-empty").clone(),
        downloads: log_uniform(rng, spec.download_range),
        role,
        strategy,
        activities,
        helpers,
        third_party,
        obfuscated: rng.random_bool(0.5),
        callers,
        tracker,
        id_host,
        native,
        base_versions,
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, from: &[&'a AdLibraryEntry], k: usize, exclude: &LibSet) -> Vec<&'a AdLibraryEntry> {
    let free: Vec<_> = from.iter().copied().filter(|e| !exclude.contains_key(&e.name)).collect();
    free.choose_multiple(rng, k).copied().collect()
}

fn initial_set(skel: &Skeleton, spec: &FixtureSpec, pools: &Pools, rng: &mut ChaCha8Rng) -> LibSet {
    let mut set = LibSet::new();
    let [lo, hi] = spec.libraries_per_app;
    let hi = hi.min(pools.display.len());
    let add = |set: &mut LibSet, libs: Vec<&AdLibraryEntry>, u: LibUse| {
        for e in libs {
            set.insert(e.name.clone(), u);
        }
    };
    match (skel.role, skel.strategy) {
        (AppRole::AdDisplaying, IntegrationStrategy::SingleLibrary) => {
            let libs = pick(rng, &pools.display, 1, &set);
            add(&mut set, libs, LibUse::Direct);
        }
        (AppRole::AdDisplaying, s @ (IntegrationStrategy::Scattered | IntegrationStrategy::SelfMediation)) => {
            let k = rng.random_range(lo..=hi);
            let u = if s == IntegrationStrategy::Scattered { LibUse::Direct } else { LibUse::Provider };
            let libs = pick(rng, &pools.display, k, &set);
            add(&mut set, libs, u);
        }
        (AppRole::AdDisplaying, IntegrationStrategy::ExternalMediation) => {
            let k = rng.random_range(lo..=hi);
            let m = pools.mediators.choose(rng).expect("checked");
            set.insert(m.name.clone(), LibUse::Mediator);
            let libs = pick(rng, &pools.display, k - 1, &set);
            add(&mut set, libs, LibUse::Covered);
        }
        (AppRole::AdDisplaying, IntegrationStrategy::Mixed) => {
            let k = rng.random_range(lo.max(3)..=hi);
            let m = pools.mediators.choose(rng).expect("checked");
            set.insert(m.name.clone(), LibUse::Mediator);
            let covered = rng.random_range(1..=k - 2);
            let libs = pick(rng, &pools.display, covered, &set);
            add(&mut set, libs, LibUse::Covered);
            let libs = pick(rng, &pools.display, k - 1 - covered, &set);
            add(&mut set, libs, LibUse::Direct);
        }
        (AppRole::AnalyticsOnly, _) => {
            let host = skel.id_host.clone().expect("checked");
            set.insert(host, LibUse::Inert);
            let extra = rng.random_range(0..=1);
            let libs = pick(rng, &pools.all, extra, &set);
            add(&mut set, libs, LibUse::Inert);
        }
        (AppRole::InertAdCode, _) => {
            let k = rng.random_range(1..=2.min(pools.all.len()));
            let libs = pick(rng, &pools.all, k, &set);
            add(&mut set, libs, LibUse::Inert);
        }
        _ => {}
    }
    set
}

enum Op {
    Add(String, LibUse),
    Remove(String),
    Swap(String, String),
}

/// Every add/remove step that keeps the app's role and strategy intact.
fn add_remove_options(skel: &Skeleton, set: &LibSet, pools: &Pools) -> Vec<Op> {
    let count = |u: LibUse| set.values().filter(|v| **v == u).count();
    let free = |from: &[&AdLibraryEntry]| -> Vec<String> {
        from.iter()
            .filter(|e| !set.contains_key(&e.name))
            .map(|e| e.name.clone())
            .collect()
    };
    let removable = |u: LibUse, keep: usize| -> Vec<Op> {
        if count(u) > keep {
            set.iter()
                .filter(|(n, v)| **v == u && Some(*n) != skel.id_host.as_ref())
                .map(|(n, _)| Op::Remove(n.clone()))
                .collect()
        } else {
            Vec::new()
        }
    };
    let mut ops = Vec::new();
    match (skel.role, skel.strategy) {
        (AppRole::AdDisplaying, IntegrationStrategy::SingleLibrary) => {
            let current = set.keys().next().expect("one library").clone();
            ops.extend(free(&pools.display).into_iter().map(|n| Op::Swap(current.clone(), n)));
        }
        (AppRole::AdDisplaying, s @ (IntegrationStrategy::Scattered | IntegrationStrategy::SelfMediation)) => {
            let u = if s == IntegrationStrategy::Scattered { LibUse::Direct } else { LibUse::Provider };
            ops.extend(free(&pools.display).into_iter().map(|n| Op::Add(n, u)));
            ops.extend(removable(u, 2));
        }
        (AppRole::AdDisplaying, IntegrationStrategy::ExternalMediation) => {
            ops.extend(free(&pools.display).into_iter().map(|n| Op::Add(n, LibUse::Covered)));
            ops.extend(removable(LibUse::Covered, 1));
        }
        (AppRole::AdDisplaying, IntegrationStrategy::Mixed) => {
            for n in free(&pools.display) {
                ops.push(Op::Add(n.clone(), LibUse::Covered));
                ops.push(Op::Add(n, LibUse::Direct));
            }
            ops.extend(removable(LibUse::Covered, 1));
            ops.extend(removable(LibUse::Direct, 1));
        }
        (AppRole::AnalyticsOnly, _) => {
            ops.extend(free(&pools.all).into_iter().map(|n| Op::Add(n, LibUse::Inert)));
            ops.extend(removable(LibUse::Inert, 1));
        }
        (AppRole::InertAdCode, _) => {
            ops.extend(free(&pools.all).into_iter().map(|n| Op::Add(n, LibUse::Inert)));
            ops.extend(removable(LibUse::Inert, 1));
        }
        _ => {}
    }
    ops
}

fn sorted(set: BTreeSet<&String>) -> Vec<String> {
    set.into_iter().cloned().collect()
}

fn forge_app(skel: &Skeleton, spec: &FixtureSpec, pools: &Pools, rng: &mut ChaCha8Rng) -> (AppLineage, GroundTruthLabel) {
    let n = rng.random_range(spec.updates_per_app[0]..=spec.updates_per_app[1]);
    let transitions = n - 1;

    // Library sets per update, with add/remove steps at chosen transitions.
    let mut order: Vec<usize> = (1..=transitions).collect();
    order.shuffle(rng);
    let add_remove_at: BTreeSet<usize> = order
        .into_iter()
        .take(round_count(spec.seeded_add_remove_rate, transitions))
        .collect();
    let mut sets = vec![initial_set(skel, spec, pools, rng)];
    for t in 1..=transitions {
        let mut next = sets[t - 1].clone();
        if add_remove_at.contains(&t) {
            let ops = add_remove_options(skel, &next, pools);
            if let Some(op) = ops.choose(rng) {
                match op {
                    Op::Add(name, u) => {
                        next.insert(name.clone(), *u);
                    }
                    Op::Remove(name) => {
                        next.remove(name);
                    }
                    Op::Swap(old, new) => {
                        let u = next.remove(old).expect("present");
                        next.insert(new.clone(), u);
                    }
                }
            }
        }
        sets.push(next);
    }

    let retained = |t: usize| -> Vec<String> {
        sets[t - 1]
            .keys()
            .filter(|k| sets[t].contains_key(*k))
            .cloned()
            .collect()
    };

    // Call-site modifications on libraries accessed on both sides.
    let accessed_both = |t: usize| -> Vec<String> {
        retained(t)
            .into_iter()
            .filter(|k| sets[t - 1][k].accessed() && sets[t][k].accessed())
            .collect()
    };
    let candidates: Vec<usize> = (1..=transitions).filter(|&t| !accessed_both(t).is_empty()).collect();
    let k = round_count(spec.seeded_modification_rate, transitions).min(candidates.len());
    let mut mods: BTreeSet<(usize, String)> = BTreeSet::new();
    for &t in candidates.choose_multiple(rng, k) {
        let lib = accessed_both(t).choose(rng).expect("non-empty").clone();
        mods.insert((t, lib));
    }

    // Library code changes.
    let candidates: Vec<usize> = (1..=transitions).filter(|&t| !retained(t).is_empty()).collect();
    let k = round_count(spec.seeded_version_change_rate, transitions).min(candidates.len());
    let mut bumps: BTreeSet<(usize, String)> = BTreeSet::new();
    for &t in candidates.choose_multiple(rng, k) {
        let lib = retained(t).choose(rng).expect("non-empty").clone();
        bumps.insert((t, lib));
    }
    if spec.modification_with_library_update {
        bumps.extend(mods.iter().cloned());
    }

    let mut version_codes = vec![rng.random_range(1..=30u64)];
    let mut observed = vec![EPOCH + rng.random_range(0..365 * DAY)];
    for _ in 1..n {
        let v = version_codes.last().expect("non-empty") + rng.random_range(1..=5);
        version_codes.push(v);
        let o = observed.last().expect("non-empty") + rng.random_range(7..=60) * DAY;
        observed.push(o);
    }

    let mut updates = Vec::with_capacity(n);
    for (s, set) in sets.iter().enumerate() {
        let count_until = |marks: &BTreeSet<(usize, String)>, lib: &str| {
            marks.iter().filter(|(t, l)| *t <= s && l == lib).count() as u32
        };
        let libs: Vec<RealizedLib> = set
            .iter()
            .map(|(name, u)| RealizedLib {
                entry: pools.entry(name),
                usage: *u,
                variant: count_until(&mods, name),
                version: skel.base_versions[name] + count_until(&bumps, name),
            })
            .collect();
        updates.push(realize(skel, &libs, version_codes[s], observed[s]));
    }

    let mut truth_transitions = Vec::with_capacity(transitions);
    for t in 1..=transitions {
        let (a, b) = (&sets[t - 1], &sets[t]);
        let at = |marks: &BTreeSet<(usize, String)>| -> Vec<String> {
            marks.iter().filter(|(tt, _)| *tt == t).map(|(_, l)| l.clone()).collect()
        };
        truth_transitions.push(TransitionTruth {
            from_version: version_codes[t - 1],
            to_version: version_codes[t],
            retained: retained(t),
            added: sorted(b.keys().filter(|k| !a.contains_key(*k)).collect()),
            removed: sorted(a.keys().filter(|k| !b.contains_key(*k)).collect()),
            modified: at(&mods),
            version_changed: at(&bumps),
        });
    }
    let last = sets.last().expect("non-empty");
    let label = GroundTruthLabel {
        app_id: skel.app_id.clone(),
        role: skel.role,
        strategy: skel.strategy,
        category: skel.category.clone(),
        download_count: skel.downloads,
        version_codes,
        integrated: last.keys().cloned().collect(),
        accessed: last.iter().filter(|(_, u)| u.accessed()).map(|(k, _)| k.clone()).collect(),
        has_native_code: skel.native,
        transitions: truth_transitions,
    };
    let lineage = AppLineage::new(skel.app_id.clone(), updates).expect("distinct version codes");
    (lineage, label)
}

struct RealizedLib<'c> {
    entry: &'c AdLibraryEntry,
    usage: LibUse,
    variant: u32,
    version: u32,
}

/// The method app code calls to show an ad from this library.
fn show_target(entry: &AdLibraryEntry) -> MethodRef {
    let p = &entry.show_ad_methods[0];
    let owner = if simple_name(&p.owner_prefix).starts_with(|c: char| c.is_ascii_uppercase()) {
        p.owner_prefix.clone()
    } else {
        format!("{}.InterstitialAd", p.owner_prefix)
    };
    MethodRef::new(owner, p.method.clone(), p.params.unwrap_or(0))
}

fn api_target(entry: &AdLibraryEntry) -> MethodRef {
    MethodRef::new(format!("{}.AdSdk", entry.package_prefixes[0]), "initialize", 1)
}

fn router_target(entry: &AdLibraryEntry) -> MethodRef {
    MethodRef::new(format!("{}.MediationRouter", entry.mediator_prefixes[0]), "loadMediated", 1)
}

fn id_target(entry: &AdLibraryEntry) -> MethodRef {
    MethodRef::new(
        format!("{}.AdvertisingIdClient", entry.identifier_prefixes[0]),
        "getAdvertisingIdInfo",
        1,
    )
}

fn class_with(fqn: &str, methods: &[(&str, u32)]) -> ClassRecord {
    let mut c = ClassRecord::new(fqn).expect("generated names are valid");
    for (m, p) in methods {
        c.declare_method(*m, *p);
    }
    c
}

fn declared(target: &MethodRef) -> ClassRecord {
    class_with(&target.owner_class, &[(&target.method_name, target.param_count)])
}

fn library_classes(lib: &RealizedLib, covered: &[&AdLibraryEntry]) -> Vec<ClassRecord> {
    let e = lib.entry;
    let base = &e.package_prefixes[0];
    let mut out = Vec::new();
    if !e.show_ad_methods.is_empty() {
        out.push(declared(&show_target(e)));
    }
    out.push(declared(&api_target(e)));
    let version_method = format!("release{}", lib.version);
    let version_class = format!("{base}.internal.SdkVersion");
    out.push(class_with(&version_class, &[(&version_method, 0)]));
    let mut queue = class_with(&format!("{base}.internal.RequestQueue"), &[("enqueue", 1)]);
    queue.add_call("enqueue", 1, MethodRef::new(version_class, version_method, 0));
    out.push(queue);
    if !e.identifier_prefixes.is_empty() {
        out.push(declared(&id_target(e)));
    }
    if lib.usage == LibUse::Mediator {
        let target = router_target(e);
        let mut router = declared(&target);
        for c in covered {
            router.add_call("loadMediated", 1, show_target(c));
        }
        out.push(router);
    }
    out
}

fn realize(skel: &Skeleton, libs: &[RealizedLib], version_code: u64, observed_at: i64) -> AppUpdate {
    let mut u = AppUpdate::new(skel.app_id.clone(), version_code);
    u.observed_at = observed_at;
    u.category = skel.category.clone();
    u.download_count = skel.downloads;
    u.has_native_code = skel.native;
    u.activities = skel.activities.iter().cloned().collect();

    let mut classes: BTreeMap<String, ClassRecord> = BTreeMap::new();
    let mut put = |c: ClassRecord| {
        classes.entry(c.fqn.clone()).or_insert(c);
    };

    let covered: Vec<&AdLibraryEntry> = libs
        .iter()
        .filter(|l| l.usage == LibUse::Covered)
        .map(|l| l.entry)
        .collect();
    for lib in libs {
        for c in library_classes(lib, &covered) {
            put(c);
        }
    }
    for (fqn, method) in THIRD_PARTY.iter().filter(|t| skel.third_party.contains(t)) {
        put(class_with(fqn, &[(method, 1)]));
    }

    let mut activities: Vec<ClassRecord> = skel
        .activities
        .iter()
        .map(|a| class_with(a, &[("onCreate", 1), ("onResume", 0)]))
        .collect();
    for (i, act) in activities.iter_mut().enumerate() {
        let (h, m) = &skel.helpers[i % skel.helpers.len()];
        act.add_call("onCreate", 1, MethodRef::new(h.clone(), *m, 0));
        for (fqn, method) in &skel.third_party {
            act.add_call("onCreate", 1, MethodRef::new(*fqn, *method, 1));
        }
    }
    for (h, m) in &skel.helpers {
        put(class_with(h, &[(m, 0)]));
    }
    if skel.obfuscated {
        let mut c = class_with(&format!("{}.a.b", skel.package), &[("a", 0)]);
        let (h, m) = &skel.helpers[0];
        c.add_call("a", 0, MethodRef::new(h.clone(), *m, 0));
        put(c);
    }

    let manager = format!("{}.advertising.AdManager", skel.package);
    let mut providers = Vec::new();
    for lib in libs {
        let e = lib.entry;
        let slug = slug(&e.name);
        let display = format!("display{slug}");
        let shows = 1 + lib.variant % 3;
        let (a1, a2) = skel.callers[&e.name];
        let act_count = activities.len();
        match lib.usage {
            LibUse::Direct => {
                let act = &mut activities[a1 % act_count];
                act.declare_method(display.clone(), 0);
                act.declare_method(format!("init{slug}"), 0);
                act.add_call(&format!("init{slug}"), 0, api_target(e));
                for _ in 0..shows {
                    act.add_call(&display, 0, show_target(e));
                }
                if skel.strategy == IntegrationStrategy::Scattered {
                    let other = &mut activities[a2 % act_count];
                    other.declare_method(display.clone(), 0);
                    other.add_call(&display, 0, show_target(e));
                }
            }
            LibUse::Mediator => {
                let act = &mut activities[a1 % act_count];
                act.declare_method(display.clone(), 0);
                act.add_call(&display, 0, router_target(e));
                for _ in 0..shows {
                    act.add_call(&display, 0, show_target(e));
                }
            }
            LibUse::Provider => {
                let fqn = format!("{}.advertising.providers.{slug}Provider", skel.package);
                let mut p = class_with(&fqn, &[("show", 0), ("init", 0)]);
                p.add_call("init", 0, api_target(e));
                for _ in 0..shows {
                    p.add_call("show", 0, show_target(e));
                }
                providers.push(fqn);
                put(p);
            }
            LibUse::Covered | LibUse::Inert => {}
        }
    }
    if !providers.is_empty() {
        let mut m = class_with(&manager, &[("showInterstitial", 0)]);
        for p in &providers {
            m.add_call("showInterstitial", 0, MethodRef::new(p.clone(), "show", 0));
        }
        put(m);
        for act in &mut activities {
            act.add_call("onResume", 0, MethodRef::new(manager.clone(), "showInterstitial", 0));
        }
    }
    for act in activities {
        put(act);
    }

    let mut app = class_with(&format!("{}.App", skel.package), &[("onCreate", 0)]);
    if let Some(tracker) = &skel.tracker {
        let mut t = class_with(tracker, &[("track", 1)]);
        if let Some(host) = libs.iter().find(|l| !l.entry.identifier_prefixes.is_empty()) {
            t.add_call("track", 1, id_target(host.entry));
        }
        put(t);
        app.add_call("onCreate", 0, MethodRef::new(tracker.clone(), "track", 1));
    }
    put(app);

    u.classes = classes;
    u
}
