//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if
//! any criterion fails. Tolerances are fixed constants below.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use adstrat::detection::{candidate_ad_classes, integrated_libraries, is_candidate_ad_name, UpdateView};
use adstrat::evolution::{
    add_remove_ratio, analyze_lineage, call_site_modified, is_obfuscated_class, library_version_changed,
    modification_probability, modified_proportion_split, signature,
};
use adstrat::forge::{generate, mutate_update, role_corpus_spec, FixtureSpec, MutationKind};
use adstrat::frontend::dex::{parse_dex_with, DexOptions};
use adstrat::frontend::parse_update_dir;
use adstrat::stats::{kruskal_wallis, spearman};
use adstrat::strategy::{classify_strategy, IntegrationStrategy};
use adstrat::{AdLibraryCatalog, AppUpdate, ClassRecord, MethodRef};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

const STRATEGY_TIME_LIMIT: Duration = Duration::from_secs(10);
const ROLE_TARGETS_PCT: [(&str, f64); 4] = [
    ("AdDisplaying", 58.6),
    ("NonIntegrating", 28.9),
    ("AnalyticsOnly", 8.4),
    ("InertAdCode", 4.2),
];
const ROLE_TOLERANCE_PP: f64 = 0.1;
const REGEX_NAMES: usize = 100_000;
const FUZZ_ITERATIONS: usize = 10_000;
const FUZZ_TIME_LIMIT: Duration = Duration::from_secs(120);
const STATS_TOLERANCE: f64 = 1e-9;
const STATS_INSTANCES: usize = 100;
const STATS_MAX_N: usize = 50;
const MONOTONE_TRANSFORMS: usize = 100;
const SHUFFLES: usize = 1_000;
const MUTATIONS: usize = 10_000;
const PIPELINE_TIME_LIMIT: Duration = Duration::from_secs(60);

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);
/// An update, a library it integrates, and the app-code call sites into it.
type Target<'a> = (&'a AppUpdate, String, Vec<(String, usize)>);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn forge_spec(body: &str, seed: u64) -> FixtureSpec {
    let mut s = FixtureSpec::parse(&format!("schema=fixture v1\n{body}")).expect("valid spec");
    s.seed = Some(seed);
    s
}

// 1 ------------------------------------------------------------------

fn strategy_oracle() -> Outcome {
    let cat = AdLibraryCatalog::seed();
    let start = Instant::now();
    let spec = forge_spec(
        "app_count=200\nupdates_per_app=[1,3]\n{\"role_mix\":{\"AdDisplaying\":1.0}}\n{\"strategy_mix\":{\"Mixed\":0.50,\"SelfMediation\":0.27,\"ExternalMediation\":0.10,\"Scattered\":0.13}}",
        1,
    );
    let forged = generate(&spec, &cat).map_err(|e| e.to_string())?;
    let mut correct = 0;
    let mut per: BTreeMap<IntegrationStrategy, usize> = BTreeMap::new();
    for t in &forged.truth {
        let latest = forged.corpus.lineages[&t.app_id].latest();
        if classify_strategy(latest, &cat).ok() == Some(t.strategy) {
            correct += 1;
        }
        *per.entry(t.strategy).or_default() += 1;
    }
    let elapsed = start.elapsed();
    let mix = IntegrationStrategy::MULTI.map(|s| per.get(&s).copied().unwrap_or(0));
    check(forged.truth.len() == 200, || format!("{} apps", forged.truth.len()))?;
    check(mix == [20, 54, 26, 100], || format!("mix {mix:?}"))?;
    check(correct == 200, || format!("{correct}/200 correct"))?;
    check(elapsed < STRATEGY_TIME_LIMIT, || format!("took {elapsed:?}"))?;
    Ok(format!("200/200 correct, mix Mixed=100 Self=54 External=20 Scattered=26, {elapsed:.2?}"))
}

// 2 ------------------------------------------------------------------

fn role_taxonomy() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = tmp.path().join("roles.spec");
    fs::write(&spec, role_corpus_spec(7).to_text()).map_err(|e| e.to_string())?;
    let forged = tmp.path().join("forged");
    let detect = tmp.path().join("detect");
    common::run_ok(&["--out", forged.to_str().unwrap(), "forge", spec.to_str().unwrap()]);
    common::run_ok(&["--out", detect.to_str().unwrap(), "detect", forged.join("corpus").to_str().unwrap()]);
    let text = fs::read_to_string(detect.join("role_distribution.csv")).map_err(|e| e.to_string())?;
    let rows: BTreeMap<&str, (usize, f64)> = text
        .lines()
        .skip(1)
        .filter_map(|l| {
            let mut f = l.split(',');
            Some((f.next()?, (f.next()?.parse().ok()?, f.next()?.parse().ok()?)))
        })
        .collect();
    let total: usize = rows.values().map(|r| r.0).sum();
    check(total == 1837, || format!("{total} apps"))?;
    let mut detail = Vec::new();
    for (role, target) in ROLE_TARGETS_PCT {
        let &(count, pct) = rows.get(role).ok_or_else(|| format!("no {role} row"))?;
        check((pct - target).abs() <= ROLE_TOLERANCE_PP + 1e-9, || format!("{role} {pct} vs {target}"))?;
        detail.push(format!("{role}={count} ({pct})"));
    }
    Ok(detail.join(" "))
}

// 3 ------------------------------------------------------------------

fn scan_oracle(name: &str) -> bool {
    let chars: Vec<char> = name.chars().collect();
    (1..chars.len()).any(|i| matches!(chars[i - 1], 'a' | 'A') && matches!(chars[i], 'd' | 'D'))
}

fn regex_oracle() -> Outcome {
    const ALPHABET: &[char] = &['a', 'A', 'd', 'D', 'e', 'm', 'o', 'x', 'Z', '0', '_', '$', 'á'];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut update = AppUpdate::new("x.y", 1);
    let mut expected = std::collections::BTreeSet::new();
    let mut direct_mismatches = 0;
    for _ in 0..REGEX_NAMES {
        let segments: Vec<String> = (0..rng.random_range(1..=4))
            .map(|_| {
                let mut s = String::from(['a', 'A', 'd', 'D', 'c', 'Q'][rng.random_range(0..6)]);
                for _ in 0..rng.random_range(0..8) {
                    s.push(ALPHABET[rng.random_range(0..ALPHABET.len())]);
                }
                s
            })
            .collect();
        let name = segments.join(".");
        if is_candidate_ad_name(&name) != scan_oracle(&name) {
            direct_mismatches += 1;
        }
        if let Ok(class) = ClassRecord::new(name.clone()) {
            if scan_oracle(&name) {
                expected.insert(name);
            }
            let _ = update.insert_class(class);
        }
    }
    let got = candidate_ad_classes(&update);
    let set_mismatches = got.symmetric_difference(&expected).count();
    check(direct_mismatches == 0 && set_mismatches == 0, || {
        format!("{direct_mismatches} name and {set_mismatches} class discrepancies")
    })?;
    Ok(format!(
        "{REGEX_NAMES} names, {} distinct classes, {} candidates, 0 discrepancies",
        update.classes.len(),
        got.len()
    ))
}

// 4 ------------------------------------------------------------------

fn records_json(classes: &[ClassRecord]) -> Value {
    Value::Array(
        classes
            .iter()
            .map(|c| {
                json!({
                    "fqn": c.fqn,
                    "declared_methods": c.declared_methods.iter().map(|m| json!([m.method_name, m.param_count])).collect::<Vec<_>>(),
                    "call_sites": c.call_sites.iter().map(|s| json!([
                        s.caller.method_name, s.caller.param_count,
                        s.callee.owner_class, s.callee.method_name, s.callee.param_count, s.ordinal
                    ])).collect::<Vec<_>>(),
                })
            })
            .collect(),
    )
}

fn corrupt(rng: &mut ChaCha8Rng, base: &[u8]) -> Vec<u8> {
    let mut v = base.to_vec();
    match rng.random_range(0..3) {
        0 => {
            for _ in 0..rng.random_range(1..=8) {
                let i = rng.random_range(0..v.len());
                v[i] = rng.random();
            }
        }
        1 => v.truncate(rng.random_range(0..v.len())),
        _ => {
            let i = rng.random_range(0..v.len() - 4);
            v[i..i + 4].copy_from_slice(&rng.random::<u32>().to_le_bytes());
        }
    }
    v
}

fn dex_frontend() -> Outcome {
    let fixtures = common::core_fixtures();
    let files = [
        "dex/one_class.dex",
        "dex/multi_class.dex",
        "update_multidex/classes.dex",
        "update_multidex/classes2.dex",
        "update_multidex/classes3.dex",
    ];
    let mut bases = Vec::new();
    for rel in files {
        let path = fixtures.join(rel);
        let bytes = fs::read(&path).map_err(|e| format!("{rel}: {e}"))?;
        let parsed = parse_dex_with(&bytes, DexOptions { verify_checksum: true }).map_err(|e| format!("{rel}: {e}"))?;
        let want: Value = serde_json::from_str(
            &fs::read_to_string(format!("{}.expected.json", path.display())).map_err(|e| e.to_string())?,
        )
        .map_err(|e| e.to_string())?;
        check(records_json(&parsed) == want, || format!("{rel} differs from expectation"))?;
        bases.push(bytes);
    }
    // every invoke family appears in the multi-class fixture's onCreate
    let multi = parse_dex_with(&bases[1], DexOptions::default()).unwrap();
    let main = multi.iter().find(|c| c.fqn == "com.example.multi.MainActivity").ok_or("no MainActivity")?;
    let on_create = main.call_sites.iter().filter(|s| s.caller.method_name == "onCreate").count();
    check(on_create == 8, || format!("{on_create} onCreate call sites"))?;

    let dir = parse_update_dir(&fixtures.join("update_multidex"), "com.example.multidex", 3, DexOptions::default())
        .map_err(|e| e.to_string())?;
    check(dir.update.classes.len() == 5 && dir.warnings.len() == 1, || "multidex merge".into())?;

    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut errors, mut panics) = (0, 0);
    for i in 0..FUZZ_ITERATIONS {
        let input = corrupt(&mut rng, &bases[i % bases.len()]);
        match catch_unwind(AssertUnwindSafe(|| parse_dex_with(&input, DexOptions::default()))) {
            Ok(Err(_)) => errors += 1,
            Ok(Ok(_)) => {}
            Err(_) => panics += 1,
        }
    }
    let elapsed = start.elapsed();
    check(panics == 0, || format!("{panics} panics"))?;
    check(elapsed < FUZZ_TIME_LIMIT, || format!("fuzz took {elapsed:?}"))?;
    Ok(format!(
        "{} fixtures exact, 8 invoke forms, multidex merged; fuzz {FUZZ_ITERATIONS} runs, {errors} structured errors, 0 panics, {elapsed:.2?}",
        files.len()
    ))
}

// 5 ------------------------------------------------------------------

fn rank_oracle(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|a| {
            let less = v.iter().filter(|b| *b < a).count() as f64;
            let equal = v.iter().filter(|b| *b == a).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

fn pearson_oracle(r: &[f64], s: &[f64]) -> f64 {
    let n = r.len() as f64;
    let (mr, ms) = (r.iter().sum::<f64>() / n, s.iter().sum::<f64>() / n);
    let cov: f64 = r.iter().zip(s).map(|(a, b)| (a - mr) * (b - ms)).sum();
    let vr: f64 = r.iter().map(|a| (a - mr).powi(2)).sum();
    let vs: f64 = s.iter().map(|b| (b - ms).powi(2)).sum();
    cov / (vr * vs).sqrt()
}

fn h_oracle(groups: &[Vec<f64>]) -> f64 {
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    let ranks = rank_oracle(&pooled);
    let n = pooled.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let total: f64 = ranks.iter().map(|r| (r - mean).powi(2)).sum();
    let mut between = 0.0;
    let mut at = 0;
    for g in groups {
        let m = ranks[at..at + g.len()].iter().sum::<f64>() / g.len() as f64;
        between += g.len() as f64 * (m - mean).powi(2);
        at += g.len();
    }
    (n - 1.0) * between / total
}

fn sample(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let range = rng.random_range(2..=60);
    (0..n).map(|_| rng.random_range(0..range) as f64 * 0.5 - 7.0).collect()
}

fn transform(i: usize, v: f64) -> f64 {
    let a = 0.25 + (i % 10) as f64;
    let b = i as f64 * 1.5 - 40.0;
    match i % 5 {
        0 => a * v + b,
        1 => (v + 8.0).powi(3) + b,
        2 => ((v + 8.0) / (5.0 + a)).exp(),
        3 => (v + 8.0 + a).ln(),
        _ => (v / a).atan() * a + b,
    }
}

fn statistics_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_rho: f64 = 0.0;
    let mut pairs = Vec::new();
    while pairs.len() < STATS_INSTANCES {
        let n = rng.random_range(3..=STATS_MAX_N);
        let (x, y) = (sample(&mut rng, n), sample(&mut rng, n));
        let Ok(got) = spearman(&x, &y) else { continue };
        let want = pearson_oracle(&rank_oracle(&x), &rank_oracle(&y));
        worst_rho = worst_rho.max((got.rho - want).abs());
        pairs.push((x, y));
    }
    let mut worst_h: f64 = 0.0;
    let mut kw = Vec::new();
    while kw.len() < STATS_INSTANCES {
        let k = rng.random_range(2..=5);
        let groups: Vec<Vec<f64>> = (0..k).map(|_| {
            let n = rng.random_range(1..=STATS_MAX_N / k);
            sample(&mut rng, n)
        }).collect();
        let Ok(got) = kruskal_wallis(&groups) else { continue };
        if got.p_value >= 1.0 {
            continue;
        }
        worst_h = worst_h.max((got.h_statistic - h_oracle(&groups)).abs());
        kw.push(groups);
    }
    check(worst_rho <= STATS_TOLERANCE, || format!("rho off by {worst_rho:e}"))?;
    check(worst_h <= STATS_TOLERANCE, || format!("H off by {worst_h:e}"))?;

    let mut worst_invariance: f64 = 0.0;
    for i in 0..MONOTONE_TRANSFORMS {
        let (x, y) = &pairs[i % pairs.len()];
        let tx: Vec<f64> = x.iter().map(|v| transform(i, *v)).collect();
        let base = spearman(x, y).unwrap();
        let moved = spearman(&tx, y).map_err(|e| e.to_string())?;
        worst_invariance = worst_invariance.max((base.rho - moved.rho).abs());
        let groups = &kw[i % kw.len()];
        let tg: Vec<Vec<f64>> = groups.iter().map(|g| g.iter().map(|v| transform(i, *v)).collect()).collect();
        let h0 = kruskal_wallis(groups).unwrap().h_statistic;
        let h1 = kruskal_wallis(&tg).map_err(|e| e.to_string())?.h_statistic;
        worst_invariance = worst_invariance.max((h0 - h1).abs());
    }
    check(worst_invariance <= STATS_TOLERANCE, || format!("transform changed a statistic by {worst_invariance:e}"))?;
    Ok(format!(
        "{STATS_INSTANCES}+{STATS_INSTANCES} instances n<={STATS_MAX_N}, max |drho|={worst_rho:.1e} |dH|={worst_h:.1e}; {MONOTONE_TRANSFORMS} transforms max drift {worst_invariance:.1e}"
    ))
}

// 6 ------------------------------------------------------------------

fn evolution_metrics() -> Outcome {
    let cat = AdLibraryCatalog::seed();
    let mut lineages = 0;
    let mut renames = 0;
    for (seed, coupled) in [(11, false), (12, true)] {
        let spec = forge_spec(
            &format!(
                "app_count=60\nupdates_per_app=[1,9]\nseeded_modification_rate=0.4\nseeded_add_remove_rate=0.3\nseeded_version_change_rate=0.35\nmodification_with_library_update={coupled}\n{{\"role_mix\":{{\"AdDisplaying\":0.8,\"InertAdCode\":0.1,\"AnalyticsOnly\":0.1}}}}"
            ),
            seed,
        );
        let forged = generate(&spec, &cat).map_err(|e| e.to_string())?;
        for t in &forged.truth {
            let l = &forged.corpus.lineages[&t.app_id];
            let id = &t.app_id;
            match t.modification_probability() {
                Some((num, den)) => {
                    let got = modification_probability(l, &cat).map_err(|e| e.to_string())?;
                    check(got == num as f64 / den as f64, || format!("{id}: p {got} vs {num}/{den}"))?;
                    let split = t.split();
                    let (up, not) = modified_proportion_split(l, &cat).map_err(|e| e.to_string())?;
                    let pct = |a: usize, b: usize| if b == 0 { 0.0 } else { 100.0 * a as f64 / b as f64 };
                    check(up == pct(split.updated_modified, split.updated_pairs), || format!("{id}: split updated {up}"))?;
                    check(not == pct(split.not_updated_modified, split.not_updated_pairs), || format!("{id}: split other {not}"))?;
                    check(analyze_lineage(l, &cat, None).metrics.split == split, || format!("{id}: split counts"))?;
                }
                None => check(modification_probability(l, &cat).is_err(), || format!("{id}: defined for one update"))?,
            }
            let (num, den) = t.add_remove_ratio();
            let got = add_remove_ratio(l, &cat);
            check(got == num as f64 / den as f64, || format!("{id}: add/remove {got} vs {num}/{den}"))?;
            lineages += 1;

            for (i, u) in l.updates().iter().enumerate() {
                let Ok(m) = mutate_update(u, MutationKind::RenameLibraryInternal, &cat, seed * 1000 + i as u64) else {
                    continue;
                };
                let libs = integrated_libraries(u, &cat);
                check(libs.iter().all(|lib| !call_site_modified(u, &m, lib, &cat)), || format!("{id}: rename flipped call sites"))?;
                check(libs.iter().any(|lib| library_version_changed(u, &m, lib, &cat)), || format!("{id}: rename missed version change"))?;
                renames += 1;
            }
        }
    }
    check(renames >= 100, || format!("only {renames} renames applied"))?;
    Ok(format!("{lineages} lineages exact (0 tolerance); {renames} internal renames: call sites never flipped, version always flipped"))
}

// 7 ------------------------------------------------------------------

fn signature_properties() -> Outcome {
    let cat = AdLibraryCatalog::seed();
    let spec = forge_spec("app_count=60\nupdates_per_app=[1,3]\nseeded_modification_rate=0.5\nseeded_add_remove_rate=0.3", 13);
    let forged = generate(&spec, &cat).map_err(|e| e.to_string())?;
    let updates: Vec<AppUpdate> = forged.corpus.iter().flat_map(|l| l.updates().iter().cloned()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    let mut digest_changes = 0;
    for i in 0..SHUFFLES {
        let u = &updates[i % updates.len()];
        let mut s = u.clone();
        for class in s.classes.values_mut() {
            class.call_sites.shuffle(&mut rng);
            class.declared_methods.shuffle(&mut rng);
            let mut ords: Vec<u32> = (0..class.call_sites.len() as u32).collect();
            ords.shuffle(&mut rng);
            for (site, o) in class.call_sites.iter_mut().zip(ords) {
                site.ordinal = o;
                site.caller.method_name = "shuffled".into();
            }
        }
        for lib in integrated_libraries(u, &cat) {
            if signature(u, &lib, &cat).unwrap() != signature(&s, &lib, &cat).unwrap() {
                digest_changes += 1;
            }
        }
    }
    check(digest_changes == 0, || format!("{digest_changes} digests changed under shuffling"))?;

    let targets: Vec<Target> = updates
        .iter()
        .flat_map(|u| {
            let view = UpdateView::new(u, &cat);
            integrated_libraries(u, &cat).into_iter().filter_map(move |lib| {
                let sites: Vec<(String, usize)> = u
                    .classes
                    .values()
                    .filter(|c| view.is_app_code(&c.fqn) && !is_obfuscated_class(&c.fqn))
                    .flat_map(|c| {
                        c.call_sites
                            .iter()
                            .enumerate()
                            .filter(|(_, s)| view.callee_library(s).is_some_and(|e| e.name == lib))
                            .map(|(i, _)| (c.fqn.clone(), i))
                            .collect::<Vec<_>>()
                    })
                    .collect();
                (!sites.is_empty()).then_some((u, lib, sites))
            })
        })
        .collect();
    let mut misses = 0;
    for _ in 0..MUTATIONS {
        let (u, lib, sites) = targets.choose(&mut rng).unwrap();
        let (class, idx) = sites.choose(&mut rng).unwrap();
        let mut m = (*u).clone();
        let c = m.classes.get_mut(class).unwrap();
        match rng.random_range(0..4) {
            0 => c.call_sites[*idx].callee.method_name.push('Q'),
            1 => c.call_sites[*idx].callee.param_count += 1,
            2 => {
                let callee = c.call_sites[*idx].callee.clone();
                c.add_call("extra", 0, MethodRef::new(callee.owner_class, callee.method_name, callee.param_count));
            }
            _ => {
                c.call_sites.remove(*idx);
            }
        }
        if !call_site_modified(u, &m, lib, &cat) {
            misses += 1;
        }
    }
    check(misses == 0, || format!("{misses} mutations went unnoticed"))?;
    Ok(format!("{SHUFFLES} shuffles, 0 digest changes; {MUTATIONS} single mutations, 0 misses"))
}

// 8 ------------------------------------------------------------------

fn golden_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut times = Vec::new();
    for run in ["a", "b"] {
        let start = Instant::now();
        common::run_pipeline(&tmp.path().join(run));
        times.push(start.elapsed());
    }
    let (a, b) = (common::tree(&tmp.path().join("a")), common::tree(&tmp.path().join("b")));
    let differing = common::diff(&a, &b);
    check(differing.is_empty(), || format!("runs differ in {differing:?}"))?;
    let golden = common::tree(&common::golden().join("expected"));
    let vs_golden = common::diff(&common::pipeline_outputs(&tmp.path().join("a")), &golden);
    check(vs_golden.is_empty(), || format!("differs from golden in {vs_golden:?}"))?;
    let corpus = common::forged_corpus_matches(&tmp.path().join("a"));
    check(corpus.is_empty(), || format!("forged corpus differs in {corpus:?}"))?;
    let slowest = *times.iter().max().unwrap();
    check(slowest < PIPELINE_TIME_LIMIT, || format!("run took {slowest:?}"))?;
    Ok(format!("{} files byte-identical across runs and with golden; slowest run {slowest:.2?}", a.len()))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("strategy classifier matches forge ground truth", strategy_oracle),
        ("role taxonomy reproduced by detect", role_taxonomy),
        ("candidate regex equals scan oracle", regex_oracle),
        ("DEX frontend fixtures and byte fuzz", dex_frontend),
        ("Spearman and Kruskal-Wallis oracles", statistics_oracles),
        ("evolution metrics equal ground truth", evolution_metrics),
        ("signature invariance and sensitivity", signature_properties),
        ("golden pipeline determinism", golden_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("[PASS] {}. {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {}. {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
