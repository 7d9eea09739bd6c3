#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const ANALYSES: [&str; 5] = ["ingest", "detect", "classify", "evolve", "report"];

/// The binary with every `ADSTRAT_` override cleared, so the caller's
/// environment cannot change results.
pub fn adstrat() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_adstrat"));
    for (key, _) in std::env::vars_os() {
        if key.to_string_lossy().starts_with("ADSTRAT_") {
            cmd.env_remove(key);
        }
    }
    cmd
}

pub fn run(args: &[&str]) -> Output {
    adstrat().args(args).output().expect("spawn adstrat")
}

pub fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "adstrat {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn golden() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

pub fn core_fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Forges the golden spec and runs every analysis on the golden corpus,
/// writing one subdirectory per step under `dest`.
pub fn run_pipeline(dest: &Path) {
    let g = golden();
    run_ok(&["--out", s(&dest.join("forge")), "forge", s(&g.join("fixture.spec"))]);
    let corpus = g.join("corpus");
    for cmd in ANALYSES {
        run_ok(&["--out", s(&dest.join(cmd)), cmd, s(&corpus)]);
    }
    run_ok(&["--out", s(&dest.join("report-md")), "--format", "markdown", "report", s(&corpus)]);
}

/// Every file under `dir`, keyed by its `/`-separated relative path.
pub fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(base: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        let mut entries: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                let rel = p.strip_prefix(base).unwrap();
                let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
                out.insert(key, fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// Pipeline outputs to compare with the checked-in expectations: the
/// forged corpus is compared separately against the golden corpus.
pub fn pipeline_outputs(dest: &Path) -> BTreeMap<String, Vec<u8>> {
    tree(dest).into_iter().filter(|(k, _)| !k.starts_with("forge/corpus/")).collect()
}

/// Names of files that differ, are missing or are unexpected.
pub fn diff(a: &BTreeMap<String, Vec<u8>>, b: &BTreeMap<String, Vec<u8>>) -> Vec<String> {
    let mut keys: Vec<&String> = a.keys().chain(b.keys()).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter().filter(|k| a.get(*k) != b.get(*k)).cloned().collect()
}

/// The forged corpus must equal the golden corpus minus its hand-made apps.
pub fn forged_corpus_matches(dest: &Path) -> Vec<String> {
    let forged = tree(&dest.join("forge/corpus"));
    let golden: BTreeMap<_, _> = tree(&golden().join("corpus"))
        .into_iter()
        .filter(|(k, _)| !k.starts_with("com.example."))
        .collect();
    diff(&forged, &golden)
}
