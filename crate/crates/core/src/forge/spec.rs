//! `fixture v1` spec files: `key=value` lines and JSON-object lines,
//! merged top to bottom into one [`FixtureSpec`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::ForgeError;
use crate::catalog::AdLibraryCatalog;
use crate::detection::AppRole;
use crate::strategy::IntegrationStrategy;

pub const FIXTURE_SCHEMA: &str = "fixture v1";

const MIX_TOLERANCE: f64 = 1e-9;

fn default_strategy_mix() -> BTreeMap<IntegrationStrategy, f64> {
    IntegrationStrategy::MULTI.iter().map(|s| (*s, 0.25)).collect()
}

fn default_role_mix() -> BTreeMap<AppRole, f64> {
    [(AppRole::AdDisplaying, 1.0)].into()
}

fn default_updates() -> [usize; 2] {
    [1, 1]
}

fn default_libraries_per_app() -> [usize; 2] {
    [2, 5]
}

fn default_downloads() -> [u64; 2] {
    [1_000, 100_000_000]
}

fn default_native_rate() -> f64 {
    // 69 of 77 inert-code apps ship native code
    69.0 / 77.0
}

fn default_categories() -> Vec<String> {
    [
        "Weather",
        "Music and audio",
        "Personalization",
        "Photography",
        "Game",
        "Tools",
        "Social",
        "Business",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureSpec {
    pub schema: String,
    /// Required before generation; the command line may supply it.
    #[serde(default)]
    pub seed: Option<u64>,
    pub app_count: usize,
    /// Strategy shares among ad-displaying apps. `SingleLibrary` is allowed.
    #[serde(default = "default_strategy_mix")]
    pub strategy_mix: BTreeMap<IntegrationStrategy, f64>,
    #[serde(default = "default_role_mix")]
    pub role_mix: BTreeMap<AppRole, f64>,
    /// Inclusive range of lineage lengths.
    #[serde(default = "default_updates")]
    pub updates_per_app: [usize; 2],
    /// Share of transitions whose ad call sites change.
    #[serde(default)]
    pub seeded_modification_rate: f64,
    /// Share of transitions that add or remove a library.
    #[serde(default)]
    pub seeded_add_remove_rate: f64,
    /// Share of transitions in which one library's own code changes.
    #[serde(default)]
    pub seeded_version_change_rate: f64,
    /// When set, every call-site modification also changes the modified
    /// library's own code.
    #[serde(default)]
    pub modification_with_library_update: bool,
    /// Library names drawn from the catalog; empty means all.
    #[serde(default)]
    pub library_pool: Vec<String>,
    /// Inclusive range of integrated libraries for multi-library apps.
    #[serde(default = "default_libraries_per_app")]
    pub libraries_per_app: [usize; 2],
    #[serde(default = "default_categories")]
    pub categories: Vec<String>,
    /// Inclusive download range, sampled log-uniformly.
    #[serde(default = "default_downloads")]
    pub download_range: [u64; 2],
    /// Share of InertAdCode apps flagged as shipping native code.
    #[serde(default = "default_native_rate")]
    pub native_code_rate: f64,
}

impl FixtureSpec {
    pub fn parse(text: &str) -> Result<Self, ForgeError> {
        let mut merged = Map::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: String| ForgeError::BadSpec(format!("line {}: {msg}", i + 1));
            if line.starts_with('{') {
                let Value::Object(obj) = serde_json::from_str(line).map_err(|e| bad(e.to_string()))? else {
                    unreachable!("a line starting with '{{' parses to an object");
                };
                merged.extend(obj);
            } else {
                let (k, v) = line.split_once('=').ok_or_else(|| bad("expected key=value or a JSON object".into()))?;
                let v = v.trim();
                let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_owned()));
                merged.insert(k.trim().to_owned(), value);
            }
        }
        let spec: FixtureSpec =
            serde_json::from_value(Value::Object(merged)).map_err(|e| ForgeError::BadSpec(e.to_string()))?;
        if spec.schema != FIXTURE_SCHEMA {
            return Err(ForgeError::BadSpec(format!("unsupported schema {:?}", spec.schema)));
        }
        Ok(spec)
    }

    /// Renders this fixture in the key=value form accepted by [`parse`](Self::parse).
    pub fn to_text(&self) -> String {
        let value = serde_json::to_value(self).expect("spec serializes");
        let mut out = String::new();
        for (k, v) in value.as_object().expect("object") {
            match v {
                Value::Null => continue,
                Value::String(s) if k == "schema" => out.push_str(&format!("{k}={s}\n")),
                other => out.push_str(&format!("{k}={other}\n")),
            }
        }
        out
    }

    pub fn validate(&self, catalog: &AdLibraryCatalog) -> Result<(), ForgeError> {
        let bad = |m: String| Err(ForgeError::BadSpec(m));
        for (name, sum) in [
            ("strategy_mix", self.strategy_mix.values().sum::<f64>()),
            ("role_mix", self.role_mix.values().sum::<f64>()),
        ] {
            if (sum - 1.0).abs() > MIX_TOLERANCE {
                return bad(format!("{name} sums to {sum}, expected 1"));
            }
        }
        if self
            .strategy_mix
            .values()
            .chain(self.role_mix.values())
            .any(|v| !(0.0..=1.0).contains(v))
        {
            return bad("mix fractions must lie in [0, 1]".into());
        }
        if self.strategy_mix.contains_key(&IntegrationStrategy::NotAdDisplaying) {
            return bad("strategy_mix cannot contain NotAdDisplaying".into());
        }
        for (name, r) in [
            ("seeded_modification_rate", self.seeded_modification_rate),
            ("seeded_add_remove_rate", self.seeded_add_remove_rate),
            ("seeded_version_change_rate", self.seeded_version_change_rate),
            ("native_code_rate", self.native_code_rate),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return bad(format!("{name} = {r} is outside [0, 1]"));
            }
        }
        let [lo, hi] = self.updates_per_app;
        if lo == 0 || lo > hi {
            return bad(format!("updates_per_app {lo}..{hi} is empty or starts at 0"));
        }
        let [lo, hi] = self.libraries_per_app;
        if lo < 2 || lo > hi {
            return bad(format!("libraries_per_app {lo}..{hi} must start at 2 or more"));
        }
        if self.download_range[0] > self.download_range[1] {
            return bad("download_range is reversed".into());
        }
        if self.categories.is_empty() {
            return bad("categories is empty".into());
        }
        for name in &self.library_pool {
            if catalog.entry(name).is_none() {
                return bad(format!("library {name:?} is not in the catalog"));
            }
        }
        Ok(())
    }
}

/// Splits `total` by `shares` with the largest-remainder method. Ties go
/// to the earlier key.
pub fn allocate<K: Clone + Ord>(total: usize, shares: &BTreeMap<K, f64>) -> BTreeMap<K, usize> {
    let mut out: BTreeMap<K, usize> = BTreeMap::new();
    let mut rems = Vec::new();
    let mut assigned = 0;
    for (i, (k, f)) in shares.iter().enumerate() {
        let exact = f * total as f64;
        let base = exact.floor() as usize;
        out.insert(k.clone(), base);
        assigned += base;
        rems.push((exact - base as f64, i, k.clone()));
    }
    rems.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for (_, _, k) in rems.into_iter().take(total.saturating_sub(assigned)) {
        *out.get_mut(&k).expect("present") += 1;
    }
    out
}
