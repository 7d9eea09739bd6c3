//! Tabular report output in CSV or Markdown with fixed decimal formatting,
//! so that identical inputs always give identical bytes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::detection::AdIntegrationProfile;
use crate::evolution::{ChangeEvent, LineageMetrics, ObfuscationStats, StrategyEvolutionSummary, DIGEST_ALGORITHM};
use crate::stats::corpus::{BucketSeries, CategoryTable, CountRow, NamedCorrelation};
use crate::stats::KwResult;
use crate::strategy::{DistributionRow, FiveNumberSummary, IntegrationStrategy, StrategyAssessment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Format {
    #[default]
    Csv,
    Markdown,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Markdown => "md",
        }
    }
}

impl std::str::FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "markdown" | "md" => Ok(Format::Markdown),
            other => Err(format!("unknown format {other:?} (expected csv or markdown)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub name: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, headers: &[&str]) -> Self {
        Self {
            name: name.to_owned(),
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.headers.len(), "row width in {}", self.name);
        self.rows.push(row);
    }

    pub fn render(&self, format: Format) -> Vec<u8> {
        match format {
            Format::Csv => {
                let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
                w.write_record(&self.headers).expect("in-memory write");
                for r in &self.rows {
                    w.write_record(r).expect("in-memory write");
                }
                w.into_inner().expect("in-memory flush")
            }
            Format::Markdown => {
                let cell = |s: &str| s.replace('|', "\\|");
                let mut out = String::new();
                let line = |cells: &mut dyn Iterator<Item = String>| format!("| {} |\n", cells.collect::<Vec<_>>().join(" | "));
                out.push_str(&line(&mut self.headers.iter().map(|h| cell(h))));
                out.push_str(&format!("|{}\n", "---|".repeat(self.headers.len())));
                for r in &self.rows {
                    out.push_str(&line(&mut r.iter().map(|c| cell(c))));
                }
                out.into_bytes()
            }
        }
    }
}

/// Writes each table to `<dir>/<name>.<ext>`; returns the paths written.
pub fn emit_report(tables: &[Table], format: Format, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for t in tables {
        let path = dir.join(format!("{}.{}", t.name, format.extension()));
        let mut f = fs::File::create(&path)?;
        f.write_all(&t.render(format))?;
        written.push(path);
    }
    Ok(written)
}

fn fixed(v: f64, places: usize) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:.places$}")
}

/// Percentages: one decimal.
pub fn fmt_pct(v: f64) -> String {
    fixed(v, 1)
}

/// Ratios: two decimals.
pub fn fmt_ratio(v: f64) -> String {
    fixed(v, 2)
}

/// Fractions and test statistics: four decimals.
pub fn fmt_stat(v: f64) -> String {
    fixed(v, 4)
}

pub const NA: &str = "NA";

fn opt(v: Option<f64>, f: fn(f64) -> String) -> String {
    v.map_or_else(|| NA.to_owned(), f)
}

fn join(set: &std::collections::BTreeSet<String>) -> String {
    set.iter().cloned().collect::<Vec<_>>().join(";")
}

pub fn profiles_table(profiles: &[AdIntegrationProfile]) -> Table {
    let mut t = Table::new(
        "profiles",
        &[
            "app_id",
            "version_code",
            "role",
            "integrated_count",
            "accessed_count",
            "integrated",
            "accessed",
            "ad_screens",
            "candidate_classes",
        ],
    );
    for p in profiles {
        t.push(vec![
            p.app_id.clone(),
            p.version_code.to_string(),
            p.role.to_string(),
            p.integrated.len().to_string(),
            p.accessed.len().to_string(),
            join(&p.integrated),
            join(&p.accessed),
            join(&p.ad_screens),
            p.candidate_count.to_string(),
        ]);
    }
    t
}

pub fn count_table(name: &str, first: &str, rows: &[CountRow]) -> Table {
    let mut t = Table::new(name, &[first, "count", "percent"]);
    for r in rows {
        t.push(vec![r.label.clone(), r.count.to_string(), fmt_pct(r.percent)]);
    }
    t
}

pub fn strategy_report_table(assessments: &[&StrategyAssessment]) -> Table {
    let mut t = Table::new(
        "strategy_report",
        &[
            "app_id",
            "version_code",
            "integrated_count",
            "accessed_count",
            "mediator_kind",
            "mediator_package",
            "strategy",
        ],
    );
    for a in assessments {
        t.push(vec![
            a.app_id.clone(),
            a.version_code.to_string(),
            a.integrated_count.to_string(),
            a.accessed_count.to_string(),
            a.mediator.kind.as_str().to_owned(),
            a.mediator.package.clone().unwrap_or_default(),
            a.label().to_owned(),
        ]);
    }
    t
}

pub fn strategy_distribution_table(rows: &[DistributionRow]) -> Table {
    let mut t = Table::new("strategy_distribution", &["strategy", "count", "percent"]);
    for r in rows {
        t.push(vec![r.label.clone(), r.count.to_string(), fmt_pct(r.percent)]);
    }
    t
}

pub fn integrated_count_summary_table(rows: &[(IntegrationStrategy, FiveNumberSummary)]) -> Table {
    let mut t = Table::new(
        "integrated_count_summary",
        &["strategy", "apps", "mean", "min", "q1", "median", "q3", "max"],
    );
    for (s, f) in rows {
        t.push(vec![
            s.to_string(),
            f.n.to_string(),
            fmt_ratio(f.mean),
            fmt_ratio(f.min),
            fmt_ratio(f.q1),
            fmt_ratio(f.median),
            fmt_ratio(f.q3),
            fmt_ratio(f.max),
        ]);
    }
    t
}

pub fn lineage_metrics_table(metrics: &[LineageMetrics]) -> Table {
    let mut t = Table::new(
        "lineage_metrics",
        &[
            "app_id",
            "strategy",
            "updates",
            "modification_probability",
            "add_remove_ratio",
            "pct_modified_when_lib_updated",
            "pct_modified_when_lib_not_updated",
            "lib_updated_pairs",
            "lib_not_updated_pairs",
        ],
    );
    for m in metrics {
        let (up, not) = m.modified_proportion_split();
        t.push(vec![
            m.app_id.clone(),
            m.strategy.map_or(crate::strategy::UNCLASSIFIABLE, |s| s.as_str()).to_owned(),
            m.updates.to_string(),
            opt(m.modification_probability, fmt_stat),
            fmt_stat(m.add_remove_ratio),
            fmt_pct(up),
            fmt_pct(not),
            m.split.updated_pairs.to_string(),
            m.split.not_updated_pairs.to_string(),
        ]);
    }
    t
}

pub fn change_events_table(events: &[ChangeEvent]) -> Table {
    let mut t = Table::new("change_events", &["app_id", "from_version", "to_version", "library", "kind"]);
    for e in events {
        t.push(vec![
            e.app_id.clone(),
            e.from_version.to_string(),
            e.to_version.to_string(),
            e.library.clone(),
            e.kind.as_str().to_owned(),
        ]);
    }
    t
}

/// One row per (app, version) with its obfuscation percentages.
pub fn obfuscation_table(rows: &[(&str, u64, ObfuscationStats)]) -> Table {
    let mut t = Table::new(
        "obfuscation",
        &["app_id", "version_code", "packages", "pct_obfuscated_packages", "methods", "pct_obfuscated_methods"],
    );
    for (app, version, s) in rows {
        t.push(vec![
            (*app).to_owned(),
            version.to_string(),
            s.packages.to_string(),
            fmt_pct(s.pct_packages()),
            s.methods.to_string(),
            fmt_pct(s.pct_methods()),
        ]);
    }
    t
}

pub fn evolution_summary_table(rows: &[StrategyEvolutionSummary]) -> Table {
    let mut t = Table::new(
        "evolution_summary",
        &[
            "strategy",
            "apps",
            "median_modification_probability",
            "median_add_remove_ratio",
            "median_pct_modified_when_lib_updated",
            "median_pct_modified_when_lib_not_updated",
        ],
    );
    for r in rows {
        t.push(vec![
            r.strategy.to_string(),
            r.apps.to_string(),
            opt(r.median_modification_probability, fmt_stat),
            opt(r.median_add_remove_ratio, fmt_stat),
            opt(r.median_pct_when_updated, fmt_pct),
            opt(r.median_pct_when_not_updated, fmt_pct),
        ]);
    }
    t
}

pub fn kruskal_wallis_table(metric: &str, groups: &[(IntegrationStrategy, usize)], result: Option<&KwResult>) -> Table {
    let mut t = Table::new(
        "kruskal_wallis",
        &["metric", "groups", "observations", "h_statistic", "degrees_of_freedom", "p_value"],
    );
    let names = groups
        .iter()
        .map(|(s, n)| format!("{s}={n}"))
        .collect::<Vec<_>>()
        .join(";");
    let total: usize = groups.iter().map(|(_, n)| n).sum();
    t.push(vec![
        metric.to_owned(),
        names,
        total.to_string(),
        result.map_or(NA.into(), |r| fmt_stat(r.h_statistic)),
        result.map_or(NA.into(), |r| r.degrees_of_freedom.to_string()),
        result.map_or(NA.into(), |r| fmt_stat(r.p_value)),
    ]);
    t
}

pub fn category_distribution_table(table: &CategoryTable) -> Table {
    let mut t = Table::new(
        "category_distribution",
        &[
            "category",
            "studied_apps",
            "ad_displaying_apps",
            "pct_ad_displaying",
            "median_integrated",
            "max_integrated",
        ],
    );
    for r in &table.rows {
        t.push(vec![
            r.category.clone(),
            r.studied_count.to_string(),
            r.ad_displaying_count.to_string(),
            fmt_pct(r.pct),
            opt(r.median_integrated, fmt_ratio),
            r.max_integrated.map_or(NA.into(), |m| m.to_string()),
        ]);
    }
    t
}

pub fn category_top_libraries_table(table: &CategoryTable) -> Table {
    let mut t = Table::new("category_top_libraries", &["category", "rank", "library", "pct_of_ad_displaying"]);
    for r in &table.rankings {
        for (i, (lib, pct)) in r.top.iter().enumerate() {
            t.push(vec![r.category.clone(), (i + 1).to_string(), lib.clone(), fmt_pct(*pct)]);
        }
    }
    t
}

pub fn multiple_ads_ratio_table(series: &BucketSeries) -> Table {
    let mut t = Table::new(
        "multiple_ads_ratio",
        &["lower_bound_downloads", "multi_count", "single_count", "ratio"],
    );
    for b in &series.buckets {
        t.push(vec![
            b.lower_bound.to_string(),
            b.multi_count.to_string(),
            b.single_count.to_string(),
            opt(b.ratio, fmt_ratio),
        ]);
    }
    t
}

pub fn correlations_table(rows: &[NamedCorrelation]) -> Table {
    let mut t = Table::new("correlations", &["pair", "n", "rho", "p_value", "note"]);
    for c in rows {
        match &c.result {
            Ok(r) => t.push(vec![
                c.name.to_owned(),
                r.n.to_string(),
                fmt_stat(r.rho),
                fmt_stat(r.p_value),
                String::new(),
            ]),
            Err(e) => t.push(vec![c.name.to_owned(), NA.into(), NA.into(), NA.into(), e.to_string()]),
        }
    }
    t
}

pub fn integration_count_table(rows: &[(usize, usize)]) -> Table {
    let mut t = Table::new("integration_count_distribution", &["integrated_libraries", "ad_displaying_apps"]);
    for (k, n) in rows {
        t.push(vec![k.to_string(), n.to_string()]);
    }
    t
}

/// Key/value record of the parameters that shape the other tables.
pub fn metadata_table(entries: &[(&str, String)]) -> Table {
    let mut t = Table::new("metadata", &["key", "value"]);
    t.push(vec!["digest_algorithm".into(), DIGEST_ALGORITHM.into()]);
    for (k, v) in entries {
        t.push(vec![(*k).to_owned(), v.clone()]);
    }
    t
}
