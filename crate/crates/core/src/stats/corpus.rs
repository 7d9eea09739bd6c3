//! Corpus-wide tables. Every per-app value comes from the app's latest
//! update.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use super::rank::{spearman, CorrelationResult, StatsError};
use crate::catalog::AdLibraryCatalog;
use crate::detection::{AppRole, UpdateView};
use crate::diag::{Diagnostic, DiagnosticKind};
use crate::evolution::median;
use crate::model::Corpus;
use crate::strategy::IntegrationStrategy;

/// What the corpus tables need to know about one app.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AppSummary {
    pub app_id: String,
    pub category: String,
    pub download_count: u64,
    pub role: AppRole,
    pub integrated: BTreeSet<String>,
    pub strategy: Option<IntegrationStrategy>,
}

impl AppSummary {
    pub fn is_ad_displaying(&self) -> bool {
        self.role == AppRole::AdDisplaying
    }
}

pub fn summarize_apps(corpus: &Corpus, catalog: &AdLibraryCatalog) -> Vec<AppSummary> {
    let lineages: Vec<_> = corpus.iter().collect();
    lineages
        .par_iter()
        .map(|l| {
            let latest = l.latest();
            let a = UpdateView::new(latest, catalog).assess_strategy();
            AppSummary {
                app_id: l.app_id().to_owned(),
                category: latest.category.clone(),
                download_count: latest.download_count,
                role: a.role,
                integrated: UpdateView::new(latest, catalog).integrated(),
                strategy: a.strategy,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountRow {
    pub label: String,
    pub count: usize,
    pub percent: f64,
}

fn percent(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * count as f64 / total as f64
    }
}

/// Apps per role, all four roles listed; empty for an empty corpus.
pub fn role_distribution(apps: &[AppSummary]) -> Vec<CountRow> {
    if apps.is_empty() {
        return Vec::new();
    }
    AppRole::ALL
        .iter()
        .map(|r| {
            let count = apps.iter().filter(|a| a.role == *r).count();
            CountRow {
                label: r.to_string(),
                count,
                percent: percent(count, apps.len()),
            }
        })
        .collect()
}

/// Share of ad-displaying apps integrating each library, most popular
/// first, ties by name.
pub fn library_popularity(apps: &[AppSummary]) -> Vec<CountRow> {
    let displaying: Vec<_> = apps.iter().filter(|a| a.is_ad_displaying()).collect();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for a in &displaying {
        for lib in &a.integrated {
            *counts.entry(lib).or_default() += 1;
        }
    }
    let mut rows: Vec<CountRow> = counts
        .into_iter()
        .map(|(l, c)| CountRow {
            label: l.to_owned(),
            count: c,
            percent: percent(c, displaying.len()),
        })
        .collect();
    rows.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.label.cmp(&b.label)));
    rows
}

/// Number of ad-displaying apps per integrated-library count.
pub fn integration_count_distribution(apps: &[AppSummary]) -> Vec<(usize, usize)> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for a in apps.iter().filter(|a| a.is_ad_displaying()) {
        *counts.entry(a.integrated.len()).or_default() += 1;
    }
    counts.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("bucket edges must be non-empty and strictly increasing")]
pub struct BadBucketEdges;

/// `{0, 10^2, 10^3, ..., 10^9}`.
pub fn default_bucket_edges() -> Vec<u64> {
    std::iter::once(0).chain((2..=9).map(|e| 10u64.pow(e))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bucket {
    pub lower_bound: u64,
    pub multi_count: usize,
    pub single_count: usize,
    /// `None` when no single-library app falls in the bucket.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketSeries {
    pub edges: Vec<u64>,
    pub buckets: Vec<Bucket>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Multi- to single-library ratio of ad-displaying apps per download
/// bucket. A bucket spans `[edge_i, edge_{i+1})`; apps below the first
/// edge are not counted.
pub fn multiple_ads_ratio(apps: &[AppSummary], edges: &[u64]) -> Result<BucketSeries, BadBucketEdges> {
    if edges.is_empty() || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(BadBucketEdges);
    }
    let mut multi = vec![0usize; edges.len()];
    let mut single = vec![0usize; edges.len()];
    for a in apps.iter().filter(|a| a.is_ad_displaying()) {
        let Some(idx) = edges.iter().rposition(|&e| e <= a.download_count) else {
            continue;
        };
        if a.integrated.len() > 1 {
            multi[idx] += 1;
        } else {
            single[idx] += 1;
        }
    }
    let mut diagnostics = Vec::new();
    let buckets = edges
        .iter()
        .enumerate()
        .map(|(i, &lower_bound)| {
            let ratio = (single[i] > 0).then(|| multi[i] as f64 / single[i] as f64);
            if ratio.is_none() {
                diagnostics.push(Diagnostic::new(
                    DiagnosticKind::EmptyBucket,
                    format!(
                        "bucket starting at {lower_bound} downloads has no single-library app ({} multi)",
                        multi[i]
                    ),
                ));
            }
            Bucket {
                lower_bound,
                multi_count: multi[i],
                single_count: single[i],
                ratio,
            }
        })
        .collect();
    Ok(BucketSeries {
        edges: edges.to_vec(),
        buckets,
        diagnostics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryRow {
    pub category: String,
    pub studied_count: usize,
    pub ad_displaying_count: usize,
    pub pct: f64,
    /// Over ad-displaying apps; `None` when there are none.
    pub median_integrated: Option<f64>,
    pub max_integrated: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryRanking {
    pub category: String,
    /// (library, % of the category's ad-displaying apps), best first.
    pub top: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryTable {
    /// Sorted by descending ad-displaying share, then category name.
    pub rows: Vec<CategoryRow>,
    /// Categories without ad-displaying apps are omitted.
    pub rankings: Vec<CategoryRanking>,
}

pub fn category_table(apps: &[AppSummary], top_n: usize) -> CategoryTable {
    let mut by_cat: BTreeMap<&str, Vec<&AppSummary>> = BTreeMap::new();
    for a in apps {
        by_cat.entry(a.category.as_str()).or_default().push(a);
    }
    let mut rows = Vec::new();
    let mut rankings = Vec::new();
    for (cat, members) in by_cat {
        let displaying: Vec<_> = members.iter().filter(|a| a.is_ad_displaying()).collect();
        let counts: Vec<f64> = displaying.iter().map(|a| a.integrated.len() as f64).collect();
        rows.push(CategoryRow {
            category: cat.to_owned(),
            studied_count: members.len(),
            ad_displaying_count: displaying.len(),
            pct: percent(displaying.len(), members.len()),
            median_integrated: median(&counts),
            max_integrated: displaying.iter().map(|a| a.integrated.len()).max(),
        });
        if displaying.is_empty() {
            continue;
        }
        let mut libs: BTreeMap<&str, usize> = BTreeMap::new();
        for a in &displaying {
            for l in &a.integrated {
                *libs.entry(l).or_default() += 1;
            }
        }
        let mut top: Vec<(String, usize)> = libs.into_iter().map(|(l, c)| (l.to_owned(), c)).collect();
        top.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        top.truncate(top_n);
        rankings.push(CategoryRanking {
            category: cat.to_owned(),
            top: top
                .into_iter()
                .map(|(l, c)| (l, percent(c, displaying.len())))
                .collect(),
        });
    }
    rows.sort_by(|a, b| b.pct.total_cmp(&a.pct).then_with(|| a.category.cmp(&b.category)));
    CategoryTable { rows, rankings }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedCorrelation {
    pub name: &'static str,
    pub result: Result<CorrelationResult, StatsError>,
}

/// The two corpus correlations: bucket lower bound against the
/// multiple-ads ratio (buckets with a defined ratio), and category share
/// of ad-displaying apps against the category's median integrated count.
pub fn correlations(series: &BucketSeries, table: &CategoryTable) -> (Vec<NamedCorrelation>, Vec<Diagnostic>) {
    let (bx, by): (Vec<f64>, Vec<f64>) = series
        .buckets
        .iter()
        .filter_map(|b| Some((b.lower_bound as f64, b.ratio?)))
        .unzip();
    let (cx, cy): (Vec<f64>, Vec<f64>) = table
        .rows
        .iter()
        .filter_map(|r| Some((r.pct, r.median_integrated?)))
        .unzip();
    let out = vec![
        NamedCorrelation {
            name: "downloads_vs_multiple_ads_ratio",
            result: spearman(&bx, &by),
        },
        NamedCorrelation {
            name: "category_ad_share_vs_median_integrated",
            result: spearman(&cx, &cy),
        },
    ];
    let diagnostics = out
        .iter()
        .filter_map(|c| {
            let err = c.result.as_ref().err()?;
            Some(Diagnostic::new(DiagnosticKind::UndefinedStatistic, format!("{}: {err}", c.name)))
        })
        .collect();
    (out, diagnostics)
}
