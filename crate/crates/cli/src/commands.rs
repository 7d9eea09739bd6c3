//! The six subcommands. Each writes its tables to the output directory
//! plus a `<command>.warnings.jsonl` sidecar with the sorted diagnostics.

use std::fs;
use std::path::{Path, PathBuf};

use adstrat::corpus::{load_corpus, store_corpus, LoadOptions, LoadedCorpus};
use adstrat::detection::profile;
use adstrat::evolution::{analyze_lineage, obfuscation_stats, summarize_by_strategy, LineageMetrics};
use adstrat::forge::{generate, ForgeError, FixtureSpec};
use adstrat::frontend::dex::DexOptions;
use adstrat::report::{self, emit_report, Table};
use adstrat::stats::{self, kruskal_wallis};
use adstrat::strategy::{integrated_count_summary, latest_assessments, strategy_distribution, IntegrationStrategy};
use adstrat::{Diagnostic, DiagnosticKind};
use anyhow::{anyhow, Context};
use rayon::prelude::*;

use crate::{Command, Failure, RunConfig};

pub fn dispatch(command: &Command, config: &RunConfig) -> Result<(), Failure> {
    match command {
        Command::Ingest { emit_ir, .. } => ingest(config, emit_ir.as_deref()),
        Command::Detect { .. } => detect(config),
        Command::Classify { .. } => classify(config),
        Command::Evolve { .. } => evolve(config),
        Command::Report { .. } => report_cmd(config),
        Command::Forge { spec } => forge(config, spec),
    }
}

fn load(config: &RunConfig) -> Result<LoadedCorpus, Failure> {
    let root = config.corpus_root.as_deref().expect("corpus commands carry a root");
    let options = LoadOptions {
        dex: DexOptions {
            verify_checksum: config.checksum_verify,
        },
    };
    load_corpus(root, options).map_err(|e| Failure::from_corpus(root, e))
}

fn io_failure(e: std::io::Error, what: &Path) -> Failure {
    Failure::analysis(anyhow!(e).context(format!("writing {}", what.display())))
}

/// Writes the tables and the warnings sidecar, then lists the files.
fn finish(config: &RunConfig, command: &str, tables: &[Table], mut warnings: Vec<Diagnostic>) -> Result<(), Failure> {
    let out = &config.output_dir;
    let mut written = emit_report(tables, config.format, out).map_err(|e| io_failure(e, out))?;
    warnings.sort();
    warnings.dedup();
    let sidecar = out.join(format!("{command}.warnings.jsonl"));
    let mut text = String::new();
    for w in &warnings {
        text.push_str(&serde_json::to_string(w).expect("diagnostics serialize"));
        text.push('\n');
    }
    fs::write(&sidecar, text).map_err(|e| io_failure(e, &sidecar))?;
    written.push(sidecar);
    for path in written {
        println!("{}", path.display());
    }
    if !warnings.is_empty() {
        eprintln!("{command}: {} warning(s)", warnings.len());
    }
    Ok(())
}

fn ingest(config: &RunConfig, emit_ir: Option<&Path>) -> Result<(), Failure> {
    let loaded = load(config)?;
    let mut t = Table::new(
        "updates",
        &["app_id", "updates", "first_version", "latest_version", "latest_classes", "has_native_code"],
    );
    for l in loaded.corpus.iter() {
        let (first, latest) = (&l.updates()[0], l.latest());
        t.push(vec![
            l.app_id().to_owned(),
            l.len().to_string(),
            first.version_code.to_string(),
            latest.version_code.to_string(),
            latest.classes.len().to_string(),
            latest.has_native_code.to_string(),
        ]);
    }
    print!("{}", String::from_utf8_lossy(&t.render(config.format)));
    if let Some(dir) = emit_ir {
        let root = config.corpus_root.as_deref().unwrap_or(dir);
        store_corpus(&loaded.corpus, dir).map_err(|e| Failure::from_corpus(root, e))?;
    }
    finish(config, "ingest", &[t], loaded.warnings)
}

fn detect(config: &RunConfig) -> Result<(), Failure> {
    let loaded = load(config)?;
    let cat = &config.catalog;
    let updates: Vec<_> = loaded.corpus.iter().flat_map(|l| l.updates()).collect();
    let results: Vec<_> = updates.par_iter().map(|u| profile(u, cat)).collect();
    let mut warnings = loaded.warnings;
    let mut profiles = Vec::with_capacity(results.len());
    for (p, mut d) in results {
        profiles.push(p);
        warnings.append(&mut d);
    }
    let apps = stats::summarize_apps(&loaded.corpus, cat);
    let tables = [
        report::profiles_table(&profiles),
        report::count_table("role_distribution", "role", &stats::role_distribution(&apps)),
        report::count_table("library_popularity", "library", &stats::library_popularity(&apps)),
        report::integration_count_table(&stats::integration_count_distribution(&apps)),
    ];
    finish(config, "detect", &tables, warnings)
}

fn classify(config: &RunConfig) -> Result<(), Failure> {
    let loaded = load(config)?;
    let assessments = latest_assessments(&loaded.corpus, &config.catalog);
    let all: Vec<_> = assessments.values().collect();
    let mut warnings = loaded.warnings;
    warnings.extend(all.iter().flat_map(|a| a.diagnostics.iter().cloned()));
    let tables = [
        report::strategy_report_table(&all),
        report::strategy_distribution_table(&strategy_distribution(all.iter().copied())),
        report::integrated_count_summary_table(&integrated_count_summary(all.iter().copied())),
    ];
    finish(config, "classify", &tables, warnings)
}

/// One Kruskal-Wallis row comparing a metric across the multi-library
/// strategies that have at least one defined value.
fn kw_rows(metrics: &[LineageMetrics], warnings: &mut Vec<Diagnostic>) -> Table {
    type Metric = fn(&LineageMetrics) -> Option<f64>;
    let selected: [(&str, Metric); 3] = [
        ("modification_probability", |m| m.modification_probability),
        ("add_remove_ratio", |m| Some(m.add_remove_ratio)),
        ("pct_modified_when_lib_updated", |m| m.split.pct_when_updated()),
    ];
    let mut out: Option<Table> = None;
    for (name, f) in selected {
        let groups: Vec<(IntegrationStrategy, Vec<f64>)> = IntegrationStrategy::MULTI
            .iter()
            .map(|s| (*s, metrics.iter().filter(|m| m.strategy == Some(*s)).filter_map(f).collect::<Vec<_>>()))
            .filter(|(_, v)| !v.is_empty())
            .collect();
        let values: Vec<Vec<f64>> = groups.iter().map(|(_, v)| v.clone()).collect();
        let result = match kruskal_wallis(&values) {
            Ok(r) => Some(r),
            Err(e) => {
                warnings.push(Diagnostic::new(DiagnosticKind::UndefinedStatistic, format!("kruskal_wallis {name}: {e}")));
                None
            }
        };
        let sizes: Vec<_> = groups.iter().map(|(s, v)| (*s, v.len())).collect();
        let t = report::kruskal_wallis_table(name, &sizes, result.as_ref());
        match &mut out {
            None => out = Some(t),
            Some(acc) => acc.rows.extend(t.rows),
        }
    }
    out.expect("at least one metric")
}

fn evolve(config: &RunConfig) -> Result<(), Failure> {
    let loaded = load(config)?;
    let cat = &config.catalog;
    let assessments = latest_assessments(&loaded.corpus, cat);
    let lineages: Vec<_> = loaded.corpus.iter().collect();
    let analyses: Vec<_> = lineages
        .par_iter()
        .map(|l| analyze_lineage(l, cat, assessments[l.app_id()].strategy))
        .collect();
    let mut warnings = loaded.warnings;
    let mut metrics = Vec::new();
    let mut events = Vec::new();
    for a in analyses {
        metrics.push(a.metrics);
        events.extend(a.events);
        warnings.extend(a.diagnostics);
    }
    let obfuscation: Vec<_> = lineages
        .iter()
        .flat_map(|l| l.updates())
        .map(|u| (u.app_id.as_str(), u.version_code, obfuscation_stats(u)))
        .collect();
    let tables = [
        report::lineage_metrics_table(&metrics),
        report::change_events_table(&events),
        report::evolution_summary_table(&summarize_by_strategy(&metrics)),
        kw_rows(&metrics, &mut warnings),
        report::obfuscation_table(&obfuscation),
        report::metadata_table(&[("kruskal_wallis_p_value", "chi-square approximation, k-1 df".into())]),
    ];
    finish(config, "evolve", &tables, warnings)
}

fn report_cmd(config: &RunConfig) -> Result<(), Failure> {
    let loaded = load(config)?;
    let apps = stats::summarize_apps(&loaded.corpus, &config.catalog);
    let categories = stats::category_table(&apps, config.top_n);
    let series = stats::multiple_ads_ratio(&apps, &config.bucket_edges)
        .map_err(|e| Failure::usage(anyhow!(e)))?;
    let (corr, mut corr_warnings) = stats::correlations(&series, &categories);
    let mut warnings = loaded.warnings;
    warnings.extend(series.diagnostics.iter().cloned());
    warnings.append(&mut corr_warnings);
    let edges = config.bucket_edges.iter().map(u64::to_string).collect::<Vec<_>>().join(";");
    let tables = [
        report::category_distribution_table(&categories),
        report::category_top_libraries_table(&categories),
        report::multiple_ads_ratio_table(&series),
        report::correlations_table(&corr),
        report::count_table("role_distribution", "role", &stats::role_distribution(&apps)),
        report::metadata_table(&[
            ("apps", apps.len().to_string()),
            ("bucket_edges", edges),
            ("top_n", config.top_n.to_string()),
            ("spearman_p_value", "t approximation, n-2 df".into()),
        ]),
    ];
    finish(config, "report", &tables, warnings)
}

fn forge(config: &RunConfig, spec_path: &Path) -> Result<(), Failure> {
    let text = fs::read_to_string(spec_path)
        .with_context(|| format!("reading fixture spec {}", spec_path.display()))
        .map_err(Failure::usage)?;
    let mut spec = FixtureSpec::parse(&text).map_err(|e| Failure::usage(anyhow!(e)))?;
    if let Some(seed) = config.seed {
        spec.seed = Some(seed);
    }
    let forged = generate(&spec, &config.catalog).map_err(|e| match e {
        ForgeError::InfeasibleSpec(_) => Failure::analysis(anyhow!(e)),
        ForgeError::MissingSeed => Failure::usage(anyhow!(e).context("pass --seed or set seed= in the fixture file")),
        _ => Failure::usage(anyhow!(e)),
    })?;
    let out = &config.output_dir;
    let corpus_dir: PathBuf = out.join("corpus");
    if corpus_dir.exists() && fs::read_dir(&corpus_dir).map_or(true, |mut d| d.next().is_some()) {
        return Err(Failure::usage(anyhow!(
            "{} already exists and is not empty",
            corpus_dir.display()
        )));
    }
    fs::create_dir_all(&corpus_dir).map_err(|e| io_failure(e, &corpus_dir))?;
    store_corpus(&forged.corpus, &corpus_dir).map_err(|e| Failure::from_corpus(&corpus_dir, e))?;
    let truth = out.join("ground_truth.jsonl");
    fs::write(&truth, forged.truth_jsonl()).map_err(|e| io_failure(e, &truth))?;
    let resolved = out.join("fixture.spec");
    fs::write(&resolved, spec.to_text()).map_err(|e| io_failure(e, &resolved))?;
    println!("{}", corpus_dir.display());
    println!("{}", truth.display());
    finish(config, "forge", &[], Vec::new())
}
