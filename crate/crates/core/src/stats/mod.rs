//! Descriptive statistics and rank-based tests.

pub mod corpus;
pub mod rank;
pub mod special;

pub use corpus::{
    category_table, correlations, default_bucket_edges, integration_count_distribution, library_popularity,
    multiple_ads_ratio, role_distribution, summarize_apps, AppSummary, BucketSeries, CategoryTable,
};
pub use rank::{kruskal_wallis, midranks, spearman, spearman_exact, CorrelationResult, KwResult, StatsError};
