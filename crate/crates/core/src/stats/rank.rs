//! Rank-based test statistics.

use thiserror::Error;

use super::special::{chi_square_sf, student_t_two_sided};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("samples have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("a sample has zero rank variance")]
    DegenerateInput,
    #[error("need at least two groups, got {0}")]
    TooFewGroups(usize),
    #[error("group {0} is empty")]
    EmptyGroup(usize),
    #[error("non-finite observation")]
    NonFinite,
}

/// Ranks starting at 1, with tied values sharing their mean rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CorrelationResult {
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Largest sample size for which the exact permutation p-value is offered.
pub const EXACT_P_MAX_N: usize = 9;

/// Spearman's rank correlation with a two-sided p-value from the
/// t approximation on n - 2 degrees of freedom.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<CorrelationResult, StatsError> {
    let (x_ranks, y_ranks) = checked_ranks(x, y)?;
    let rho = pearson(&x_ranks, &y_ranks).ok_or(StatsError::DegenerateInput)?;
    let df = (x.len() - 2) as f64;
    let p_value = if rho.abs() >= 1.0 {
        0.0
    } else {
        student_t_two_sided(rho * (df / (1.0 - rho * rho)).sqrt(), df)
    };
    Ok(CorrelationResult { rho, p_value, n: x.len() })
}

/// Spearman's rho with the exact two-sided permutation p-value, for
/// `n <= EXACT_P_MAX_N`.
pub fn spearman_exact(x: &[f64], y: &[f64]) -> Result<CorrelationResult, StatsError> {
    if x.len() > EXACT_P_MAX_N {
        return spearman(x, y);
    }
    let (x_ranks, mut y_ranks) = checked_ranks(x, y)?;
    let rho = pearson(&x_ranks, &y_ranks).ok_or(StatsError::DegenerateInput)?;
    let (mut hits, mut total) = (0u64, 0u64);
    permute(&mut y_ranks, &mut |perm| {
        total += 1;
        if let Some(r) = pearson(&x_ranks, perm) {
            if r.abs() >= rho.abs() - 1e-12 {
                hits += 1;
            }
        }
    });
    Ok(CorrelationResult {
        rho,
        p_value: hits as f64 / total as f64,
        n: x.len(),
    })
}

// Heap's algorithm, visiting every ordering once.
fn permute(v: &mut [f64], visit: &mut dyn FnMut(&[f64])) {
    let n = v.len();
    let mut c = vec![0usize; n];
    visit(v);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                v.swap(0, i);
            } else {
                v.swap(c[i], i);
            }
            visit(v);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

fn checked_ranks(x: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooFewObservations { needed: 3, got: x.len() });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok((midranks(x), midranks(y)))
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct KwResult {
    pub h_statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
}

/// Kruskal-Wallis H test with the usual tie correction; p-value from the
/// chi-square approximation on k - 1 degrees of freedom.
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<KwResult, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups(groups.len()));
    }
    if let Some(i) = groups.iter().position(|g| g.is_empty()) {
        return Err(StatsError::EmptyGroup(i));
    }
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    if pooled.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let n = pooled.len() as f64;
    let ranks = midranks(&pooled);
    let mut offset = 0;
    let mut sum = 0.0;
    for g in groups {
        let r: f64 = ranks[offset..offset + g.len()].iter().sum();
        sum += r * r / g.len() as f64;
        offset += g.len();
    }
    let h = 12.0 / (n * (n + 1.0)) * sum - 3.0 * (n + 1.0);

    let mut sorted = pooled;
    sorted.sort_by(f64::total_cmp);
    let mut ties = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|v| **v == sorted[i]).count();
        ties += (j as f64).powi(3) - j as f64;
        i += j;
    }
    let correction = 1.0 - ties / (n * n * n - n);
    let df = groups.len() - 1;
    if correction <= 0.0 {
        return Ok(KwResult {
            h_statistic: 0.0,
            degrees_of_freedom: df,
            p_value: 1.0,
        });
    }
    let h = (h / correction).max(0.0);
    Ok(KwResult {
        h_statistic: h,
        degrees_of_freedom: df,
        p_value: chi_square_sf(h, df as f64),
    })
}
