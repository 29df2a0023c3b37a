//! Hypothesis tests used in the agreement analysis.
//!
//! All p-values come from the regularized incomplete gamma and beta
//! functions in [`special`]; no external statistics crate is involved.

pub mod special;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use special::{chi_square_sf, student_t_two_sided};

/// Conventional significance level, applied to Bonferroni-adjusted p.
pub const ALPHA: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("{axis} {index} of the contingency table sums to zero")]
    DegenerateMargin { axis: &'static str, index: usize },
    #[error("contingency table must be at least 2x2 and rectangular")]
    BadTable,
    #[error("expected count for category {index} is zero")]
    ZeroExpected { index: usize },
    #[error("expected proportions must be non-negative and sum to 1 (got {sum})")]
    BadProportions { sum: f64 },
    #[error("observed and expected have different lengths ({observed} vs {expected})")]
    LengthMismatch { observed: usize, expected: usize },
    #[error("need at least {need} values, got {got}")]
    InsufficientData { need: usize, got: usize },
    #[error("zero variance: the test statistic is undefined")]
    DegenerateVariance,
}

/// Mean, sample standard deviation and size of one group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl GroupSummary {
    pub fn of(values: &[f64]) -> GroupSummary {
        let n = values.len();
        let mean = mean(values);
        let sd = if n > 1 { sample_variance(values, mean).sqrt() } else { 0.0 };
        GroupSummary { mean, sd, n }
    }
}

/// Labelled counts a chi-square test of independence was run on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contingency {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test_name: String,
    pub statistic: f64,
    pub df: f64,
    pub p_raw: f64,
    pub p_adjusted: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub groups: BTreeMap<String, GroupSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Contingency>,
}

impl TestResult {
    fn new(test_name: &str, statistic: f64, df: f64, p: f64) -> TestResult {
        TestResult {
            test_name: test_name.to_owned(),
            statistic,
            df,
            p_raw: p,
            p_adjusted: p,
            groups: BTreeMap::new(),
            table: None,
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> TestResult {
        self.test_name = name.into();
        self
    }

    pub fn with_group(mut self, label: impl Into<String>, values: &[f64]) -> TestResult {
        self.groups.insert(label.into(), GroupSummary::of(values));
        self
    }

    pub fn significant(&self) -> bool {
        self.p_adjusted < ALPHA
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn sample_variance(values: &[f64], mean: f64) -> f64 {
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64
}

/// Pearson chi-square test of independence on an r×c table (no continuity
/// correction).
pub fn chi_square_independence(table: &[Vec<u64>]) -> Result<TestResult, StatsError> {
    let r = table.len();
    let c = table.first().map_or(0, Vec::len);
    if r < 2 || c < 2 || table.iter().any(|row| row.len() != c) {
        return Err(StatsError::BadTable);
    }
    let row_sums: Vec<u64> = table.iter().map(|row| row.iter().sum()).collect();
    let col_sums: Vec<u64> = (0..c).map(|j| table.iter().map(|row| row[j]).sum()).collect();
    if let Some(index) = row_sums.iter().position(|&s| s == 0) {
        return Err(StatsError::DegenerateMargin { axis: "row", index });
    }
    if let Some(index) = col_sums.iter().position(|&s| s == 0) {
        return Err(StatsError::DegenerateMargin { axis: "column", index });
    }
    let n = row_sums.iter().sum::<u64>() as f64;
    let mut statistic = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &observed) in row.iter().enumerate() {
            let expected = row_sums[i] as f64 * col_sums[j] as f64 / n;
            statistic += (observed as f64 - expected).powi(2) / expected;
        }
    }
    let df = ((r - 1) * (c - 1)) as f64;
    let mut result = TestResult::new("chi_square_independence", statistic, df, chi_square_sf(statistic, df));
    result.table = Some(Contingency {
        rows: (0..r).map(|i| i.to_string()).collect(),
        cols: (0..c).map(|j| j.to_string()).collect(),
        counts: table.to_vec(),
    });
    Ok(result)
}

/// Chi-square goodness of fit of `observed` counts against category
/// proportions.
pub fn chi_square_goodness(observed: &[u64], expected: &[f64]) -> Result<TestResult, StatsError> {
    if observed.len() != expected.len() {
        return Err(StatsError::LengthMismatch {
            observed: observed.len(),
            expected: expected.len(),
        });
    }
    if observed.len() < 2 {
        return Err(StatsError::InsufficientData { need: 2, got: observed.len() });
    }
    let sum: f64 = expected.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || expected.iter().any(|&p| p < 0.0) {
        return Err(StatsError::BadProportions { sum });
    }
    if let Some(index) = expected.iter().position(|&p| p == 0.0) {
        return Err(StatsError::ZeroExpected { index });
    }
    let n = observed.iter().sum::<u64>() as f64;
    if n == 0.0 {
        return Err(StatsError::InsufficientData { need: 1, got: 0 });
    }
    let statistic: f64 = observed
        .iter()
        .zip(expected)
        .map(|(&o, &p)| (o as f64 - p * n).powi(2) / (p * n))
        .sum();
    let df = (observed.len() - 1) as f64;
    Ok(TestResult::new("chi_square_goodness", statistic, df, chi_square_sf(statistic, df)))
}

/// Variance assumption for the two-sample t-test.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variance {
    #[default]
    Pooled,
    Welch,
}

/// Two-sample t-test; the statistic is positive when `group_a` has the
/// larger mean.
pub fn t_test_independent(group_a: &[f64], group_b: &[f64]) -> Result<TestResult, StatsError> {
    t_test_two_sample(group_a, group_b, Variance::Pooled)
}

pub fn t_test_two_sample(
    group_a: &[f64],
    group_b: &[f64],
    variance: Variance,
) -> Result<TestResult, StatsError> {
    for g in [group_a, group_b] {
        if g.len() < 2 {
            return Err(StatsError::InsufficientData { need: 2, got: g.len() });
        }
    }
    let (na, nb) = (group_a.len() as f64, group_b.len() as f64);
    let (ma, mb) = (mean(group_a), mean(group_b));
    let (va, vb) = (sample_variance(group_a, ma), sample_variance(group_b, mb));
    let (se, df, name) = match variance {
        Variance::Pooled => {
            let df = na + nb - 2.0;
            let pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / df;
            ((pooled * (1.0 / na + 1.0 / nb)).sqrt(), df, "t_test_independent")
        }
        Variance::Welch => {
            let (qa, qb) = (va / na, vb / nb);
            let df = (qa + qb).powi(2) / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
            ((qa + qb).sqrt(), df, "t_test_welch")
        }
    };
    if se == 0.0 || !se.is_finite() {
        return Err(StatsError::DegenerateVariance);
    }
    let t = (ma - mb) / se;
    Ok(TestResult::new(name, t, df, student_t_two_sided(t, df))
        .with_group("a", group_a)
        .with_group("b", group_b))
}

/// Paired t-test on `x - y`.
pub fn t_test_paired(x: &[f64], y: &[f64]) -> Result<TestResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch { observed: x.len(), expected: y.len() });
    }
    if x.len() < 2 {
        return Err(StatsError::InsufficientData { need: 2, got: x.len() });
    }
    let diffs: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let n = diffs.len() as f64;
    let m = mean(&diffs);
    let sd = sample_variance(&diffs, m).sqrt();
    if sd == 0.0 {
        return Err(StatsError::DegenerateVariance);
    }
    let t = m / (sd / n.sqrt());
    let df = n - 1.0;
    Ok(TestResult::new("t_test_paired", t, df, student_t_two_sided(t, df))
        .with_group("x", x)
        .with_group("y", y))
}

/// Multiplies each raw p by `m` (clamped to 1). `m` is the size of the
/// comparison family, which may exceed the number of results given.
pub fn bonferroni(results: &[TestResult], m: usize) -> Vec<TestResult> {
    let m = m.max(results.len()).max(1) as f64;
    results
        .iter()
        .map(|r| TestResult {
            p_adjusted: (r.p_raw * m).min(1.0),
            ..r.clone()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn independence_trivial_tables() {
        let r = chi_square_independence(&[vec![10, 10], vec![10, 10]]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_raw, 1.0);
        let r = chi_square_independence(&[vec![10, 0], vec![0, 10]]).unwrap();
        assert_eq!(r.statistic, 20.0);
        assert_eq!(r.df, 1.0);
    }

    #[test]
    fn independence_degenerate_margins() {
        assert_eq!(
            chi_square_independence(&[vec![0, 0], vec![3, 4]]).unwrap_err(),
            StatsError::DegenerateMargin { axis: "row", index: 0 }
        );
        assert_eq!(
            chi_square_independence(&[vec![1, 0], vec![3, 0]]).unwrap_err(),
            StatsError::DegenerateMargin { axis: "column", index: 1 }
        );
        assert_eq!(chi_square_independence(&[vec![1, 2]]).unwrap_err(), StatsError::BadTable);
    }

    #[test]
    fn goodness_of_fit() {
        let r = chi_square_goodness(&[50, 50], &[0.5, 0.5]).unwrap();
        assert_eq!(r.statistic, 0.0);
        let r = chi_square_goodness(&[60, 40], &[0.5, 0.5]).unwrap();
        assert_eq!(r.statistic, 4.0);
        assert_eq!(r.df, 1.0);
        assert_eq!(
            chi_square_goodness(&[1, 2], &[1.0, 0.0]).unwrap_err(),
            StatsError::ZeroExpected { index: 1 }
        );
        assert!(chi_square_goodness(&[1, 2], &[0.7, 0.7]).is_err());
    }

    #[test]
    fn reported_chi_square_pairs() {
        // printed to three decimals
        let p = |x: f64| (chi_square_sf(x, 1.0) * 1000.0).round() / 1000.0;
        assert_eq!(p(11.25), 0.001);
        assert_eq!(p(9.42), 0.002);
        assert_eq!(p(0.29), 0.590);
    }

    #[test]
    fn pooled_t_by_hand() {
        let r = t_test_independent(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap();
        close(r.statistic, -1.2247, 5e-5);
        assert_eq!(r.df, 4.0);
        let same = t_test_independent(&[1.0, 2.0, 4.0], &[1.0, 2.0, 4.0]).unwrap();
        assert_eq!(same.statistic, 0.0);
        assert_eq!(same.p_raw, 1.0);
        assert_eq!(
            t_test_independent(&[1.0, 1.0], &[1.0, 1.0]).unwrap_err(),
            StatsError::DegenerateVariance
        );
        assert!(matches!(
            t_test_independent(&[1.0], &[1.0, 2.0]),
            Err(StatsError::InsufficientData { .. })
        ));
    }

    #[test]
    fn welch_matches_pooled_for_equal_sizes_and_variances() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [2.0, 3.0, 4.0, 5.0];
        let pooled = t_test_two_sample(&a, &b, Variance::Pooled).unwrap();
        let welch = t_test_two_sample(&a, &b, Variance::Welch).unwrap();
        close(pooled.statistic, welch.statistic, 1e-12);
        close(welch.df, 6.0, 1e-12);
    }

    #[test]
    fn paired_t() {
        assert_eq!(
            t_test_paired(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap_err(),
            StatsError::DegenerateVariance
        );
        let r = t_test_paired(&[2.0, 3.1, 4.0, 5.2], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(r.statistic > 0.0);
        assert_eq!(r.df, 3.0);
    }

    #[test]
    fn bonferroni_scales_and_clamps() {
        let raw = |p: f64| TestResult::new("x", 0.0, 1.0, p);
        let adj = bonferroni(&[raw(0.01), raw(0.4)], 5);
        close(adj[0].p_adjusted, 0.05, 1e-15);
        assert_eq!(adj[1].p_adjusted, 1.0);
        let adj = bonferroni(&[raw(0.001)], 2);
        close(adj[0].p_adjusted, 0.002, 1e-15);
    }
}
