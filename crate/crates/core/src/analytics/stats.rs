//! Descriptive statistics and the two significance tests used on study data.

use serde::Serialize;
use statrs::function::beta::beta_reg;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("input is empty")]
    Empty,
    #[error("quantile {0} outside [0, 1]")]
    BadQuantile(f64),
    #[error("10th percentile is zero; ratio undefined")]
    UndefinedRatio,
    #[error("paired samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} values, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("k={k} exceeds n={n}")]
    BadCount { k: u64, n: u64 },
    #[error("probability {0} outside [0, 1]")]
    BadProbability(f64),
}

/// Inclusive linear interpolation at rank `q * (N - 1)` of the sorted values.
pub fn percentile(values: &[f64], q: f64) -> Result<f64, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(StatsError::BadQuantile(q));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = q * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

/// 90th over 10th percentile of `values`.
pub fn contribution_ratio(values: &[f64]) -> Result<f64, StatsError> {
    ratio_of(percentile(values, 0.1)?, percentile(values, 0.9)?)
}

/// `p90 / p10`, for when only the percentiles are known.
pub fn ratio_of(p10: f64, p90: f64) -> Result<f64, StatsError> {
    if p10 <= 0.0 {
        return Err(StatsError::UndefinedRatio);
    }
    Ok(p90 / p10)
}

/// `after / before - 1`.
pub fn relative_change(before: f64, after: f64) -> f64 {
    after / before - 1.0
}

/// Signed whole-percent rendering, e.g. `+46%`.
pub fn format_pct(change: f64) -> String {
    format!("{:+.0}%", change * 100.0)
}

pub fn mean(values: &[f64]) -> Result<f64, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Sample variance (n - 1 denominator).
pub fn sample_variance(values: &[f64]) -> Result<f64, StatsError> {
    if values.len() < 2 {
        return Err(StatsError::TooFew { needed: 2, got: values.len() });
    }
    let m = mean(values)?;
    Ok(values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Degenerate {
    /// Every pair is equal. Reported as t = 0, p = 1.
    IdenticalPairs,
    /// Differences are constant and nonzero. Reported as t = ±inf, p = 0.
    ZeroVariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairedT {
    pub t: f64,
    pub p: f64,
    pub df: usize,
    pub mean_diff: f64,
    pub degenerate: Option<Degenerate>,
}

/// Two-sided paired t-test on `b - a`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedT, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(StatsError::TooFew { needed: 2, got: a.len() });
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let n = diffs.len();
    let df = n - 1;
    let md = mean(&diffs)?;
    let var = sample_variance(&diffs)?;
    if var == 0.0 {
        return Ok(if md == 0.0 {
            PairedT { t: 0.0, p: 1.0, df, mean_diff: md, degenerate: Some(Degenerate::IdenticalPairs) }
        } else {
            PairedT { t: md.signum() * f64::INFINITY, p: 0.0, df, mean_diff: md, degenerate: Some(Degenerate::ZeroVariance) }
        });
    }
    let t = md / (var / n as f64).sqrt();
    Ok(PairedT { t, p: t_two_sided_p(t, df as f64), df, mean_diff: md, degenerate: None })
}

/// `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    let x = df / (df + t * t);
    beta_reg(df / 2.0, 0.5, x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tail {
    /// `P(X >= k)`
    Greater,
    /// `P(X <= k)`
    Less,
}

/// Exact binomial tail probability.
pub fn binomial_test(k: u64, n: u64, p0: f64, tail: Tail) -> Result<f64, StatsError> {
    if k > n {
        return Err(StatsError::BadCount { k, n });
    }
    if !(0.0..=1.0).contains(&p0) {
        return Err(StatsError::BadProbability(p0));
    }
    let range: Vec<u64> = match tail {
        Tail::Greater => (k..=n).collect(),
        Tail::Less => (0..=k).collect(),
    };
    if p0 == 0.5 && n <= 120 {
        // Dyadic: integer count over 2^n, rounded once.
        let count: u128 = range.iter().map(|&i| choose_u128(n, i)).sum();
        return Ok(count as f64 / 2f64.powi(n as i32));
    }
    Ok(range.iter().map(|&i| binomial_pmf(i, n, p0)).sum::<f64>().min(1.0))
}

fn choose_u128(n: u64, k: u64) -> u128 {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * u128::from(n - i) / u128::from(i + 1);
    }
    c
}

fn binomial_pmf(k: u64, n: u64, p: f64) -> f64 {
    if p == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p == 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    let ln = statrs::function::factorial::ln_binomial(n, k) + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln();
    ln.exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_basics() {
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.5).unwrap(), 3.0);
        assert_eq!(percentile(&[7.0], 0.37).unwrap(), 7.0);
        assert_eq!(percentile(&[4.0, 1.0, 3.0, 2.0], 0.25).unwrap(), 1.75);
        assert_eq!(percentile(&[], 0.5), Err(StatsError::Empty));
        assert!(matches!(percentile(&[1.0], 1.5), Err(StatsError::BadQuantile(_))));
    }

    #[test]
    fn ratio_cases() {
        assert_eq!(contribution_ratio(&[2.0; 9]).unwrap(), 1.0);
        assert_eq!(contribution_ratio(&[0.0, 0.0, 0.0, 5.0]), Err(StatsError::UndefinedRatio));
        assert!((ratio_of(0.289, 1.196).unwrap() - 4.14).abs() < 0.01);
    }

    #[test]
    fn pct_format() {
        assert_eq!(format_pct(relative_change(0.699, 1.021)), "+46%");
        assert_eq!(format_pct(relative_change(10.4, 7.6)), "-27%");
    }

    #[test]
    fn variance_is_sample() {
        assert_eq!(sample_variance(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 5.0 / 3.0);
    }

    #[test]
    fn t_test_degenerate_cases() {
        let a = [1.0, 2.0, 3.0];
        let same = paired_t_test(&a, &a).unwrap();
        assert_eq!((same.t, same.p, same.degenerate), (0.0, 1.0, Some(Degenerate::IdenticalPairs)));
        let shifted = paired_t_test(&[0.0; 4], &[1.0; 4]).unwrap();
        assert_eq!(shifted.degenerate, Some(Degenerate::ZeroVariance));
        assert_eq!(shifted.t, f64::INFINITY);
        assert!(matches!(paired_t_test(&a, &a[..2]), Err(StatsError::LengthMismatch(3, 2))));
    }

    #[test]
    fn t_test_known_value() {
        // df = 1: P(|T| >= 1) = 1/2 exactly.
        assert!((t_two_sided_p(1.0, 1.0) - 0.5).abs() < 1e-14);
        // df = 2: P(|T| >= t) = 1 - t / sqrt(2 + t^2).
        let t: f64 = 1.7;
        assert!((t_two_sided_p(t, 2.0) - (1.0 - t / (2.0 + t * t).sqrt())).abs() < 1e-13);
    }

    #[test]
    fn binomial_edges() {
        assert_eq!(binomial_test(0, 10, 0.5, Tail::Greater).unwrap(), 1.0);
        assert_eq!(binomial_test(10, 10, 0.5, Tail::Greater).unwrap(), 0.5f64.powi(10));
        assert!((binomial_test(3, 3, 0.3, Tail::Greater).unwrap() - 0.027).abs() < 1e-15);
        assert!((binomial_test(1, 4, 0.25, Tail::Less).unwrap() - (0.75f64.powi(4) + 4.0 * 0.25 * 0.75f64.powi(3))).abs() < 1e-14);
        assert!(binomial_test(32, 48, 0.5, Tail::Greater).unwrap() < 0.02);
        assert!(matches!(binomial_test(5, 4, 0.5, Tail::Greater), Err(StatsError::BadCount { .. })));
    }

    #[test]
    fn general_p_matches_dyadic_path() {
        for n in 1..40u64 {
            for k in 0..=n {
                let exact = binomial_test(k, n, 0.5, Tail::Greater).unwrap();
                let float: f64 = (k..=n).map(|i| binomial_pmf(i, n, 0.5)).sum();
                assert!((exact - float).abs() < 1e-12, "n={n} k={k}");
            }
        }
    }
}
