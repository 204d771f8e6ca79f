use serde::{Deserialize, Serialize};

use super::special::student_t_two_sided;
use super::AnalyticsError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub sd: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance (n − 1 denominator), two-pass.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Quantile by linear interpolation between order statistics (type 7).
/// `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn describe(xs: &[f64]) -> Result<DescriptiveStats, AnalyticsError> {
    if xs.is_empty() {
        return Err(AnalyticsError::EmptyInput);
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(AnalyticsError::NonFinite);
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(DescriptiveStats {
        n: xs.len(),
        mean: mean(xs),
        sd: sample_variance(xs).sqrt(),
        min: sorted[0],
        q1: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        q3: quantile_sorted(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    pub n1: usize,
    pub n2: usize,
    pub mean1: f64,
    pub mean2: f64,
    pub sd1: f64,
    pub sd2: f64,
    pub t: f64,
    /// Welch–Satterthwaite degrees of freedom.
    pub df: f64,
    pub p_two_sided: f64,
}

/// Welch's unequal-variance t statistic from group summaries.
pub fn welch_from_summary(
    n1: usize,
    mean1: f64,
    sd1: f64,
    n2: usize,
    mean2: f64,
    sd2: f64,
) -> Result<GroupComparison, AnalyticsError> {
    if n1 < 2 || n2 < 2 {
        return Err(AnalyticsError::InsufficientData { needed: 2, found: n1.min(n2) });
    }
    let v1 = sd1 * sd1 / n1 as f64;
    let v2 = sd2 * sd2 / n2 as f64;
    let se2 = v1 + v2;
    if se2.is_nan() || se2 <= 0.0 {
        return Err(AnalyticsError::DegenerateVariance);
    }
    let t = (mean1 - mean2) / se2.sqrt();
    let df = se2 * se2 / (v1 * v1 / (n1 - 1) as f64 + v2 * v2 / (n2 - 1) as f64);
    Ok(GroupComparison { n1, n2, mean1, mean2, sd1, sd2, t, df, p_two_sided: student_t_two_sided(t, df) })
}

pub fn welch_t(a: &[f64], b: &[f64]) -> Result<GroupComparison, AnalyticsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(AnalyticsError::InsufficientData { needed: 2, found: a.len().min(b.len()) });
    }
    welch_from_summary(a.len(), mean(a), sample_variance(a).sqrt(), b.len(), mean(b), sample_variance(b).sqrt())
}

fn check_pairs(x: &[f64], y: &[f64]) -> Result<(), AnalyticsError> {
    if x.len() != y.len() {
        return Err(AnalyticsError::LengthMismatch { left: x.len(), right: y.len() });
    }
    if x.len() < 2 {
        return Err(AnalyticsError::InsufficientData { needed: 2, found: x.len() });
    }
    Ok(())
}

/// Pearson product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, AnalyticsError> {
    check_pairs(x, y)?;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(AnalyticsError::DegenerateVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties replaced by their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson on average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, AnalyticsError> {
    check_pairs(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

pub fn mae(x: &[f64], y: &[f64]) -> Result<f64, AnalyticsError> {
    check_pairs(x, y)?;
    Ok(x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum::<f64>() / x.len() as f64)
}

pub fn rmse(x: &[f64], y: &[f64]) -> Result<f64, AnalyticsError> {
    check_pairs(x, y)?;
    Ok((x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlandAltman {
    pub bias: f64,
    pub sd_diff: f64,
    pub loa_low: f64,
    pub loa_high: f64,
    /// (pair mean, difference) per pair, for plotting.
    pub points: Vec<(f64, f64)>,
}

/// Bland–Altman analysis of `x − y`.
pub fn bland_altman(x: &[f64], y: &[f64]) -> Result<BlandAltman, AnalyticsError> {
    check_pairs(x, y)?;
    let diffs: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let bias = mean(&diffs);
    let sd_diff = sample_variance(&diffs).sqrt();
    Ok(BlandAltman {
        bias,
        sd_diff,
        loa_low: bias - 1.96 * sd_diff,
        loa_high: bias + 1.96 * sd_diff,
        points: x.iter().zip(y).map(|(a, b)| ((a + b) / 2.0, a - b)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementStats {
    pub n: usize,
    /// Mean of model − expert.
    pub bias: f64,
    pub mae: f64,
    pub rmse: f64,
    /// `None` when either side is constant.
    pub pearson_r: Option<f64>,
    pub spearman_rho: Option<f64>,
    pub loa_low: f64,
    pub loa_high: f64,
}

/// Agreement between model scores and expert scores, paired by index.
pub fn agreement(model: &[f64], expert: &[f64]) -> Result<AgreementStats, AnalyticsError> {
    check_pairs(model, expert)?;
    let ba = bland_altman(model, expert)?;
    let optional = |r: Result<f64, AnalyticsError>| match r {
        Ok(v) => Ok(Some(v)),
        Err(AnalyticsError::DegenerateVariance) => Ok(None),
        Err(e) => Err(e),
    };
    Ok(AgreementStats {
        n: model.len(),
        bias: ba.bias,
        mae: mae(model, expert)?,
        rmse: rmse(model, expert)?,
        pearson_r: optional(pearson(model, expert))?,
        spearman_rho: optional(spearman(model, expert))?,
        loa_low: ba.loa_low,
        loa_high: ba.loa_high,
    })
}
