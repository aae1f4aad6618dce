//! Rank correlation, kernel regression, sampled Shapley importance and the
//! logistic classifier used by the per-game models.

mod dataset;
pub mod linalg;
mod logistic;
mod regress;
mod shapley;

use thiserror::Error;

pub use dataset::{Dataset, Standardization};
pub use logistic::{
    accuracy, cross_validate, fit_logistic, logistic_loss_and_grad, CvConfig, CvResult, LogisticModel,
};
pub use regress::{fit_regressor, r2, single_feature_r2, RegressorConfig, RegressorKind, RegressorModel};
pub use shapley::{shapley_importance, FeatureImportance, ImportanceReport, ShapleyConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("need more than {needed} features, got {got}")]
    TooFewFeatures { needed: usize, got: usize },
    #[error("correlation undefined: {0}")]
    Undefined(String),
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("labels contain a single class")]
    DegenerateLabels,
    #[error("cannot stratify: {0}")]
    Stratify(String),
    #[error("unknown column {0}")]
    UnknownColumn(String),
}

/// Ranks starting at 1; tied values share the mean of their positions.
pub fn fractional_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(StatsError::Undefined("constant input vector".into()));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation with an explanation when it is undefined.
pub fn try_spearman(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 3 {
        return Err(StatsError::Undefined(format!("{} paired values, need 3", a.len())));
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(StatsError::Undefined("NaN input".into()));
    }
    pearson(&fractional_ranks(a), &fractional_ranks(b))
}

/// Spearman rank correlation; NaN when undefined (see [`try_spearman`]).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    try_spearman(a, b).unwrap_or(f64::NAN)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population standard deviation.
pub fn population_std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}
