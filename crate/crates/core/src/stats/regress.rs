use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::linalg::{cholesky_in_place, cholesky_solve};
use super::{Dataset, StatsError};
use crate::grid::Matrix;

pub const MIN_FIT_SAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressorKind {
    RbfKernelRidge,
    EpsilonSvr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorConfig {
    pub kind: RegressorKind,
    /// RBF width; `None` means `1 / n_features`.
    pub gamma: Option<f64>,
    /// Ridge penalty.
    pub lambda: f64,
    /// SVR box constraint.
    pub c: f64,
    /// SVR tube half-width, in target units.
    pub epsilon: f64,
    /// SVR stopping tolerance on the maximal KKT violation.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for RegressorConfig {
    fn default() -> Self {
        Self {
            kind: RegressorKind::RbfKernelRidge,
            gamma: None,
            lambda: 2.0,
            c: 1.0,
            epsilon: 0.1,
            tol: 1e-3,
            max_iter: 1_000_000,
        }
    }
}

impl RegressorConfig {
    pub fn svr() -> Self {
        Self {
            kind: RegressorKind::EpsilonSvr,
            ..Self::default()
        }
    }

    pub fn gamma_for(&self, n_features: usize) -> f64 {
        self.gamma.unwrap_or(1.0 / n_features.max(1) as f64)
    }
}

/// `f(x) = intercept + Σ coef_i k(x_i, x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorModel {
    pub kind: RegressorKind,
    pub gamma: f64,
    pub train: Matrix,
    pub coef: Vec<f64>,
    pub intercept: f64,
}

impl RegressorModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let s: f64 = (0..self.train.rows())
            .map(|i| self.coef[i] * rbf(self.train.row(i), x, self.gamma))
            .sum();
        self.intercept + s
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows()).map(|r| self.predict_row(x.row(r))).collect()
    }
}

fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d).exp()
}

/// Full symmetric Gram matrix.
fn gram(x: &Matrix, gamma: f64) -> Vec<f64> {
    let n = x.rows();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        k[i * n + i] = 1.0;
        for j in 0..i {
            let v = rbf(x.row(i), x.row(j), gamma);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    k
}

/// Coefficient of determination; 0 when the target is constant.
pub fn r2(yhat: &[f64], y: &[f64]) -> f64 {
    let m = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - m) * (v - m)).sum();
    if ss_tot == 0.0 {
        return 0.0;
    }
    let ss_res: f64 = yhat.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    1.0 - ss_res / ss_tot
}

pub fn fit_regressor(ds: &Dataset, cfg: &RegressorConfig) -> Result<RegressorModel, StatsError> {
    let n = ds.n_samples();
    if n < MIN_FIT_SAMPLES {
        return Err(StatsError::TooFewSamples {
            needed: MIN_FIT_SAMPLES,
            got: n,
        });
    }
    let gamma = cfg.gamma_for(ds.n_features());
    let k = gram(&ds.x, gamma);
    let ybar = ds.y.iter().sum::<f64>() / n as f64;
    match cfg.kind {
        RegressorKind::RbfKernelRidge => {
            let mut alpha: Vec<f64> = ds.y.iter().map(|v| v - ybar).collect();
            let mut l = k;
            for i in 0..n {
                l[i * n + i] += cfg.lambda;
            }
            if !cholesky_in_place(&mut l, n) {
                return Err(StatsError::Fit("kernel system is not positive definite".into()));
            }
            cholesky_solve(&l, n, &mut alpha);
            Ok(RegressorModel {
                kind: cfg.kind,
                gamma,
                train: ds.x.clone(),
                coef: alpha,
                intercept: ybar,
            })
        }
        RegressorKind::EpsilonSvr => {
            let (beta, b) = smo_svr(&k, n, &ds.y, cfg)?;
            Ok(RegressorModel {
                kind: cfg.kind,
                gamma,
                train: ds.x.clone(),
                coef: beta,
                intercept: b,
            })
        }
    }
}

/// Dual ε-SVR by sequential minimal optimization with second-order working
/// set selection. Variables `0..n` are the upper-tube multipliers, `n..2n`
/// the lower ones. Returns `(β, b)` with `f(x) = Σ β_i k(x_i, x) + b`.
fn smo_svr(k: &[f64], n: usize, z: &[f64], cfg: &RegressorConfig) -> Result<(Vec<f64>, f64), StatsError> {
    let l = 2 * n;
    let c = cfg.c;
    let sign = |t: usize| if t < n { 1.0 } else { -1.0 };
    let kk = |t: usize, s: usize| k[(t % n) * n + (s % n)];
    let mut alpha = vec![0.0; l];
    let mut grad: Vec<f64> = (0..l)
        .map(|t| if t < n { cfg.epsilon - z[t] } else { cfg.epsilon + z[t - n] })
        .collect();
    let up = |a: f64, y: f64| if y > 0.0 { a < c } else { a > 0.0 };
    let low = |a: f64, y: f64| if y > 0.0 { a > 0.0 } else { a < c };
    const TAU: f64 = 1e-12;

    let mut converged = false;
    for _ in 0..cfg.max_iter {
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..l {
            let y = sign(t);
            if up(alpha[t], y) && -y * grad[t] >= gmax {
                gmax = -y * grad[t];
                i = t;
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..l {
            let y = sign(t);
            if !low(alpha[t], y) {
                continue;
            }
            gmax2 = gmax2.max(y * grad[t]);
            if i == usize::MAX {
                continue;
            }
            let b = gmax + y * grad[t];
            if b > 0.0 {
                let quad = kk(i, i) + kk(t, t) - 2.0 * kk(i, t);
                let obj = -(b * b) / if quad > 0.0 { quad } else { TAU };
                if obj <= best {
                    best = obj;
                    j = t;
                }
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax + gmax2 < cfg.tol {
            converged = true;
            break;
        }
        let (yi, yj) = (sign(i), sign(j));
        let qij = yi * yj * kk(i, j);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (mut ai, mut aj) = (old_i, old_j);
        if yi != yj {
            let quad = (kk(i, i) + kk(j, j) + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let quad = (kk(i, i) + kk(j, j) - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        alpha[i] = ai;
        alpha[j] = aj;
        let (di, dj) = (ai - old_i, aj - old_j);
        for t in 0..l {
            let yt = sign(t);
            grad[t] += yt * (yi * kk(t, i) * di + yj * kk(t, j) * dj);
        }
    }
    if !converged {
        return Err(StatsError::Fit(format!("SMO did not converge in {} iterations", cfg.max_iter)));
    }

    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut n_free, mut sum_free) = (0usize, 0.0);
    for t in 0..l {
        let y = sign(t);
        let yg = y * grad[t];
        if alpha[t] >= c {
            if y < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 { sum_free / n_free as f64 } else { (ub + lb) / 2.0 };
    let beta = (0..n).map(|t| alpha[t] - alpha[t + n]).collect();
    Ok((beta, -rho))
}

/// In-sample R² of a ridge fit from the lower triangle of a Gram matrix
/// already shifted by λ on the diagonal; `yc` is the centred target.
/// The residual of kernel ridge is `λ α`, so no prediction pass is needed.
pub(crate) fn ridge_r2_from_system(system: &mut [f64], n: usize, lambda: f64, yc: &[f64], ss_tot: f64) -> Option<f64> {
    if ss_tot == 0.0 {
        return Some(0.0);
    }
    if !cholesky_in_place(system, n) {
        return None;
    }
    let mut alpha = yc.to_vec();
    cholesky_solve(system, n, &mut alpha);
    let ss_res = lambda * lambda * alpha.iter().map(|a| a * a).sum::<f64>();
    Some(1.0 - ss_res / ss_tot)
}

/// In-sample R² of one fit on a standardized dataset.
pub(crate) fn in_sample_r2(ds: &Dataset, cfg: &RegressorConfig) -> Result<f64, StatsError> {
    let model = fit_regressor(ds, cfg)?;
    Ok(r2(&model.predict(&ds.x), &ds.y))
}

/// R² of a univariate fit of the target on each column, in column order.
/// A failing column yields its error without affecting the others.
pub fn single_feature_r2(ds: &Dataset, cfg: &RegressorConfig) -> Vec<(String, Result<f64, StatsError>)> {
    (0..ds.n_features())
        .into_par_iter()
        .map(|c| (ds.names[c].clone(), in_sample_r2(&ds.select(&[c]), cfg)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_d(xs: &[f64], f: impl Fn(f64) -> f64) -> Dataset {
        Dataset::new(
            vec!["x".into()],
            Matrix::from_vec(xs.len(), 1, xs.to_vec()),
            xs.iter().map(|&x| f(x)).collect(),
        )
        .unwrap()
    }

    fn grid(n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn linear_target_is_fit_by_both_kinds() {
        // ridge shrinkage costs about λ/n of R² on a line, so use a dense grid
        let ds = one_d(&grid(2000, -2.0, 2.0), |x| 2.0 * x + 1.0);
        for cfg in [RegressorConfig::default(), RegressorConfig::svr()] {
            let r = in_sample_r2(&ds, &cfg).unwrap();
            assert!(r > 0.999, "{:?}: {r}", cfg.kind);
        }
    }

    #[test]
    fn sine_needs_the_kernel() {
        let xs = grid(200, -2.0, 2.0);
        let ds = one_d(&xs, |x| (3.0 * x).sin());
        let rbf = in_sample_r2(&ds, &RegressorConfig::default()).unwrap();
        // ordinary least-squares line as the baseline
        let mx = xs.iter().sum::<f64>() / 200.0;
        let my = ds.y.iter().sum::<f64>() / 200.0;
        let sxy: f64 = xs.iter().zip(&ds.y).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let slope = sxy / sxx;
        let line: Vec<f64> = xs.iter().map(|x| my + slope * (x - mx)).collect();
        let linear = r2(&line, &ds.y);
        assert!(rbf > 0.95, "rbf {rbf}");
        assert!(linear < 0.5, "linear {linear}");
    }

    #[test]
    fn constant_target_scores_zero() {
        let ds = one_d(&grid(20, 0.0, 1.0), |_| 3.0);
        for cfg in [RegressorConfig::default(), RegressorConfig::svr()] {
            assert_eq!(in_sample_r2(&ds, &cfg).unwrap(), 0.0);
        }
    }

    #[test]
    fn ridge_shortcut_matches_prediction_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 40;
        let x = Matrix::from_fn(n, 3, |_, _| rng.gen_range(-1.0..1.0));
        let y: Vec<f64> = (0..n).map(|r| x.get(r, 0).sin() + 0.3 * x.get(r, 2)).collect();
        let ds = Dataset::new(vec!["a".into(), "b".into(), "c".into()], x, y).unwrap();
        let cfg = RegressorConfig::default();
        let direct = in_sample_r2(&ds, &cfg).unwrap();
        let mut sys = gram(&ds.x, cfg.gamma_for(3));
        for i in 0..n {
            sys[i * n + i] += cfg.lambda;
        }
        let m = ds.y.iter().sum::<f64>() / n as f64;
        let yc: Vec<f64> = ds.y.iter().map(|v| v - m).collect();
        let ss: f64 = yc.iter().map(|v| v * v).sum();
        let fast = ridge_r2_from_system(&mut sys, n, cfg.lambda, &yc, ss).unwrap();
        assert!((direct - fast).abs() < 1e-10, "{direct} vs {fast}");
    }

    #[test]
    fn single_feature_r2_identifies_copy_of_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 2000;
        let x = Matrix::from_fn(n, 2, |_, _| rng.gen_range(-1.0..1.0));
        let y = x.column(1);
        let ds = Dataset::new(vec!["noise".into(), "copy".into()], x, y).unwrap();
        let out = single_feature_r2(&ds, &RegressorConfig::default());
        assert_eq!(out[1].0, "copy");
        assert!(*out[1].1.as_ref().unwrap() > 0.999);
    }

    #[test]
    fn too_few_samples() {
        let ds = one_d(&grid(5, 0.0, 1.0), |x| x);
        assert!(matches!(
            fit_regressor(&ds, &RegressorConfig::default()),
            Err(StatsError::TooFewSamples { .. })
        ));
    }
}
