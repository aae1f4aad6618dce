use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::linalg::{cholesky_in_place, cholesky_solve};
use super::{Standardization, StatsError};
use crate::grid::Matrix;

const GRAD_TOL: f64 = 1e-6;
const MAX_ITER: usize = 200;

/// Logistic regression on internally standardized inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub l2: f64,
    pub standardization: Standardization,
    pub iterations: usize,
    pub converged: bool,
}

impl LogisticModel {
    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        let mut z = self.bias;
        for ((x, w), (m, s)) in row
            .iter()
            .zip(&self.weights)
            .zip(self.standardization.mean.iter().zip(&self.standardization.std))
        {
            z += w * (x - m) / s;
        }
        sigmoid(z)
    }

    pub fn predict(&self, row: &[f64]) -> bool {
        self.predict_proba(row) >= 0.5
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean log-loss plus `l2/2 · ‖w‖²` (bias unpenalized) and its gradient.
/// `params` is the weights followed by the bias.
pub fn logistic_loss_and_grad(x: &Matrix, labels: &[bool], l2: f64, params: &[f64]) -> (f64, Vec<f64>) {
    let (n, p) = x.shape();
    let (w, b) = params.split_at(p);
    let mut loss = 0.0;
    let mut grad = vec![0.0; p + 1];
    for r in 0..n {
        let row = x.row(r);
        let z = b[0] + row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
        let y = if labels[r] { 1.0 } else { 0.0 };
        loss += softplus(z) - y * z;
        let e = sigmoid(z) - y;
        for (g, v) in grad.iter_mut().zip(row) {
            *g += e * v;
        }
        grad[p] += e;
    }
    let inv = 1.0 / n as f64;
    loss *= inv;
    grad.iter_mut().for_each(|g| *g *= inv);
    loss += 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>();
    for (g, v) in grad.iter_mut().zip(w) {
        *g += l2 * v;
    }
    (loss, grad)
}

fn standardize(x: &Matrix) -> (Matrix, Standardization) {
    let (n, p) = x.shape();
    let mut mean = vec![0.0; p];
    let mut std = vec![0.0; p];
    for c in 0..p {
        let col = x.column(c);
        let m = col.iter().sum::<f64>() / n as f64;
        let s = (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64).sqrt();
        mean[c] = m;
        // constant columns stay at zero after centring
        std[c] = if s > 0.0 { s } else { 1.0 };
    }
    let z = Matrix::from_fn(n, p, |r, c| (x.get(r, c) - mean[c]) / std[c]);
    (z, Standardization { mean, std })
}

/// Mean-loss Hessian: `Zᵀ diag(σ(1-σ)) Z / n` plus the ridge on the weights,
/// with the bias as the last row and column.
fn logistic_hessian(x: &Matrix, l2: f64, params: &[f64]) -> Vec<f64> {
    let (n, p) = x.shape();
    let d = p + 1;
    let (w, b) = params.split_at(p);
    let mut h = vec![0.0; d * d];
    let mut ext = vec![1.0; d];
    for r in 0..n {
        let row = x.row(r);
        ext[..p].copy_from_slice(row);
        let s = sigmoid(b[0] + row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>());
        let weight = s * (1.0 - s);
        for i in 0..d {
            let wi = weight * ext[i];
            for (o, &v) in h[i * d..i * d + i + 1].iter_mut().zip(&ext[..=i]) {
                *o += wi * v;
            }
        }
    }
    let inv = 1.0 / n as f64;
    for i in 0..d {
        for j in 0..=i {
            h[i * d + j] *= inv;
            h[j * d + i] = h[i * d + j];
        }
        if i < p {
            h[i * d + i] += l2;
        }
    }
    h
}

/// Damped Newton iterations with Armijo backtracking until the gradient
/// norm drops below 1e-6.
pub fn fit_logistic(x: &Matrix, labels: &[bool], l2: f64) -> Result<LogisticModel, StatsError> {
    if x.rows() != labels.len() {
        return Err(StatsError::LengthMismatch(x.rows(), labels.len()));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives < 2 || labels.len() - positives < 2 {
        return Err(StatsError::DegenerateLabels);
    }
    let (z, standardization) = standardize(x);
    let p = x.cols();
    let mut params = vec![0.0; p + 1];
    let (mut loss, mut grad) = logistic_loss_and_grad(&z, labels, l2, &params);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITER {
        let gnorm2: f64 = grad.iter().map(|g| g * g).sum();
        if gnorm2.sqrt() < GRAD_TOL {
            converged = true;
            break;
        }
        iterations += 1;
        let mut h = logistic_hessian(&z, l2, &params);
        let mut dir = grad.clone();
        let mut slope = 0.0;
        if cholesky_in_place(&mut h, p + 1) {
            cholesky_solve(&h, p + 1, &mut dir);
            slope = dir.iter().zip(&grad).map(|(d, g)| d * g).sum();
        }
        if slope <= 0.0 {
            // not a descent direction; fall back to the gradient
            dir.clone_from(&grad);
            slope = gnorm2;
        }
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = params.iter().zip(&dir).map(|(v, d)| v - t * d).collect();
            let (l_new, g_new) = logistic_loss_and_grad(&z, labels, l2, &trial);
            if l_new <= loss - 1e-4 * t * slope || t < 1e-12 {
                params = trial;
                loss = l_new;
                grad = g_new;
                break;
            }
            t *= 0.5;
        }
    }
    if !converged {
        log::debug!("logistic fit stopped after {iterations} iterations");
    }
    let bias = params[p];
    params.truncate(p);
    Ok(LogisticModel {
        weights: params,
        bias,
        l2,
        standardization,
        iterations,
        converged,
    })
}

pub fn accuracy(model: &LogisticModel, x: &Matrix, labels: &[bool]) -> f64 {
    let correct = (0..x.rows()).filter(|&r| model.predict(x.row(r)) == labels[r]).count();
    correct as f64 / labels.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub k: usize,
    pub holdout: f64,
    /// Inverse regularization strength: the penalty is `‖w‖² / 2C` against
    /// the summed log-loss, so each fit uses `l2 = 1 / (C · n_train)`.
    pub c: f64,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            k: 5,
            holdout: 0.15,
            c: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub fold_accuracies: Vec<f64>,
    pub holdout_accuracy: f64,
    pub holdout_indices: Vec<usize>,
    /// Fold number of every non-holdout example, indexed like the input.
    pub fold_of: Vec<Option<usize>>,
}

impl CvResult {
    pub fn mean_fold_accuracy(&self) -> f64 {
        self.fold_accuracies.iter().sum::<f64>() / self.fold_accuracies.len() as f64
    }
}

fn subset(x: &Matrix, idx: &[usize]) -> Matrix {
    Matrix::from_fn(idx.len(), x.cols(), |r, c| x.get(idx[r], c))
}

/// Stratified split: a holdout share is set aside first, the remainder is
/// dealt into `k` folds. Each fold is scored by a model trained on the other
/// folds; the holdout is scored by a model refit on every non-holdout row.
pub fn cross_validate(x: &Matrix, labels: &[bool], cfg: &CvConfig) -> Result<CvResult, StatsError> {
    let n = labels.len();
    if x.rows() != n {
        return Err(StatsError::LengthMismatch(x.rows(), n));
    }
    if n < 20 {
        return Err(StatsError::TooFewSamples { needed: 20, got: n });
    }
    if cfg.k < 2 || !(0.0..1.0).contains(&cfg.holdout) || !(cfg.c > 0.0) {
        return Err(StatsError::Stratify("need k >= 2, holdout in [0, 1) and C > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut classes: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &l) in labels.iter().enumerate() {
        classes[l as usize].push(i);
    }
    for class in &classes {
        if class.len() < cfg.k + 1 {
            return Err(StatsError::Stratify(format!(
                "a class has {} examples, need at least {}",
                class.len(),
                cfg.k + 1
            )));
        }
    }
    for class in classes.iter_mut() {
        class.shuffle(&mut rng);
    }

    // largest-remainder allocation keeps the total holdout at round(h·n)
    let total = (cfg.holdout * n as f64).round() as usize;
    let exact: Vec<f64> = classes.iter().map(|c| cfg.holdout * c.len() as f64).collect();
    let mut take: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order = [0usize, 1];
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    let mut missing = total.saturating_sub(take.iter().sum());
    for &c in order.iter().cycle().take(2 * missing.max(1)) {
        if missing == 0 {
            break;
        }
        if take[c] < classes[c].len() - cfg.k {
            take[c] += 1;
            missing -= 1;
        }
    }

    let mut holdout = Vec::new();
    let mut dealt = Vec::new();
    for (c, class) in classes.iter().enumerate() {
        holdout.extend_from_slice(&class[..take[c]]);
        dealt.extend_from_slice(&class[take[c]..]);
    }
    holdout.sort_unstable();
    let mut fold_of = vec![None; n];
    for (pos, &i) in dealt.iter().enumerate() {
        fold_of[i] = Some(pos % cfg.k);
    }

    let mut fold_accuracies = Vec::with_capacity(cfg.k);
    for f in 0..cfg.k {
        let (val, train): (Vec<usize>, Vec<usize>) = (0..n)
            .filter(|&i| fold_of[i].is_some())
            .partition(|&i| fold_of[i] == Some(f));
        let train_labels: Vec<bool> = train.iter().map(|&i| labels[i]).collect();
        let model = fit_logistic(&subset(x, &train), &train_labels, 1.0 / (cfg.c * train.len() as f64))?;
        let val_labels: Vec<bool> = val.iter().map(|&i| labels[i]).collect();
        fold_accuracies.push(accuracy(&model, &subset(x, &val), &val_labels));
    }
    let train: Vec<usize> = (0..n).filter(|&i| fold_of[i].is_some()).collect();
    let train_labels: Vec<bool> = train.iter().map(|&i| labels[i]).collect();
    let model = fit_logistic(&subset(x, &train), &train_labels, 1.0 / (cfg.c * train.len() as f64))?;
    let hold_labels: Vec<bool> = holdout.iter().map(|&i| labels[i]).collect();
    let holdout_accuracy = if holdout.is_empty() {
        f64::NAN
    } else {
        accuracy(&model, &subset(x, &holdout), &hold_labels)
    };
    Ok(CvResult {
        fold_accuracies,
        holdout_accuracy,
        holdout_indices: holdout,
        fold_of,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn blobs(n: usize, seed: u64, gap: f64) -> (Matrix, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        let x = Matrix::from_fn(n, 2, |r, _| {
            let centre = if labels[r] { gap } else { -gap };
            centre + rng.gen_range(-1.0..1.0)
        });
        (x, labels)
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for trial in 0..20 {
            let (n, p) = (15, 4);
            let x = Matrix::from_fn(n, p, |_, _| rng.gen_range(-2.0..2.0));
            let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
            let params: Vec<f64> = (0..=p).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let l2 = 0.1 * trial as f64;
            let (_, grad) = logistic_loss_and_grad(&x, &labels, l2, &params);
            let h = 1e-5;
            for k in 0..=p {
                let mut up = params.clone();
                let mut down = params.clone();
                up[k] += h;
                down[k] -= h;
                let fd = (logistic_loss_and_grad(&x, &labels, l2, &up).0
                    - logistic_loss_and_grad(&x, &labels, l2, &down).0)
                    / (2.0 * h);
                let rel = (fd - grad[k]).abs() / grad[k].abs().max(1e-8);
                assert!(rel <= 1e-4, "trial {trial} coord {k}: {fd} vs {}", grad[k]);
            }
        }
    }

    #[test]
    fn separable_blobs_are_classified_perfectly() {
        let (x, labels) = blobs(100, 2, 3.0);
        let model = fit_logistic(&x, &labels, 1e-3).unwrap();
        assert!(model.converged, "stopped after {} iterations", model.iterations);
        assert_eq!(accuracy(&model, &x, &labels), 1.0);
        let cv = cross_validate(&x, &labels, &CvConfig::default()).unwrap();
        assert!(cv.fold_accuracies.iter().all(|&a| a == 1.0));
        assert_eq!(cv.holdout_accuracy, 1.0);
    }

    #[test]
    fn single_class_rejected() {
        let x = Matrix::zeros(5, 1);
        assert!(matches!(fit_logistic(&x, &[true; 5], 0.1), Err(StatsError::DegenerateLabels)));
    }

    #[test]
    fn split_sizes_and_determinism() {
        let (x, labels) = blobs(100, 3, 0.5);
        let cfg = CvConfig {
            seed: 4,
            ..Default::default()
        };
        let a = cross_validate(&x, &labels, &cfg).unwrap();
        assert_eq!(a.holdout_indices.len(), 15);
        for f in 0..5 {
            let size = a.fold_of.iter().filter(|&&g| g == Some(f)).count();
            assert!((16..=18).contains(&size), "fold {f} has {size}");
        }
        let b = cross_validate(&x, &labels, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn null_labels_near_chance() {
        let mut within = 0;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let x = Matrix::from_fn(1000, 3, |_, _| rng.gen_range(-1.0..1.0));
            let labels: Vec<bool> = (0..1000).map(|_| rng.gen_bool(0.5)).collect();
            let model = fit_logistic(&x, &labels, 1e-2).unwrap();
            let acc = accuracy(&model, &x, &labels);
            within += (0.45..=0.55).contains(&acc) as usize;
        }
        assert!(within >= 18, "{within}/20 within [0.45, 0.55]");
    }

    #[test]
    fn imbalanced_null_collapses_to_majority() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = Matrix::from_fn(1000, 2, |_, _| rng.gen_range(-1.0..1.0));
        let labels: Vec<bool> = (0..1000).map(|i| i % 5 != 0).collect();
        let model = fit_logistic(&x, &labels, 1e-2).unwrap();
        let acc = accuracy(&model, &x, &labels);
        assert!((acc - 0.8).abs() < 0.02, "{acc}");
    }

    #[test]
    fn stratification_failure() {
        let x = Matrix::zeros(30, 1);
        let labels: Vec<bool> = (0..30).map(|i| i < 3).collect();
        assert!(matches!(cross_validate(&x, &labels, &CvConfig::default()), Err(StatsError::Stratify(_))));
    }
}
