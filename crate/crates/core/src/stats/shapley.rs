use std::io::Write;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::regress::{in_sample_r2, ridge_r2_from_system};
use super::{single_feature_r2, Dataset, RegressorConfig, RegressorKind, StatsError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyConfig {
    pub iterations: usize,
    /// Inclusive range for the size of the random base feature set.
    pub n_min: usize,
    pub n_max: usize,
    pub seed: u64,
    pub regressor: RegressorConfig,
}

impl Default for ShapleyConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            n_min: 1,
            n_max: 10,
            seed: 0,
            regressor: RegressorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub individual_r2: f64,
    pub shapley_delta_r2: f64,
    pub n_evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    /// Sorted by descending `shapley_delta_r2`.
    pub features: Vec<FeatureImportance>,
    pub config: ShapleyConfig,
    pub skipped_iterations: usize,
}

impl ImportanceReport {
    pub fn rank_of(&self, feature: &str) -> Option<usize> {
        self.features.iter().position(|f| f.feature == feature)
    }

    pub fn get(&self, feature: &str) -> Option<&FeatureImportance> {
        self.features.iter().find(|f| f.feature == feature)
    }

    /// Two-column-group layout: feature, individual R², Shapley ΔR².
    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["feature", "individual_r2", "shapley_delta_r2", "n_evaluations"])?;
        for f in &self.features {
            w.write_record([
                f.feature.clone(),
                format!("{:.6}", f.individual_r2),
                format!("{:.6}", f.shapley_delta_r2),
                f.n_evaluations.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Column-major view of a standardized dataset with a reusable Gram buffer.
struct Workspace<'a> {
    cols: Vec<&'a [f64]>,
    n: usize,
    yc: Vec<f64>,
    ss_tot: f64,
}

impl Workspace<'_> {
    /// Lower triangle of pairwise squared distances over `features`.
    fn sq_dist(&self, features: &[usize], out: &mut [f64]) {
        let n = self.n;
        out.fill(0.0);
        for &f in features {
            let x = self.cols[f];
            for i in 0..n {
                let xi = x[i];
                let row = &mut out[i * n..i * n + i];
                for (o, &xj) in row.iter_mut().zip(&x[..i]) {
                    let d = xi - xj;
                    *o += d * d;
                }
            }
        }
    }

    /// Ridge R² using the base distances plus optionally one extra column.
    fn ridge_r2(&self, base: &[f64], extra: Option<usize>, n_features: usize, cfg: &RegressorConfig, sys: &mut [f64]) -> Option<f64> {
        let n = self.n;
        let gamma = cfg.gamma_for(n_features);
        for i in 0..n {
            let src = &base[i * n..i * n + i];
            let dst = &mut sys[i * n..i * n + i];
            match extra {
                Some(f) => {
                    let x = self.cols[f];
                    let xi = x[i];
                    for ((o, &d), &xj) in dst.iter_mut().zip(src).zip(&x[..i]) {
                        let e = xi - xj;
                        *o = (-gamma * (d + e * e)).exp();
                    }
                }
                None => {
                    for (o, &d) in dst.iter_mut().zip(src) {
                        *o = (-gamma * d).exp();
                    }
                }
            }
            sys[i * n + i] = 1.0 + cfg.lambda;
        }
        ridge_r2_from_system(sys, n, cfg.lambda, &self.yc, self.ss_tot)
    }
}

/// Sampled Shapley-style importance: each iteration fits a random base set
/// of N features, then measures the R² gain of appending each remaining
/// feature on its own. Iteration `i` draws from a generator seeded with
/// `seed + i`, so results do not depend on the number of threads.
/// Columns are standardized first.
pub fn shapley_importance(ds: &Dataset, cfg: &ShapleyConfig) -> Result<ImportanceReport, StatsError> {
    let (std_ds, dropped) = ds.standardized();
    if !dropped.is_empty() {
        log::warn!("importance: dropped constant columns {dropped:?}");
    }
    let p = std_ds.n_features();
    let n = std_ds.n_samples();
    if cfg.n_min == 0 || cfg.n_min > cfg.n_max || p <= cfg.n_max {
        return Err(StatsError::TooFewFeatures {
            needed: cfg.n_max.max(cfg.n_min),
            got: p,
        });
    }
    if n < super::regress::MIN_FIT_SAMPLES {
        return Err(StatsError::TooFewSamples {
            needed: super::regress::MIN_FIT_SAMPLES,
            got: n,
        });
    }
    let columns: Vec<Vec<f64>> = (0..p).map(|c| std_ds.x.column(c)).collect();
    let ybar = std_ds.y.iter().sum::<f64>() / n as f64;
    let yc: Vec<f64> = std_ds.y.iter().map(|v| v - ybar).collect();
    let ws = Workspace {
        cols: columns.iter().map(Vec::as_slice).collect(),
        n,
        ss_tot: yc.iter().map(|v| v * v).sum(),
        yc,
    };

    let per_iteration: Vec<Option<Vec<(usize, f64)>>> = (0..cfg.iterations)
        .into_par_iter()
        .map_init(
            || (vec![0.0; n * n], vec![0.0; n * n]),
            |(base, sys), it| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(it as u64));
                let k = rng.gen_range(cfg.n_min..=cfg.n_max);
                let chosen = sample(&mut rng, p, k).into_vec();
                let mut in_base = vec![false; p];
                chosen.iter().for_each(|&c| in_base[c] = true);
                let rest = (0..p).filter(|&c| !in_base[c]);
                match cfg.regressor.kind {
                    RegressorKind::RbfKernelRidge => {
                        ws.sq_dist(&chosen, base);
                        let r0 = ws.ridge_r2(base, None, k, &cfg.regressor, sys)?;
                        rest.map(|c| Some((c, ws.ridge_r2(base, Some(c), k + 1, &cfg.regressor, sys)? - r0)))
                            .collect()
                    }
                    RegressorKind::EpsilonSvr => {
                        let r0 = in_sample_r2(&std_ds.select(&chosen), &cfg.regressor).ok()?;
                        rest.map(|c| {
                            let mut cols = chosen.clone();
                            cols.push(c);
                            Some((c, in_sample_r2(&std_ds.select(&cols), &cfg.regressor).ok()? - r0))
                        })
                        .collect()
                    }
                }
            },
        )
        .collect();

    let mut sums = vec![0.0; p];
    let mut counts = vec![0usize; p];
    let mut skipped = 0;
    for result in &per_iteration {
        match result {
            Some(deltas) => {
                for &(c, d) in deltas {
                    sums[c] += d;
                    counts[c] += 1;
                }
            }
            None => skipped += 1,
        }
    }
    if skipped > 0 {
        log::warn!("importance: {skipped} iteration(s) skipped after failed fits");
    }

    let individual = single_feature_r2(&std_ds, &cfg.regressor);
    let mut features: Vec<FeatureImportance> = (0..p)
        .filter(|&c| counts[c] > 0)
        .map(|c| FeatureImportance {
            feature: std_ds.names[c].clone(),
            individual_r2: individual[c].1.clone().unwrap_or(f64::NAN),
            shapley_delta_r2: sums[c] / counts[c] as f64,
            n_evaluations: counts[c],
        })
        .collect();
    features.sort_by(|a, b| {
        b.shapley_delta_r2
            .total_cmp(&a.shapley_delta_r2)
            .then_with(|| a.feature.cmp(&b.feature))
    });
    Ok(ImportanceReport {
        features,
        config: cfg.clone(),
        skipped_iterations: skipped,
    })
}
