use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{score_sounds, ExperimentError, Game, SoundScore};
use crate::stats::spearman;

/// Spearman correlations between the two halves of each split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reliability {
    pub memorability: Vec<f64>,
    pub confusability: Vec<f64>,
}

impl Reliability {
    pub fn mean_memorability(&self) -> f64 {
        mean(&self.memorability)
    }

    pub fn mean_confusability(&self) -> f64 {
        mean(&self.confusability)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn rank_agreement(a: &[&Game], b: &[&Game], pick: fn(&SoundScore) -> Option<f64>) -> f64 {
    let sa = score_sounds(a.iter().copied());
    let sb = score_sounds(b.iter().copied());
    let (xa, xb): (Vec<f64>, Vec<f64>) = sa
        .iter()
        .filter_map(|(id, s)| Some((pick(s)?, pick(sb.get(id)?)?)))
        .unzip();
    spearman(&xa, &xb)
}

/// `(memorability ρ, confusability ρ)` between the scores of two game sets,
/// over sounds scored in both.
pub fn half_rank_correlation(a: &[&Game], b: &[&Game]) -> (f64, f64) {
    (
        rank_agreement(a, b, |s| s.normalized),
        rank_agreement(a, b, |s| s.c10),
    )
}

/// Repeatedly splits the workers into two random halves and correlates the
/// per-sound rankings obtained from each half. A worker's rounds always
/// stay together.
pub fn split_rank_reliability(games: &[Game], n_splits: usize, seed: u64) -> Result<Reliability, ExperimentError> {
    let workers: Vec<&str> = games
        .iter()
        .map(|g| g.log.worker_id.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if workers.len() < 2 {
        return Err(ExperimentError::NotSplittable(format!(
            "{} distinct worker(s)",
            workers.len()
        )));
    }
    if n_splits == 0 {
        return Err(ExperimentError::NotSplittable("zero splits requested".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Reliability {
        memorability: Vec::with_capacity(n_splits),
        confusability: Vec::with_capacity(n_splits),
    };
    for _ in 0..n_splits {
        let mut order = workers.clone();
        order.shuffle(&mut rng);
        let first: BTreeSet<&str> = order[..order.len() / 2].iter().copied().collect();
        let (a, b): (Vec<&Game>, Vec<&Game>) = games
            .iter()
            .partition(|g| first.contains(g.log.worker_id.as_str()));
        let (m, c) = half_rank_correlation(&a, &b);
        out.memorability.push(m);
        out.confusability.push(c);
    }
    Ok(out)
}
