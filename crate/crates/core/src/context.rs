//! Per-game recall prediction: each target presentation becomes an example
//! whose features are the target's own values plus their standing relative
//! to the sounds heard just before it.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::experiment::{validate_session, Game, SoundScores};
use crate::features::{ColumnTag, FeatureTable};
use crate::grid::Matrix;
use crate::stats::{self, cross_validate, CvConfig, Dataset, RegressorConfig, StatsError};

/// Context of one sound (echoic) or five (working memory).
pub const CONTEXT_LENGTHS: [usize; 2] = [1, 5];

/// Standing of a target value against its context values. With one context
/// sound the spread is undefined and `z` is the signed difference; a
/// context with zero spread gives `z = 0` and sets `zero_std`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContextScore {
    pub diff: f64,
    pub z: f64,
    pub zero_std: bool,
}

pub fn context_score(target: f64, context: &[f64]) -> ContextScore {
    let k = context.len() as f64;
    let mean = context.iter().sum::<f64>() / k;
    let diff = target - mean;
    if context.len() == 1 {
        return ContextScore {
            diff,
            z: diff,
            zero_std: false,
        };
    }
    let std = stats::population_std(context);
    if std > 0.0 {
        ContextScore {
            diff,
            z: diff / std,
            zero_std: false,
        }
    } else {
        ContextScore {
            diff,
            z: 0.0,
            zero_std: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameExample {
    pub game_id: String,
    pub target: String,
    pub target_first: usize,
    pub recalled: bool,
    pub context_ids: Vec<String>,
    /// The target's feature values, in [`ExampleSet::feature_names`] order.
    pub absolute: Vec<f64>,
    pub context_diff: Vec<f64>,
    pub context_z: Vec<f64>,
    /// Set when any feature's context had zero spread.
    pub zero_std: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExampleSet {
    pub k: usize,
    pub feature_names: Vec<String>,
    pub feature_tags: Vec<ColumnTag>,
    pub examples: Vec<GameExample>,
    /// Targets whose first presentation came before `k` other sounds.
    pub skipped_early: usize,
    /// Targets or context sounds without a complete feature row.
    pub skipped_missing: usize,
    pub band: (f64, f64),
}

/// Linear-interpolated percentile (`q` in 0..=100) of unsorted values.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Feature columns used for per-game models: every column except flags.
fn model_columns(table: &FeatureTable) -> Vec<usize> {
    table
        .columns()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.name != crate::features::SILENT_COLUMN)
        .map(|(i, _)| i)
        .collect()
}

struct Rows<'a> {
    table: &'a FeatureTable,
    cols: Vec<usize>,
    cache: HashMap<&'a str, Option<Vec<f64>>>,
}

impl<'a> Rows<'a> {
    fn get(&mut self, id: &'a str) -> Option<&Vec<f64>> {
        let (table, cols) = (self.table, &self.cols);
        self.cache
            .entry(id)
            .or_insert_with(|| table.complete_values(id, cols))
            .as_ref()
    }
}

fn make_example(
    game_id: &str,
    target: &str,
    target_first: usize,
    recalled: bool,
    context_ids: Vec<String>,
    target_row: &[f64],
    context_rows: &[&Vec<f64>],
) -> GameExample {
    let mut diff = Vec::with_capacity(target_row.len());
    let mut z = Vec::with_capacity(target_row.len());
    let mut zero_std = false;
    let mut ctx = vec![0.0; context_rows.len()];
    for (f, &t) in target_row.iter().enumerate() {
        for (slot, row) in ctx.iter_mut().zip(context_rows) {
            *slot = row[f];
        }
        let s = context_score(t, &ctx);
        diff.push(s.diff);
        z.push(s.z);
        zero_std |= s.zero_std;
    }
    GameExample {
        game_id: game_id.to_string(),
        target: target.to_string(),
        target_first,
        recalled,
        context_ids,
        absolute: target_row.to_vec(),
        context_diff: diff,
        context_z: z,
        zero_std,
    }
}

/// One example per target pair of every accepted game whose target's
/// normalized score lies outside the `band` percentiles. Examples come out
/// sorted by game id and position, whatever the input order.
pub fn build_game_examples(
    games: &[Game],
    table: &FeatureTable,
    scores: &SoundScores,
    k: usize,
    band: (f64, f64),
) -> ExampleSet {
    let cols = model_columns(table);
    let normalized: Vec<f64> = scores.values().filter_map(|s| s.normalized).collect();
    let (lo, hi) = if normalized.is_empty() {
        (f64::NEG_INFINITY, f64::INFINITY)
    } else {
        (percentile(&normalized, band.0), percentile(&normalized, band.1))
    };
    let in_band = |id: &str| {
        scores
            .get(id)
            .and_then(|s| s.normalized)
            .is_some_and(|v| v <= lo || v >= hi)
    };
    let mut rows = Rows {
        table,
        cols: cols.clone(),
        cache: HashMap::new(),
    };
    let mut order: Vec<&Game> = games.iter().collect();
    order.sort_by(|a, b| a.plan.session_id.cmp(&b.plan.session_id));

    let mut set = ExampleSet {
        k,
        feature_names: cols.iter().map(|&c| table.columns()[c].name.clone()).collect(),
        feature_tags: cols.iter().map(|&c| table.columns()[c].tag).collect(),
        band: (lo, hi),
        ..Default::default()
    };
    for game in order {
        if !validate_session(&game.plan, &game.log).is_ok_and(|v| v.accepted) {
            continue;
        }
        for (first, second) in game.plan.target_pairs() {
            let target = game.plan.slots[first].sound_id.as_str();
            if !in_band(target) {
                continue;
            }
            if first < k {
                set.skipped_early += 1;
                continue;
            }
            let context_ids: Vec<&str> = game.plan.slots[first - k..first]
                .iter()
                .map(|s| s.sound_id.as_str())
                .collect();
            let Some(target_row) = rows.get(target).cloned() else {
                set.skipped_missing += 1;
                continue;
            };
            let context_rows: Option<Vec<Vec<f64>>> = context_ids.iter().map(|id| rows.get(id).cloned()).collect();
            let Some(context_rows) = context_rows else {
                set.skipped_missing += 1;
                continue;
            };
            let refs: Vec<&Vec<f64>> = context_rows.iter().collect();
            set.examples.push(make_example(
                &game.plan.session_id,
                target,
                first,
                game.log.clicks.contains(&second),
                context_ids.iter().map(|s| s.to_string()).collect(),
                &target_row,
                &refs,
            ));
        }
    }
    set
}

/// The same examples with each context replaced by `k` sounds drawn
/// uniformly without replacement from `pool` minus the target. Pool sounds
/// without a complete feature row are never drawn.
pub fn noise_baseline_examples(set: &ExampleSet, table: &FeatureTable, pool: &[String], seed: u64) -> ExampleSet {
    let cols = model_columns(table);
    let usable: Vec<(&str, Vec<f64>)> = pool
        .iter()
        .filter_map(|id| Some((id.as_str(), table.complete_values(id, &cols)?)))
        .collect();
    let examples = set
        .examples
        .iter()
        .enumerate()
        .map(|(i, ex)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let candidates: Vec<&(&str, Vec<f64>)> = usable.iter().filter(|(id, _)| *id != ex.target).collect();
            let picks = sample(&mut rng, candidates.len(), set.k.min(candidates.len()));
            let chosen: Vec<&(&str, Vec<f64>)> = picks.iter().map(|p| candidates[p]).collect();
            let refs: Vec<&Vec<f64>> = chosen.iter().map(|(_, row)| row).collect();
            make_example(
                &ex.game_id,
                &ex.target,
                ex.target_first,
                ex.recalled,
                chosen.iter().map(|(id, _)| id.to_string()).collect(),
                &ex.absolute,
                &refs,
            )
        })
        .collect();
    ExampleSet {
        examples,
        ..set.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    AbsoluteOnly,
    AbsolutePlusAllContext,
    AbsolutePlusTop50Context,
    ContextOnly,
    ContextOnlyNoiseBaseline,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 5] = [
        FeatureSet::AbsoluteOnly,
        FeatureSet::AbsolutePlusAllContext,
        FeatureSet::AbsolutePlusTop50Context,
        FeatureSet::ContextOnly,
        FeatureSet::ContextOnlyNoiseBaseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureSet::AbsoluteOnly => "absolute_only",
            FeatureSet::AbsolutePlusAllContext => "absolute_plus_all_context",
            FeatureSet::AbsolutePlusTop50Context => "absolute_plus_top50_context",
            FeatureSet::ContextOnly => "context_only",
            FeatureSet::ContextOnlyNoiseBaseline => "context_only_noise_baseline",
        }
    }

    pub fn uses_context(self) -> bool {
        self != FeatureSet::AbsoluteOnly
    }
}

/// Chooses the context features for the reduced variant: the best
/// `n_high` high-level and `n_low` other features by individual R² against
/// the per-sound normalized score. Returns positions in
/// [`ExampleSet::feature_names`] order.
pub fn select_top_features(
    table: &FeatureTable,
    scores: &SoundScores,
    n_high: usize,
    n_low: usize,
    cfg: &RegressorConfig,
) -> Result<Vec<usize>, StatsError> {
    let cols = model_columns(table);
    let mut xs = Vec::new();
    let mut y = Vec::new();
    for (id, s) in scores {
        if let (Some(v), Some(row)) = (s.normalized, table.complete_values(id, &cols)) {
            xs.extend(row);
            y.push(v);
        }
    }
    let names: Vec<String> = cols.iter().map(|&c| table.columns()[c].name.clone()).collect();
    let ds = Dataset::new(names, Matrix::from_vec(y.len(), cols.len(), xs), y)?;
    let (std_ds, _) = ds.standardized();
    let r2: BTreeMap<String, f64> = stats::single_feature_r2(&std_ds, cfg)
        .into_iter()
        .map(|(name, r)| (name, r.unwrap_or(f64::NEG_INFINITY)))
        .collect();
    let mut ranked: Vec<(usize, f64, bool)> = cols
        .iter()
        .enumerate()
        .map(|(pos, &c)| {
            let col = &table.columns()[c];
            (pos, r2.get(&col.name).copied().unwrap_or(f64::NEG_INFINITY), col.tag.is_high_level())
        })
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let n_high_avail = ranked.iter().filter(|r| r.2).count();
    let n_low_avail = ranked.len() - n_high_avail;
    // a short group's unused quota goes to the other group
    let take_high = n_high.min(n_high_avail) + n_low.saturating_sub(n_low_avail);
    let take_low = n_low.min(n_low_avail) + n_high.saturating_sub(n_high_avail);
    let high = ranked.iter().filter(|r| r.2).take(take_high);
    let low = ranked.iter().filter(|r| !r.2).take(take_low);
    let mut chosen: Vec<usize> = high.chain(low).map(|r| r.0).collect();
    chosen.sort_unstable();
    Ok(chosen)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub feature_set: FeatureSet,
    pub k: usize,
    pub n_examples: usize,
    pub n_features: usize,
    pub holdout_accuracy: f64,
    pub mean_fold_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExperimentGrid {
    pub rows: Vec<GridRow>,
}

impl ExperimentGrid {
    pub fn accuracy(&self, set: FeatureSet, k: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.feature_set == set && r.k == k)
            .map(|r| r.holdout_accuracy)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "feature_set",
            "context_length",
            "n_examples",
            "n_features",
            "holdout_accuracy",
            "mean_fold_accuracy",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.feature_set.name().to_string(),
                r.k.to_string(),
                r.n_examples.to_string(),
                r.n_features.to_string(),
                format!("{:.4}", r.holdout_accuracy),
                format!("{:.4}", r.mean_fold_accuracy),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// True and noise-baseline examples for one context length.
#[derive(Debug, Clone)]
pub struct GridInput {
    pub true_context: ExampleSet,
    pub noise_context: ExampleSet,
}

fn design_matrix(set: &ExampleSet, feature_set: FeatureSet, top: &[usize]) -> (Matrix, Vec<bool>) {
    let rows: Vec<Vec<f64>> = set
        .examples
        .iter()
        .map(|ex| match feature_set {
            FeatureSet::AbsoluteOnly => ex.absolute.clone(),
            FeatureSet::AbsolutePlusAllContext => [ex.absolute.as_slice(), &ex.context_z].concat(),
            FeatureSet::AbsolutePlusTop50Context => {
                let mut r = ex.absolute.clone();
                r.extend(top.iter().map(|&f| ex.context_z[f]));
                r
            }
            FeatureSet::ContextOnly | FeatureSet::ContextOnlyNoiseBaseline => ex.context_z.clone(),
        })
        .collect();
    let width = rows.first().map_or(0, Vec::len);
    let labels = set.examples.iter().map(|e| e.recalled).collect();
    (Matrix::from_vec(rows.len(), width, rows.concat()), labels)
}

/// Every feature set for every context length, each scored with the same
/// cross-validation protocol.
pub fn run_experiment_grid(inputs: &[GridInput], top: &[usize], cv: &CvConfig) -> Result<ExperimentGrid, StatsError> {
    let jobs: Vec<(usize, FeatureSet)> = (0..inputs.len())
        .flat_map(|i| FeatureSet::ALL.into_iter().map(move |f| (i, f)))
        .collect();
    let rows: Result<Vec<GridRow>, StatsError> = jobs
        .par_iter()
        .map(|&(i, fs)| {
            let set = if fs == FeatureSet::ContextOnlyNoiseBaseline {
                &inputs[i].noise_context
            } else {
                &inputs[i].true_context
            };
            let (x, labels) = design_matrix(set, fs, top);
            let result = cross_validate(&x, &labels, cv)?;
            Ok(GridRow {
                feature_set: fs,
                k: set.k,
                n_examples: labels.len(),
                n_features: x.cols(),
                holdout_accuracy: result.holdout_accuracy,
                mean_fold_accuracy: result.mean_fold_accuracy(),
            })
        })
        .collect();
    Ok(ExperimentGrid { rows: rows? })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextEvalConfig {
    /// Percentiles of the normalized score; sounds strictly between are dropped.
    pub band: (f64, f64),
    pub n_high: usize,
    pub n_low: usize,
    pub cv: CvConfig,
    pub regressor: RegressorConfig,
    pub seed: u64,
}

impl Default for ContextEvalConfig {
    fn default() -> Self {
        Self {
            band: (15.0, 85.0),
            n_high: 25,
            n_low: 25,
            cv: CvConfig::default(),
            regressor: RegressorConfig::default(),
            seed: 0,
        }
    }
}

/// Scores the games, picks the reduced feature set and runs the full grid
/// over both context lengths.
pub fn evaluate_context(games: &[Game], table: &FeatureTable, pool: &[String], cfg: &ContextEvalConfig) -> Result<ExperimentGrid, StatsError> {
    let scores = crate::experiment::score_sounds(games);
    let top = select_top_features(table, &scores, cfg.n_high, cfg.n_low, &cfg.regressor)?;
    let inputs: Vec<GridInput> = CONTEXT_LENGTHS
        .iter()
        .map(|&k| {
            let true_context = build_game_examples(games, table, &scores, k, cfg.band);
            let noise_context = noise_baseline_examples(&true_context, table, pool, cfg.seed.wrapping_add(k as u64));
            GridInput {
                true_context,
                noise_context,
            }
        })
        .collect();
    let cv = CvConfig {
        seed: cfg.seed,
        ..cfg.cv.clone()
    };
    run_experiment_grid(&inputs, &top, &cv)
}
