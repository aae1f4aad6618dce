//! Offline commands. Every analysis reads the JSONL event log through the
//! same replay used by the live service.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use soundmem_core::audio::decode_audio;
use soundmem_core::context::{evaluate_context, ContextEvalConfig, ExperimentGrid};
use soundmem_core::events::{games_to_events, read_events, replay_events, write_events};
use soundmem_core::experiment::{read_scores_csv, score_sounds, split_rank_reliability, write_scores_csv, Game, PlanConfig, Reliability, SoundScores};
use soundmem_core::features::{build_feature_table, ingest_high_level, FeatureConfig, FeatureTable, HighLevelRatings};
use soundmem_core::grid::Matrix;
use soundmem_core::simulant::{games_for_target_count, planted_truth, simulate_games, SimulantProfile};
use soundmem_core::stats::{shapley_importance, Dataset, ImportanceReport, RegressorConfig, RegressorKind, ShapleyConfig};

use crate::manifest::PoolManifest;

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

/// Finished rounds reconstructed from an event log.
pub fn load_games(events: &Path) -> Result<Vec<Game>> {
    let records = read_events(open(events)?)?;
    let replay = replay_events(&records)?;
    Ok(replay.finished_games())
}

#[derive(Debug, Clone)]
pub struct SimulateArgs {
    pub pool: Vec<String>,
    pub games_per_sound: usize,
    pub recall: (f64, f64),
    pub confuse: (f64, f64),
    pub p_vigilance: f64,
    pub seed: u64,
}

/// Simulates planted participants and writes the event log plus a truth
/// table (`sound_id,p_recall,p_confuse,planted_rank`).
pub fn simulate(args: &SimulateArgs, events_out: &Path, truth_out: Option<&Path>) -> Result<usize> {
    let cfg = PlanConfig::default();
    let profile = SimulantProfile::planted(&args.pool, args.recall, args.confuse, args.p_vigilance, args.seed);
    let n_games = games_for_target_count(args.pool.len(), args.games_per_sound, &cfg);
    let games = simulate_games(&args.pool, &profile, n_games, args.seed, &cfg)?;
    write_events(&games_to_events(&games, 0), create(events_out)?)?;
    if let Some(path) = truth_out {
        let mut w = csv::Writer::from_writer(create(path)?);
        w.write_record(["sound_id", "p_recall", "p_confuse", "planted_rank"])?;
        for (rank, id) in planted_truth(&profile).iter().enumerate() {
            let s = profile.sounds[id];
            w.write_record([id.clone(), s.p_recall.to_string(), s.p_confuse.to_string(), (rank + 1).to_string()])?;
        }
        w.flush()?;
    }
    Ok(games.len())
}

pub fn extract_features(manifest: &PoolManifest, ratings: Option<&Path>, out: &Path) -> Result<FeatureTable> {
    let mut clips = Vec::with_capacity(manifest.ids.len());
    for id in &manifest.ids {
        let path = &manifest.paths[id];
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        match decode_audio(id.clone(), &bytes) {
            Ok(clip) => clips.push(clip),
            Err(e) => log::warn!("skipping {id}: {e}"),
        }
    }
    let ratings = match ratings {
        Some(p) => ingest_high_level(open(p)?)?,
        None => HighLevelRatings::default(),
    };
    let table = build_feature_table(&clips, &ratings, &FeatureConfig::default())?;
    table.write_csv(create(out)?)?;
    Ok(table)
}

pub fn score(events: &Path, out: &Path) -> Result<SoundScores> {
    let scores = score_sounds(&load_games(events)?);
    write_scores_csv(&scores, create(out)?)?;
    Ok(scores)
}

pub fn reliability(events: &Path, n_splits: usize, seed: u64, out: &Path) -> Result<Reliability> {
    let rel = split_rank_reliability(&load_games(events)?, n_splits, seed)?;
    let mut w = csv::Writer::from_writer(create(out)?);
    w.write_record(["split", "memorability_rho", "confusability_rho"])?;
    for (i, (m, c)) in rel.memorability.iter().zip(&rel.confusability).enumerate() {
        w.write_record([i.to_string(), format!("{m:.6}"), format!("{c:.6}")])?;
    }
    w.write_record(["mean".to_string(), format!("{:.6}", rel.mean_memorability()), format!("{:.6}", rel.mean_confusability())])?;
    w.flush()?;
    Ok(rel)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreTarget {
    Normalized,
    Memorability,
    Confusability,
}

impl std::str::FromStr for ScoreTarget {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "normalized" => Ok(Self::Normalized),
            "m" | "memorability" => Ok(Self::Memorability),
            "c10" | "confusability" => Ok(Self::Confusability),
            other => Err(format!("unknown target {other}; use normalized, m or c10")),
        }
    }
}

/// Joins features with one score column over sounds that have both, skipping
/// the extraction-failure flag column.
pub fn importance_dataset(table: &FeatureTable, scores: &SoundScores, target: ScoreTarget) -> Result<Dataset> {
    let cols: Vec<usize> = table
        .columns()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.name != soundmem_core::features::SILENT_COLUMN)
        .map(|(i, _)| i)
        .collect();
    let mut xs = Vec::new();
    let mut y = Vec::new();
    for (id, s) in scores {
        let value = match target {
            ScoreTarget::Normalized => s.normalized,
            ScoreTarget::Memorability => s.m,
            ScoreTarget::Confusability => s.c10,
        };
        if let (Some(v), Some(row)) = (value, table.complete_values(id, &cols)) {
            xs.extend(row);
            y.push(v);
        }
    }
    if y.is_empty() {
        bail!("no sound has both a complete feature row and a score");
    }
    let names = cols.iter().map(|&c| table.columns()[c].name.clone()).collect();
    Ok(Dataset::new(names, Matrix::from_vec(y.len(), cols.len(), xs), y)?)
}

pub fn shapley(features: &Path, scores: &Path, target: ScoreTarget, cfg: &ShapleyConfig, out: &Path) -> Result<ImportanceReport> {
    let table = FeatureTable::read_csv(open(features)?)?;
    let scores = read_scores_csv(open(scores)?)?;
    let ds = importance_dataset(&table, &scores, target)?;
    let report = shapley_importance(&ds, cfg)?;
    report.write_csv(create(out)?)?;
    Ok(report)
}

pub fn regressor_kind(name: &str) -> Result<RegressorConfig> {
    match name {
        "ridge" => Ok(RegressorConfig::default()),
        "svr" => Ok(RegressorConfig {
            kind: RegressorKind::EpsilonSvr,
            ..RegressorConfig::default()
        }),
        other => bail!("unknown regressor {other}; use ridge or svr"),
    }
}

pub fn context_eval(events: &Path, features: &Path, cfg: &ContextEvalConfig, out: &Path) -> Result<ExperimentGrid> {
    let games = load_games(events)?;
    let table = FeatureTable::read_csv(open(features)?)?;
    let pool: Vec<String> = table.rows().iter().map(|r| r.sound_id.clone()).collect();
    let grid = evaluate_context(&games, &table, &pool, cfg)?;
    grid.write_csv(create(out)?)?;
    Ok(grid)
}

/// Histogram counts of M and C10 over `[0, 1]`, one row per bin.
pub fn score_histograms(scores: &SoundScores, bins: usize) -> Vec<(f64, f64, usize, usize)> {
    let bins = bins.max(1);
    let mut m = vec![0usize; bins];
    let mut c = vec![0usize; bins];
    let bin_of = |v: f64| ((v * bins as f64).floor() as usize).min(bins - 1);
    for s in scores.values() {
        if let Some(v) = s.m {
            m[bin_of(v)] += 1;
        }
        if let Some(v) = s.c10 {
            c[bin_of(v)] += 1;
        }
    }
    (0..bins)
        .map(|b| (b as f64 / bins as f64, (b + 1) as f64 / bins as f64, m[b], c[b]))
        .collect()
}

pub fn report(scores: &Path, bins: usize, out: &Path) -> Result<()> {
    let scores = read_scores_csv(open(scores)?)?;
    let mut w = csv::Writer::from_writer(create(out)?);
    w.write_record(["bin_lo", "bin_hi", "memorability_count", "confusability_count"])?;
    for (lo, hi, m, c) in score_histograms(&scores, bins) {
        w.write_record([format!("{lo:.4}"), format!("{hi:.4}"), m.to_string(), c.to_string()])?;
    }
    w.flush()?;
    let mut stderr = std::io::stderr();
    let mean = |f: fn(&soundmem_core::experiment::SoundScore) -> Option<f64>| {
        let v: Vec<f64> = scores.values().filter_map(f).collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    };
    writeln!(stderr, "sounds: {}, mean M {:.3}, mean C10 {:.3}", scores.len(), mean(|s| s.m), mean(|s| s.c10))?;
    Ok(())
}
