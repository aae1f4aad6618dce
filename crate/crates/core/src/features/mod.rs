//! Low-level acoustic features, salience summaries and ingested high-level
//! ratings, merged into one [`FeatureTable`] row per sound.

pub mod energy;
pub mod flux;
pub mod pitch;
pub mod ratings;
pub mod spectral;
pub mod table;
pub mod timbral;

use rayon::prelude::*;
use thiserror::Error;

use crate::audio::{self, AudioClip, AudioError};
use crate::salience::{self, SalienceConfig, SalienceError};

pub use energy::{energy_and_hpss, EnergyStats};
pub use flux::{subband_flux_stats, BandFlux};
pub use pitch::pitch_diversity;
pub use ratings::{ingest_high_level, HighLevelRatings, Rating, RATING_COLUMNS};
pub use spectral::{spectral_stats, SpectralStats};
pub use table::{Column, ColumnTag, FeatureRow, FeatureTable};
pub use timbral::{timbral_stats, TimbralStats};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("missing required column {0}")]
    Schema(String),
    #[error("duplicate key {0}")]
    DuplicateKey(String),
    #[error("duplicate column {0}")]
    DuplicateColumn(String),
    #[error("row {sound_id} has {got} values, expected {expected}")]
    RowWidth {
        sound_id: String,
        expected: usize,
        got: usize,
    },
    #[error("{0}")]
    Parse(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Salience(#[from] SalienceError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub window_len: usize,
    pub hop: usize,
    pub n_flux_bands: usize,
    pub floor_db: f64,
    pub salience: SalienceConfig,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            window_len: audio::DEFAULT_WINDOW,
            hop: audio::DEFAULT_HOP,
            n_flux_bands: 4,
            floor_db: audio::DEFAULT_FLOOR_DB,
            salience: SalienceConfig::default(),
        }
    }
}

/// Flag column set to 1 when the clip carries no energy.
pub const SILENT_COLUMN: &str = "silent";

/// Column layout produced by [`build_feature_table`]: low-level, then
/// salience, then high-level.
pub fn feature_columns(cfg: &FeatureConfig) -> Vec<Column> {
    let mut names: Vec<String> = SpectralStats::default()
        .fragment()
        .iter()
        .map(|(n, _)| n.to_string())
        .collect();
    names.extend(flux::flux_feature_names(cfg.n_flux_bands));
    names.extend(EnergyStats::default().fragment().iter().map(|(n, _)| n.to_string()));
    names.push("pitch_diversity".into());
    names.extend(TimbralStats::default().fragment().iter().map(|(n, _)| n.to_string()));
    names.push(SILENT_COLUMN.into());
    let mut columns: Vec<Column> = names
        .into_iter()
        .map(|n| Column::new(n, ColumnTag::LowLevel))
        .collect();
    columns.extend(
        salience::summary_keys()
            .into_iter()
            .map(|n| Column::new(n, ColumnTag::Salience)),
    );
    columns.extend(RATING_COLUMNS.iter().map(|n| Column::new(*n, ColumnTag::HighLevel)));
    columns
}

/// Computed (low-level and salience) features of one clip, in
/// [`feature_columns`] order minus the high-level tail.
pub fn extract_clip_features(clip: &AudioClip, cfg: &FeatureConfig) -> Result<Vec<f64>, FeatureError> {
    let clip = clip.resampled(audio::TARGET_SAMPLE_RATE);
    let spec = audio::stft_magnitude(&clip, cfg.window_len, cfg.hop)?;
    let spectral = spectral_stats(&spec);
    let flux = subband_flux_stats(&spec, cfg.n_flux_bands);
    let energy = energy_and_hpss(&spec);
    let timbre = timbral_stats(&clip);
    let maps = salience::salience_maps(&audio::log_compress(&spec, cfg.floor_db), &cfg.salience)?;
    let summary = salience::salience_summary(&maps);

    let mut out: Vec<f64> = spectral.fragment().iter().map(|(_, v)| *v).collect();
    for b in &flux {
        out.push(b.avg_flux);
        out.push(b.flux_entropy);
    }
    out.extend(energy.fragment().iter().map(|(_, v)| *v));
    out.push(pitch_diversity(&clip));
    out.extend(timbre.fragment().iter().map(|(_, v)| *v));
    out.push(if spectral.silent || energy.silent { 1.0 } else { 0.0 });
    out.extend(salience::summary_keys().iter().map(|k| summary[k]));
    Ok(out)
}

/// Extracts every clip in parallel and joins with the ratings by sound id.
/// Rows are ordered by sound id; a failing clip keeps all computed cells
/// missing and records its error.
pub fn build_feature_table(
    clips: &[AudioClip],
    ratings: &HighLevelRatings,
    cfg: &FeatureConfig,
) -> Result<FeatureTable, FeatureError> {
    let mut seen = std::collections::HashSet::new();
    for c in clips {
        if !seen.insert(c.id.as_str()) {
            return Err(FeatureError::DuplicateKey(c.id.clone()));
        }
    }
    let columns = feature_columns(cfg);
    let n_computed = columns.iter().filter(|c| !c.tag.is_high_level()).count();
    let mut extracted: Vec<(String, Result<Vec<f64>, String>)> = clips
        .par_iter()
        .map(|clip| {
            let result = extract_clip_features(clip, cfg).map_err(|e| e.to_string());
            (clip.id.clone(), result)
        })
        .collect();
    extracted.sort_by(|a, b| a.0.cmp(&b.0));

    let mut table = FeatureTable::new(columns)?;
    for (id, result) in extracted {
        let mut values: Vec<Option<f64>> = match result {
            Ok(v) => v.into_iter().map(Some).collect(),
            Err(e) => {
                log::warn!("feature extraction failed for {id}: {e}");
                table.errors.insert(id.clone(), e);
                vec![None; n_computed]
            }
        };
        match ratings.get(&id) {
            Some(r) => values.extend(r.values.iter().map(|v| Some(*v))),
            None => values.extend(std::iter::repeat(None).take(RATING_COLUMNS.len())),
        }
        table.push_row(id, values)?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    fn ratings_for(ids: &[&str]) -> HighLevelRatings {
        let mut r = HighLevelRatings::default();
        for (i, id) in ids.iter().enumerate() {
            r.ratings.insert(
                id.to_string(),
                Rating {
                    sound_id: id.to_string(),
                    values: [i as f64 + 1.0; 9],
                },
            );
        }
        r
    }

    #[test]
    fn join_keeps_unrated_rows_with_missing_high_level() {
        let clips = vec![synth::texture("b", 1.0, 1), synth::texture("a", 1.0, 2)];
        let table = build_feature_table(&clips, &ratings_for(&["a"]), &FeatureConfig::default()).unwrap();
        assert_eq!(table.len(), 2);
        assert_eq!(table.rows()[0].sound_id, "a");
        let hcu = table.column_index("Hcu").unwrap();
        assert_eq!(table.rows()[0].values[hcu], Some(1.0));
        assert_eq!(table.rows()[1].values[hcu], None);
        assert!(table.rows()[1].values[..hcu].iter().all(Option::is_some));
        assert_eq!(table.columns().len(), feature_columns(&FeatureConfig::default()).len());
    }

    #[test]
    fn deterministic_csv() {
        let clips = vec![synth::texture("x", 0.5, 4), synth::texture("y", 0.5, 5)];
        let cfg = FeatureConfig::default();
        let r = ratings_for(&["x", "y"]);
        let a = build_feature_table(&clips, &r, &cfg).unwrap().to_csv_string();
        let reversed: Vec<_> = clips.iter().rev().cloned().collect();
        let b = build_feature_table(&reversed, &r, &cfg).unwrap().to_csv_string();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_clip_set_is_header_only() {
        let t = build_feature_table(&[], &HighLevelRatings::default(), &FeatureConfig::default()).unwrap();
        let csv = t.to_csv_string();
        assert_eq!(csv.lines().count(), 1);
        assert!(csv.starts_with("sound_id,avg_spectral_spread"));
    }

    #[test]
    fn failed_clip_is_recorded_not_fatal() {
        let clips = vec![
            AudioClip::new("short", 44_100, vec![0.1; 100]),
            synth::texture("ok", 0.5, 3),
        ];
        let t = build_feature_table(&clips, &HighLevelRatings::default(), &FeatureConfig::default()).unwrap();
        assert_eq!(t.len(), 2);
        assert!(t.errors.contains_key("short"));
        assert!(t.row("short").unwrap().values.iter().all(Option::is_none));
        assert!(t.row("ok").unwrap().values[0].is_some());
    }

    #[test]
    fn duplicate_clip_ids_rejected() {
        let clips = vec![synth::texture("a", 0.2, 1), synth::texture("a", 0.2, 2)];
        assert!(matches!(
            build_feature_table(&clips, &HighLevelRatings::default(), &FeatureConfig::default()),
            Err(FeatureError::DuplicateKey(_))
        ));
    }

    #[test]
    fn column_tags_and_count() {
        let cols = feature_columns(&FeatureConfig::default());
        assert_eq!(cols.iter().filter(|c| c.tag == ColumnTag::Salience).count(), 18);
        assert_eq!(cols.iter().filter(|c| c.tag == ColumnTag::HighLevel).count(), 9);
        for c in &cols {
            assert_eq!(ColumnTag::infer(&c.name), c.tag, "{}", c.name);
        }
    }
}
