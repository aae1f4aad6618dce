//! Ingestion of crowd-rated high-level sound attributes.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;

use super::FeatureError;

/// Required columns, in the canonical high-level column order.
pub const RATING_COLUMNS: [&str; 9] = [
    "Hcu",
    "imageability",
    "imageability_std",
    "familiarity",
    "familiarity_std",
    "valence",
    "arousal",
    "arousal_std",
    "location_embedding_density",
];

const STD_COLUMNS: [&str; 3] = ["imageability_std", "familiarity_std", "arousal_std"];

#[derive(Debug, Clone, PartialEq)]
pub struct Rating {
    pub sound_id: String,
    /// Values aligned with [`RATING_COLUMNS`].
    pub values: [f64; 9],
}

impl Rating {
    pub fn get(&self, column: &str) -> Option<f64> {
        RATING_COLUMNS
            .iter()
            .position(|c| *c == column)
            .map(|i| self.values[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RejectedRow {
    /// 1-based line number in the file, header included.
    pub line: u64,
    pub sound_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HighLevelRatings {
    pub ratings: BTreeMap<String, Rating>,
    pub rejected: Vec<RejectedRow>,
}

impl HighLevelRatings {
    pub fn len(&self) -> usize {
        self.ratings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratings.is_empty()
    }

    pub fn get(&self, sound_id: &str) -> Option<&Rating> {
        self.ratings.get(sound_id)
    }
}

/// Parses the ratings CSV. Rows with unparseable numbers, negative `Hcu` or
/// negative standard deviations are rejected individually; a missing column
/// or a repeated `sound_id` fails the whole file.
pub fn ingest_high_level<R: Read>(reader: R) -> Result<HighLevelRatings, FeatureError> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = csv.headers()?.clone();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let id_col = *index
        .get("sound_id")
        .ok_or_else(|| FeatureError::Schema("sound_id".into()))?;
    let mut cols = [0usize; 9];
    for (slot, name) in cols.iter_mut().zip(RATING_COLUMNS) {
        *slot = *index
            .get(name)
            .ok_or_else(|| FeatureError::Schema(name.into()))?;
    }

    let mut out = HighLevelRatings::default();
    let mut seen = std::collections::HashSet::new();
    for record in csv.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let sound_id = record.get(id_col).unwrap_or("").to_string();
        if !seen.insert(sound_id.clone()) {
            return Err(FeatureError::DuplicateKey(sound_id));
        }
        match parse_row(&record, &cols) {
            Ok(values) => {
                out.ratings.insert(sound_id.clone(), Rating { sound_id, values });
            }
            Err(reason) => out.rejected.push(RejectedRow {
                line,
                sound_id,
                reason,
            }),
        }
    }
    Ok(out)
}

fn parse_row(record: &csv::StringRecord, cols: &[usize; 9]) -> Result<[f64; 9], String> {
    let mut values = [0.0; 9];
    for ((v, &c), name) in values.iter_mut().zip(cols).zip(RATING_COLUMNS) {
        let raw = record.get(c).unwrap_or("");
        *v = raw
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| format!("column {name}: cannot parse {raw:?} as a number"))?;
        if (STD_COLUMNS.contains(&name) || name == "Hcu") && *v < 0.0 {
            return Err(format!("column {name}: negative value {v}"));
        }
    }
    Ok(values)
}
