use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::ratings::RATING_COLUMNS;
use super::FeatureError;

pub const MISSING: &str = "NA";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnTag {
    LowLevel,
    Salience,
    HighLevel,
}

impl ColumnTag {
    /// Tag implied by a column name when a table is read back from CSV.
    pub fn infer(name: &str) -> Self {
        if RATING_COLUMNS.contains(&name) {
            ColumnTag::HighLevel
        } else if name.starts_with("salience_") {
            ColumnTag::Salience
        } else {
            ColumnTag::LowLevel
        }
    }

    pub fn is_high_level(self) -> bool {
        self == ColumnTag::HighLevel
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub tag: ColumnTag,
}

impl Column {
    pub fn new(name: impl Into<String>, tag: ColumnTag) -> Self {
        Self {
            name: name.into(),
            tag,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub sound_id: String,
    pub values: Vec<Option<f64>>,
}

/// Per-sound named features. Every row carries the same column set; missing
/// cells are `None` and serialize as `NA`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureTable {
    columns: Vec<Column>,
    rows: Vec<FeatureRow>,
    index: HashMap<String, usize>,
    /// Extraction failures keyed by sound id.
    pub errors: BTreeMap<String, String>,
}

impl FeatureTable {
    pub fn new(columns: Vec<Column>) -> Result<Self, FeatureError> {
        let mut seen = std::collections::HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(FeatureError::DuplicateColumn(c.name.clone()));
            }
        }
        Ok(Self {
            columns,
            ..Default::default()
        })
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn rows(&self) -> &[FeatureRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push_row(&mut self, sound_id: impl Into<String>, values: Vec<Option<f64>>) -> Result<(), FeatureError> {
        let sound_id = sound_id.into();
        if values.len() != self.columns.len() {
            return Err(FeatureError::RowWidth {
                sound_id,
                expected: self.columns.len(),
                got: values.len(),
            });
        }
        if self.index.contains_key(&sound_id) {
            return Err(FeatureError::DuplicateKey(sound_id));
        }
        self.index.insert(sound_id.clone(), self.rows.len());
        self.rows.push(FeatureRow { sound_id, values });
        Ok(())
    }

    pub fn row(&self, sound_id: &str) -> Option<&FeatureRow> {
        self.index.get(sound_id).map(|&i| &self.rows[i])
    }

    pub fn value(&self, sound_id: &str, column: &str) -> Option<f64> {
        let c = self.column_index(column)?;
        self.row(sound_id)?.values[c]
    }

    /// Values of one row for the selected column indices; `None` if any is missing.
    pub fn complete_values(&self, sound_id: &str, cols: &[usize]) -> Option<Vec<f64>> {
        let row = self.row(sound_id)?;
        cols.iter().map(|&c| row.values[c]).collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), FeatureError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["sound_id".to_string()];
        header.extend(self.columns.iter().map(|c| c.name.clone()));
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.sound_id.clone()];
            rec.extend(row.values.iter().map(|v| match v {
                Some(x) => format!("{x}"),
                None => MISSING.to_string(),
            }));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("utf-8 csv")
    }

    /// Reads a table written by [`write_csv`](Self::write_csv); column tags
    /// are inferred from names.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, FeatureError> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.get(0) != Some("sound_id") {
            return Err(FeatureError::Schema("sound_id".into()));
        }
        let columns = headers
            .iter()
            .skip(1)
            .map(|h| Column::new(h, ColumnTag::infer(h)))
            .collect();
        let mut table = FeatureTable::new(columns)?;
        for record in r.records() {
            let record = record?;
            let id = record.get(0).unwrap_or("").to_string();
            let values = record
                .iter()
                .skip(1)
                .map(|cell| {
                    if cell == MISSING || cell.is_empty() {
                        Ok(None)
                    } else {
                        cell.parse::<f64>().map(Some).map_err(|_| {
                            FeatureError::Parse(format!("sound {id}: bad number {cell:?}"))
                        })
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            table.push_row(id, values)?;
        }
        Ok(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_with_missing() {
        let mut t = FeatureTable::new(vec![
            Column::new("avg_spectral_spread", ColumnTag::LowLevel),
            Column::new("salience_temporal_peak", ColumnTag::Salience),
            Column::new("Hcu", ColumnTag::HighLevel),
        ])
        .unwrap();
        t.push_row("a", vec![Some(1.5), Some(0.25), None]).unwrap();
        t.push_row("b", vec![Some(-2.0), Some(1e-12), Some(3.0)]).unwrap();
        let text = t.to_csv_string();
        assert!(text.starts_with("sound_id,avg_spectral_spread,salience_temporal_peak,Hcu\n"));
        assert!(text.contains(",NA\n"));
        let back = FeatureTable::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back.columns(), t.columns());
        assert_eq!(back.rows(), t.rows());
    }

    #[test]
    fn rejects_duplicates_and_ragged_rows() {
        assert!(matches!(
            FeatureTable::new(vec![
                Column::new("x", ColumnTag::LowLevel),
                Column::new("x", ColumnTag::LowLevel)
            ]),
            Err(FeatureError::DuplicateColumn(_))
        ));
        let mut t = FeatureTable::new(vec![Column::new("x", ColumnTag::LowLevel)]).unwrap();
        assert!(t.push_row("a", vec![]).is_err());
        t.push_row("a", vec![Some(1.0)]).unwrap();
        assert!(t.push_row("a", vec![Some(1.0)]).is_err());
    }
}
