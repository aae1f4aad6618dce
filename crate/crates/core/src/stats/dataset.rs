use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::grid::Matrix;

/// Per-column `(mean, std)` used to map raw features to z-scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    pub fn apply(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = (*v - m) / s;
        }
    }

    pub fn invert(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = *v * s + m;
        }
    }
}

/// Samples × features with a regression target.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub names: Vec<String>,
    pub x: Matrix,
    pub y: Vec<f64>,
    pub standardization: Option<Standardization>,
}

impl Dataset {
    pub fn new(names: Vec<String>, x: Matrix, y: Vec<f64>) -> Result<Self, StatsError> {
        if x.rows() != y.len() {
            return Err(StatsError::LengthMismatch(x.rows(), y.len()));
        }
        if x.cols() != names.len() {
            return Err(StatsError::LengthMismatch(x.cols(), names.len()));
        }
        Ok(Self {
            names,
            x,
            y,
            standardization: None,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.x.rows()
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    /// Z-scores every column (population std). Zero-variance columns are
    /// dropped and their names returned.
    pub fn standardized(&self) -> (Dataset, Vec<String>) {
        let n = self.n_samples() as f64;
        let mut keep = Vec::new();
        let mut dropped = Vec::new();
        let mut mean = Vec::new();
        let mut std = Vec::new();
        for c in 0..self.n_features() {
            let col = self.x.column(c);
            let m = col.iter().sum::<f64>() / n;
            let s = (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
            if s > 0.0 && s.is_finite() {
                keep.push(c);
                mean.push(m);
                std.push(s);
            } else {
                log::info!("dropping zero-variance column {}", self.names[c]);
                dropped.push(self.names[c].clone());
            }
        }
        let x = Matrix::from_fn(self.n_samples(), keep.len(), |r, k| {
            (self.x.get(r, keep[k]) - mean[k]) / std[k]
        });
        let ds = Dataset {
            names: keep.iter().map(|&c| self.names[c].clone()).collect(),
            x,
            y: self.y.clone(),
            standardization: Some(Standardization { mean, std }),
        };
        (ds, dropped)
    }

    pub fn column_index(&self, name: &str) -> Result<usize, StatsError> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| StatsError::UnknownColumn(name.to_string()))
    }

    /// The dataset restricted to `cols`, in that order.
    pub fn select(&self, cols: &[usize]) -> Dataset {
        Dataset {
            names: cols.iter().map(|&c| self.names[c].clone()).collect(),
            x: Matrix::from_fn(self.n_samples(), cols.len(), |r, k| self.x.get(r, cols[k])),
            y: self.y.clone(),
            standardization: self.standardization.as_ref().map(|s| Standardization {
                mean: cols.iter().map(|&c| s.mean[c]).collect(),
                std: cols.iter().map(|&c| s.std[c]).collect(),
            }),
        }
    }
}
