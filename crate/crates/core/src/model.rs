use serde::{Deserialize, Serialize};

use crate::data::{DesignLayout, ObservationTable, StandardizationStats};
use crate::error::{Error, Result};
use crate::linalg::{fit_ols, OlsFit};
use crate::threshold::{predict_scores, LatentScores};

/// Standardization, design layout and least-squares coefficients fitted
/// together on one set of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub target: String,
    pub standardization: StandardizationStats,
    pub layout: DesignLayout,
    pub fit: OlsFit,
}

impl LinearModel {
    /// Fits on the labeled subset of `rows`, with standardization stats
    /// taken from those rows.
    pub fn fit(table: &ObservationTable, rows: &[usize], target: &str, layout: &DesignLayout) -> Result<Self> {
        let t = table.target_index(target)?;
        let rows: Vec<usize> = rows
            .iter()
            .copied()
            .filter(|&i| table.rows()[i].targets[t].is_some())
            .collect();
        if rows.is_empty() {
            return Err(Error::EmptyData);
        }
        let train = table.subset(&rows);
        let all: Vec<usize> = (0..train.n_rows()).collect();
        let standardization = StandardizationStats::fit(&train, &all)?;
        let x = layout.materialize(&standardization.apply(&train)?)?;
        let y: Vec<f64> = train
            .rows()
            .iter()
            .map(|r| f64::from(r.targets[t].expect("filtered")))
            .collect();
        Ok(Self {
            target: target.to_string(),
            standardization,
            layout: layout.clone(),
            fit: fit_ols(&x.values, &y)?,
        })
    }

    /// Latent scores for every row of `table`.
    pub fn scores(&self, table: &ObservationTable) -> Result<LatentScores> {
        let x = self.layout.materialize(&self.standardization.apply(table)?)?;
        predict_scores(&self.fit, &x)
    }

    /// `(column name, coefficient)` pairs in layout order.
    pub fn coefficients(&self) -> Vec<(String, f64)> {
        self.layout
            .columns
            .iter()
            .map(ToString::to_string)
            .zip(self.fit.coefficients.iter().copied())
            .collect()
    }
}
