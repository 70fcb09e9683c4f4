use serde::{Deserialize, Serialize};

use super::table::ObservationTable;
use crate::error::{Error, Result};
use crate::stats::mean_std;

/// Scale below which a column counts as constant, relative to its magnitude.
const ZERO_VARIANCE_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStat {
    pub name: String,
    pub mean: f64,
    /// Population standard deviation.
    pub scale: f64,
}

/// Per-feature centering and scaling for the continuous columns of a table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub features: Vec<FeatureStat>,
}

impl StandardizationStats {
    /// Computes stats for every non-indicator feature over `rows`.
    pub fn fit(table: &ObservationTable, rows: &[usize]) -> Result<Self> {
        let mut features = Vec::new();
        for (j, spec) in table.features().iter().enumerate() {
            if spec.indicator {
                continue;
            }
            let values: Vec<f64> = rows.iter().map(|&i| table.rows()[i].features[j]).collect();
            let (mean, scale) = mean_std(&values);
            if !(scale > ZERO_VARIANCE_RTOL * (1.0 + mean.abs())) {
                return Err(Error::ZeroVariance(spec.name.clone()));
            }
            features.push(FeatureStat {
                name: spec.name.clone(),
                mean,
                scale,
            });
        }
        Ok(Self { features })
    }

    /// Applies the stats to every row of `table`, matching features by name.
    pub fn apply(&self, table: &ObservationTable) -> Result<ObservationTable> {
        let slots: Vec<(usize, f64, f64)> = self
            .features
            .iter()
            .map(|s| Ok((table.feature_index(&s.name)?, s.mean, s.scale)))
            .collect::<Result<_>>()?;
        Ok(table.map_features(|_, values| {
            let mut v = values.to_vec();
            for &(j, mean, scale) in &slots {
                v[j] = (v[j] - mean) / scale;
            }
            v
        }))
    }
}

/// Standardizes continuous features with stats computed on `train_rows`;
/// all rows are transformed.
pub fn standardize(
    table: &ObservationTable,
    train_rows: &[usize],
) -> Result<(ObservationTable, StandardizationStats)> {
    let stats = StandardizationStats::fit(table, train_rows)?;
    Ok((stats.apply(table)?, stats))
}
