use crate::data::{FeatureSpec, ObservationTable};
use crate::error::Result;
use crate::gbdt::{kmeans_cluster, ClusterModel};

/// Clusters subjects by their mean routine vector and appends one-hot
/// `archetype_{c}` indicator columns to every row.
pub fn build_archetype_features(
    daily: &ObservationTable,
    routine_features: &[String],
    k: usize,
    seed: u64,
) -> Result<(ObservationTable, ClusterModel)> {
    let cols: Vec<usize> = routine_features
        .iter()
        .map(|f| daily.feature_index(f))
        .collect::<Result<_>>()?;
    let groups = daily.rows_by_subject();
    let points: Vec<Vec<f64>> = groups
        .iter()
        .map(|(_, rows)| {
            cols.iter()
                .map(|&j| rows.iter().map(|&i| daily.rows()[i].features[j]).sum::<f64>() / rows.len() as f64)
                .collect()
        })
        .collect();
    let model = kmeans_cluster(&points, k, seed)?;
    let mut values = vec![vec![0.0; k]; daily.n_rows()];
    for ((_, rows), &c) in groups.iter().zip(&model.assignments) {
        for &i in rows {
            values[i][c] = 1.0;
        }
    }
    let specs = (0..k).map(|c| FeatureSpec::indicator(format!("archetype_{c}"))).collect();
    Ok((daily.append_features(specs, values)?, model))
}
