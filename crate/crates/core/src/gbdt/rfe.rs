use serde::{Deserialize, Serialize};

use super::booster::{train_gbdt, GbdtConfig};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Surviving feature indices (ascending) and the removal order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RfeResult {
    pub selected: Vec<usize>,
    pub eliminated: Vec<usize>,
}

/// Recursive feature elimination by boosted-tree gain. Each round drops
/// `max(1, remaining / 10)` features of lowest importance, never going
/// below `target_count`; importance ties drop the lower index first.
pub fn rfe_select(x: &Matrix, y: &[u8], target_count: usize, cfg: &GbdtConfig) -> Result<RfeResult> {
    let d = x.cols();
    if target_count == 0 || target_count > d {
        return Err(Error::InvalidConfig(format!(
            "rfe target {target_count} outside 1..={d}"
        )));
    }
    let mut active: Vec<usize> = (0..d).collect();
    let mut eliminated = Vec::new();
    while active.len() > target_count {
        let sub = x.select_columns(&active);
        let (model, _) = train_gbdt(&sub, y, None, cfg)?;
        let step = (active.len() / 10).max(1).min(active.len() - target_count);
        let mut order: Vec<usize> = (0..active.len()).collect();
        order.sort_by(|&a, &b| {
            model.feature_importances[a]
                .total_cmp(&model.feature_importances[b])
                .then(active[a].cmp(&active[b]))
        });
        let mut drop: Vec<usize> = order[..step].to_vec();
        eliminated.extend(drop.iter().map(|&k| active[k]));
        drop.sort_unstable();
        for k in drop.into_iter().rev() {
            active.remove(k);
        }
    }
    Ok(RfeResult {
        selected: active,
        eliminated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_informative_feature() {
        let n = 120;
        let signal: Vec<f64> = (0..n).map(|i| f64::from(i)).collect();
        let noise: Vec<Vec<f64>> = (0..4)
            .map(|k| (0..n).map(|i| f64::from((i * (7 + k) + 3) % 11)).collect())
            .collect();
        let mut cols = noise.clone();
        cols.insert(2, signal);
        let x = Matrix::from_columns(&cols).unwrap();
        let y: Vec<u8> = (0..n).map(|i| u8::from(i >= 60)).collect();
        let cfg = GbdtConfig {
            n_trees_max: 20,
            ..GbdtConfig::default()
        };
        let r = rfe_select(&x, &y, 1, &cfg).unwrap();
        assert_eq!(r.selected, vec![2]);
        assert_eq!(r.eliminated.len(), 4);
    }

    #[test]
    fn target_equal_to_width_is_identity() {
        let x = Matrix::from_columns(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let r = rfe_select(&x, &[0, 1], 2, &GbdtConfig::default()).unwrap();
        assert_eq!(r.selected, vec![0, 1]);
        assert!(r.eliminated.is_empty());
    }

    #[test]
    fn rejects_bad_target() {
        let x = Matrix::from_columns(&[vec![0.0, 1.0]]).unwrap();
        assert!(rfe_select(&x, &[0, 1], 2, &GbdtConfig::default()).is_err());
        assert!(rfe_select(&x, &[0, 1], 0, &GbdtConfig::default()).is_err());
    }
}
