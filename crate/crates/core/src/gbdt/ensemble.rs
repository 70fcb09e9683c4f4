use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::booster::{sigmoid, train_gbdt, GbdtConfig, GbdtModel};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::stats::macro_f1;

/// One binary model per class with softmax-normalized margins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneVsRestGbdt {
    pub classes: u8,
    pub models: Vec<GbdtModel>,
}

impl OneVsRestGbdt {
    pub fn train(x: &Matrix, y: &[u8], classes: u8, valid: Option<(&Matrix, &[u8])>, cfg: &GbdtConfig) -> Result<Self> {
        if classes < 2 {
            return Err(Error::SingleClass);
        }
        let models = (0..classes)
            .into_par_iter()
            .map(|c| {
                let yc: Vec<u8> = y.iter().map(|&l| u8::from(l == c)).collect();
                let vc = valid.map(|(vx, vy)| (vx, vy.iter().map(|&l| u8::from(l == c)).collect::<Vec<u8>>()));
                let cfg = GbdtConfig {
                    rng_seed: cfg.rng_seed.wrapping_add(u64::from(c)),
                    ..cfg.clone()
                };
                train_gbdt(x, &yc, vc.as_ref().map(|(vx, vy)| (*vx, vy.as_slice())), &cfg).map(|(m, _)| m)
            })
            .collect::<Result<_>>()?;
        Ok(Self { classes, models })
    }

    /// Class probabilities per row.
    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<Vec<f64>>> {
        if let Some(m) = self.models.first() {
            if x.cols() != m.n_features {
                return Err(Error::DimensionMismatch {
                    expected: m.n_features,
                    found: x.cols(),
                });
            }
        }
        Ok((0..x.rows())
            .map(|i| {
                let margins: Vec<f64> = self.models.iter().map(|m| m.margin(x.row(i))).collect();
                let top = margins.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = margins.iter().map(|m| (m - top).exp()).collect();
                let z: f64 = e.iter().sum();
                e.into_iter().map(|v| v / z).collect()
            })
            .collect())
    }

    /// Most probable class and its probability.
    pub fn predict(&self, x: &Matrix) -> Result<(Vec<u8>, Vec<f64>)> {
        let probs = self.predict_proba(x)?;
        Ok(probs
            .iter()
            .map(|p| {
                let mut best = 0;
                for c in 1..p.len() {
                    if p[c] > p[best] {
                        best = c;
                    }
                }
                (best as u8, p[best])
            })
            .unzip())
    }
}

/// Threshold on class-1 probabilities maximizing macro-F1 of `p > t`.
/// Candidates are 0, the midpoints between distinct probabilities, and 1;
/// ties go to the smallest.
pub fn best_probability_threshold(p: &[f64], y: &[u8]) -> Result<f64> {
    if p.len() != y.len() {
        return Err(Error::LengthMismatch(p.len(), y.len()));
    }
    let mut values = p.to_vec();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let mut candidates = vec![0.0];
    candidates.extend(values.windows(2).map(|w| w[0] + 0.5 * (w[1] - w[0])));
    candidates.push(1.0);
    let mut best = (f64::NEG_INFINITY, 0.0);
    for &t in &candidates {
        let preds: Vec<u8> = p.iter().map(|&v| u8::from(v > t)).collect();
        let f = macro_f1(&preds, y, &[0, 1])?;
        if f > best.0 {
            best = (f, t);
        }
    }
    Ok(best.1)
}

/// Validation row indices of each fold. Every class is shuffled with a
/// generator seeded by `seed` and dealt round-robin over the folds.
pub fn stratified_folds(y: &[u8], folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::InvalidConfig("need at least two folds".into()));
    }
    let classes = y.iter().copied().max().map_or(0, |m| m as usize + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in y.iter().enumerate() {
        by_class[l as usize].push(i);
    }
    for (c, rows) in by_class.iter().enumerate() {
        if !rows.is_empty() && rows.len() < folds {
            return Err(Error::ClassTooRare {
                class: c as u8,
                count: rows.len(),
                folds,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![Vec::new(); folds];
    let mut next = 0;
    for mut rows in by_class {
        rows.shuffle(&mut rng);
        for i in rows {
            out[next].push(i);
            next = (next + 1) % folds;
        }
    }
    out.iter_mut().for_each(|f| f.sort_unstable());
    Ok(out)
}

/// Models from repeated stratified cross-validation and the mean of their
/// per-fold decision thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvEnsemble {
    pub models: Vec<GbdtModel>,
    pub fold_thresholds: Vec<f64>,
    pub mean_threshold: f64,
}

impl CvEnsemble {
    /// Mean class-1 probability over the models.
    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<f64>> {
        let per_model: Vec<Vec<f64>> = self
            .models
            .iter()
            .map(|m| m.predict_proba(x))
            .collect::<Result<_>>()?;
        Ok((0..x.rows())
            .map(|i| {
                let mut v: Vec<f64> = per_model.iter().map(|p| p[i]).collect();
                // summing in sorted order makes the mean independent of model order
                v.sort_by(f64::total_cmp);
                v.iter().sum::<f64>() / v.len() as f64
            })
            .collect())
    }

    /// `(label, confidence)` per row, with `label = 1[p > mean_threshold]`
    /// and `confidence = max(p, 1 - p)`.
    pub fn predict(&self, x: &Matrix) -> Result<(Vec<u8>, Vec<f64>)> {
        let p = self.predict_proba(x)?;
        Ok(p.iter()
            .map(|&v| (u8::from(v > self.mean_threshold), v.max(1.0 - v)))
            .unzip())
    }
}

pub fn stratified_cv_ensemble(
    x: &Matrix,
    y: &[u8],
    folds: usize,
    seeds: &[u64],
    cfg: &GbdtConfig,
) -> Result<CvEnsemble> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("seed list is empty".into()));
    }
    if x.rows() != y.len() {
        return Err(Error::LengthMismatch(x.rows(), y.len()));
    }
    let splits: Vec<(u64, usize, Vec<usize>)> = seeds
        .iter()
        .map(|&s| stratified_folds(y, folds, s))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .zip(seeds)
        .flat_map(|(fs, &s)| fs.into_iter().enumerate().map(move |(k, v)| (s, k, v)))
        .collect();

    let fitted: Vec<(GbdtModel, f64)> = splits
        .par_iter()
        .map(|(seed, k, valid)| {
            let mut in_valid = vec![false; y.len()];
            valid.iter().for_each(|&i| in_valid[i] = true);
            let train: Vec<usize> = (0..y.len()).filter(|&i| !in_valid[i]).collect();
            let (tx, ty) = (x.select_rows(&train), train.iter().map(|&i| y[i]).collect::<Vec<_>>());
            let (vx, vy) = (x.select_rows(valid), valid.iter().map(|&i| y[i]).collect::<Vec<_>>());
            let model_cfg = GbdtConfig {
                rng_seed: cfg
                    .rng_seed
                    .wrapping_mul(1_000_003)
                    .wrapping_add(seed.wrapping_mul(folds as u64))
                    .wrapping_add(*k as u64),
                ..cfg.clone()
            };
            let (model, _) = train_gbdt(&tx, &ty, Some((&vx, &vy)), &model_cfg)?;
            let p = model.predict_proba(&vx)?;
            Ok((model, best_probability_threshold(&p, &vy)?))
        })
        .collect::<Result<_>>()?;

    let fold_thresholds: Vec<f64> = fitted.iter().map(|f| f.1).collect();
    let mean_threshold = fold_thresholds.iter().sum::<f64>() / fold_thresholds.len() as f64;
    Ok(CvEnsemble {
        models: fitted.into_iter().map(|f| f.0).collect(),
        fold_thresholds,
        mean_threshold,
    })
}

/// Probability of class 1 from a margin; exposed for staged-sum checks.
pub fn margin_to_proba(m: f64) -> f64 {
    sigmoid(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_are_stratified() {
        let y: Vec<u8> = (0..53).map(|i| u8::from(i % 3 == 0)).collect();
        let folds = stratified_folds(&y, 5, 11).unwrap();
        let pos_total = y.iter().filter(|&&l| l == 1).count() as f64;
        let mut seen = vec![0; y.len()];
        for f in &folds {
            f.iter().for_each(|&i| seen[i] += 1);
            let pos = f.iter().filter(|&&i| y[i] == 1).count() as f64;
            assert!((pos - pos_total / 5.0).abs() <= 1.0);
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn rare_class() {
        let y = [0, 0, 0, 0, 0, 1, 1];
        assert!(matches!(
            stratified_folds(&y, 5, 0),
            Err(Error::ClassTooRare { class: 1, count: 2, folds: 5 })
        ));
    }

    #[test]
    fn threshold_search_prefers_lowest_tie() {
        assert_eq!(best_probability_threshold(&[0.2, 0.8], &[0, 1]).unwrap(), 0.5);
        // every cut between 0.2 and 0.8 scores the same; the first wins
        assert_eq!(best_probability_threshold(&[0.2, 0.2, 0.8], &[0, 0, 1]).unwrap(), 0.5);
    }

    #[test]
    fn identical_thresholds_average_to_themselves() {
        let e = CvEnsemble {
            models: vec![],
            fold_thresholds: vec![0.3; 4],
            mean_threshold: [0.3; 4].iter().sum::<f64>() / 4.0,
        };
        assert!((e.mean_threshold - 0.3).abs() < 1e-15);
    }
}
