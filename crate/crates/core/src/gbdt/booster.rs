use std::io::Write;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, Presorted, TreeNode, TreeParams};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::stats::roc_auc;

pub const PROBA_CLIP: f64 = 1e-7;

/// Halvings tried before a tree that raises the training loss is dropped.
const MAX_HALVINGS: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbdtConfig {
    pub n_trees_max: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_leaf_count: usize,
    pub early_stopping_rounds: usize,
    pub feature_subsample_fraction: f64,
    /// L2 penalty on leaf values.
    pub lambda: f64,
    pub rng_seed: u64,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        Self {
            n_trees_max: 500,
            learning_rate: 0.1,
            max_depth: 4,
            min_leaf_count: 5,
            early_stopping_rounds: 30,
            feature_subsample_fraction: 1.0,
            lambda: 1.0,
            rng_seed: 0,
        }
    }
}

impl GbdtConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must lie in (0, 1], got {}",
                self.learning_rate
            )));
        }
        if self.max_depth == 0 {
            return Err(Error::InvalidConfig("max depth must be at least 1".into()));
        }
        if self.min_leaf_count == 0 {
            return Err(Error::InvalidConfig("min leaf count must be at least 1".into()));
        }
        if !(self.feature_subsample_fraction > 0.0 && self.feature_subsample_fraction <= 1.0) {
            return Err(Error::InvalidConfig("feature subsample fraction must lie in (0, 1]".into()));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidConfig("lambda must be non-negative".into()));
        }
        Ok(())
    }
}

/// Boosted trees with a logistic link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub n_features: usize,
    /// Prior log-odds of the training labels.
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<TreeNode>,
    /// Total split gain per feature.
    pub feature_importances: Vec<f64>,
}

/// Per-round diagnostics of a training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    /// Mean training log-loss after each round, starting with the prior.
    pub train_loss: Vec<f64>,
    /// Validation ROC-AUC after each round, starting with the prior.
    pub valid_auc: Vec<f64>,
    /// Number of trees kept.
    pub best_rounds: usize,
}

pub fn sigmoid(m: f64) -> f64 {
    if m >= 0.0 {
        1.0 / (1.0 + (-m).exp())
    } else {
        let e = m.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(m))` without overflow.
fn softplus(m: f64) -> f64 {
    if m > 0.0 {
        m + (-m).exp().ln_1p()
    } else {
        m.exp().ln_1p()
    }
}

/// Mean logistic loss of margins `m` against 0/1 labels.
pub fn log_loss(margins: &[f64], y: &[u8]) -> f64 {
    let total: f64 = margins
        .iter()
        .zip(y)
        .map(|(&m, &l)| if l == 1 { softplus(-m) } else { softplus(m) })
        .sum();
    total / margins.len() as f64
}

impl GbdtModel {
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.base_score + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                found: x.cols(),
            });
        }
        Ok((0..x.rows())
            .map(|i| sigmoid(self.margin(x.row(i))).clamp(PROBA_CLIP, 1.0 - PROBA_CLIP))
            .collect())
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(&mut w, self)?;
        writeln!(w)?;
        Ok(())
    }

    pub fn write_importances_csv<W: Write>(&self, names: &[String], w: W) -> Result<()> {
        if names.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                found: names.len(),
            });
        }
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["feature", "gain"])?;
        for (name, gain) in names.iter().zip(&self.feature_importances) {
            w.write_record([name.as_str(), &gain.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Class-1 probabilities of `model`.
pub fn predict_proba_gbdt(model: &GbdtModel, x: &Matrix) -> Result<Vec<f64>> {
    model.predict_proba(x)
}

fn check_labels(x: &Matrix, y: &[u8]) -> Result<()> {
    if x.rows() == 0 || y.is_empty() {
        return Err(Error::EmptyData);
    }
    if x.rows() != y.len() {
        return Err(Error::LengthMismatch(x.rows(), y.len()));
    }
    if let Some(&l) = y.iter().find(|&&l| l > 1) {
        return Err(Error::InvalidSpec(format!("binary label expected, got {l}")));
    }
    if !x.is_finite() {
        return Err(Error::NonFiniteInput);
    }
    Ok(())
}

/// Trains a binary classifier. With a validation set, boosting stops once
/// the validation ROC-AUC has not improved for `early_stopping_rounds`
/// rounds and the model is cut back to its best round.
pub fn train_gbdt(
    x: &Matrix,
    y: &[u8],
    valid: Option<(&Matrix, &[u8])>,
    cfg: &GbdtConfig,
) -> Result<(GbdtModel, TrainingLog)> {
    cfg.validate()?;
    check_labels(x, y)?;
    let n = y.len();
    let positives = y.iter().filter(|&&l| l == 1).count();
    if positives == 0 || positives == n {
        return Err(Error::SingleClass);
    }
    if let Some((vx, vy)) = valid {
        check_labels(vx, vy)?;
        if vx.cols() != x.cols() {
            return Err(Error::DimensionMismatch {
                expected: x.cols(),
                found: vx.cols(),
            });
        }
    }
    // Early stopping needs both classes in the validation labels.
    let valid = valid.filter(|(_, vy)| vy.contains(&0) && vy.contains(&1));

    let prior = positives as f64 / n as f64;
    let base_score = (prior / (1.0 - prior)).ln();
    let d = x.cols();
    let mut model = GbdtModel {
        n_features: d,
        base_score,
        learning_rate: cfg.learning_rate,
        trees: Vec::new(),
        feature_importances: vec![0.0; d],
    };
    let mut log = TrainingLog::default();
    let mut margins = vec![base_score; n];
    let mut loss = log_loss(&margins, y);
    log.train_loss.push(loss);

    let mut valid_margins = valid.map(|(vx, _)| vec![base_score; vx.rows()]);
    let mut best_auc = 0.5;
    let mut best_rounds = 0;
    if valid.is_some() {
        log.valid_auc.push(0.5);
    }

    let presorted = Presorted::new(x);
    let params = TreeParams {
        max_depth: cfg.max_depth,
        min_leaf_count: cfg.min_leaf_count,
        lambda: cfg.lambda,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let n_sub = ((cfg.feature_subsample_fraction * d as f64).ceil() as usize).clamp(1, d.max(1));
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];

    for round in 0..cfg.n_trees_max {
        for i in 0..n {
            let p = sigmoid(margins[i]);
            g[i] = p - f64::from(y[i]);
            h[i] = (p * (1.0 - p)).max(1e-16);
        }
        let mut features: Vec<usize> = if n_sub < d {
            sample(&mut rng, d, n_sub).into_vec()
        } else {
            (0..d).collect()
        };
        features.sort_unstable();
        let mut tree = grow_tree(x, &presorted, &features, &g, &h, params);
        let step: Vec<f64> = (0..n).map(|i| tree.predict(x.row(i))).collect();

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = margins
                .iter()
                .zip(&step)
                .map(|(m, s)| m + cfg.learning_rate * scale * s)
                .collect();
            let trial_loss = log_loss(&trial, y);
            if trial_loss <= loss {
                accepted = Some((trial, trial_loss));
                break;
            }
            scale *= 0.5;
        }
        let Some((trial, trial_loss)) = accepted else {
            log::debug!("round {round}: no descent step found, stopping");
            break;
        };
        if scale != 1.0 {
            tree.scale_leaves(scale);
        }
        margins = trial;
        loss = trial_loss;
        log.train_loss.push(loss);

        if let (Some((vx, vy)), Some(vm)) = (valid, valid_margins.as_mut()) {
            for (i, m) in vm.iter_mut().enumerate() {
                *m += cfg.learning_rate * tree.predict(vx.row(i));
            }
            let auc = roc_auc(vm, vy)?;
            log.valid_auc.push(auc);
            model.trees.push(tree);
            if auc > best_auc {
                best_auc = auc;
                best_rounds = model.trees.len();
            } else if model.trees.len() - best_rounds >= cfg.early_stopping_rounds.max(1) {
                break;
            }
        } else {
            model.trees.push(tree);
            best_rounds = model.trees.len();
        }
    }

    model.trees.truncate(best_rounds);
    log.best_rounds = best_rounds;
    for t in &model.trees {
        t.add_importances(&mut model.feature_importances);
    }
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> (Matrix, Vec<u8>) {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..40 {
            let t = i as f64 * 0.05;
            rows.push(vec![-1.0 - t, 0.3 * t]);
            y.push(0);
            rows.push(vec![1.0 + t, -0.2 * t]);
            y.push(1);
        }
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn zero_trees_predict_prior() {
        let (x, y) = blobs();
        let cfg = GbdtConfig {
            n_trees_max: 0,
            ..Default::default()
        };
        let (model, _) = train_gbdt(&x, &y, None, &cfg).unwrap();
        let p = model.predict_proba(&x).unwrap();
        assert!(p.iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn single_class_rejected() {
        let (x, _) = blobs();
        let y = vec![1u8; x.rows()];
        assert!(matches!(
            train_gbdt(&x, &y, None, &GbdtConfig::default()),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn loss_never_increases() {
        let (x, mut y) = blobs();
        // a few flipped labels so the loss cannot reach zero
        y[3] = 1;
        y[10] = 0;
        let cfg = GbdtConfig {
            n_trees_max: 60,
            learning_rate: 1.0,
            min_leaf_count: 1,
            lambda: 0.0,
            ..Default::default()
        };
        let (_, log) = train_gbdt(&x, &y, None, &cfg).unwrap();
        for w in log.train_loss.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let (x, y) = blobs();
        let (model, _) = train_gbdt(&x, &y, None, &GbdtConfig { n_trees_max: 3, ..Default::default() }).unwrap();
        let bad = Matrix::zeros(2, 3);
        assert!(matches!(model.predict_proba(&bad), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn early_stopping_truncates_to_best_round() {
        let (x, y) = blobs();
        let cfg = GbdtConfig {
            early_stopping_rounds: 5,
            ..Default::default()
        };
        let (model, log) = train_gbdt(&x, &y, Some((&x, &y)), &cfg).unwrap();
        assert_eq!(model.trees.len(), log.best_rounds);
        assert!(log.valid_auc.len() <= log.best_rounds + 6);
        assert_eq!(log.valid_auc[log.best_rounds], 1.0);
    }

    #[test]
    fn json_round_trip() {
        let (x, y) = blobs();
        let (model, _) = train_gbdt(&x, &y, None, &GbdtConfig { n_trees_max: 4, ..Default::default() }).unwrap();
        let mut buf = Vec::new();
        model.write_json(&mut buf).unwrap();
        let back: GbdtModel = serde_json::from_slice(&buf).unwrap();
        assert_eq!(back, model);
    }
}
