use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{ObservationTable, Timestamp};
use crate::error::{Error, Result};
use crate::gbdt::{rfe_select, stratified_cv_ensemble, CvEnsemble, GbdtConfig};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct S2Config {
    pub target: String,
    pub rfe_features: usize,
    /// Boosting rounds of each RFE ranking model.
    pub rfe_trees: usize,
    pub folds: usize,
    pub seeds: Vec<u64>,
    pub gbdt: GbdtConfig,
}

impl Default for S2Config {
    fn default() -> Self {
        Self {
            target: "S2".into(),
            rfe_features: 30,
            rfe_trees: 100,
            folds: 5,
            seeds: vec![0, 1, 2, 3],
            gbdt: GbdtConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct S2Prediction {
    pub subject: String,
    pub timestamp: Timestamp,
    pub probability: f64,
    pub label: u8,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct S2Output {
    pub selected_features: Vec<String>,
    pub eliminated_features: Vec<String>,
    pub ensemble: CvEnsemble,
    /// One entry per table row, labeled or not.
    pub predictions: Vec<S2Prediction>,
}

impl S2Output {
    pub fn labels(&self) -> Vec<u8> {
        self.predictions.iter().map(|p| p.label).collect()
    }

    pub fn confidences(&self) -> Vec<f64> {
        self.predictions.iter().map(|p| p.confidence).collect()
    }

    pub fn write_predictions_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["subject", "timestamp", "probability", "label", "confidence"])?;
        for p in &self.predictions {
            w.write_record([
                p.subject.clone(),
                p.timestamp.to_string(),
                p.probability.to_string(),
                p.label.to_string(),
                p.confidence.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn feature_matrix(table: &ObservationTable) -> Result<Matrix> {
    Matrix::from_rows(&table.rows().iter().map(|r| r.features.clone()).collect::<Vec<_>>())
}

/// RFE on the labeled rows, then a repeated stratified CV ensemble whose
/// mean fold threshold classifies every row.
pub fn run_s2(daily: &ObservationTable, cfg: &S2Config) -> Result<S2Output> {
    cfg.gbdt.validate()?;
    let t = daily.target_index(&cfg.target)?;
    if daily.targets()[t].classes != 2 {
        return Err(Error::InvalidConfig(format!("target `{}` is not binary", cfg.target)));
    }
    let d = daily.features().len();
    if d == 0 {
        return Err(Error::NoFeatures);
    }
    let names = daily.feature_names();
    let x_all = feature_matrix(daily)?;
    let train = daily.labeled_rows(t);
    let y: Vec<u8> = train
        .iter()
        .map(|&i| daily.rows()[i].targets[t].expect("labeled"))
        .collect();
    let x = x_all.select_rows(&train);

    let rfe_cfg = GbdtConfig {
        n_trees_max: cfg.rfe_trees,
        ..cfg.gbdt.clone()
    };
    let rfe = rfe_select(&x, &y, cfg.rfe_features.min(d).max(1), &rfe_cfg)?;
    let ensemble = stratified_cv_ensemble(&x.select_columns(&rfe.selected), &y, cfg.folds, &cfg.seeds, &cfg.gbdt)?;

    let probs = ensemble.predict_proba(&x_all.select_columns(&rfe.selected))?;
    let predictions = daily
        .rows()
        .iter()
        .zip(probs)
        .map(|(r, p)| S2Prediction {
            subject: r.subject.clone(),
            timestamp: r.timestamp,
            probability: p,
            label: u8::from(p > ensemble.mean_threshold),
            confidence: p.max(1.0 - p),
        })
        .collect();
    Ok(S2Output {
        selected_features: rfe.selected.iter().map(|&j| names[j].clone()).collect(),
        eliminated_features: rfe.eliminated.iter().map(|&j| names[j].clone()).collect(),
        ensemble,
        predictions,
    })
}
