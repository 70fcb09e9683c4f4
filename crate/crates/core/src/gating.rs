//! Confidence-gated merging of two classifiers and Z-score profiles of the
//! rows where they disagree.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::ObservationTable;
use crate::error::{Error, Result};
use crate::stats::mean_std;

pub const DEFAULT_GATE: f64 = 0.97;
pub const S2_GATE: f64 = 0.943;

/// Per-target confidence a secondary prediction needs to override the
/// primary one. Targets without an entry use `default`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatingConfig {
    pub default: f64,
    pub thresholds: BTreeMap<String, f64>,
}

impl Default for GatingConfig {
    fn default() -> Self {
        let mut thresholds: BTreeMap<String, f64> = ["Q1", "Q2", "Q3", "S1", "S3"]
            .into_iter()
            .map(|t| (t.to_string(), DEFAULT_GATE))
            .collect();
        thresholds.insert("S2".into(), S2_GATE);
        Self {
            default: DEFAULT_GATE,
            thresholds,
        }
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(0.5..=1.0).contains(&tau) {
        return Err(Error::InvalidConfig(format!("gate threshold {tau} outside [0.5, 1]")));
    }
    Ok(())
}

impl GatingConfig {
    pub fn threshold(&self, target: &str) -> f64 {
        self.thresholds.get(target).copied().unwrap_or(self.default)
    }

    pub fn validate(&self) -> Result<()> {
        check_tau(self.default)?;
        self.thresholds.values().try_for_each(|&t| check_tau(t))
    }
}

/// One disagreement and how it was resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub row: usize,
    pub primary: u8,
    pub secondary: u8,
    pub confidence: f64,
    #[serde(rename = "final")]
    pub final_label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateOutcome {
    pub labels: Vec<u8>,
    /// Every disagreement in row order.
    pub decisions: Vec<GateDecision>,
    pub overrides: usize,
}

impl GateOutcome {
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for d in &self.decisions {
            serde_json::to_writer(&mut w, d)?;
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Agreements pass through; a disagreement takes the secondary label iff
/// `confidence >= tau`.
pub fn gate_predictions(primary: &[u8], secondary: &[u8], confidence: &[f64], tau: f64) -> Result<GateOutcome> {
    if primary.len() != secondary.len() {
        return Err(Error::LengthMismatch(primary.len(), secondary.len()));
    }
    if primary.len() != confidence.len() {
        return Err(Error::LengthMismatch(primary.len(), confidence.len()));
    }
    check_tau(tau)?;
    if confidence.iter().any(|c| !(0.0..=1.0).contains(c)) {
        return Err(Error::InvalidConfig("confidence outside [0, 1]".into()));
    }
    let mut labels = primary.to_vec();
    let mut decisions = Vec::new();
    let mut overrides = 0;
    for row in 0..primary.len() {
        if primary[row] == secondary[row] {
            continue;
        }
        if confidence[row] >= tau {
            labels[row] = secondary[row];
            overrides += 1;
        }
        decisions.push(GateDecision {
            row,
            primary: primary[row],
            secondary: secondary[row],
            confidence: confidence[row],
            final_label: labels[row],
        });
    }
    Ok(GateOutcome {
        labels,
        decisions,
        overrides,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZEntry {
    pub feature: String,
    pub z: f64,
    pub group_mean: f64,
    pub global_mean: f64,
    pub global_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZProfile {
    pub group_size: usize,
    pub entries: Vec<ZEntry>,
}

impl ZProfile {
    /// Entries by descending `|z|`, ties by feature name.
    pub fn sorted(&self) -> Vec<&ZEntry> {
        let mut v: Vec<&ZEntry> = self.entries.iter().collect();
        v.sort_by(|a, b| b.z.abs().total_cmp(&a.z.abs()).then_with(|| a.feature.cmp(&b.feature)));
        v
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["feature", "z", "group_mean", "global_mean", "global_std"])?;
        for e in self.sorted() {
            w.write_record([
                e.feature.clone(),
                e.z.to_string(),
                e.group_mean.to_string(),
                e.global_mean.to_string(),
                e.global_std.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `z = (mean over group − mean over all) / population std over all`.
pub fn z_profile(
    table: &ObservationTable,
    group_rows: &[usize],
    all_rows: &[usize],
    feature_names: &[String],
) -> Result<ZProfile> {
    if group_rows.is_empty() || all_rows.is_empty() {
        return Err(Error::EmptyData);
    }
    let entries = feature_names
        .iter()
        .map(|name| {
            let j = table.feature_index(name)?;
            let col = |rows: &[usize]| rows.iter().map(|&i| table.rows()[i].features[j]).collect::<Vec<_>>();
            let (global_mean, global_std) = mean_std(&col(all_rows));
            if !(global_std > 0.0) {
                return Err(Error::ZeroVariance(name.clone()));
            }
            let group_mean = mean_std(&col(group_rows)).0;
            Ok(ZEntry {
                feature: name.clone(),
                z: (group_mean - global_mean) / global_std,
                group_mean,
                global_mean,
                global_std,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ZProfile {
        group_size: group_rows.len(),
        entries,
    })
}

/// Disagreements split into group A (secondary 0, primary 1) and group B
/// (secondary 1, primary 0). Other label pairs are only counted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisagreementReport {
    pub total: usize,
    pub count_a: usize,
    pub count_b: usize,
    pub count_other: usize,
    pub group_a: Option<ZProfile>,
    pub group_b: Option<ZProfile>,
}

pub fn disagreement_report(
    primary: &[u8],
    secondary: &[u8],
    table: &ObservationTable,
    feature_names: &[String],
) -> Result<DisagreementReport> {
    if primary.len() != secondary.len() {
        return Err(Error::LengthMismatch(primary.len(), secondary.len()));
    }
    if primary.len() != table.n_rows() {
        return Err(Error::LengthMismatch(primary.len(), table.n_rows()));
    }
    let (mut a, mut b, mut other) = (Vec::new(), Vec::new(), 0);
    for (i, (&p, &s)) in primary.iter().zip(secondary).enumerate() {
        match (s, p) {
            (0, 1) => a.push(i),
            (1, 0) => b.push(i),
            _ if s != p => other += 1,
            _ => {}
        }
    }
    let all: Vec<usize> = (0..table.n_rows()).collect();
    let profile = |g: &[usize]| -> Result<Option<ZProfile>> {
        if g.is_empty() {
            Ok(None)
        } else {
            z_profile(table, g, &all, feature_names).map(Some)
        }
    };
    Ok(DisagreementReport {
        total: a.len() + b.len() + other,
        count_a: a.len(),
        count_b: b.len(),
        count_other: other,
        group_a: profile(&a)?,
        group_b: profile(&b)?,
    })
}
