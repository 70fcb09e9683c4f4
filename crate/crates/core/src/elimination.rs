//! Backward elimination with nested F-tests and seeded tie-breaking, plus
//! selection of the tie-breaking seed on chronological folds.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{chrono_split, expand_design, standardize, ColumnProvenance, DesignLayout, DesignMatrix, ObservationTable};
use crate::error::{Error, Result};
use crate::linalg::{drop_one_scan, DropEffect, DropOneScan, Matrix, PivotedQr};
use crate::model::LinearModel;
use crate::stats::{f_sf, ordinal_auc};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EliminationConfig {
    pub alpha: f64,
    pub seed: u64,
    pub protect_intercept: bool,
    /// Relative tolerance under which two p-values count as tied.
    pub pvalue_tie_tolerance: f64,
}

impl Default for EliminationConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            seed: 0,
            protect_intercept: true,
            pvalue_tie_tolerance: 1e-12,
        }
    }
}

impl EliminationConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if !(self.pvalue_tie_tolerance >= 0.0) {
            return Err(Error::InvalidConfig("p-value tie tolerance must be non-negative".into()));
        }
        Ok(())
    }
}

/// Single-term removal test against the current model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FTest {
    #[serde(rename = "F")]
    pub f_stat: f64,
    pub pvalue: f64,
}

/// F statistics and p-values for removing each candidate column of `x`.
///
/// Residual degrees of freedom are `N - rank(X)`. Removing a column whose
/// span is covered by the others leaves the SSE unchanged and yields
/// `F = 0`, `p = 1`. A perfect fit makes every informative column
/// infinitely significant.
pub fn nested_f_pvalues(x: &DesignMatrix, y: &[f64], candidates: &[usize]) -> Result<Vec<FTest>> {
    nested_f_tests(x, y, candidates).map(|(_, tests)| tests)
}

fn nested_f_tests(x: &DesignMatrix, y: &[f64], candidates: &[usize]) -> Result<(f64, Vec<FTest>)> {
    check_candidates(x.n_cols(), candidates)?;
    let scan = drop_one_scan(&x.values, y)?;
    let y_ss: f64 = y.iter().map(|v| v * v).sum();
    Ok((scan.sse, f_tests(&scan, y_ss, candidates)?))
}

fn check_candidates(p: usize, candidates: &[usize]) -> Result<()> {
    if let Some(&bad) = candidates.iter().find(|&&j| j >= p) {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: bad + 1,
        });
    }
    Ok(())
}

fn f_tests(scan: &DropOneScan, y_ss: f64, candidates: &[usize]) -> Result<Vec<FTest>> {
    let df = scan.n - scan.rank;
    if df == 0 {
        return Err(Error::DegenerateDf {
            n: scan.n,
            rank: scan.rank,
        });
    }
    let exact_fit = scan.sse <= 1e-20 * y_ss;
    let sigma2 = scan.sse / df as f64;
    candidates
        .par_iter()
        .map(|&j| {
            let increase = match scan.effects[j] {
                DropEffect::RankKept => 0.0,
                DropEffect::SseIncrease(d) => d.max(0.0),
            };
            if exact_fit {
                return Ok(if increase > 1e-20 * y_ss {
                    FTest {
                        f_stat: f64::INFINITY,
                        pvalue: 0.0,
                    }
                } else {
                    FTest {
                        f_stat: 0.0,
                        pvalue: 1.0,
                    }
                });
            }
            let f_stat = increase / sigma2;
            Ok(FTest {
                f_stat,
                pvalue: f_sf(f_stat, 1.0, df as f64)?,
            })
        })
        .collect()
}

/// A least-squares problem `(X, y)` reduced to `(R, z)` with `Q^T X = [R; 0]`
/// and `z` the leading part of `Q^T y`. For every column subset `S`, the SSE
/// of `y` on `X_S` equals the SSE of `z` on `R_S` plus `offset`.
struct Reduced {
    r: Matrix,
    z: Vec<f64>,
    offset: f64,
    n: usize,
}

impl Reduced {
    fn new(x: &Matrix, y: &[f64], n: usize, offset: f64) -> Result<Self> {
        if x.rows() == 0 || x.cols() == 0 {
            return Err(Error::EmptyMatrix);
        }
        if y.len() != x.rows() {
            return Err(Error::DimensionMismatch {
                expected: x.rows(),
                found: y.len(),
            });
        }
        if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        let qr = PivotedQr::factor(x.to_col_major(), x.rows(), x.cols(), 0.0);
        let qty = qr.qt_mul(y);
        let k = qr.steps();
        let r_cols = qr.r_unpivoted();
        let columns: Vec<&[f64]> = r_cols.chunks(k).collect();
        Ok(Self {
            r: Matrix::from_columns(&columns)?,
            z: qty[..k].to_vec(),
            offset: offset + qty[k..].iter().map(|v| v * v).sum::<f64>(),
            n,
        })
    }

    fn without(&self, j: usize) -> Result<Self> {
        let keep: Vec<usize> = (0..self.r.cols()).filter(|&c| c != j).collect();
        Self::new(&self.r.select_columns(&keep), &self.z, self.n, self.offset)
    }

    fn scan(&self) -> Result<DropOneScan> {
        let mut scan = drop_one_scan(&self.r, &self.z)?;
        scan.n = self.n;
        scan.sse += self.offset;
        Ok(scan)
    }
}

/// One deletion in an elimination run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EliminationStep {
    pub t: usize,
    pub column: String,
    #[serde(rename = "F")]
    pub f_stat: f64,
    pub pvalue: f64,
    /// Columns left after this deletion.
    pub remaining: usize,
    /// SSE of the model the column was removed from.
    pub sse: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EliminationTrace {
    pub steps: Vec<EliminationStep>,
}

impl EliminationTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn removed(&self) -> impl Iterator<Item = &str> {
        self.steps.iter().map(|s| s.column.as_str())
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for s in &self.steps {
            serde_json::to_writer(&mut w, s)?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut steps = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            steps.push(serde_json::from_str(&line)?);
        }
        Ok(Self { steps })
    }

    /// Replays the deletions on a layout, matching columns by name.
    pub fn apply(&self, layout: &DesignLayout) -> Result<DesignLayout> {
        let mut columns = layout.columns.clone();
        for s in &self.steps {
            let pos = columns
                .iter()
                .position(|c| c.to_string() == s.column)
                .ok_or(Error::ColumnMismatch)?;
            columns.remove(pos);
        }
        Ok(DesignLayout { columns })
    }
}

/// Repeatedly deletes the least significant column while its p-value
/// exceeds `alpha`. Among columns whose p-values tie with the maximum, one
/// is drawn uniformly with an RNG seeded by `cfg.seed`.
pub fn backward_eliminate(
    x_full: &DesignMatrix,
    y: &[f64],
    cfg: &EliminationConfig,
) -> Result<(DesignMatrix, EliminationTrace)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut active: Vec<usize> = (0..x_full.n_cols()).collect();
    let mut trace = EliminationTrace::default();
    let y_ss: f64 = y.iter().map(|v| v * v).sum();
    let mut reduced = Reduced::new(&x_full.values, y, x_full.n_rows(), 0.0)?;
    // SSE of the current model, carried across removals so nested models
    // never report a smaller SSE than their parent.
    let mut sse: Option<f64> = None;

    while active.len() > 1 {
        let candidates: Vec<usize> = (0..active.len())
            .filter(|&j| !(cfg.protect_intercept && x_full.columns[active[j]] == ColumnProvenance::Intercept))
            .collect();
        if candidates.is_empty() {
            break;
        }
        let mut scan = reduced.scan()?;
        if let Some(carried) = sse {
            scan.sse = carried;
        }
        let tests = f_tests(&scan, y_ss, &candidates)?;
        let max_p = tests.iter().map(|t| t.pvalue).fold(f64::NEG_INFINITY, f64::max);
        if !(max_p > cfg.alpha) {
            break;
        }
        let cutoff = max_p - cfg.pvalue_tie_tolerance * max_p.abs();
        let tied: Vec<usize> = (0..candidates.len()).filter(|&k| tests[k].pvalue >= cutoff).collect();
        let pick = tied[rng.random_range(0..tied.len())];
        let j = candidates[pick];
        let column = &x_full.columns[active[j]];

        log::debug!(
            "step {}: drop {} (F = {}, p = {})",
            trace.len() + 1,
            column,
            tests[pick].f_stat,
            tests[pick].pvalue
        );
        trace.steps.push(EliminationStep {
            t: trace.len() + 1,
            column: column.to_string(),
            f_stat: tests[pick].f_stat,
            pvalue: tests[pick].pvalue,
            remaining: active.len() - 1,
            sse: scan.sse,
        });
        let increase = match scan.effects[j] {
            DropEffect::RankKept => 0.0,
            DropEffect::SseIncrease(d) => d.max(0.0),
        };
        sse = Some(scan.sse + increase);
        active.remove(j);
        reduced = reduced.without(j)?;
    }
    Ok((x_full.select_columns(&active), trace))
}

/// Validation ROC-AUC of one seed's reduced model on both chronological
/// folds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedScore {
    pub seed: u64,
    pub fold1_auc: f64,
    pub fold2_auc: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedTuning {
    pub best_seed: u64,
    pub scores: Vec<SeedScore>,
    /// Reduced layout and trace of the winning seed.
    pub layout: DesignLayout,
    pub trace: EliminationTrace,
}

/// Index of the highest score in seed order; the first one wins ties.
pub fn best_seed_index(scores: &[SeedScore]) -> usize {
    let mut best = 0;
    for (k, s) in scores.iter().enumerate() {
        if s.score > scores[best].score {
            best = k;
        }
    }
    best
}

/// Labeled rows of `target` and the full design built on them, with
/// continuous features standardized over those rows.
pub fn training_design(table: &ObservationTable, target: &str) -> Result<(ObservationTable, DesignMatrix, Vec<f64>)> {
    let t = table.target_index(target)?;
    let labeled = table.subset(&table.labeled_rows(t));
    let all: Vec<usize> = (0..labeled.n_rows()).collect();
    let (std, _) = standardize(&labeled, &all)?;
    let x = expand_design(&std)?;
    let y = labeled
        .labels(t)
        .into_iter()
        .map(|l| f64::from(l.expect("labeled rows only")))
        .collect();
    Ok((labeled, x, y))
}

/// Scores every seed by the mean fold AUC of its reduced model and returns
/// the best one; ties go to the smallest seed.
///
/// Elimination runs on all labeled rows; the folds are only used to refit
/// the reduced specification and score it. Ternary targets are scored with
/// the mean AUC over the cumulative splits `label > k`.
pub fn tune_seed(
    seeds: &[u64],
    table: &ObservationTable,
    target: &str,
    cfg: &EliminationConfig,
) -> Result<SeedTuning> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("seed set is empty".into()));
    }
    let (labeled, x_full, y) = training_design(table, target)?;
    let classes = labeled.target(target)?.classes;
    let t = labeled.target_index(target)?;
    let labels: Vec<u8> = labeled.labels(t).into_iter().map(|l| l.unwrap_or(0)).collect();
    let (fold1, fold2) = chrono_split(&labeled)?;
    for (k, fold) in [&fold1, &fold2].into_iter().enumerate() {
        for rows in [&fold.train, &fold.valid] {
            let mut seen = [false; 256];
            rows.iter().for_each(|&i| seen[labels[i] as usize] = true);
            if seen.iter().filter(|s| **s).count() < 2 {
                return Err(Error::SingleClassFold(k + 1));
            }
        }
    }

    let mut seeds = seeds.to_vec();
    seeds.sort_unstable();
    seeds.dedup();
    let outcomes: Vec<(SeedScore, DesignLayout, EliminationTrace)> = seeds
        .par_iter()
        .map(|&seed| {
            let (reduced, trace) = backward_eliminate(&x_full, &y, &cfg.with_seed(seed))?;
            let layout = reduced.layout();
            let mut aucs = [0.0; 2];
            for (k, fold) in [&fold1, &fold2].into_iter().enumerate() {
                let model = LinearModel::fit(&labeled, &fold.train, target, &layout)?;
                let z = model.scores(&labeled.subset(&fold.valid))?;
                let fold_labels: Vec<u8> = fold.valid.iter().map(|&i| labels[i]).collect();
                aucs[k] = ordinal_auc(&z.z, &fold_labels, classes).map_err(|e| match e {
                    Error::SingleClass => Error::SingleClassFold(k + 1),
                    other => other,
                })?;
            }
            let score = SeedScore {
                seed,
                fold1_auc: aucs[0],
                fold2_auc: aucs[1],
                score: 0.5 * (aucs[0] + aucs[1]),
            };
            Ok((score, layout, trace))
        })
        .collect::<Result<_>>()?;

    let scores: Vec<SeedScore> = outcomes.iter().map(|o| o.0).collect();
    let (score, layout, trace) = outcomes[best_seed_index(&scores)].clone();
    Ok(SeedTuning {
        best_seed: score.seed,
        scores,
        layout,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design(columns: Vec<Vec<f64>>, names: &[&str]) -> DesignMatrix {
        let n = columns[0].len();
        DesignMatrix {
            values: Matrix::from_columns(&columns).unwrap(),
            columns: names
                .iter()
                .map(|&s| {
                    if s == "intercept" {
                        ColumnProvenance::Intercept
                    } else {
                        ColumnProvenance::GlobalFeature { feature: s.into() }
                    }
                })
                .collect(),
            row_keys: (0..n)
                .map(|i| crate::data::RowKey {
                    subject: "A".into(),
                    timestamp: crate::data::Timestamp::Epoch(i as i64),
                })
                .collect(),
        }
    }

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn zero_column_has_unit_pvalue() {
        let x1 = noise(30, 1);
        let y: Vec<f64> = x1.iter().zip(noise(30, 2)).map(|(a, e)| 2.0 * a + e).collect();
        let x = design(vec![vec![1.0; 30], x1, vec![0.0; 30]], &["intercept", "x", "zero"]);
        let t = nested_f_pvalues(&x, &y, &[2]).unwrap();
        assert_eq!(t[0], FTest { f_stat: 0.0, pvalue: 1.0 });
    }

    #[test]
    fn exact_fit_gives_zero_pvalue() {
        let x1 = noise(10, 3);
        let x = design(vec![vec![1.0; 10], x1.clone()], &["intercept", "x"]);
        let t = nested_f_pvalues(&x, &x1, &[1]).unwrap();
        assert_eq!(t[0].pvalue, 0.0);
    }

    #[test]
    fn degenerate_df() {
        let x = design(vec![vec![1.0, 1.0], vec![0.0, 1.0]], &["intercept", "x"]);
        assert!(matches!(
            nested_f_pvalues(&x, &[1.0, 3.0], &[1]),
            Err(Error::DegenerateDf { n: 2, rank: 2 })
        ));
    }

    #[test]
    fn alpha_one_keeps_everything() {
        let x = design(vec![vec![1.0; 20], noise(20, 4), noise(20, 5)], &["intercept", "a", "b"]);
        let cfg = EliminationConfig {
            alpha: 1.0,
            ..Default::default()
        };
        let (reduced, trace) = backward_eliminate(&x, &noise(20, 6), &cfg).unwrap();
        assert!(trace.is_empty());
        assert_eq!(reduced, x);
    }

    #[test]
    fn zero_column_removed_first() {
        let a = noise(40, 7);
        let y: Vec<f64> = a.iter().zip(noise(40, 8)).map(|(a, e)| 3.0 * a + 0.1 * e).collect();
        let x = design(vec![vec![1.0; 40], a, vec![0.0; 40]], &["intercept", "a", "zero"]);
        let (reduced, trace) = backward_eliminate(&x, &y, &EliminationConfig::default()).unwrap();
        assert_eq!(trace.steps[0].column, "zero");
        assert_eq!(trace.steps[0].pvalue, 1.0);
        assert_eq!(trace.steps[0].remaining, 2);
        assert_eq!(reduced.column_names(), vec!["intercept", "a"]);
    }

    #[test]
    fn intercept_protection() {
        let x = design(vec![vec![1.0; 25], noise(25, 9)], &["intercept", "a"]);
        let y = noise(25, 10);
        let (kept, _) = backward_eliminate(&x, &y, &EliminationConfig::default()).unwrap();
        assert!(kept.columns.contains(&ColumnProvenance::Intercept));
        let literal = EliminationConfig {
            protect_intercept: false,
            alpha: 1.0 - 1e-9,
            ..Default::default()
        };
        let (reduced, trace) = backward_eliminate(&x, &y, &literal).unwrap();
        assert_eq!(reduced.n_cols() + trace.len(), 2);
    }

    #[test]
    fn trace_jsonl_round_trip() {
        let trace = EliminationTrace {
            steps: vec![EliminationStep {
                t: 1,
                column: "id1×x".into(),
                f_stat: 0.25,
                pvalue: 0.61,
                remaining: 4,
                sse: 12.5,
            }],
        };
        let mut buf = Vec::new();
        trace.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(r#"{"t":1,"column":"id1×x","F":0.25,"pvalue":0.61,"remaining":4"#));
        assert_eq!(EliminationTrace::read_jsonl(buf.as_slice()).unwrap(), trace);
    }

    #[test]
    fn config_validation() {
        let bad = EliminationConfig {
            alpha: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
