//! Cut points turning latent scores into ordinal labels.
//!
//! Candidate thresholds are the midpoints between consecutive distinct
//! scores pooled over both folds. A candidate is scored by the smaller of
//! its two per-fold macro-F1 values; the chosen threshold is the center of
//! the largest connected run (binary) or region (ternary) of candidates
//! scoring within `stability_delta` of the best one. Centers are taken in
//! candidate-index space, so the labels produced depend only on the score
//! ranks.

use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{DesignMatrix, RowKey};
use crate::error::{Error, Result};
use crate::linalg::OlsFit;
use crate::stats::f1_from_counts;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentScores {
    pub row_keys: Vec<RowKey>,
    pub z: Vec<f64>,
}

/// `z = X beta`.
pub fn predict_scores(beta: &OlsFit, x: &DesignMatrix) -> Result<LatentScores> {
    if x.n_cols() != beta.coefficients.len() {
        return Err(Error::ColumnMismatch);
    }
    let z = x.values.mul_vec(&beta.coefficients)?;
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    Ok(LatentScores {
        row_keys: x.row_keys.clone(),
        z,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Cuts {
    Binary { tau: f64, plateau: Interval },
    Ternary { tau1: f64, tau2: f64, plateau: [Interval; 2] },
}

impl Cuts {
    pub fn binary(tau: f64) -> Self {
        Cuts::Binary {
            tau,
            plateau: Interval::point(tau),
        }
    }

    pub fn ternary(tau1: f64, tau2: f64) -> Result<Self> {
        if !(tau1 < tau2) {
            return Err(Error::InvalidSpec(format!("thresholds must increase: {tau1} >= {tau2}")));
        }
        Ok(Cuts::Ternary {
            tau1,
            tau2,
            plateau: [Interval::point(tau1), Interval::point(tau2)],
        })
    }

    pub fn classes(&self) -> u8 {
        match self {
            Cuts::Binary { .. } => 2,
            Cuts::Ternary { .. } => 3,
        }
    }

    /// `1[z > tau]`, or `1[z > tau1] + 1[z > tau2]`.
    pub fn label(&self, z: f64) -> u8 {
        match *self {
            Cuts::Binary { tau, .. } => u8::from(z > tau),
            Cuts::Ternary { tau1, tau2, .. } => u8::from(z > tau1) + u8::from(z > tau2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub target: String,
    #[serde(flatten)]
    pub cuts: Cuts,
    /// Macro-F1 on each fold at the chosen cut points.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fold_f1: Option<[f64; 2]>,
}

impl ThresholdSet {
    pub fn kind(&self) -> &'static str {
        match self.cuts {
            Cuts::Binary { .. } => "binary",
            Cuts::Ternary { .. } => "ternary",
        }
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)?;
        Ok(())
    }
}

/// Published operating points, usable in place of a search.
pub fn published_cuts(target: &str) -> Option<Cuts> {
    match target {
        "Q1" => Some(Cuts::binary(0.424)),
        "Q2" => Some(Cuts::binary(0.578)),
        "Q3" => Some(Cuts::binary(0.603)),
        "S3" => Some(Cuts::binary(0.650)),
        "S1" => Some(Cuts::ternary(0.900, 1.125).expect("increasing")),
        _ => None,
    }
}

pub fn discretize(z: &LatentScores, thr: &ThresholdSet) -> Vec<u8> {
    z.z.iter().map(|&v| thr.cuts.label(v)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Upper bound on the number of candidates per axis; the midpoint grid
    /// is thinned evenly when it is longer. `None` keeps every midpoint.
    pub grid_resolution: Option<usize>,
    pub stability_delta: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            grid_resolution: None,
            stability_delta: 0.005,
        }
    }
}

/// Scores and labels of one fold.
#[derive(Debug, Clone, Copy)]
pub struct FoldScores<'a> {
    pub z: &'a [f64],
    pub y: &'a [u8],
}

/// Per-class counts of scores at or below each candidate.
struct FoldCounts {
    totals: Vec<usize>,
    /// `below[c][k]`: rows of class `c` with score `<= grid[k]`.
    below: Vec<Vec<usize>>,
}

impl FoldCounts {
    fn new(fold: FoldScores<'_>, grid: &[f64], classes: u8) -> Self {
        let mut order: Vec<usize> = (0..fold.z.len()).collect();
        order.sort_by(|&a, &b| fold.z[a].total_cmp(&fold.z[b]));
        let mut totals = vec![0; classes as usize];
        fold.y.iter().for_each(|&l| totals[l as usize] += 1);
        let mut below = vec![vec![0; grid.len()]; classes as usize];
        let mut running = vec![0; classes as usize];
        let mut next = 0;
        for (k, &tau) in grid.iter().enumerate() {
            while next < order.len() && fold.z[order[next]] <= tau {
                running[fold.y[order[next]] as usize] += 1;
                next += 1;
            }
            for c in 0..classes as usize {
                below[c][k] = running[c];
            }
        }
        Self { totals, below }
    }

    fn binary_f1(&self, k: usize) -> f64 {
        let (n0, n1) = (self.totals[0], self.totals[1]);
        let (b0, b1) = (self.below[0][k], self.below[1][k]);
        let f0 = f1_from_counts(b0, b1, n0 - b0);
        let f1 = f1_from_counts(n1 - b1, n0 - b0, b1);
        0.5 * (f0 + f1)
    }

    fn ternary_f1(&self, i: usize, j: usize) -> f64 {
        let n = &self.totals;
        let a: [usize; 3] = std::array::from_fn(|c| self.below[c][i]);
        let b: [usize; 3] = std::array::from_fn(|c| self.below[c][j]);
        let f0 = f1_from_counts(a[0], a[1] + a[2], n[0] - a[0]);
        let mid = |c: usize| b[c] - a[c];
        let f1 = f1_from_counts(mid(1), mid(0) + mid(2), n[1] - mid(1));
        let f2 = f1_from_counts(n[2] - b[2], (n[0] - b[0]) + (n[1] - b[1]), b[2]);
        (f0 + f1 + f2) / 3.0
    }
}

fn check_fold(fold: FoldScores<'_>, classes: u8, index: usize, min_present: usize) -> Result<()> {
    if fold.z.len() != fold.y.len() {
        return Err(Error::LengthMismatch(fold.z.len(), fold.y.len()));
    }
    if fold.z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    if let Some(&l) = fold.y.iter().find(|&&l| l >= classes) {
        return Err(Error::TargetOutOfRange {
            target: format!("fold {index}"),
            label: i64::from(l),
            classes,
        });
    }
    let present = (0..classes).filter(|c| fold.y.contains(c)).count();
    if present < min_present {
        return Err(Error::SingleClassFold(index));
    }
    Ok(())
}

/// Midpoints between consecutive distinct scores of both folds, thinned to
/// at most `resolution` entries.
pub fn candidate_grid(a: &[f64], b: &[f64], resolution: Option<usize>) -> Vec<f64> {
    let mut values: Vec<f64> = a.iter().chain(b).copied().collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let mut grid: Vec<f64> = if values.len() < 2 {
        values
    } else {
        values
            .windows(2)
            .map(|w| {
                let m = w[0] + 0.5 * (w[1] - w[0]);
                if m < w[1] {
                    m
                } else {
                    w[0]
                }
            })
            .collect()
    };
    if let Some(r) = resolution {
        let g = grid.len();
        if r >= 1 && g > r {
            grid = if r == 1 {
                vec![grid[(g - 1) / 2]]
            } else {
                (0..r)
                    .map(|k| grid[((k * (g - 1)) as f64 / (r - 1) as f64).round() as usize])
                    .collect()
            };
        }
    }
    grid
}

/// Longest run of qualifying candidates; ties prefer the higher peak, then
/// the earlier run. Returns inclusive index bounds.
fn best_run(values: &[f64], cutoff: f64) -> (usize, usize) {
    let mut best: Option<(usize, usize, f64)> = None;
    let mut k = 0;
    while k < values.len() {
        if values[k] < cutoff {
            k += 1;
            continue;
        }
        let start = k;
        let mut peak = values[k];
        while k + 1 < values.len() && values[k + 1] >= cutoff {
            k += 1;
            peak = peak.max(values[k]);
        }
        let better = match best {
            None => true,
            Some((s, e, p)) => {
                let (len, best_len) = (k - start, e - s);
                len > best_len || (len == best_len && peak > p)
            }
        };
        if better {
            best = Some((start, k, peak));
        }
        k += 1;
    }
    let (s, e, _) = best.expect("the maximum always qualifies");
    (s, e)
}

/// Binary cut point search.
pub fn search_threshold_binary(
    target: &str,
    fold1: FoldScores<'_>,
    fold2: FoldScores<'_>,
    cfg: &SearchConfig,
) -> Result<ThresholdSet> {
    check_fold(fold1, 2, 1, 2)?;
    check_fold(fold2, 2, 2, 2)?;
    let grid = candidate_grid(fold1.z, fold2.z, cfg.grid_resolution);
    let c1 = FoldCounts::new(fold1, &grid, 2);
    let c2 = FoldCounts::new(fold2, &grid, 2);
    let objective: Vec<f64> = (0..grid.len()).map(|k| c1.binary_f1(k).min(c2.binary_f1(k))).collect();
    let best = objective.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = best_run(&objective, best - cfg.stability_delta);
    let tau = grid[lo + (hi - lo) / 2];
    let fold_f1 = [c1.binary_f1(lo + (hi - lo) / 2), c2.binary_f1(lo + (hi - lo) / 2)];
    Ok(ThresholdSet {
        target: target.to_string(),
        cuts: Cuts::Binary {
            tau,
            plateau: Interval {
                lo: grid[lo],
                hi: grid[hi],
            },
        },
        fold_f1: Some(fold_f1),
    })
}

/// Ternary cut point search over candidate pairs `tau1 < tau2`.
pub fn search_threshold_ternary(
    target: &str,
    fold1: FoldScores<'_>,
    fold2: FoldScores<'_>,
    cfg: &SearchConfig,
) -> Result<ThresholdSet> {
    check_fold(fold1, 3, 1, 2)?;
    check_fold(fold2, 3, 2, 2)?;
    let grid = candidate_grid(fold1.z, fold2.z, cfg.grid_resolution);
    let g = grid.len();
    if g < 2 {
        return Err(Error::InvalidSpec("ternary search needs at least three distinct scores".into()));
    }
    let c1 = FoldCounts::new(fold1, &grid, 3);
    let c2 = FoldCounts::new(fold2, &grid, 3);
    let idx = |i: usize, j: usize| i * g + j;
    let mut objective = vec![f64::NEG_INFINITY; g * g];
    let mut best = f64::NEG_INFINITY;
    for i in 0..g {
        for j in (i + 1)..g {
            let v = c1.ternary_f1(i, j).min(c2.ternary_f1(i, j));
            objective[idx(i, j)] = v;
            best = best.max(v);
        }
    }
    let cutoff = best - cfg.stability_delta;

    // Largest 4-connected region of qualifying cells; ties prefer the higher
    // peak, then the region found first in row-major order.
    let mut seen = vec![false; g * g];
    let mut region: Vec<(usize, usize)> = Vec::new();
    let mut region_peak = f64::NEG_INFINITY;
    let mut queue = VecDeque::new();
    for i in 0..g {
        for j in (i + 1)..g {
            if seen[idx(i, j)] || objective[idx(i, j)] < cutoff {
                continue;
            }
            seen[idx(i, j)] = true;
            queue.push_back((i, j));
            let mut cells = Vec::new();
            let mut peak = f64::NEG_INFINITY;
            while let Some((a, b)) = queue.pop_front() {
                cells.push((a, b));
                peak = peak.max(objective[idx(a, b)]);
                let neighbours = [
                    (a.wrapping_sub(1), b),
                    (a + 1, b),
                    (a, b.wrapping_sub(1)),
                    (a, b + 1),
                ];
                for (na, nb) in neighbours {
                    if na < g && nb < g && na < nb && !seen[idx(na, nb)] && objective[idx(na, nb)] >= cutoff {
                        seen[idx(na, nb)] = true;
                        queue.push_back((na, nb));
                    }
                }
            }
            if cells.len() > region.len() || (cells.len() == region.len() && peak > region_peak) {
                region = cells;
                region_peak = peak;
            }
        }
    }

    let n = region.len() as f64;
    let ci = region.iter().map(|c| c.0 as f64).sum::<f64>() / n;
    let cj = region.iter().map(|c| c.1 as f64).sum::<f64>() / n;
    let rounded = (ci.round() as usize, cj.round() as usize);
    let (i, j) = if region.contains(&rounded) {
        rounded
    } else {
        let dist = |c: &(usize, usize)| (c.0 as f64 - ci).powi(2) + (c.1 as f64 - cj).powi(2);
        let mut sorted = region.clone();
        sorted.sort();
        *sorted
            .iter()
            .min_by(|a, b| dist(a).total_cmp(&dist(b)))
            .expect("region is nonempty")
    };
    let bounds = |f: fn(&(usize, usize)) -> usize| {
        let lo = region.iter().map(f).min().expect("nonempty");
        let hi = region.iter().map(f).max().expect("nonempty");
        Interval {
            lo: grid[lo],
            hi: grid[hi],
        }
    };
    Ok(ThresholdSet {
        target: target.to_string(),
        cuts: Cuts::Ternary {
            tau1: grid[i],
            tau2: grid[j],
            plateau: [bounds(|c| c.0), bounds(|c| c.1)],
        },
        fold_f1: Some([c1.ternary_f1(i, j), c2.ternary_f1(i, j)]),
    })
}

/// Per-fold macro-F1 of fixed cut points.
pub fn fold_macro_f1(cuts: &Cuts, fold1: FoldScores<'_>, fold2: FoldScores<'_>) -> Result<[f64; 2]> {
    let classes: Vec<u8> = (0..cuts.classes()).collect();
    let f = |fold: FoldScores<'_>| {
        let preds: Vec<u8> = fold.z.iter().map(|&z| cuts.label(z)).collect();
        crate::stats::macro_f1(&preds, fold.y, &classes)
    };
    Ok([f(fold1)?, f(fold2)?])
}

/// One point of a plateau curve. For ternary cuts the curve is the two
/// axis slices through the chosen pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub axis: u8,
    pub tau: f64,
    pub f1_fold1: f64,
    pub f1_fold2: f64,
}

/// Per-fold macro-F1 along the candidate grid around `thr`.
pub fn plateau_curve(
    thr: &ThresholdSet,
    fold1: FoldScores<'_>,
    fold2: FoldScores<'_>,
    grid_resolution: Option<usize>,
) -> Result<Vec<CurvePoint>> {
    let grid = candidate_grid(fold1.z, fold2.z, grid_resolution);
    let mut out = Vec::new();
    for &tau in &grid {
        match thr.cuts {
            Cuts::Binary { .. } => {
                let [a, b] = fold_macro_f1(&Cuts::binary(tau), fold1, fold2)?;
                out.push(CurvePoint {
                    axis: 1,
                    tau,
                    f1_fold1: a,
                    f1_fold2: b,
                });
            }
            Cuts::Ternary { tau1, tau2, .. } => {
                if tau < tau2 {
                    let [a, b] = fold_macro_f1(&Cuts::ternary(tau, tau2)?, fold1, fold2)?;
                    out.push(CurvePoint {
                        axis: 1,
                        tau,
                        f1_fold1: a,
                        f1_fold2: b,
                    });
                }
                if tau > tau1 {
                    let [a, b] = fold_macro_f1(&Cuts::ternary(tau1, tau)?, fold1, fold2)?;
                    out.push(CurvePoint {
                        axis: 2,
                        tau,
                        f1_fold1: a,
                        f1_fold2: b,
                    });
                }
            }
        }
    }
    out.sort_by(|a, b| a.axis.cmp(&b.axis).then(a.tau.total_cmp(&b.tau)));
    Ok(out)
}

pub fn write_curve_csv<W: Write>(points: &[CurvePoint], w: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["axis", "tau", "f1_fold1", "f1_fold2"])?;
    for p in points {
        w.write_record([
            p.axis.to_string(),
            p.tau.to_string(),
            p.f1_fold1.to_string(),
            p.f1_fold2.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
