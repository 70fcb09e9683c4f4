use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::qr::PivotedQr;
use crate::error::{Error, Result};

/// Relative pivot tolerance: pivots at or below `RANK_RTOL * ||X||_F` are
/// treated as numerically zero.
pub const RANK_RTOL: f64 = 1e-10;

/// Result of an ordinary least-squares fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub sse: f64,
    pub n: usize,
    pub p: usize,
    pub rank: usize,
    /// Columns outside the numerical rank; their coefficient is 0.
    pub rank_deficient: Vec<bool>,
}

impl OlsFit {
    /// Residual degrees of freedom, `N - rank` (equal to `N - p` at full rank).
    pub fn df(&self) -> usize {
        self.n - self.rank
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        x.mul_vec(&self.coefficients)
    }
}

fn validate(x: &Matrix, y: &[f64]) -> Result<()> {
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
    Ok(())
}

/// Pivot tolerance for `x`.
pub fn rank_tolerance(x: &Matrix) -> f64 {
    RANK_RTOL * x.frobenius_norm()
}

/// Least squares via pivoted Householder QR.
pub fn fit_ols(x: &Matrix, y: &[f64]) -> Result<OlsFit> {
    validate(x, y)?;
    let qr = PivotedQr::factor(x.to_col_major(), x.rows(), x.cols(), rank_tolerance(x));
    let qty = qr.qt_mul(y);
    Ok(OlsFit {
        coefficients: qr.solve_from_qty(&qty),
        sse: qr.sse_from_qty(&qty),
        n: x.rows(),
        p: x.cols(),
        rank: qr.rank(),
        rank_deficient: qr.deficient_columns(),
    })
}

/// Residual sum of squares of the OLS fit of `y` on `x`.
pub fn sse(x: &Matrix, y: &[f64]) -> Result<f64> {
    fit_ols(x, y).map(|f| f.sse)
}

/// Factorization of a design kept around so that the fits obtained by
/// dropping one column at a time can be computed on the small triangular
/// factor instead of the full `N x p` matrix.
#[derive(Debug, Clone)]
pub struct DropOneFits {
    n: usize,
    p: usize,
    rank: usize,
    sse: f64,
    tol: f64,
    /// `R P^T`, `k x p` column-major with `k = min(N, p)`.
    r: Vec<f64>,
    k: usize,
    /// Leading `k` entries of `Q^T y`.
    qty_head: Vec<f64>,
    /// Sum of squares of `Q^T y` beyond row `k`.
    tail_ss: f64,
}

/// SSE and rank of the fit with one column removed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropOne {
    pub sse: f64,
    pub rank: usize,
}

impl DropOneFits {
    pub fn new(x: &Matrix, y: &[f64]) -> Result<Self> {
        validate(x, y)?;
        let tol = rank_tolerance(x);
        let qr = PivotedQr::factor(x.to_col_major(), x.rows(), x.cols(), tol);
        let qty = qr.qt_mul(y);
        let k = qr.steps();
        Ok(Self {
            n: x.rows(),
            p: x.cols(),
            rank: qr.rank(),
            sse: qr.sse_from_qty(&qty),
            tol,
            r: qr.r_unpivoted(),
            k,
            qty_head: qty[..k].to_vec(),
            tail_ss: qty[k..].iter().map(|v| v * v).sum(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn sse(&self) -> f64 {
        self.sse
    }

    /// Fit without column `j`, using the same pivot tolerance as the parent.
    pub fn without(&self, j: usize) -> DropOne {
        let (k, p) = (self.k, self.p);
        if p == 1 {
            let ss = self.qty_head.iter().map(|v| v * v).sum::<f64>() + self.tail_ss;
            return DropOne { sse: ss, rank: 0 };
        }
        let mut a = Vec::with_capacity(k * (p - 1));
        for c in (0..p).filter(|&c| c != j) {
            a.extend_from_slice(&self.r[c * k..(c + 1) * k]);
        }
        let qr = PivotedQr::factor(a, k, p - 1, self.tol);
        let c = qr.qt_mul(&self.qty_head);
        DropOne {
            sse: qr.sse_from_qty(&c) + self.tail_ss,
            rank: qr.rank(),
        }
    }
}

/// How removing one column changes a least-squares fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DropEffect {
    /// The remaining columns span the same space; the fit is unchanged.
    RankKept,
    /// The rank drops by one and the SSE grows by this amount.
    SseIncrease(f64),
}

/// Drop-one effects for every column of a design, from a single
/// factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct DropOneScan {
    pub n: usize,
    pub rank: usize,
    pub sse: f64,
    pub effects: Vec<DropEffect>,
}

/// Computes the effect of deleting each column of `x` in turn.
///
/// With `R11` the leading `r x r` block of the pivoted factor, removing a
/// basis column `b` costs `beta_b^2 / (R11^-1 R11^-T)_bb` unless some
/// dependent column has a component along `b` that survives the pivot
/// tolerance, in which case that column takes over and the span is
/// unchanged. Dependent columns can always be removed without effect.
pub fn drop_one_scan(x: &Matrix, y: &[f64]) -> Result<DropOneScan> {
    validate(x, y)?;
    let tol = rank_tolerance(x);
    let qr = PivotedQr::factor(x.to_col_major(), x.rows(), x.cols(), tol);
    let qty = qr.qt_mul(y);
    let sse = qr.sse_from_qty(&qty);
    let (p, r) = (x.cols(), qr.rank());
    let mut effects = vec![DropEffect::RankKept; p];
    if r == 0 {
        return Ok(DropOneScan {
            n: x.rows(),
            rank: 0,
            sse,
            effects,
        });
    }

    let back_solve = |rhs: &mut [f64]| {
        for i in (0..r).rev() {
            let mut s = rhs[i];
            for j in (i + 1)..r {
                s -= qr.r_at(i, j) * rhs[j];
            }
            rhs[i] = s / qr.r_at(i, i);
        }
    };

    // Row norms of R11^-1, built one column at a time.
    let mut row_ss = vec![0.0; r];
    let mut e = vec![0.0; r];
    for c in 0..r {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[c] = 1.0;
        // R11^-1 e_c only has entries in rows 0..=c.
        for i in (0..=c).rev() {
            let mut s = e[i];
            for j in (i + 1)..=c {
                s -= qr.r_at(i, j) * e[j];
            }
            e[i] = s / qr.r_at(i, i);
        }
        for i in 0..=c {
            row_ss[i] += e[i] * e[i];
        }
    }
    // Distance of each basis column from the span of the other basis columns.
    let dist: Vec<f64> = row_ss.iter().map(|ss| 1.0 / ss.sqrt()).collect();

    let mut coef = qty[..r].to_vec();
    back_solve(&mut coef);

    let mut replaceable = vec![false; r];
    let mut c = vec![0.0; r];
    for d in r..p {
        for (i, ci) in c.iter_mut().enumerate() {
            *ci = qr.r_at(i, d);
        }
        back_solve(&mut c);
        for i in 0..r {
            if c[i].abs() * dist[i] > tol {
                replaceable[i] = true;
            }
        }
    }

    for i in 0..r {
        if !replaceable[i] {
            let t = coef[i] * dist[i];
            effects[qr.perm()[i]] = DropEffect::SseIncrease(t * t);
        }
    }
    Ok(DropOneScan {
        n: x.rows(),
        rank: r,
        sse,
        effects,
    })
}
