//! Householder QR with column pivoting.
//!
//! Columns are pivoted by largest remaining norm, so the diagonal of `R`
//! is non-increasing in magnitude. The numerical rank is the number of
//! diagonal entries above an absolute tolerance; columns in pivot
//! positions at or beyond the rank are treated as linearly dependent.

/// Pivoted QR factorization `A P = Q R` of an `m x n` matrix.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    m: usize,
    n: usize,
    /// Column-major; `R` on and above the diagonal, Householder vectors below.
    qr: Vec<f64>,
    tau: Vec<f64>,
    r_diag: Vec<f64>,
    /// `perm[k]` is the original index of the column in pivot position `k`.
    perm: Vec<usize>,
    rank: usize,
}

impl PivotedQr {
    /// Factors a column-major `m x n` matrix. Pivots whose remaining column
    /// norm is `<= tol` count as rank deficient.
    pub fn factor(mut a: Vec<f64>, m: usize, n: usize, tol: f64) -> Self {
        debug_assert_eq!(a.len(), m * n);
        let steps = m.min(n);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut tau = vec![0.0; steps];
        let mut r_diag = vec![0.0; steps];
        let mut rank = steps;
        let mut rank_found = false;

        for k in 0..steps {
            // Remaining norms are recomputed rather than downdated; the
            // extra O(mn) per step keeps the pivot order exact.
            let mut best = k;
            let mut best_norm = -1.0;
            for j in k..n {
                let col = &a[j * m + k..(j + 1) * m];
                let nrm = norm2(col);
                if nrm > best_norm {
                    best_norm = nrm;
                    best = j;
                }
            }
            if best != k {
                for i in 0..m {
                    a.swap(k * m + i, best * m + i);
                }
                perm.swap(k, best);
            }
            if !rank_found && best_norm <= tol {
                rank = k;
                rank_found = true;
            }

            let (beta, t) = householder(&mut a[k * m + k..(k + 1) * m]);
            tau[k] = t;
            r_diag[k] = beta;
            if t != 0.0 {
                let (head, tail) = a.split_at_mut((k + 1) * m);
                let v = &head[k * m + k..(k + 1) * m];
                for j in 0..(n - k - 1) {
                    let col = &mut tail[j * m + k..(j + 1) * m];
                    apply_reflector(v, t, col);
                }
            }
        }

        Self {
            m,
            n,
            qr: a,
            tau,
            r_diag,
            perm,
            rank,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// Computes `Q^T y` (length `m`).
    pub fn qt_mul(&self, y: &[f64]) -> Vec<f64> {
        let mut c = y.to_vec();
        for k in 0..self.tau.len() {
            let t = self.tau[k];
            if t == 0.0 {
                continue;
            }
            let v = &self.qr[k * self.m + k..(k + 1) * self.m];
            apply_reflector(v, t, &mut c[k..]);
        }
        c
    }

    /// Residual sum of squares given `Q^T y`.
    pub fn sse_from_qty(&self, qty: &[f64]) -> f64 {
        qty[self.rank..].iter().map(|v| v * v).sum()
    }

    /// Basic least-squares solution given `Q^T y`; columns outside the
    /// numerical rank receive coefficient 0. Returned in original order.
    pub fn solve_from_qty(&self, qty: &[f64]) -> Vec<f64> {
        let r = self.rank;
        let mut z = qty[..r].to_vec();
        for i in (0..r).rev() {
            let mut s = z[i];
            for j in (i + 1)..r {
                s -= self.r_at(i, j) * z[j];
            }
            z[i] = s / self.r_diag[i];
        }
        let mut beta = vec![0.0; self.n];
        for (k, &zk) in z.iter().enumerate() {
            beta[self.perm[k]] = zk;
        }
        beta
    }

    /// Whether each original column lies outside the numerical rank.
    pub fn deficient_columns(&self) -> Vec<bool> {
        let mut out = vec![false; self.n];
        for k in self.rank..self.n {
            out[self.perm[k]] = true;
        }
        out
    }

    /// Entry `(i, j)` of `R` in pivoted column order.
    #[inline]
    pub fn r_at(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.r_diag[i]
        } else {
            self.qr[j * self.m + i]
        }
    }

    /// The `min(m, n) x n` triangular factor with its columns put back in
    /// original order (i.e. `R P^T`), column-major. Since `Q^T A = [R; 0]`,
    /// least-squares problems on column subsets of `A` reduce to this matrix.
    pub fn r_unpivoted(&self) -> Vec<f64> {
        let k = self.tau.len();
        let mut out = vec![0.0; k * self.n];
        for (pos, &orig) in self.perm.iter().enumerate() {
            for i in 0..k.min(pos + 1) {
                out[orig * k + i] = self.r_at(i, pos);
            }
        }
        out
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    pub fn steps(&self) -> usize {
        self.tau.len()
    }
}

/// Generates a reflector `H = I - tau v v^T` mapping `x` onto `beta e_1`.
/// On return `x[1..]` holds `v[1..]` (`v[0] = 1` implicit) and `x[0]` is left
/// untouched; returns `(beta, tau)`.
fn householder(x: &mut [f64]) -> (f64, f64) {
    let alpha = x[0];
    let tail_norm = norm2(&x[1..]);
    if tail_norm == 0.0 {
        return (alpha, 0.0);
    }
    let norm = hypot(alpha, tail_norm);
    let beta = if alpha >= 0.0 { -norm } else { norm };
    let tau = (beta - alpha) / beta;
    let scale = 1.0 / (alpha - beta);
    for v in &mut x[1..] {
        *v *= scale;
    }
    (beta, tau)
}

/// Applies `H = I - tau v v^T` to `c`, where `v[0] = 1` and `v[1..]` is
/// read from `v_store[1..]`.
#[inline]
fn apply_reflector(v_store: &[f64], tau: f64, c: &mut [f64]) {
    let mut s = c[0];
    for (vi, ci) in v_store[1..].iter().zip(&c[1..]) {
        s += vi * ci;
    }
    s *= tau;
    c[0] -= s;
    for (vi, ci) in v_store[1..].iter().zip(c[1..].iter_mut()) {
        *ci -= s * vi;
    }
}

/// Overflow-safe Euclidean norm.
pub(crate) fn norm2(x: &[f64]) -> f64 {
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let s: f64 = x.iter().map(|v| (v / scale) * (v / scale)).sum();
    scale * s.sqrt()
}

fn hypot(a: f64, b: f64) -> f64 {
    a.hypot(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col_major(rows: &[&[f64]]) -> (Vec<f64>, usize, usize) {
        let m = rows.len();
        let n = rows[0].len();
        let mut a = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                a[j * m + i] = rows[i][j];
            }
        }
        (a, m, n)
    }

    #[test]
    fn solves_square_system() {
        let (a, m, n) = col_major(&[&[2.0, 1.0], &[1.0, 3.0]]);
        let qr = PivotedQr::factor(a, m, n, 1e-12);
        assert_eq!(qr.rank(), 2);
        let qty = qr.qt_mul(&[3.0, 5.0]);
        let b = qr.solve_from_qty(&qty);
        assert!((b[0] - 0.8).abs() < 1e-14);
        assert!((b[1] - 1.4).abs() < 1e-14);
        assert!(qr.sse_from_qty(&qty) < 1e-28);
    }

    #[test]
    fn detects_duplicate_column() {
        let (a, m, n) = col_major(&[&[1.0, 1.0, 0.0], &[2.0, 2.0, 1.0], &[3.0, 3.0, 0.0]]);
        let qr = PivotedQr::factor(a, m, n, 1e-10);
        assert_eq!(qr.rank(), 2);
        assert_eq!(qr.deficient_columns().iter().filter(|d| **d).count(), 1);
    }

    #[test]
    fn unpivoted_r_reproduces_gram_matrix() {
        let (a, m, n) = col_major(&[&[1.0, 4.0, 2.0], &[0.5, -1.0, 3.0], &[2.0, 0.0, 1.0], &[1.0, 1.0, 1.0]]);
        let gram = |x: &[f64], rows: usize, i: usize, j: usize| -> f64 {
            (0..rows).map(|r| x[i * rows + r] * x[j * rows + r]).sum()
        };
        let qr = PivotedQr::factor(a.clone(), m, n, 1e-12);
        let r = qr.r_unpivoted();
        let k = qr.steps();
        for i in 0..n {
            for j in 0..n {
                assert!((gram(&a, m, i, j) - gram(&r, k, i, j)).abs() < 1e-12);
            }
        }
    }
}
