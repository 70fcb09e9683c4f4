#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use sasl_core::data::{ColumnProvenance, DesignMatrix};
use sasl_core::linalg::Matrix;
use statrs::function::gamma::ln_gamma;

pub fn design(values: Matrix) -> DesignMatrix {
    let columns = (0..values.cols())
        .map(|j| {
            if j == 0 {
                ColumnProvenance::Intercept
            } else {
                ColumnProvenance::GlobalFeature { feature: format!("c{j}") }
            }
        })
        .collect();
    DesignMatrix {
        values,
        columns,
        row_keys: vec![],
    }
}

/// F(d1, d2) density.
pub fn f_pdf(x: f64, d1: f64, d2: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let ln = 0.5 * d1 * (d1 / d2).ln() + (0.5 * d1 - 1.0) * x.ln()
        - 0.5 * (d1 + d2) * (1.0 + d1 * x / d2).ln()
        - (ln_gamma(0.5 * d1) + ln_gamma(0.5 * d2) - ln_gamma(0.5 * (d1 + d2)));
    ln.exp()
}

const GK_NODES: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const G_WEIGHTS: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Gauss-Kronrod 7/15 rule: (Kronrod estimate, |Kronrod - Gauss|).
fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = GK_WEIGHTS[7] * fc;
    let mut g = G_WEIGHTS[3] * fc;
    for i in 0..7 {
        let s = f(c - h * GK_NODES[i]) + f(c + h * GK_NODES[i]);
        k += GK_WEIGHTS[i] * s;
        if i % 2 == 1 {
            g += G_WEIGHTS[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss-Kronrod quadrature on [a, b].
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (v, err) = gk15(f, a, b);
        // below this the estimate is round-off, not truncation error
        let floor = 50.0 * f64::EPSILON * v.abs();
        if err <= tol.max(floor) || depth == 0 {
            return v;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, 0.5 * tol, depth - 1) + rec(f, m, b, 0.5 * tol, depth - 1)
    }
    rec(f, a, b, tol, 40)
}

/// CDF of F(d1, d2) by quadrature of the density. The substitution
/// `t = s^k`, `k = max(1, 2 / d1)`, removes the singularity at 0.
pub fn f_cdf_quadrature(x: f64, d1: f64, d2: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let k = (2.0 / d1).max(1.0);
    let g = move |s: f64| {
        if s <= 0.0 {
            return if k == 1.0 { f_pdf(0.0, d1, d2) } else { 0.0 };
        }
        f_pdf(s.powf(k), d1, d2) * k * s.powf(k - 1.0)
    };
    integrate(&g, 0.0, x.powf(1.0 / k), 1e-13)
}

/// Mann-Whitney concordance over all positive/negative pairs.
pub fn brute_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut doubled, mut pairs) = (0u64, 0u64);
    for (i, &li) in labels.iter().enumerate() {
        if li != 1 {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj != 0 {
                continue;
            }
            pairs += 1;
            doubled += match scores[i].partial_cmp(&scores[j]).unwrap() {
                std::cmp::Ordering::Greater => 2,
                std::cmp::Ordering::Equal => 1,
                std::cmp::Ordering::Less => 0,
            };
        }
    }
    doubled as f64 / (2 * pairs) as f64
}

/// Macro-F1 from per-class counts, classes `0..classes`.
pub fn brute_macro_f1(pred: &[u8], y: &[u8], classes: u8) -> f64 {
    let mut total = 0.0;
    for c in 0..classes {
        let tp = pred.iter().zip(y).filter(|(p, l)| **p == c && **l == c).count();
        let fp = pred.iter().zip(y).filter(|(p, l)| **p == c && **l != c).count();
        let fne = pred.iter().zip(y).filter(|(p, l)| **p != c && **l == c).count();
        if 2 * tp + fp + fne > 0 {
            total += 2.0 * tp as f64 / (2 * tp + fp + fne) as f64;
        }
    }
    total / f64::from(classes)
}

/// Every midpoint between consecutive distinct pooled scores.
pub fn midpoints(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = a.iter().chain(b).copied().collect();
    v.sort_by(|x, y| x.partial_cmp(y).unwrap());
    v.dedup();
    v.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

pub fn min_fold_f1(cuts: &[f64], folds: [(&[f64], &[u8]); 2]) -> f64 {
    let classes = cuts.len() as u8 + 1;
    folds
        .iter()
        .map(|(z, y)| {
            let pred: Vec<u8> = z.iter().map(|&v| cuts.iter().filter(|&&c| v > c).count() as u8).collect();
            brute_macro_f1(&pred, y, classes)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Exhaustive maximum of the min-fold macro-F1 over one cut or a pair of
/// increasing cuts drawn from `grid`.
pub fn exhaustive_max(grid: &[f64], folds: [(&[f64], &[u8]); 2], ternary: bool) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for (i, &a) in grid.iter().enumerate() {
        if ternary {
            for &b in &grid[i + 1..] {
                best = best.max(min_fold_f1(&[a, b], folds));
            }
        } else {
            best = best.max(min_fold_f1(&[a], folds));
        }
    }
    best
}

/// Relative path -> contents for every file under `root`.
pub fn file_tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}
