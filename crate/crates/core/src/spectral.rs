//! Eigenvalues, singular values, gaps and restricted invertibility.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ensembles::SymMatrix;
use crate::error::{Error, Result};

/// Eigenvalues in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum(Vec<f64>);

impl Spectrum {
    pub fn from_values(mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        Spectrum(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The `i`-th smallest eigenvalue, 1-based.
    pub fn nth(&self, i: usize) -> f64 {
        self.0[i - 1]
    }
}

pub fn eigen_sorted(a: &SymMatrix) -> Spectrum {
    Spectrum::from_values(a.as_matrix().clone().symmetric_eigenvalues().iter().copied().collect())
}

/// Ascending eigenvalues with the matching unit eigenvectors as columns.
pub fn eigen_sorted_with_vectors(a: &SymMatrix) -> (Spectrum, DMatrix<f64>) {
    let eig = a.as_matrix().clone().symmetric_eigen();
    let n = a.dim();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]).then(x.cmp(&y)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (Spectrum(values), vectors)
}

/// `lambda_{i+k} - lambda_i` with 1-based `i`.
pub fn gap_stat(spec: &Spectrum, i: usize, k: usize) -> Result<f64> {
    if i == 0 || i + k > spec.len() {
        return Err(Error::InvalidParameter(format!("gap ({i}, {k}) outside spectrum of size {}", spec.len())));
    }
    Ok(spec.nth(i + k) - spec.nth(i))
}

/// `min_i lambda_{i+k-1} - lambda_i` over all admissible `i`.
pub fn min_gap(spec: &Spectrum, k: usize) -> Result<f64> {
    if k < 2 || k > spec.len() {
        return Err(Error::InvalidParameter(format!("window {k} outside [2, {}]", spec.len())));
    }
    Ok(spec.0.windows(k).map(|w| w[k - 1] - w[0]).fold(f64::INFINITY, f64::min))
}

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// The `k`-th smallest singular value, `sigma_{p-k+1}` with `p = min(rows, cols)`.
pub fn kth_smallest_sv(m: &DMatrix<f64>, k: usize) -> Result<f64> {
    let s = singular_values(m);
    let p = s.len();
    if k == 0 || k > p {
        return Err(Error::InvalidParameter(format!("k = {k} outside [1, {p}]")));
    }
    Ok(s[p - k])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormEvent {
    pub norm: f64,
    pub threshold: f64,
    pub exceeds: bool,
}

/// Whether the operator norm reaches `4 sqrt(n)`.
pub fn spectral_norm_event(a: &DMatrix<f64>) -> NormEvent {
    let norm = singular_values(a).first().copied().unwrap_or(0.0);
    let threshold = 4.0 * (a.nrows() as f64).sqrt();
    NormEvent { norm, threshold, exceeds: norm >= threshold }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterlacingReport {
    pub holds: bool,
    pub max_violation: f64,
    pub tolerance: f64,
}

/// Cauchy interlacing between `a` and its leading principal minor of size `n - 1`.
pub fn interlacing_check(a: &SymMatrix) -> Result<InterlacingReport> {
    let n = a.dim();
    if n < 2 {
        return Err(Error::InvalidParameter("interlacing needs n >= 2".into()));
    }
    let outer = eigen_sorted(a);
    let inner = eigen_sorted(&a.leading_minor(n - 1));
    let scale = outer.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tolerance = 1e-9 * scale.max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    for i in 1..n {
        let mu = inner.nth(i);
        worst = worst.max(outer.nth(i) - mu).max(mu - outer.nth(i + 1));
    }
    Ok(InterlacingReport { holds: worst <= tolerance, max_violation: worst.max(0.0), tolerance })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectMode {
    Exhaustive,
    Greedy,
}

/// Column subset chosen for restricted invertibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// 0-based column indices, ascending.
    pub columns: Vec<usize>,
    /// Smallest singular value of the selected `k x l` block.
    pub achieved_sl: f64,
    /// `min_r sqrt(d r / ((r - l) sum_{i >= r} s_i(W)^2))`.
    pub bound_rhs: f64,
}

impl Selection {
    /// `achieved_sl^{-1} / bound_rhs`.
    pub fn ratio(&self) -> f64 {
        (1.0 / self.achieved_sl) / self.bound_rhs
    }
}

const EXHAUSTIVE_LIMIT: u128 = 1_000_000;

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn sl_of_columns(w: &DMatrix<f64>, cols: &[usize], l: usize) -> f64 {
    let sub = w.select_columns(cols);
    let s = singular_values(&sub);
    s.get(l - 1).copied().unwrap_or(0.0)
}

/// Choose `l` columns of the full-rank `k x d` matrix `w` keeping the `l`-th singular
/// value large.
pub fn restricted_column_select(w: &DMatrix<f64>, l: usize, mode: SelectMode) -> Result<Selection> {
    let (k, d) = w.shape();
    if l == 0 || l >= k {
        return Err(Error::InvalidParameter(format!("l = {l} must lie in [1, {})", k)));
    }
    if d < k {
        return Err(Error::RankDeficient(format!("{k} x {d} matrix cannot have rank {k}")));
    }
    let s = singular_values(w);
    if s[k - 1] <= 1e-12 * s[0] {
        return Err(Error::RankDeficient(format!("s_k = {:e}", s[k - 1])));
    }
    let bound_rhs = (l + 1..=k)
        .map(|r| {
            let tail: f64 = s[r - 1..k].iter().map(|x| x * x).sum();
            ((d * r) as f64 / ((r - l) as f64 * tail)).sqrt()
        })
        .fold(f64::INFINITY, f64::min);

    let (columns, achieved_sl) = match mode {
        SelectMode::Exhaustive => {
            let count = binomial(d, l);
            if count > EXHAUSTIVE_LIMIT {
                return Err(Error::TooLarge(format!("C({d}, {l}) = {count} subsets")));
            }
            let mut best: Option<(Vec<usize>, f64)> = None;
            let mut idx: Vec<usize> = (0..l).collect();
            loop {
                let v = sl_of_columns(w, &idx, l);
                if best.as_ref().is_none_or(|(_, b)| v > *b) {
                    best = Some((idx.clone(), v));
                }
                // Advance to the next combination in lexicographic order.
                let mut p = l;
                while p > 0 && idx[p - 1] == d - l + p - 1 {
                    p -= 1;
                }
                if p == 0 {
                    break;
                }
                idx[p - 1] += 1;
                for q in p..l {
                    idx[q] = idx[q - 1] + 1;
                }
            }
            best.expect("at least one subset")
        }
        SelectMode::Greedy => {
            let mut cur: Vec<usize> = (0..d).collect();
            while cur.len() > l {
                let mut best = (0, f64::NEG_INFINITY);
                for pos in 0..cur.len() {
                    let mut trial = cur.clone();
                    trial.remove(pos);
                    let v = sl_of_columns(w, &trial, l);
                    if v > best.1 {
                        best = (pos, v);
                    }
                }
                cur.remove(best.0);
            }
            let v = sl_of_columns(w, &cur, l);
            (cur, v)
        }
    };
    Ok(Selection { columns, achieved_sl, bound_rhs })
}
