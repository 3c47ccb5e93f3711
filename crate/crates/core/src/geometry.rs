//! Compressible and incompressible vectors, distances, nets and boxes.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparsity level and distance threshold splitting the sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereParams {
    pub delta: f64,
    pub rho: f64,
}

impl Default for SphereParams {
    fn default() -> Self {
        SphereParams { delta: 0.1, rho: 0.3 }
    }
}

impl SphereParams {
    pub fn new(delta: f64, rho: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0 && rho > 0.0 && rho < 1.0) {
            return Err(Error::InvalidParameter(format!("delta = {delta}, rho = {rho} must lie in (0, 1)")));
        }
        Ok(SphereParams { delta, rho })
    }

    /// Lower magnitude bound of the spread coordinates, in units of `n^{-1/2}`.
    pub fn kappa0(&self) -> f64 {
        self.rho / 3.0
    }

    /// Upper magnitude bound of the spread coordinates, in units of `n^{-1/2}`.
    pub fn kappa1(&self) -> f64 {
        self.delta.powf(-0.5) + self.rho / 6.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SphereClass {
    Compressible,
    Incompressible,
}

fn check_unit(x: &[f64]) -> Result<f64> {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::NotUnitNorm(norm));
    }
    Ok(norm)
}

/// Distance from a unit vector to the set of `floor(delta n)`-sparse vectors.
pub fn dist_to_sparse(x: &[f64], delta: f64) -> Result<f64> {
    check_unit(x)?;
    let keep = (delta * x.len() as f64).floor() as usize;
    let mut sq: Vec<f64> = x.iter().map(|v| v * v).collect();
    sq.sort_by(|a, b| b.total_cmp(a));
    Ok(sq[keep.min(sq.len())..].iter().sum::<f64>().sqrt())
}

/// Classify a unit vector, also returning its distance to sparse vectors.
pub fn classify(x: &[f64], params: SphereParams) -> Result<(SphereClass, f64)> {
    let d = dist_to_sparse(x, params.delta)?;
    let class = if d <= params.rho { SphereClass::Compressible } else { SphereClass::Incompressible };
    Ok((class, d))
}

/// Indices `i` with `rho / (2 sqrt n) <= |x_i| <= delta^{-1/2} / sqrt n`.
pub fn spread_set(x: &[f64], params: SphereParams) -> Vec<usize> {
    let rt = (x.len() as f64).sqrt();
    let lo = params.rho / (2.0 * rt);
    let hi = params.delta.powf(-0.5) / rt;
    x.iter()
        .enumerate()
        .filter(|(_, v)| (lo..=hi).contains(&v.abs()))
        .map(|(i, _)| i)
        .collect()
}

pub fn spread_count(x: &[f64], params: SphereParams) -> usize {
    spread_set(x, params).len()
}

/// Minimum number of spread coordinates an incompressible vector must have.
pub fn spread_lower_bound(n: usize, params: SphereParams) -> f64 {
    params.rho * params.rho * params.delta * n as f64 / 2.0
}

/// Orthonormal basis of the column span, rejecting numerically dependent columns.
pub fn orthonormal_basis(basis: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = basis.ncols();
    if k == 0 {
        return Ok(DMatrix::zeros(basis.nrows(), 0));
    }
    if k > basis.nrows() {
        return Err(Error::RankDeficient(format!("{k} vectors in dimension {}", basis.nrows())));
    }
    let qr = basis.clone().col_piv_qr();
    let r = qr.r();
    let lead = r[(0, 0)].abs();
    if lead == 0.0 {
        return Err(Error::RankDeficient("zero basis".into()));
    }
    for i in 0..k {
        if r[(i, i)].abs() <= 1e-12 * lead {
            return Err(Error::RankDeficient(format!("numerical rank {i} < {k}")));
        }
    }
    Ok(qr.q())
}

/// Distance from `a` to the affine subspace `v + span(basis)`.
pub fn dist_to_affine_subspace(a: &[f64], basis: &DMatrix<f64>, v: &[f64]) -> Result<f64> {
    let n = a.len();
    if basis.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, got: basis.nrows() });
    }
    if v.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: v.len() });
    }
    let q = orthonormal_basis(basis)?;
    let diff = DVector::from_iterator(n, a.iter().zip(v).map(|(x, y)| x - y));
    let proj = &q * (q.transpose() * &diff);
    Ok((diff - proj).norm())
}

/// `max(|s_1 - 1|, |s_l - 1|)` for the column-normalised matrix.
pub fn almost_orthogonal_defect(vectors: &DMatrix<f64>) -> Result<f64> {
    let (n, l) = vectors.shape();
    if l == 0 {
        return Err(Error::InvalidParameter("no vectors".into()));
    }
    if l > n {
        return Err(Error::RankDeficient(format!("{l} vectors in dimension {n}")));
    }
    let mut m = vectors.clone();
    for mut c in m.column_iter_mut() {
        let norm = c.norm();
        if norm == 0.0 {
            return Err(Error::ZeroVector);
        }
        c /= norm;
    }
    let s = crate::spectral::singular_values(&m);
    Ok((s[0] - 1.0).abs().max((s[l - 1] - 1.0).abs()))
}

/// Nearest point of the lattice `(4 eps / sqrt n) Z^n`.
pub fn round_to_grid(v: &[f64], eps: f64) -> Result<Vec<f64>> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("grid scale {eps} must be positive")));
    }
    let h = 4.0 * eps / (v.len() as f64).sqrt();
    Ok(v.iter().map(|x| h * (x / h).round()).collect())
}

/// Integer lattice coordinates of a grid point, `v / (4 eps / sqrt n)`.
pub fn grid_coordinates(v: &[f64], eps: f64) -> Vec<i64> {
    let h = 4.0 * eps / (v.len() as f64).sqrt();
    v.iter().map(|x| (x / h).round() as i64).collect()
}

/// One coordinate set of a box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoordSet {
    /// Integers with `lo <= |x| <= hi`.
    Annulus { lo: i64, hi: i64 },
    /// `len` consecutive integers starting at `start`.
    Interval { start: i64, len: i64 },
}

impl CoordSet {
    pub fn contains(&self, x: i64) -> bool {
        match *self {
            CoordSet::Annulus { lo, hi } => (lo..=hi).contains(&x.abs()),
            CoordSet::Interval { start, len } => x >= start && x < start + len,
        }
    }

    pub fn size(&self) -> u64 {
        match *self {
            CoordSet::Annulus { lo, hi } => {
                if hi < lo {
                    0
                } else {
                    let count = (hi - lo + 1) as u64;
                    if lo == 0 {
                        2 * count - 1
                    } else {
                        2 * count
                    }
                }
            }
            CoordSet::Interval { len, .. } => len.max(0) as u64,
        }
    }
}

/// A product of integer sets `B_1 x ... x B_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub base: i64,
    pub kappa: f64,
    pub d: usize,
    pub sets: Vec<CoordSet>,
}

impl BoxSpec {
    pub fn dim(&self) -> usize {
        self.sets.len()
    }

    pub fn contains(&self, point: &[i64]) -> bool {
        point.len() == self.sets.len() && self.sets.iter().zip(point).all(|(s, &x)| s.contains(x))
    }

    /// Natural log of the number of lattice points.
    pub fn log_volume(&self) -> f64 {
        self.sets.iter().map(|s| (s.size() as f64).ln()).sum()
    }
}

fn annulus(base: i64, kappa: f64) -> CoordSet {
    CoordSet::Annulus { lo: base, hi: (kappa * base as f64).floor() as i64 }
}

/// The box containing an integer point: the first `d` coordinates use the annulus
/// `[-kappa N, -N] u [N, kappa N]`, the rest use the aligned length-`N` interval
/// around the coordinate.
pub fn box_of(point: &[i64], base: i64, kappa: f64, d: usize) -> Result<BoxSpec> {
    if base < 2 || !(kappa >= 2.0) {
        return Err(Error::InvalidParameter(format!("need N >= 2 and kappa >= 2, got {base}, {kappa}")));
    }
    if d > point.len() {
        return Err(Error::InvalidParameter(format!("d = {d} exceeds dimension {}", point.len())));
    }
    let far = kappa * kappa * base as f64;
    let mut sets = Vec::with_capacity(point.len());
    for (i, &x) in point.iter().enumerate() {
        if (x.abs() as f64) > far {
            return Err(Error::OutOfRange(format!("coordinate {i} = {x} beyond kappa^2 N")));
        }
        if i < d {
            let a = annulus(base, kappa);
            if !a.contains(x) {
                return Err(Error::OutOfRange(format!("coordinate {i} = {x} outside [N, kappa N]")));
            }
            sets.push(a);
        } else {
            sets.push(CoordSet::Interval { start: base * x.div_euclid(base), len: base });
        }
    }
    Ok(BoxSpec { base, kappa, d, sets })
}

/// Check the defining properties of an `(N, kappa, d)`-box.
pub fn box_validate(b: &BoxSpec) -> Result<()> {
    let n = b.dim();
    if b.sets.iter().any(|s| s.size() < b.base as u64) {
        return Err(Error::InvalidParameter("a coordinate set has fewer than N points".into()));
    }
    let want = annulus(b.base, b.kappa);
    if b.sets.iter().take(b.d).any(|s| *s != want) {
        return Err(Error::InvalidParameter("leading coordinate sets are not the annulus".into()));
    }
    let cap = n as f64 * (b.kappa * b.base as f64).ln();
    if b.log_volume() > cap + 1e-9 {
        return Err(Error::TooLarge(format!("log |B| = {} exceeds n log(kappa N) = {cap}", b.log_volume())));
    }
    Ok(())
}
