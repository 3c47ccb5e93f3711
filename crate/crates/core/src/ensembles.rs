//! Entry distributions and random matrix ensembles.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;
use crate::rng::StreamKey;

/// Default sparsity of the rows of a zeroed-out matrix.
pub const DEFAULT_NU: f64 = 1.0 / 16384.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub value: f64,
    pub prob: f64,
}

impl Atom {
    pub fn new(value: f64, prob: f64) -> Self {
        Atom { value, prob }
    }
}

/// Shape of an entry distribution before normalisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DistKind {
    Rademacher,
    Gaussian,
    /// Uniform on a symmetric interval.
    UniformSymmetric,
    Discrete(Vec<Atom>),
    /// `Bernoulli(mu) * base`, not rescaled.
    Sparse { base: Box<DistKind>, mu: f64 },
}

/// A normalised entry distribution together with its subgaussian constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistSpec {
    pub kind: DistKind,
    pub psi2: f64,
}

const UNIFORM_HALF_WIDTH: f64 = 1.732_050_807_568_877_2;

/// Build a distribution, rescaling it to mean 0 and variance 1 (sparse kinds keep
/// the variance `mu` of their normalised base).
pub fn make_dist(kind: DistKind) -> Result<DistSpec> {
    let kind = normalise(kind)?;
    let psi2 = match &kind {
        DistKind::Rademacher => 1.0 / std::f64::consts::LN_2.sqrt(),
        DistKind::Gaussian => (8.0f64 / 3.0).sqrt(),
        _ => solve_psi2(&kind)?,
    };
    Ok(DistSpec { kind, psi2 })
}

fn normalise(kind: DistKind) -> Result<DistKind> {
    match kind {
        DistKind::Discrete(atoms) => {
            if atoms.is_empty() {
                return Err(Error::InvalidDistribution("no atoms".into()));
            }
            if atoms.iter().any(|a| !a.value.is_finite() || !a.prob.is_finite() || a.prob < 0.0) {
                return Err(Error::InvalidDistribution("atoms must be finite with non-negative mass".into()));
            }
            let total: f64 = atoms.iter().map(|a| a.prob).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidDistribution(format!("probabilities sum to {total}")));
            }
            let atoms: Vec<Atom> = atoms
                .into_iter()
                .filter(|a| a.prob > 0.0)
                .map(|a| Atom::new(a.value, a.prob / total))
                .collect();
            let mean: f64 = atoms.iter().map(|a| a.prob * a.value).sum();
            let var: f64 = atoms.iter().map(|a| a.prob * (a.value - mean).powi(2)).sum();
            let scale = atoms.iter().map(|a| a.value.abs()).fold(0.0, f64::max).max(1.0);
            if var <= (1e-12 * scale).powi(2) {
                return Err(Error::InvalidDistribution("constant distribution cannot be normalised".into()));
            }
            let sd = var.sqrt();
            Ok(DistKind::Discrete(
                atoms.into_iter().map(|a| Atom::new((a.value - mean) / sd, a.prob)).collect(),
            ))
        }
        DistKind::Sparse { base, mu } => {
            if !(mu > 0.0 && mu <= 1.0) {
                return Err(Error::InvalidDistribution(format!("sparsity {mu} outside (0, 1]")));
            }
            if matches!(*base, DistKind::Sparse { .. }) {
                return Err(Error::InvalidDistribution("nested sparse distribution".into()));
            }
            Ok(DistKind::Sparse { base: Box::new(normalise(*base)?), mu })
        }
        other => Ok(other),
    }
}

/// `E exp(xi^2 / t^2)`, possibly infinite.
fn exp_square_moment(kind: &DistKind, t: f64) -> f64 {
    let s = 1.0 / (t * t);
    match kind {
        DistKind::Rademacher => s.exp(),
        DistKind::Gaussian => {
            if 2.0 * s >= 1.0 {
                f64::INFINITY
            } else {
                1.0 / (1.0 - 2.0 * s).sqrt()
            }
        }
        DistKind::UniformSymmetric => {
            let a = UNIFORM_HALF_WIDTH;
            if a * a * s > 700.0 {
                return f64::INFINITY;
            }
            quad::integrate(|x| (x * x * s).exp(), 0.0, a, 8) / a
        }
        DistKind::Discrete(atoms) => atoms.iter().map(|a| a.prob * (a.value * a.value * s).exp()).sum(),
        DistKind::Sparse { base, mu } => 1.0 - mu + mu * exp_square_moment(base, t),
    }
}

fn solve_psi2(kind: &DistKind) -> Result<f64> {
    let f = |t: f64| exp_square_moment(kind, t) - 2.0;
    let mut hi = 1.0;
    while f(hi) > 0.0 {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Numerical("subgaussian constant not found".into()));
        }
    }
    let mut lo = hi / 2.0;
    while f(lo) <= 0.0 {
        lo /= 2.0;
        if lo < 1e-9 {
            return Err(Error::Numerical("subgaussian constant not found".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * hi {
            break;
        }
    }
    Ok(hi)
}

impl DistSpec {
    pub fn rademacher() -> Self {
        make_dist(DistKind::Rademacher).expect("rademacher")
    }

    pub fn gaussian() -> Self {
        make_dist(DistKind::Gaussian).expect("gaussian")
    }

    pub fn uniform() -> Self {
        make_dist(DistKind::UniformSymmetric).expect("uniform")
    }

    /// Parse the short names used in configuration files.
    pub fn from_name(name: &str) -> Result<Self> {
        match name.trim() {
            "rademacher" => Ok(Self::rademacher()),
            "gaussian" => Ok(Self::gaussian()),
            "uniform" | "uniform-symmetric" => Ok(Self::uniform()),
            other => Err(Error::InvalidDistribution(format!("unknown distribution '{other}'"))),
        }
    }

    pub fn name(&self) -> String {
        match &self.kind {
            DistKind::Rademacher => "rademacher".into(),
            DistKind::Gaussian => "gaussian".into(),
            DistKind::UniformSymmetric => "uniform".into(),
            DistKind::Discrete(a) => format!("discrete[{}]", a.len()),
            DistKind::Sparse { mu, .. } => format!("sparse[{mu}]"),
        }
    }

    pub fn mean(&self) -> f64 {
        kind_moments(&self.kind).0
    }

    pub fn variance(&self) -> f64 {
        let (m, s2) = kind_moments(&self.kind);
        s2 - m * m
    }

    /// Atoms of the law, if it is finitely supported.
    pub fn atoms(&self) -> Option<Vec<Atom>> {
        kind_atoms(&self.kind)
    }

    pub fn is_discrete(&self) -> bool {
        self.atoms().is_some()
    }

    /// Check the normalisation invariants.
    pub fn validate(&self) -> Result<()> {
        if let DistKind::Discrete(atoms) = &self.kind {
            let total: f64 = atoms.iter().map(|a| a.prob).sum();
            if (total - 1.0).abs() > 1e-9 || atoms.iter().any(|a| a.prob < 0.0) {
                return Err(Error::InvalidDistribution("atom masses do not form a distribution".into()));
            }
        }
        if let DistKind::Sparse { base, mu } = &self.kind {
            if !(*mu > 0.0 && *mu <= 1.0) {
                return Err(Error::InvalidDistribution(format!("sparsity {mu} outside (0, 1]")));
            }
            let b = DistSpec { kind: (**base).clone(), psi2: 0.0 };
            return b.validate_unit();
        }
        self.validate_unit()
    }

    fn validate_unit(&self) -> Result<()> {
        let (m, v) = (self.mean(), self.variance());
        if m.abs() > 1e-9 || (v - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDistribution(format!("mean {m} and variance {v}, expected 0 and 1")));
        }
        Ok(())
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        sample_kind(&self.kind, rng)
    }

    /// `E exp(xi^2 / t^2)`.
    pub fn exp_square_moment(&self, t: f64) -> f64 {
        exp_square_moment(&self.kind, t)
    }
}

fn kind_moments(kind: &DistKind) -> (f64, f64) {
    match kind {
        DistKind::Rademacher | DistKind::Gaussian | DistKind::UniformSymmetric => (0.0, 1.0),
        DistKind::Discrete(atoms) => (
            atoms.iter().map(|a| a.prob * a.value).sum(),
            atoms.iter().map(|a| a.prob * a.value * a.value).sum(),
        ),
        DistKind::Sparse { base, mu } => {
            let (m, s2) = kind_moments(base);
            (mu * m, mu * s2)
        }
    }
}

fn kind_atoms(kind: &DistKind) -> Option<Vec<Atom>> {
    match kind {
        DistKind::Rademacher => Some(vec![Atom::new(-1.0, 0.5), Atom::new(1.0, 0.5)]),
        DistKind::Discrete(atoms) => Some(atoms.clone()),
        DistKind::Sparse { base, mu } => {
            let mut out: Vec<Atom> = kind_atoms(base)?
                .into_iter()
                .map(|a| Atom::new(a.value, a.prob * mu))
                .collect();
            if *mu < 1.0 {
                out.push(Atom::new(0.0, 1.0 - mu));
            }
            Some(out)
        }
        _ => None,
    }
}

#[inline]
fn sample_kind<R: Rng + ?Sized>(kind: &DistKind, rng: &mut R) -> f64 {
    match kind {
        DistKind::Rademacher => {
            if rng.random::<bool>() {
                1.0
            } else {
                -1.0
            }
        }
        DistKind::Gaussian => rng.sample(StandardNormal),
        DistKind::UniformSymmetric => UNIFORM_HALF_WIDTH * (2.0 * rng.random::<f64>() - 1.0),
        DistKind::Discrete(atoms) => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for a in atoms {
                acc += a.prob;
                if u < acc {
                    return a.value;
                }
            }
            atoms[atoms.len() - 1].value
        }
        DistKind::Sparse { base, mu } => {
            if rng.random::<f64>() < *mu {
                sample_kind(base, rng)
            } else {
                0.0
            }
        }
    }
}

/// Grid estimate of the subgaussian constant: the smallest `t` on a geometric
/// grid of ratio 1.01 with `E exp(xi^2/t^2) <= 2`.
pub fn psi2_estimate(dist: &DistSpec) -> Result<f64> {
    if matches!(dist.kind, DistKind::Sparse { .. }) {
        return Err(Error::InvalidDistribution("sparse laws do not have unit variance".into()));
    }
    dist.validate()?;
    let mut t = 0.01;
    while t <= 100.0 {
        if exp_square_moment(&dist.kind, t) <= 2.0 {
            return Ok(t);
        }
        t *= 1.01;
    }
    Err(Error::Numerical("no grid point up to 100 satisfies the moment condition".into()))
}

/// Sampler of the symmetrisation `xi - xi'` of a distribution.
#[derive(Debug, Clone, Copy)]
pub struct Symmetrized<'a>(pub &'a DistSpec);

pub fn symmetrize(dist: &DistSpec) -> Symmetrized<'_> {
    Symmetrized(dist)
}

impl Symmetrized<'_> {
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.0.sample(rng) - self.0.sample(rng)
    }
}

/// A vector with independent coordinates, the `i`-th drawn from `dists[i]`.
pub fn sample_vector(dists: &[DistSpec], key: StreamKey) -> Vec<f64> {
    dists.iter().enumerate().map(|(i, d)| d.sample(&mut key.child(i as u64).rng())).collect()
}

/// A vector whose coordinates are independent `Bernoulli(mu) * xi`.
pub fn sample_phi_mu(n: usize, mu: f64, dist: &DistSpec, key: StreamKey) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::InvalidParameter(format!("sparsity {mu} outside [0, 1]")));
    }
    Ok((0..n)
        .map(|i| {
            let mut rng = key.child(i as u64).rng();
            if rng.random::<f64>() < mu {
                dist.sample(&mut rng)
            } else {
                0.0
            }
        })
        .collect())
}

/// How entry distributions are assigned to positions of the matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum EntryZone {
    Uniform(DistSpec),
    /// By the parity of `i + j`.
    Checkerboard { even: DistSpec, odd: DistSpec },
    /// `inner` within `width` of the diagonal, `outer` elsewhere.
    Banded { width: usize, inner: DistSpec, outer: DistSpec },
    /// Each position picks one of `choices` by a keyed hash.
    RandomAssignment { choices: Vec<DistSpec>, key: u64 },
    /// Upper triangle in row-major order, for `n <= 64`.
    Literal(Vec<DistSpec>),
}

/// Multiplicative variance pattern applied on top of the entry laws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VarianceProfile {
    Unit,
    Checkerboard { even: f64, odd: f64 },
}

/// Deterministic symmetric shift added to the random part.
#[derive(Debug, Clone, PartialEq)]
pub enum Shift {
    Zero,
    /// `c * sqrt(n) * I`.
    Identity(f64),
    /// `c / sqrt(n) * J`, operator norm `c * sqrt(n)`.
    Ones(f64),
    Dense(DMatrix<f64>),
}

/// Description of a random symmetric matrix `X + F - z I`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixProfile {
    pub n: usize,
    pub zone: EntryZone,
    pub variance: VarianceProfile,
    pub shift: Shift,
    pub center: f64,
}

impl MatrixProfile {
    pub fn new(n: usize, dist: DistSpec) -> Self {
        MatrixProfile { n, zone: EntryZone::Uniform(dist), variance: VarianceProfile::Unit, shift: Shift::Zero, center: 0.0 }
    }

    pub fn with_shift(mut self, shift: Shift) -> Self {
        self.shift = shift;
        self
    }

    pub fn with_center(mut self, z: f64) -> Self {
        self.center = z;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParameter("matrix dimension must be positive".into()));
        }
        match &self.zone {
            EntryZone::Uniform(d) => d.validate()?,
            EntryZone::Checkerboard { even, odd } => {
                even.validate()?;
                odd.validate()?;
            }
            EntryZone::Banded { inner, outer, .. } => {
                inner.validate()?;
                outer.validate()?;
            }
            EntryZone::RandomAssignment { choices, .. } => {
                if choices.is_empty() {
                    return Err(Error::InvalidParameter("empty assignment list".into()));
                }
                for c in choices {
                    c.validate()?;
                }
            }
            EntryZone::Literal(entries) => {
                if self.n > 64 {
                    return Err(Error::TooLarge("literal entry laws need n <= 64".into()));
                }
                let want = self.n * (self.n + 1) / 2;
                if entries.len() != want {
                    return Err(Error::DimensionMismatch { expected: want, got: entries.len() });
                }
                for c in entries {
                    c.validate()?;
                }
            }
        }
        if let VarianceProfile::Checkerboard { even, odd } = self.variance {
            if !(even > 0.0 && odd > 0.0) {
                return Err(Error::InvalidParameter("variances must be positive".into()));
            }
        }
        if let Shift::Dense(f) = &self.shift {
            if f.nrows() != self.n || f.ncols() != self.n {
                return Err(Error::DimensionMismatch { expected: self.n, got: f.nrows() });
            }
            let asym = (f - f.transpose()).amax();
            if asym > 1e-12 * f.amax().max(1.0) {
                return Err(Error::NotSymmetric(asym));
            }
        }
        Ok(())
    }

    fn law_at(&self, i: usize, j: usize) -> &DistSpec {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        match &self.zone {
            EntryZone::Uniform(d) => d,
            EntryZone::Checkerboard { even, odd } => {
                if (a + b) % 2 == 0 {
                    even
                } else {
                    odd
                }
            }
            EntryZone::Banded { width, inner, outer } => {
                if b - a <= *width {
                    inner
                } else {
                    outer
                }
            }
            EntryZone::RandomAssignment { choices, key } => {
                let h = StreamKey::new(*key).child(a as u64).child(b as u64).raw();
                &choices[(h % choices.len() as u64) as usize]
            }
            EntryZone::Literal(entries) => {
                let n = self.n;
                let idx = a * n - a * (a + 1) / 2 + b;
                &entries[idx]
            }
        }
    }

    fn std_at(&self, i: usize, j: usize) -> f64 {
        match self.variance {
            VarianceProfile::Unit => 1.0,
            VarianceProfile::Checkerboard { even, odd } => {
                if (i + j).is_multiple_of(2) {
                    even.sqrt()
                } else {
                    odd.sqrt()
                }
            }
        }
    }

    #[inline]
    fn entry(&self, key: StreamKey, i: usize, j: usize) -> f64 {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        let mut rng = key.child(a as u64).child(b as u64).rng();
        self.std_at(a, b) * self.law_at(a, b).sample(&mut rng)
    }

    fn add_deterministic(&self, m: &mut DMatrix<f64>) {
        let n = self.n;
        let rt = (n as f64).sqrt();
        match &self.shift {
            Shift::Zero => {}
            Shift::Identity(c) => {
                for i in 0..n {
                    m[(i, i)] += c * rt;
                }
            }
            Shift::Ones(c) => {
                let v = c / rt;
                for j in 0..n {
                    for i in 0..n {
                        m[(i, j)] += v;
                    }
                }
            }
            Shift::Dense(f) => {
                let mut view = m.view_mut((0, 0), (n, n));
                view += f;
            }
        }
        if self.center != 0.0 {
            for i in 0..n {
                m[(i, i)] -= self.center;
            }
        }
    }
}

/// A symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Wrap a matrix after checking symmetry up to `1e-12` relative to its entries.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), got: m.ncols() });
        }
        let asym = (&m - m.transpose()).amax();
        if asym > 1e-12 * m.amax().max(1.0) {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(SymMatrix(m))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// Leading principal submatrix of size `k`.
    pub fn leading_minor(&self, k: usize) -> SymMatrix {
        SymMatrix(self.0.view((0, 0), (k, k)).into_owned())
    }
}

/// Draw `X + F - z I` where `X` has independent entries on and above the diagonal.
pub fn sample_symmetric(profile: &MatrixProfile, key: StreamKey) -> Result<SymMatrix> {
    profile.validate()?;
    let n = profile.n;
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let v = profile.entry(key, i, j);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    profile.add_deterministic(&mut m);
    Ok(SymMatrix(m))
}

/// Draw an `rows x n` matrix whose top `n x n` block is `sample_symmetric` and whose
/// remaining rows have independent entries from the same zone layout.
pub fn sample_rectangular(profile: &MatrixProfile, rows: usize, key: StreamKey) -> Result<DMatrix<f64>> {
    if rows < profile.n {
        return Err(Error::InvalidParameter(format!("{rows} rows is fewer than n = {}", profile.n)));
    }
    if matches!(profile.zone, EntryZone::Literal(_)) && rows > profile.n {
        return Err(Error::InvalidParameter("literal entry laws cover only the square block".into()));
    }
    let n = profile.n;
    let top = sample_symmetric(profile, key)?.into_inner();
    let mut m = DMatrix::zeros(rows, n);
    m.view_mut((0, 0), (n, n)).copy_from(&top);
    let extra = key.tagged("rect");
    for j in 0..n {
        for i in n..rows {
            let mut rng = extra.child(i as u64).child(j as u64).rng();
            let (a, b) = (i % n, j);
            m[(i, j)] = profile.std_at(i, j) * profile.law_at(a, b).sample(&mut rng);
        }
    }
    Ok(m)
}

/// Parameters of the zeroed-out matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroedOutSpec {
    pub n: usize,
    pub k: usize,
    pub d: usize,
    pub nu: f64,
    pub dist: DistSpec,
}

impl ZeroedOutSpec {
    pub fn new(n: usize, k: usize, d: usize, dist: DistSpec) -> Self {
        ZeroedOutSpec { n, k, d, nu: DEFAULT_NU, dist }
    }

    /// Number of rows `n - k`.
    pub fn rows(&self) -> usize {
        self.n - self.k
    }

    pub fn validate(&self) -> Result<()> {
        if self.k >= self.n {
            return Err(Error::InvalidParameter(format!("k = {} must be below n = {}", self.k, self.n)));
        }
        let m = self.n - self.k;
        if self.d == 0 || self.d >= m {
            return Err(Error::InvalidParameter(format!("d = {} must lie in [1, {})", self.d, m)));
        }
        if !(0.0..=1.0).contains(&self.nu) {
            return Err(Error::InvalidParameter(format!("nu = {} outside [0, 1]", self.nu)));
        }
        self.dist.validate()
    }
}

/// A sampled zeroed-out matrix and its random block.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroedOut {
    pub matrix: DMatrix<f64>,
    /// The `(m - d) x d` block with sparse rows.
    pub block: DMatrix<f64>,
}

/// Assemble the `m x n` zeroed-out matrix from its random block.
pub fn zeroed_out_from_block(n: usize, k: usize, block: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = block.ncols();
    let m = n.checked_sub(k).ok_or_else(|| Error::InvalidParameter("k exceeds n".into()))?;
    if block.nrows() + d != m {
        return Err(Error::DimensionMismatch { expected: m - d, got: block.nrows() });
    }
    let mut out = DMatrix::zeros(m, n);
    out.view_mut((d, 0), (m - d, d)).copy_from(block);
    out.view_mut((0, d), (d, m - d)).copy_from(&block.transpose());
    Ok(out)
}

/// Draw the zeroed-out matrix: only the off-diagonal blocks between the first `d`
/// coordinates and coordinates `d+1..m` are non-zero, and the last `k` columns vanish.
pub fn sample_zeroed_out(spec: &ZeroedOutSpec, key: StreamKey) -> Result<ZeroedOut> {
    spec.validate()?;
    let m = spec.rows();
    let d = spec.d;
    let mut block = DMatrix::zeros(m - d, d);
    for r in 0..m - d {
        let row = sample_phi_mu(d, spec.nu, &spec.dist, key.child(r as u64))?;
        for (c, v) in row.into_iter().enumerate() {
            block[(r, c)] = v;
        }
    }
    let matrix = zeroed_out_from_block(spec.n, spec.k, &block)?;
    Ok(ZeroedOut { matrix, block })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn moment_by_riemann(dist: &DistSpec, t: f64) -> f64 {
        match dist.kind {
            DistKind::UniformSymmetric => {
                let a = 3f64.sqrt();
                let steps = 200_000;
                let h = a / steps as f64;
                (0..steps).map(|i| ((i as f64 + 0.5) * h).powi(2) / (t * t)).map(f64::exp).sum::<f64>() * h / a
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn rademacher_constant() {
        let r = DistSpec::rademacher();
        assert!((r.psi2 - 1.2011).abs() < 1e-4);
        let est = psi2_estimate(&r).unwrap();
        assert!(est >= r.psi2 && est <= r.psi2 * 1.01 + 1e-12, "{est}");
        assert!((est - 1.2011).abs() / 1.2011 <= 0.01);
    }

    #[test]
    fn gaussian_constant() {
        let g = DistSpec::gaussian();
        let est = psi2_estimate(&g).unwrap();
        assert!((est - 1.633).abs() / 1.633 <= 0.02, "{est}");
    }

    #[test]
    fn uniform_constant_solves_moment_equation() {
        let u = DistSpec::uniform();
        let m = moment_by_riemann(&u, u.psi2);
        assert!((m - 2.0).abs() < 1e-6, "{m}");
        assert!(u.psi2 < DistSpec::rademacher().psi2 * 1.2);
    }

    #[test]
    fn constant_discrete_rejected() {
        let e = make_dist(DistKind::Discrete(vec![Atom::new(3.0, 1.0)]));
        assert!(matches!(e, Err(Error::InvalidDistribution(_))));
    }

    #[test]
    fn unnormalised_atoms_fail_the_estimate() {
        let raw = DistSpec { kind: DistKind::Discrete(vec![Atom::new(-2.0, 0.5), Atom::new(2.0, 0.5)]), psi2: 0.0 };
        assert!(psi2_estimate(&raw).is_err());
    }

    #[test]
    fn discrete_is_centered_and_scaled() {
        let d = make_dist(DistKind::Discrete(vec![Atom::new(0.0, 0.5), Atom::new(3.0, 0.5)])).unwrap();
        let atoms = d.atoms().unwrap();
        assert!((atoms[0].value + 1.0).abs() < 1e-15 && (atoms[1].value - 1.0).abs() < 1e-15);
        assert!((d.psi2 - DistSpec::rademacher().psi2).abs() < 1e-9);
    }

    #[test]
    fn sparse_keeps_reduced_variance() {
        let s = make_dist(DistKind::Sparse { base: Box::new(DistKind::Gaussian), mu: 0.25 }).unwrap();
        assert!((s.variance() - 0.25).abs() < 1e-15);
        // 1 - mu + mu (1 - 2/t^2)^(-1/2) = 2 solved by hand.
        let q: f64 = (1.0 + 1.0 / 0.25) * 1.0;
        let t = (2.0 / (1.0 - 1.0 / (q * q))).sqrt();
        assert!((s.psi2 - t).abs() < 1e-9, "{} vs {t}", s.psi2);
    }

    #[test]
    fn sample_moments_match() {
        for d in [DistSpec::rademacher(), DistSpec::gaussian(), DistSpec::uniform()] {
            let mut rng = StreamKey::new(11).rng();
            let n = 200_000;
            let xs: Vec<f64> = (0..n).map(|_| d.sample(&mut rng)).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| x * x).sum::<f64>() / n as f64 - mean * mean;
            assert!(mean.abs() < 0.01, "{} mean {mean}", d.name());
            assert!((var - 1.0).abs() < 0.02, "{} var {var}", d.name());
        }
    }

    #[test]
    fn symmetrized_has_variance_two() {
        let g = DistSpec::uniform();
        let s = symmetrize(&g);
        let mut rng = StreamKey::new(5).rng();
        let n = 200_000;
        let var = (0..n).map(|_| s.sample(&mut rng).powi(2)).sum::<f64>() / n as f64;
        assert!((var - 2.0).abs() < 0.04, "{var}");
    }

    #[test]
    fn sparse_vector_extremes() {
        let r = DistSpec::rademacher();
        let k = StreamKey::new(1);
        assert!(sample_phi_mu(50, 0.0, &r, k).unwrap().iter().all(|&x| x == 0.0));
        assert!(sample_phi_mu(50, 1.0, &r, k).unwrap().iter().all(|&x| x.abs() == 1.0));
        let v = sample_phi_mu(20_000, 0.3, &r, k).unwrap();
        let frac = v.iter().filter(|&&x| x != 0.0).count() as f64 / 20_000.0;
        assert!((frac - 0.3).abs() < 0.02);
    }

    #[test]
    fn identity_shift_pushes_top_eigenvalue() {
        let n = 64;
        let p = MatrixProfile::new(n, DistSpec::gaussian()).with_shift(Shift::Identity(4.0));
        let a = sample_symmetric(&p, StreamKey::new(3)).unwrap();
        let top = a.as_matrix().clone().symmetric_eigenvalues().max();
        let rt = (n as f64).sqrt();
        assert!(top >= 4.0 * rt - 2.5 * rt, "{top}");
    }

    #[test]
    fn zones_pick_expected_laws() {
        let r = DistSpec::rademacher();
        let g = DistSpec::gaussian();
        let p = MatrixProfile {
            n: 6,
            zone: EntryZone::Banded { width: 1, inner: r.clone(), outer: g },
            variance: VarianceProfile::Unit,
            shift: Shift::Zero,
            center: 0.0,
        };
        let a = sample_symmetric(&p, StreamKey::new(2)).unwrap();
        let m = a.as_matrix();
        for i in 0usize..6 {
            for j in 0..6 {
                let band = i.abs_diff(j) <= 1usize;
                assert_eq!(band, m[(i, j)].abs() == 1.0, "({i},{j})");
            }
        }
        let lit = MatrixProfile { zone: EntryZone::Literal(vec![r; 21]), ..p };
        let a = sample_symmetric(&lit, StreamKey::new(2)).unwrap();
        assert!(a.as_matrix().iter().all(|x| x.abs() == 1.0));
    }

    #[test]
    fn rectangular_top_block_is_symmetric() {
        let p = MatrixProfile::new(5, DistSpec::gaussian());
        let m = sample_rectangular(&p, 8, StreamKey::new(4)).unwrap();
        let top = m.view((0, 0), (5, 5)).into_owned();
        assert_eq!(top, top.transpose());
        assert_eq!(top, sample_symmetric(&p, StreamKey::new(4)).unwrap().into_inner());
    }

    #[test]
    fn zeroed_out_with_no_mass_is_zero() {
        let mut s = ZeroedOutSpec::new(12, 2, 3, DistSpec::rademacher());
        s.nu = 0.0;
        assert!(sample_zeroed_out(&s, StreamKey::new(0)).unwrap().matrix.iter().all(|&x| x == 0.0));
    }

    proptest! {
        #[test]
        fn sampled_matrices_are_symmetric_and_reproducible(n in 1usize..20, seed in any::<u64>()) {
            let p = MatrixProfile::new(n, DistSpec::uniform()).with_shift(Shift::Ones(1.0)).with_center(0.3);
            let a = sample_symmetric(&p, StreamKey::new(seed)).unwrap();
            let b = sample_symmetric(&p, StreamKey::new(seed)).unwrap();
            prop_assert_eq!(a.as_matrix(), &a.as_matrix().transpose());
            prop_assert_eq!(a, b);
        }

        #[test]
        fn zeroed_out_structure(n in 4usize..24, kf in 0.0f64..0.5, df in 0.0f64..1.0, seed in any::<u64>()) {
            let k = ((n as f64 - 3.0) * kf) as usize;
            let m = n - k;
            let d = 1 + ((m as f64 - 2.0) * df) as usize;
            let mut s = ZeroedOutSpec::new(n, k, d, DistSpec::rademacher());
            s.nu = 0.5;
            let z = sample_zeroed_out(&s, StreamKey::new(seed)).unwrap();
            let a = &z.matrix;
            prop_assert_eq!(a.shape(), (m, n));
            for i in 0..m {
                for j in 0..n {
                    let live = (i < d && j >= d && j < m) || (i >= d && j < d);
                    if !live {
                        prop_assert_eq!(a[(i, j)], 0.0);
                    }
                }
            }
            for i in 0..d {
                for j in d..m {
                    prop_assert_eq!(a[(i, j)], a[(j, i)]);
                }
            }
            let rank = a.clone().svd(false, false).rank(1e-9);
            prop_assert!(rank <= 2 * d);
        }
    }
}
