//! Torus norms, xi-weighted norms, log-RLCD type denominators, level sets and the
//! threshold function of the zeroed-out matrix.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ensembles::{sample_zeroed_out, DistKind, DistSpec, ZeroedOutSpec};
use crate::error::{Error, Result};
use crate::quad;
use crate::rng::StreamKey;
use crate::stats::Proportion;

/// Distance from a real number to the nearest integer.
#[inline]
pub fn torus_dist(a: f64) -> f64 {
    (a - a.round()).abs()
}

/// Euclidean distance from `x` to the integer lattice.
pub fn torus_norm(x: &[f64]) -> f64 {
    x.iter().map(|&a| torus_dist(a).powi(2)).sum::<f64>().sqrt()
}

/// `max(ln x, 0)`.
#[inline]
pub fn log_plus(x: f64) -> f64 {
    if x > 1.0 {
        x.ln()
    } else {
        0.0
    }
}

/// How expectations over the symmetrised entries are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum XiMethod {
    /// Enumerate the atoms; requires a discrete law with at most 16 atoms.
    Exact,
    /// Deterministic numerical evaluation, valid for every built-in law.
    Quadrature,
}

const MAX_EXACT_ATOMS: usize = 16;
const MERGE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
enum Law {
    Atoms(Vec<(f64, f64)>),
    Gaussian { sd: f64 },
    /// Uniform on `[-half, half]`.
    Uniform { half: f64 },
    /// Difference of two independent uniforms on `[-half, half]`.
    UniformDiff { half: f64 },
    Mixture(Vec<(f64, Law)>),
}

pub(crate) fn merge_atoms(mut atoms: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
    for (v, p) in atoms {
        match out.last_mut() {
            Some(last) if (v - last.0).abs() <= MERGE_TOL * (1.0 + v.abs()) => last.1 += p,
            _ => out.push((v, p)),
        }
    }
    out
}

fn plain_law(kind: &DistKind) -> Law {
    match kind {
        DistKind::Rademacher => Law::Atoms(vec![(-1.0, 0.5), (1.0, 0.5)]),
        DistKind::Discrete(a) => Law::Atoms(merge_atoms(a.iter().map(|a| (a.value, a.prob)).collect())),
        DistKind::Gaussian => Law::Gaussian { sd: 1.0 },
        DistKind::UniformSymmetric => Law::Uniform { half: 3f64.sqrt() },
        DistKind::Sparse { base, mu } => match plain_law(base) {
            Law::Atoms(a) => {
                let mut v: Vec<(f64, f64)> = a.into_iter().map(|(x, p)| (x, p * mu)).collect();
                v.push((0.0, 1.0 - mu));
                Law::Atoms(merge_atoms(v))
            }
            other => Law::Mixture(vec![(1.0 - mu, Law::Atoms(vec![(0.0, 1.0)])), (*mu, other)]),
        },
    }
}

fn atom_differences(a: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut v = Vec::with_capacity(a.len() * a.len());
    for &(x, p) in a {
        for &(y, q) in a {
            v.push((x - y, p * q));
        }
    }
    merge_atoms(v)
}

fn symmetrised_law(kind: &DistKind) -> Law {
    match kind {
        DistKind::Gaussian => Law::Gaussian { sd: 2f64.sqrt() },
        DistKind::UniformSymmetric => Law::UniformDiff { half: 3f64.sqrt() },
        _ => match plain_law(kind) {
            Law::Atoms(a) => Law::Atoms(atom_differences(&a)),
            _ => {
                let DistKind::Sparse { base, mu } = kind else { unreachable!() };
                let (mu, nu) = (*mu, 1.0 - mu);
                Law::Mixture(vec![
                    (nu * nu, Law::Atoms(vec![(0.0, 1.0)])),
                    (2.0 * mu * nu, plain_law(base)),
                    (mu * mu, symmetrised_law(base)),
                ])
            }
        },
    }
}

/// `int_0^c dist(x, Z)^2 dx`.
fn periodic_sq_integral(c: f64) -> f64 {
    let k = c.floor();
    let r = c - k;
    let partial = if r <= 0.5 { r * r * r / 3.0 } else { 1.0 / 12.0 - (1.0 - r).powi(3) / 3.0 };
    k / 12.0 + partial
}

/// `int_0^c x dist(x, Z)^2 dx`.
fn periodic_first_moment(c: f64) -> f64 {
    let k = c.floor();
    let r = c - k;
    let g = if r <= 0.5 { r * r * r / 3.0 } else { 1.0 / 12.0 - (1.0 - r).powi(3) / 3.0 };
    let g1 = if r <= 0.5 {
        r.powi(4) / 4.0
    } else {
        1.0 / 64.0 + (r * r / 2.0 - 2.0 * r.powi(3) / 3.0 + r.powi(4) / 4.0) - 11.0 / 192.0
    };
    k * k / 24.0 + k * g + g1
}

impl Law {
    /// `E dist(y Z, Z)^2`.
    fn torus_sq_mean(&self, y: f64) -> f64 {
        let y = y.abs();
        match self {
            Law::Atoms(a) => a.iter().map(|&(v, p)| p * torus_dist(y * v).powi(2)).sum(),
            Law::Gaussian { sd } => gaussian_torus_sq(y * sd),
            Law::Uniform { half } => {
                let c = y * half;
                if c <= 0.5 {
                    c * c / 3.0
                } else {
                    periodic_sq_integral(c) / c
                }
            }
            Law::UniformDiff { half } => {
                let a = *half;
                let c = 2.0 * a * y;
                if c <= 0.5 {
                    2.0 * a * a * y * y / 3.0
                } else {
                    (2.0 * a * periodic_sq_integral(c) - periodic_first_moment(c) / y) / (2.0 * a * a * y)
                }
            }
            Law::Mixture(parts) => parts.iter().map(|(w, l)| w * l.torus_sq_mean(y)).sum(),
        }
    }

    /// `E cos(2 pi t Z)`.
    fn cos_mean(&self, t: f64) -> f64 {
        let sinc = |x: f64| if x == 0.0 { 1.0 } else { x.sin() / x };
        match self {
            Law::Atoms(a) => a.iter().map(|&(v, p)| p * (2.0 * PI * torus_signed(t * v)).cos()).sum(),
            Law::Gaussian { sd } => (-2.0 * PI * PI * t * t * sd * sd).exp(),
            Law::Uniform { half } => sinc(2.0 * PI * t * half),
            Law::UniformDiff { half } => sinc(2.0 * PI * t * half).powi(2),
            Law::Mixture(parts) => parts.iter().map(|(w, l)| w * l.cos_mean(t)).sum(),
        }
    }

    /// `E (1 - cos(2 pi t Z))`, accurate near `t = 0`.
    fn one_minus_cos_mean(&self, t: f64) -> f64 {
        let sinc = |x: f64| if x == 0.0 { 1.0 } else { x.sin() / x };
        match self {
            Law::Atoms(a) => a.iter().map(|&(v, p)| p * 2.0 * (PI * torus_signed(t * v)).sin().powi(2)).sum(),
            Law::Gaussian { sd } => -(-2.0 * PI * PI * t * t * sd * sd).exp_m1(),
            Law::Uniform { half } => 1.0 - sinc(2.0 * PI * t * half),
            Law::UniformDiff { half } => 1.0 - sinc(2.0 * PI * t * half).powi(2),
            Law::Mixture(parts) => parts.iter().map(|(w, l)| w * l.one_minus_cos_mean(t)).sum(),
        }
    }

    /// `P(|Z| >= 1)`.
    fn tail_at_least_one(&self) -> f64 {
        match self {
            Law::Atoms(a) => a.iter().filter(|(v, _)| v.abs() >= 1.0 - MERGE_TOL).map(|(_, p)| p).sum(),
            Law::Gaussian { sd } => statrs::function::erf::erfc(1.0 / (sd * 2f64.sqrt())),
            Law::Uniform { half } => ((half - 1.0) / half).max(0.0),
            Law::UniformDiff { half } => {
                let w = 2.0 * half;
                if w > 1.0 {
                    ((w - 1.0) / w).powi(2)
                } else {
                    0.0
                }
            }
            Law::Mixture(parts) => parts.iter().map(|(w, l)| w * l.tail_at_least_one()).sum(),
        }
    }

    fn atom_count(&self) -> Option<usize> {
        match self {
            Law::Atoms(a) => Some(a.len()),
            _ => None,
        }
    }
}

#[inline]
fn torus_signed(a: f64) -> f64 {
    a - a.round()
}

/// `E dist(X, Z)^2` for `X ~ N(0, s^2)`.
fn gaussian_torus_sq(s: f64) -> f64 {
    if s < 1.0 / 16.0 {
        return s * s;
    }
    if s >= 0.3 {
        let mut total = 1.0 / 12.0;
        for m in 1..200 {
            let m = m as f64;
            let term = (-2.0 * PI * PI * m * m * s * s).exp() / (PI * PI * m * m);
            if term < 1e-18 {
                break;
            }
            total += if m as u64 % 2 == 1 { -term } else { term };
        }
        return total;
    }
    let norm = 1.0 / (s * (2.0 * PI).sqrt());
    let reach = (9.0 * s).ceil() as i64 + 1;
    let mut total = 0.0;
    for j in -reach..=reach {
        let c = j as f64;
        total += quad::integrate(|x| (x - c).powi(2) * (-(x * x) / (2.0 * s * s)).exp(), c - 0.5, c + 0.5, 4);
    }
    total * norm
}

/// Law of the symmetrised entry `xi - xi'`, with torus and Fourier functionals.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetrizedLaw(Law);

impl SymmetrizedLaw {
    pub fn new(dist: &DistSpec, method: XiMethod) -> Result<Self> {
        let law = symmetrised_law(&dist.kind);
        if method == XiMethod::Exact {
            match (dist.atoms(), law.atom_count()) {
                (Some(a), Some(_)) if a.len() <= MAX_EXACT_ATOMS => {}
                (Some(a), _) => {
                    return Err(Error::TooLarge(format!("{} atoms exceed the exact limit {MAX_EXACT_ATOMS}", a.len())))
                }
                _ => return Err(Error::InvalidDistribution("exact evaluation needs a discrete law".into())),
            }
        }
        Ok(SymmetrizedLaw(law))
    }

    /// `E ||y xi_bar||_T^2`.
    pub fn torus_sq_mean(&self, y: f64) -> f64 {
        self.0.torus_sq_mean(y)
    }

    /// `E cos(2 pi t xi_bar)`.
    pub fn cos_mean(&self, t: f64) -> f64 {
        self.0.cos_mean(t)
    }

    /// `E (1 - cos(2 pi t xi_bar))`.
    pub fn one_minus_cos_mean(&self, t: f64) -> f64 {
        self.0.one_minus_cos_mean(t)
    }

    /// `P(|xi_bar| >= 1)`.
    pub fn tail_at_least_one(&self) -> f64 {
        self.0.tail_at_least_one()
    }

    /// Atoms of `xi_bar`, when finitely supported.
    pub fn atoms(&self) -> Option<&[(f64, f64)]> {
        match &self.0 {
            Law::Atoms(a) => Some(a),
            _ => None,
        }
    }
}

/// Evaluator of `||x||_xi = (sum_i E ||x_i xi_bar_i||_T^2)^{1/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct XiNorm {
    laws: Vec<SymmetrizedLaw>,
}

impl XiNorm {
    /// Identically distributed coordinates.
    pub fn new(dist: &DistSpec, method: XiMethod) -> Result<Self> {
        Ok(XiNorm { laws: vec![SymmetrizedLaw::new(dist, method)?] })
    }

    /// One law per coordinate.
    pub fn per_coordinate(dists: &[DistSpec], method: XiMethod) -> Result<Self> {
        if dists.is_empty() {
            return Err(Error::InvalidParameter("no coordinate laws".into()));
        }
        Ok(XiNorm { laws: dists.iter().map(|d| SymmetrizedLaw::new(d, method)).collect::<Result<_>>()? })
    }

    fn law(&self, i: usize) -> &SymmetrizedLaw {
        if self.laws.len() == 1 {
            &self.laws[0]
        } else {
            &self.laws[i]
        }
    }

    pub fn norm_sq(&self, x: &[f64]) -> f64 {
        debug_assert!(self.laws.len() == 1 || self.laws.len() == x.len());
        x.iter().enumerate().map(|(i, &v)| self.law(i).torus_sq_mean(v)).sum()
    }

    pub fn norm(&self, x: &[f64]) -> f64 {
        self.norm_sq(x).sqrt()
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if self.laws.len() != 1 && self.laws.len() != n {
            return Err(Error::DimensionMismatch { expected: self.laws.len(), got: n });
        }
        Ok(())
    }
}

pub fn xi_norm(x: &[f64], dist: &DistSpec, method: XiMethod) -> Result<f64> {
    Ok(XiNorm::new(dist, method)?.norm(x))
}

/// Monte Carlo estimate of `||x||_xi` with its standard error.
pub fn xi_norm_mc(x: &[f64], dist: &DistSpec, draws: u64, key: StreamKey) -> Result<(f64, f64)> {
    if draws < 100_000 {
        return Err(Error::InvalidParameter(format!("{draws} draws, at least 100000 required")));
    }
    let sym = crate::ensembles::symmetrize(dist);
    let (mut s1, mut s2) = (0.0, 0.0);
    for t in 0..draws {
        let mut rng = key.child(t).rng();
        let v: f64 = x.iter().map(|&xi| torus_dist(xi * sym.sample(&mut rng)).powi(2)).sum();
        s1 += v;
        s2 += v * v;
    }
    let n = draws as f64;
    let mean = s1 / n;
    let var = (s2 / n - mean * mean).max(0.0);
    let se_sq = (var / n).sqrt();
    let value = mean.sqrt();
    let se = if value > 0.0 { se_sq / (2.0 * value) } else { se_sq.sqrt() };
    Ok((value, se))
}

/// Search settings for the denominators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LcdParams {
    pub l: f64,
    pub alpha: f64,
    pub theta_max: f64,
    /// Ratio of the geometric radius grid.
    pub grid_ratio: f64,
    /// Angular spacing of the direction net, in radians.
    pub angular_step: f64,
    /// Random starts of the heuristic search in dimension above 3.
    pub starts: usize,
    pub seed: u64,
}

impl LcdParams {
    pub fn new(l: f64, alpha: f64, theta_max: f64) -> Result<Self> {
        let p = LcdParams { l, alpha, theta_max, grid_ratio: 1.001, angular_step: 0.01, starts: 64, seed: 0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l > 0.0 && self.l.is_finite()) {
            return Err(Error::InvalidParameter(format!("L = {} must be positive", self.l)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha = {} outside (0, 1)", self.alpha)));
        }
        if !(self.theta_max > 0.0 && self.theta_max.is_finite()) {
            return Err(Error::InvalidParameter(format!("theta_max = {} must be finite and positive", self.theta_max)));
        }
        if !(self.grid_ratio > 1.0) || !(self.angular_step > 0.0 && self.angular_step < 1.0) {
            return Err(Error::InvalidParameter("grid ratio must exceed 1 and angular step lie in (0, 1)".into()));
        }
        Ok(())
    }

    fn with_alpha(&self, alpha: f64) -> Self {
        LcdParams { alpha, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Certification {
    /// Exhaustive over the radius grid and direction net.
    Grid,
    /// Local search; only `hi` is meaningful.
    Heuristic,
}

/// Bracket `[lo, hi]` for an infimum, `hi = inf` when no witness was found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlogdResult {
    pub lo: f64,
    pub hi: f64,
    /// The minimising point (`theta`, `y` or `theta` vector depending on the search).
    pub witness: Option<Vec<f64>>,
    pub evaluations: u64,
    pub certification: Certification,
}

impl RlogdResult {
    pub fn found(&self) -> bool {
        self.hi.is_finite()
    }
}

struct Ray {
    lo: f64,
    hi: f64,
    evals: u64,
}

/// Scan `r` along the ray `r w` for `||r w||_xi < L sqrt(log+(alpha r g / L))`.
fn scan_ray(xi: &XiNorm, w: &[f64], g: f64, p: &LcdParams, r_max: f64, buf: &mut Vec<f64>) -> Ray {
    let mut evals = 0u64;
    if g <= 0.0 {
        return Ray { lo: r_max, hi: f64::INFINITY, evals };
    }
    let mut is_witness = |r: f64, evals: &mut u64| {
        *evals += 1;
        buf.clear();
        buf.extend(w.iter().map(|&x| r * x));
        let rhs = p.l * log_plus(p.alpha * r * g / p.l).sqrt();
        rhs > 0.0 && xi.norm(buf) < rhs
    };
    let r0 = p.l / (p.alpha * g);
    if r0 >= r_max {
        return Ray { lo: r_max, hi: f64::INFINITY, evals };
    }
    let mut prev = r0;
    let mut j = 1;
    loop {
        let mut r = r0 * p.grid_ratio.powi(j);
        let last = r >= r_max;
        if last {
            r = r_max;
        }
        if is_witness(r, &mut evals) {
            let (mut a, mut b) = (prev, r);
            while b - a > 1e-6 * b {
                let mid = 0.5 * (a + b);
                if is_witness(mid, &mut evals) {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            return Ray { lo: a, hi: b, evals };
        }
        if last {
            return Ray { lo: r_max, hi: f64::INFINITY, evals };
        }
        prev = r;
        j += 1;
    }
}

/// Log-RLCD of a single vector: `inf{theta > 0 : ||theta v||_xi < L sqrt(log+(alpha theta ||v|| / L))}`.
pub fn rlogd_vector(v: &[f64], params: &LcdParams, dist: &DistSpec) -> Result<RlogdResult> {
    params.validate()?;
    let g = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if g == 0.0 {
        return Err(Error::ZeroVector);
    }
    let xi = XiNorm::new(dist, XiMethod::Quadrature)?;
    let mut buf = Vec::with_capacity(v.len());
    let ray = scan_ray(&xi, v, g, params, params.theta_max, &mut buf);
    Ok(RlogdResult {
        lo: ray.lo,
        hi: ray.hi,
        witness: ray.hi.is_finite().then(|| vec![ray.hi]),
        evaluations: ray.evals,
        certification: Certification::Grid,
    })
}

/// Check the defining strict inequality at `theta` for the vector case.
pub fn rlogd_vector_witness_holds(v: &[f64], theta: f64, params: &LcdParams, dist: &DistSpec) -> Result<bool> {
    let xi = XiNorm::new(dist, XiMethod::Quadrature)?;
    let g = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let y: Vec<f64> = v.iter().map(|x| theta * x).collect();
    let rhs = params.l * log_plus(params.alpha * theta * g / params.l).sqrt();
    Ok(xi.norm(&y) < rhs)
}

/// Unit directions covering the sphere of `R^dim` up to sign, `dim <= 3`.
fn direction_net(dim: usize, step: f64) -> Vec<Vec<f64>> {
    match dim {
        1 => vec![vec![1.0]],
        2 => {
            let count = (PI / step).ceil() as usize;
            (0..count).map(|i| i as f64 * PI / count as f64).map(|a| vec![a.cos(), a.sin()]).collect()
        }
        3 => {
            let mut out = vec![vec![1.0, 0.0, 0.0]];
            let rings = (0.5 * PI / step).ceil() as usize;
            for i in 1..=rings {
                let polar = i as f64 * 0.5 * PI / rings as f64;
                let count = ((2.0 * PI * polar.sin()) / step).ceil().max(1.0) as usize;
                for j in 0..count {
                    let az = j as f64 * 2.0 * PI / count as f64;
                    out.push(vec![polar.cos(), polar.sin() * az.cos(), polar.sin() * az.sin()]);
                }
            }
            out
        }
        _ => unreachable!("net only for dimension <= 3"),
    }
}

/// Shared direction search: `map(u)` gives the ray vector and its gate norm for a
/// unit direction `u` of the parameter space.
fn search(
    dim: usize,
    params: &LcdParams,
    xi: &XiNorm,
    gate_lower: f64,
    map: impl Fn(&[f64]) -> (Vec<f64>, f64),
) -> RlogdResult {
    let mut buf = Vec::new();
    let mut evaluations = 0u64;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut lo = params.theta_max;
    let mut run = |u: &[f64], best: &mut Option<(f64, Vec<f64>)>, lo: &mut f64, evaluations: &mut u64| {
        let r_max = best.as_ref().map_or(params.theta_max, |b| b.0.min(params.theta_max));
        let (w, g) = map(u);
        let ray = scan_ray(xi, &w, g, params, r_max, &mut buf);
        *evaluations += ray.evals;
        *lo = lo.min(ray.lo);
        if ray.hi.is_finite() && best.as_ref().is_none_or(|b| ray.hi < b.0) {
            *best = Some((ray.hi, u.iter().map(|x| x * ray.hi).collect()));
            return Some(ray.hi);
        }
        None
    };
    let certification = if dim <= 3 {
        for u in direction_net(dim, params.angular_step) {
            run(&u, &mut best, &mut lo, &mut evaluations);
        }
        Certification::Grid
    } else {
        let key = StreamKey::new(params.seed).tagged("multistart");
        let gaussian_unit = |k: StreamKey| {
            let mut rng = k.rng();
            let mut u: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let n = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            u.iter_mut().for_each(|x| *x /= n);
            u
        };
        let mut best_dir: Option<Vec<f64>> = None;
        for s in 0..params.starts.max(1) {
            let u = gaussian_unit(key.child(s as u64));
            if run(&u, &mut best, &mut lo, &mut evaluations).is_some() {
                best_dir = Some(u);
            }
        }
        if let Some(mut centre) = best_dir {
            let mut step = 0.1;
            let mut misses = 0;
            for it in 0..200u64 {
                let noise = gaussian_unit(key.tagged("refine").child(it));
                let mut u: Vec<f64> = centre.iter().zip(&noise).map(|(c, z)| c + step * z).collect();
                let n = u.iter().map(|x| x * x).sum::<f64>().sqrt();
                u.iter_mut().for_each(|x| *x /= n);
                if run(&u, &mut best, &mut lo, &mut evaluations).is_some() {
                    centre = u;
                    misses = 0;
                } else {
                    misses += 1;
                    if misses >= 8 {
                        step *= 0.5;
                        misses = 0;
                    }
                }
                if step < 1e-4 {
                    break;
                }
            }
        }
        lo = gate_lower;
        Certification::Heuristic
    };
    let hi = best.as_ref().map_or(f64::INFINITY, |b| b.0);
    RlogdResult { lo: lo.min(hi), hi, witness: best.map(|b| b.1), evaluations, certification }
}

fn orthonormal_in_order(basis: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, k) = basis.shape();
    if k == 0 {
        return Err(Error::InvalidParameter("empty basis".into()));
    }
    if k > n {
        return Err(Error::RankDeficient(format!("{k} vectors in dimension {n}")));
    }
    let qr = basis.clone().qr();
    let r = qr.r();
    let lead = (0..k).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..k).any(|i| r[(i, i)].abs() <= 1e-12 * lead) || lead == 0.0 {
        return Err(Error::RankDeficient("basis vectors are dependent".into()));
    }
    let mut q = qr.q();
    // Orient each basis vector along the corresponding input column.
    for i in 0..k {
        if r[(i, i)] < 0.0 {
            q.column_mut(i).neg_mut();
        }
    }
    Ok(q)
}

/// Log-RLCD of a subspace: `inf{||y|| : y in E, ||y||_xi < L sqrt(log+(alpha ||y|| / L))}`.
/// Returns the witness `y`.
pub fn rlogd_subspace(basis: &DMatrix<f64>, params: &LcdParams, dist: &DistSpec) -> Result<RlogdResult> {
    params.validate()?;
    let q = orthonormal_in_order(basis)?;
    let xi = XiNorm::new(dist, XiMethod::Quadrature)?;
    xi.check_len(q.nrows())?;
    let mut res = search(q.ncols(), params, &xi, params.l / params.alpha, |u| {
        let w = &q * DVector::from_column_slice(u);
        (w.iter().copied().collect(), 1.0)
    });
    if let Some(c) = res.witness.take() {
        let y = &q * DVector::from_vec(c);
        res.witness = Some(y.iter().copied().collect());
    }
    Ok(res)
}

fn check_matrix(v: &DMatrix<f64>) -> Result<()> {
    if v.nrows() == 0 || v.iter().all(|&x| x == 0.0) {
        return Err(Error::ZeroVector);
    }
    Ok(())
}

/// `inf{||theta|| : ||V^T theta||_xi < L sqrt(log+(alpha ||V^T theta|| / L))}` for `V` of
/// shape `m x n`. Returns the witness `theta`.
pub fn rd_matrix(v: &DMatrix<f64>, params: &LcdParams, dist: &DistSpec) -> Result<RlogdResult> {
    params.validate()?;
    rd_search(v, params, dist)
}

fn rd_search(v: &DMatrix<f64>, params: &LcdParams, dist: &DistSpec) -> Result<RlogdResult> {
    check_matrix(v)?;
    let xi = XiNorm::new(dist, XiMethod::Quadrature)?;
    xi.check_len(v.ncols())?;
    let vt = v.transpose();
    let op = crate::spectral::singular_values(v)[0];
    Ok(search(v.nrows(), params, &xi, params.l / (params.alpha * op), |u| {
        let w = &vt * DVector::from_column_slice(u);
        let g = w.norm();
        (w.iter().copied().collect(), g)
    }))
}

/// Matrix log-RLCD, gated by `||theta||_V = (sum_i ||V_i||^2 theta_i^2)^{1/2}` with `V_i`
/// the rows of `V`.
pub fn rlogd_matrix(v: &DMatrix<f64>, params: &LcdParams, dist: &DistSpec) -> Result<RlogdResult> {
    params.validate()?;
    check_matrix(v)?;
    let xi = XiNorm::new(dist, XiMethod::Quadrature)?;
    xi.check_len(v.ncols())?;
    let vt = v.transpose();
    let row_sq: Vec<f64> = v.row_iter().map(|r| r.norm_squared()).collect();
    let max_row = row_sq.iter().fold(0.0f64, |a, &b| a.max(b)).sqrt();
    Ok(search(v.nrows(), params, &xi, params.l / (params.alpha * max_row), |u| {
        let w = &vt * DVector::from_column_slice(u);
        let g = u.iter().zip(&row_sq).map(|(t, s)| s * t * t).sum::<f64>().sqrt();
        (w.iter().copied().collect(), g)
    }))
}

/// Both sides of the comparison between the matrix log-RLCD and RD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sandwich {
    pub defect: f64,
    pub rd_wide: RlogdResult,
    pub rlogd: RlogdResult,
    pub rd_narrow: RlogdResult,
}

impl Sandwich {
    /// Whether `RD(4 alpha) <= RlogD(alpha) <= RD(alpha / 4)` holds up to relative `tol`.
    pub fn holds(&self, tol: f64) -> bool {
        let le = |a: f64, b: f64| a.is_infinite() && b.is_infinite() || a <= b * (1.0 + tol);
        le(self.rd_wide.hi, self.rlogd.hi) && le(self.rlogd.hi, self.rd_narrow.hi)
    }
}

/// Evaluate `RD_{L,4 alpha}`, `RlogD_{L,alpha}` and `RD_{L,alpha/4}` for rows of `v` that
/// are a quarter almost orthogonal.
pub fn comparison_sandwich(v: &DMatrix<f64>, params: &LcdParams, dist: &DistSpec) -> Result<Sandwich> {
    params.validate()?;
    if params.alpha >= 0.25 {
        return Err(Error::InvalidParameter("comparison needs alpha < 1/4".into()));
    }
    let defect = crate::geometry::almost_orthogonal_defect(&v.transpose())?;
    if defect > 0.25 {
        return Err(Error::InvalidParameter(format!("rows have defect {defect} > 1/4")));
    }
    Ok(Sandwich {
        defect,
        rd_wide: rd_search(v, &params.with_alpha(4.0 * params.alpha), dist)?,
        rlogd: rlogd_matrix(v, params, dist)?,
        rd_narrow: rd_search(v, &params.with_alpha(params.alpha / 4.0), dist)?,
    })
}

fn gaussian_theta(l: usize, sd: f64, key: StreamKey) -> DVector<f64> {
    let mut rng = key.rng();
    DVector::from_iterator(l, (0..l).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); sd * z }))
}

const LEVEL_SD: f64 = 0.398_942_280_401_432_7;

/// Monte Carlo estimate of the `N(0, (2 pi)^{-1} I_l)` measure of `{theta : ||W theta||_xi <= sqrt t}`.
pub fn level_set_gaussian_measure(
    w: &DMatrix<f64>,
    t: f64,
    dist: &DistSpec,
    trials: u64,
    key: StreamKey,
) -> Result<Proportion> {
    if trials < 1000 {
        return Err(Error::InvalidParameter(format!("{trials} trials, at least 1000 required")));
    }
    let xi = XiNorm::new(dist, XiMethod::Quadrature)?;
    let mut hits = 0u64;
    let mut buf = Vec::with_capacity(w.nrows());
    for i in 0..trials {
        let theta = gaussian_theta(w.ncols(), LEVEL_SD, key.child(i));
        let y = w * theta;
        buf.clear();
        buf.extend(y.iter().copied());
        if xi.norm_sq(&buf) <= t {
            hits += 1;
        }
    }
    Ok(Proportion::new(hits, trials))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContainmentReport {
    pub pairs: u64,
    pub violations: u64,
    /// Largest `||W (a - b)||_xi^2 / (4 t)` seen.
    pub max_ratio: f64,
}

/// Sample pairs in the level set `S(t)` and check that their difference lies in `S(4t)`.
pub fn level_set_containment_check(
    w: &DMatrix<f64>,
    t: f64,
    dist: &DistSpec,
    pairs: u64,
    key: StreamKey,
) -> Result<ContainmentReport> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter("level must be positive".into()));
    }
    let xi = XiNorm::new(dist, XiMethod::Quadrature)?;
    let l = w.ncols();
    let value = |theta: &DVector<f64>| {
        let y = w * theta;
        xi.norm_sq(y.as_slice())
    };
    // Shrink the proposal until a reasonable share of draws lands in the set.
    let mut sd = LEVEL_SD;
    let mut counter = 0u64;
    for _ in 0..60 {
        let hits = (0..200)
            .filter(|_| {
                counter += 1;
                value(&gaussian_theta(l, sd, key.child(counter))) <= t
            })
            .count();
        if hits >= 20 {
            break;
        }
        sd *= 0.5;
    }
    let mut next_point = || loop {
        counter += 1;
        let th = gaussian_theta(l, sd, key.child(counter));
        if value(&th) <= t {
            return th;
        }
    };
    let mut report = ContainmentReport { pairs, violations: 0, max_ratio: 0.0 };
    for _ in 0..pairs {
        let a = next_point();
        let b = next_point();
        let v = value(&(a - b));
        let ratio = v / (4.0 * t);
        report.max_ratio = report.max_ratio.max(ratio);
        if v > 4.0 * t * (1.0 + 1e-12) + 1e-15 {
            report.violations += 1;
        }
    }
    Ok(report)
}

/// Estimate of the threshold function with a simultaneous confidence bracket.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEstimate {
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
    pub trials: u64,
}

const THRESHOLD_MAX_ROWS: usize = 20;

/// `sup{t in [0, 1] : F(t) >= (4 L t)^m}` for the step function with values `steps`
/// (sorted ascending) and `F = cdf(j)` on `[steps[j], steps[j+1])`.
fn crossing_sup(steps: &[f64], cdf: impl Fn(usize) -> f64, l: f64, m: usize) -> f64 {
    let mut best = 0.0f64;
    for j in 0..steps.len() {
        let s = steps[j];
        if s > 1.0 {
            break;
        }
        let f = cdf(j).clamp(0.0, 1.0);
        let reach = f.powf(1.0 / m as f64) / (4.0 * l);
        if reach >= s {
            let next = steps.get(j + 1).copied().unwrap_or(f64::INFINITY);
            best = best.max(reach.min(next).min(1.0));
        }
    }
    best
}

fn threshold_checks(v: &[f64], l: f64, spec: &ZeroedOutSpec) -> Result<()> {
    spec.validate()?;
    if v.len() != spec.n {
        return Err(Error::DimensionMismatch { expected: spec.n, got: v.len() });
    }
    if spec.rows() > THRESHOLD_MAX_ROWS {
        return Err(Error::InvalidParameter(format!(
            "n - k = {} exceeds {THRESHOLD_MAX_ROWS}; the power curve is below Monte Carlo resolution",
            spec.rows()
        )));
    }
    if !(l > 0.0) {
        return Err(Error::InvalidParameter(format!("L = {l} must be positive")));
    }
    Ok(())
}

fn scaled_norm(matrix: &DMatrix<f64>, v: &[f64]) -> f64 {
    let x = DVector::from_column_slice(v);
    (matrix * x).norm() / (v.len() as f64).sqrt()
}

/// Monte Carlo threshold function; the bracket uses a DKW band at level 0.001.
pub fn threshold_gl(v: &[f64], l: f64, spec: &ZeroedOutSpec, trials: u64, key: StreamKey) -> Result<ThresholdEstimate> {
    threshold_checks(v, l, spec)?;
    if trials == 0 {
        return Err(Error::InvalidParameter("no trials".into()));
    }
    let mut all: Vec<f64> = (0..trials)
        .map(|t| sample_zeroed_out(spec, key.child(t)).map(|z| scaled_norm(&z.matrix, v)))
        .collect::<Result<_>>()?;
    all.sort_by(f64::total_cmp);
    let mut samples = all.clone();
    samples.dedup();
    let n = trials as f64;
    let cdf_at = |j: usize| all.partition_point(|&x| x <= samples[j]) as f64 / n;
    let band = ((2.0f64 / 0.001).ln() / (2.0 * n)).sqrt();
    let m = spec.rows();
    Ok(ThresholdEstimate {
        estimate: crossing_sup(&samples, cdf_at, l, m),
        lo: crossing_sup(&samples, |j| cdf_at(j) - band, l, m),
        hi: crossing_sup(&samples, |j| cdf_at(j) + band, l, m),
        trials,
    })
}

/// Threshold function by enumerating every value of the random block (discrete laws only).
pub fn threshold_gl_exact(v: &[f64], l: f64, spec: &ZeroedOutSpec) -> Result<f64> {
    threshold_checks(v, l, spec)?;
    let base = spec.dist.atoms().ok_or_else(|| Error::InvalidDistribution("enumeration needs a discrete law".into()))?;
    let mut atoms: Vec<(f64, f64)> = base.iter().map(|a| (a.value, a.prob * spec.nu)).collect();
    atoms.push((0.0, 1.0 - spec.nu));
    let atoms = merge_atoms(atoms);
    let (m, d) = (spec.rows(), spec.d);
    let entries = (m - d) * d;
    let total = (atoms.len() as f64).powi(entries as i32);
    if total > (1u64 << 22) as f64 {
        return Err(Error::TooLarge(format!("{total} outcomes to enumerate")));
    }
    let mut idx = vec![0usize; entries];
    let mut outcomes = Vec::with_capacity(total as usize);
    let mut block = DMatrix::zeros(m - d, d);
    loop {
        let mut p = 1.0;
        for (e, &i) in idx.iter().enumerate() {
            block[(e / d, e % d)] = atoms[i].0;
            p *= atoms[i].1;
        }
        let mat = crate::ensembles::zeroed_out_from_block(spec.n, spec.k, &block)?;
        outcomes.push((scaled_norm(&mat, v), p));
        let mut pos = 0;
        while pos < entries {
            idx[pos] += 1;
            if idx[pos] < atoms.len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
        if pos == entries {
            break;
        }
    }
    let merged = merge_atoms(outcomes);
    let values: Vec<f64> = merged.iter().map(|a| a.0).collect();
    let mut cum = Vec::with_capacity(merged.len());
    let mut acc = 0.0;
    for a in &merged {
        acc += a.1;
        cum.push(acc);
    }
    Ok(crossing_sup(&values, |j| cum[j], l, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{make_dist, Atom};
    use proptest::prelude::*;

    fn fourier_gaussian(y: f64, var: f64) -> f64 {
        let mut s = 1.0 / 12.0;
        for m in 1..400 {
            let m = m as f64;
            let sign = if m as i64 % 2 == 1 { -1.0 } else { 1.0 };
            s += sign * (-2.0 * PI * PI * m * m * y * y * var).exp() / (PI * PI * m * m);
        }
        s
    }

    fn riemann_uniform_diff(y: f64) -> f64 {
        let a = 3f64.sqrt();
        let steps = 400_000;
        let h = 4.0 * a / steps as f64;
        (0..steps)
            .map(|i| {
                let z = -2.0 * a + (i as f64 + 0.5) * h;
                torus_dist(y * z).powi(2) * (2.0 * a - z.abs()) / (4.0 * a * a)
            })
            .sum::<f64>()
            * h
    }

    #[test]
    fn torus_norm_examples() {
        assert_eq!(torus_norm(&[0.5]), 0.5);
        assert_eq!(torus_norm(&[1.0, 2.0]), 0.0);
        assert!((torus_norm(&[0.3, 0.9]) - 0.1f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn xi_norm_examples() {
        let r = DistSpec::rademacher();
        assert_eq!(xi_norm(&[0.5], &r, XiMethod::Exact).unwrap(), 0.0);
        assert!((xi_norm(&[0.25], &r, XiMethod::Exact).unwrap() - 0.125f64.sqrt()).abs() < 1e-15);
        let three = make_dist(DistKind::Discrete(vec![Atom::new(-1.0, 0.25), Atom::new(0.0, 0.5), Atom::new(1.0, 0.25)])).unwrap();
        let scale = three.atoms().unwrap()[2].value;
        let ints: Vec<f64> = [1.0, -3.0, 7.0].iter().map(|x| x / scale).collect();
        assert!(xi_norm(&ints, &three, XiMethod::Exact).unwrap() < 1e-12);
        assert!(matches!(xi_norm(&[0.1], &DistSpec::gaussian(), XiMethod::Exact), Err(Error::InvalidDistribution(_))));
        let many = make_dist(DistKind::Discrete((0..17).map(|i| Atom::new(i as f64, 1.0 / 17.0)).collect())).unwrap();
        assert!(matches!(xi_norm(&[0.1], &many, XiMethod::Exact), Err(Error::TooLarge(_))));
    }

    #[test]
    fn gaussian_matches_fourier_series() {
        let law = SymmetrizedLaw::new(&DistSpec::gaussian(), XiMethod::Quadrature).unwrap();
        for &y in &[0.05, 0.08, 0.1, 0.15, 0.2, 0.25, 0.4, 1.0, 3.7, 55.0] {
            let want = fourier_gaussian(y, 2.0);
            let got = law.torus_sq_mean(y);
            assert!((got - want).abs() < 1e-10, "y={y}: {got} vs {want}");
        }
        assert!((law.torus_sq_mean(0.01) - 2.0 * 0.0001).abs() < 1e-15);
    }

    #[test]
    fn uniform_closed_form_matches_riemann_sum() {
        let law = SymmetrizedLaw::new(&DistSpec::uniform(), XiMethod::Quadrature).unwrap();
        for &y in &[0.05, 0.2, 0.3, 0.77, 2.3, 19.1] {
            let want = riemann_uniform_diff(y);
            assert!((law.torus_sq_mean(y) - want).abs() < 1e-8, "y={y}");
        }
    }

    #[test]
    fn sparse_gaussian_mixture_matches_monte_carlo() {
        let s = make_dist(DistKind::Sparse { base: Box::new(DistKind::Gaussian), mu: 0.3 }).unwrap();
        let x = [0.3, -0.7, 1.9];
        let q = xi_norm(&x, &s, XiMethod::Quadrature).unwrap();
        let (mc, se) = xi_norm_mc(&x, &s, 200_000, StreamKey::new(3)).unwrap();
        assert!((q - mc).abs() < 5.0 * se, "{q} vs {mc} +- {se}");
    }

    #[test]
    fn monte_carlo_agrees_with_exact() {
        let r = DistSpec::rademacher();
        let x = [0.3, 0.11, -0.45];
        let e = xi_norm(&x, &r, XiMethod::Exact).unwrap();
        let (mc, se) = xi_norm_mc(&x, &r, 100_000, StreamKey::new(8)).unwrap();
        assert!((e - mc).abs() < 5.0 * se);
        assert!(xi_norm_mc(&x, &r, 10, StreamKey::new(8)).is_err());
    }

    #[test]
    fn cos_mean_examples() {
        let law = SymmetrizedLaw::new(&DistSpec::rademacher(), XiMethod::Exact).unwrap();
        assert!(law.cos_mean(0.25).abs() < 1e-15);
        assert!((law.cos_mean(0.0) - 1.0).abs() < 1e-15);
        let g = SymmetrizedLaw::new(&DistSpec::gaussian(), XiMethod::Quadrature).unwrap();
        assert!((g.cos_mean(0.1) - (-4.0 * PI * PI * 0.01).exp()).abs() < 1e-15);
    }

    #[test]
    fn flat_vector_has_small_denominator() {
        let v = vec![0.25; 16];
        let p = LcdParams::new(0.5, 0.9, 100.0).unwrap();
        let r = DistSpec::rademacher();
        let res = rlogd_vector(&v, &p, &r).unwrap();
        assert!(res.hi <= 2.0, "{res:?}");
        assert!(res.lo <= res.hi && res.hi - res.lo <= 1e-6 * res.hi);
        assert!(res.lo >= p.l / p.alpha);
        assert!(rlogd_vector_witness_holds(&v, res.hi, &p, &r).unwrap());
        assert!(!rlogd_vector_witness_holds(&v, 0.5 / 0.9, &p, &r).unwrap());
    }

    #[test]
    fn generic_direction_has_no_witness() {
        let g = DistSpec::gaussian();
        let key = StreamKey::new(21);
        let mut v: Vec<f64> = (0..16).map(|i| g.sample(&mut key.child(i).rng())).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= n);
        let p = LcdParams::new(0.1, 0.5, 1000.0).unwrap();
        let r = DistSpec::rademacher();
        let res = rlogd_vector(&v, &p, &r).unwrap();
        assert!(res.hi.is_infinite(), "{res:?}");
        assert_eq!(res.lo, 1000.0);
        for theta in [0.3, 3.0, 30.0, 300.0, 999.0] {
            assert!(!rlogd_vector_witness_holds(&v, theta, &p, &r).unwrap());
        }
    }

    #[test]
    fn one_dimensional_subspace_is_the_vector_case() {
        let n = 9;
        let u = vec![1.0 / 3.0; n];
        let p = LcdParams::new(0.5, 0.9, 200.0).unwrap();
        let r = DistSpec::rademacher();
        let a = rlogd_vector(&u, &p, &r).unwrap();
        let b = rlogd_subspace(&DMatrix::from_column_slice(n, 1, &u), &p, &r).unwrap();
        assert!((a.hi - b.hi).abs() <= 1e-12 * a.hi, "{} {}", a.hi, b.hi);
        let row = DMatrix::from_row_slice(1, n, &u);
        let c = rd_matrix(&row, &p, &r).unwrap();
        assert_eq!(a.hi, c.hi);
        let padded = DMatrix::from_fn(2, n, |i, j| if i == 0 { u[j] } else { 0.0 });
        let d = rd_matrix(&padded, &p, &r).unwrap();
        assert_eq!(a.hi, d.hi);
    }

    #[test]
    fn coordinate_direction_is_detected() {
        let n = 8;
        let g = DistSpec::gaussian();
        let key = StreamKey::new(2);
        let mut basis = DMatrix::zeros(n, 2);
        for i in 0..n {
            basis[(i, 0)] = g.sample(&mut key.child(i as u64).rng());
        }
        basis[(0, 1)] = 1.0;
        let p = LcdParams { angular_step: 0.02, ..LcdParams::new(0.1, 0.9, 50.0).unwrap() };
        let res = rlogd_subspace(&basis, &p, &DistSpec::rademacher()).unwrap();
        assert!(res.hi <= 0.5 + 1e-3, "{res:?}");
        let y = res.witness.unwrap();
        let xi = XiNorm::new(&DistSpec::rademacher(), XiMethod::Exact).unwrap();
        let ny = y.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(xi.norm(&y) < p.l * log_plus(p.alpha * ny / p.l).sqrt());
    }

    #[test]
    fn larger_subspace_has_smaller_denominator() {
        let n = 6;
        let g = DistSpec::gaussian();
        let key = StreamKey::new(40);
        let basis = DMatrix::from_fn(n, 2, |i, j| g.sample(&mut key.child((i * 2 + j) as u64).rng()));
        let p = LcdParams { angular_step: 0.05, ..LcdParams::new(0.5, 0.9, 100.0).unwrap() };
        let r = DistSpec::rademacher();
        let small = rlogd_subspace(&basis.columns(0, 1).into_owned(), &p, &r).unwrap();
        let big = rlogd_subspace(&basis, &p, &r).unwrap();
        assert!(big.hi <= small.hi * (1.0 + 1e-9), "{} {}", big.hi, small.hi);
        let third = DMatrix::from_fn(n, 3, |i, j| if j < 2 { basis[(i, j)] } else { g.sample(&mut key.child(100 + i as u64).rng()) });
        let p3 = LcdParams { angular_step: 0.1, ..p.clone() };
        let bigger = rlogd_subspace(&third, &p3, &r).unwrap();
        let small3 = rlogd_subspace(&basis.columns(0, 1).into_owned(), &p3, &r).unwrap();
        assert!(bigger.hi <= small3.hi * (1.0 + 1e-9));
    }

    #[test]
    fn heuristic_search_reports_upper_bound() {
        let n = 10;
        let basis = DMatrix::<f64>::identity(n, 4);
        let p = LcdParams { starts: 8, ..LcdParams::new(0.1, 0.9, 20.0).unwrap() };
        let res = rlogd_subspace(&basis, &p, &DistSpec::rademacher()).unwrap();
        assert_eq!(res.certification, Certification::Heuristic);
        assert!(res.hi.is_finite());
        assert!(res.lo <= res.hi && (res.lo - p.l / p.alpha).abs() < 1e-12);
    }

    #[test]
    fn comparison_sandwich_holds_for_nearly_orthogonal_rows() {
        let g = DistSpec::gaussian();
        for seed in 0..3u64 {
            let key = StreamKey::new(100 + seed);
            let n = 8;
            let v = DMatrix::from_fn(2, n, |i, j| {
                let e = if j == i { 1.0 } else { 0.0 };
                e + 0.08 * g.sample(&mut key.child((i * n + j) as u64).rng())
            });
            let p = LcdParams { angular_step: 0.02, grid_ratio: 1.001, ..LcdParams::new(0.4, 0.2, 2000.0).unwrap() };
            let s = comparison_sandwich(&v, &p, &DistSpec::rademacher()).unwrap();
            assert!(s.defect <= 0.25);
            assert!(s.rd_wide.hi.is_finite() && s.rd_narrow.hi.is_finite(), "{s:?}");
            assert!(s.holds(5e-3), "{s:?}");
        }
    }

    #[test]
    fn level_set_extremes() {
        let w = DMatrix::from_fn(6, 2, |i, j| (i + 2 * j) as f64 * 0.3 + 0.1);
        let r = DistSpec::rademacher();
        let all = level_set_gaussian_measure(&w, 6.0, &r, 2000, StreamKey::new(1)).unwrap();
        assert_eq!(all.successes, 2000);
        let tiny = level_set_gaussian_measure(&w, 1e-3, &r, 20_000, StreamKey::new(1)).unwrap();
        assert!(tiny.successes > 0);
        assert!(level_set_gaussian_measure(&w, 1.0, &r, 10, StreamKey::new(1)).is_err());
    }

    #[test]
    fn containment_small_run() {
        let g = DistSpec::gaussian();
        let key = StreamKey::new(9);
        let w = DMatrix::from_fn(8, 2, |i, j| g.sample(&mut key.child((i * 2 + j) as u64).rng()));
        for dist in [DistSpec::rademacher(), DistSpec::gaussian()] {
            let rep = level_set_containment_check(&w, 0.5, &dist, 500, StreamKey::new(4)).unwrap();
            assert_eq!(rep.violations, 0, "{rep:?}");
        }
    }

    #[test]
    fn threshold_of_zero_vector() {
        let spec = ZeroedOutSpec { nu: 0.5, ..ZeroedOutSpec::new(8, 2, 2, DistSpec::rademacher()) };
        let v = vec![0.0; 8];
        for l in [0.1, 0.25, 2.0] {
            let want = (1.0f64).min(1.0 / (4.0 * l));
            assert!((threshold_gl(&v, l, &spec, 500, StreamKey::new(0)).unwrap().estimate - want).abs() < 1e-15);
            assert!((threshold_gl_exact(&v, l, &spec).unwrap() - want).abs() < 1e-15);
        }
    }

    #[test]
    fn threshold_vanishes_for_large_l() {
        let spec = ZeroedOutSpec { nu: 0.5, ..ZeroedOutSpec::new(8, 2, 2, DistSpec::rademacher()) };
        let v: Vec<f64> = (0..8).map(|i| 1.0 + i as f64).collect();
        let a = threshold_gl_exact(&v, 1.0, &spec).unwrap();
        let b = threshold_gl_exact(&v, 1e6, &spec).unwrap();
        assert!(b < a && b < 1e-5);
    }

    #[test]
    fn threshold_bracket_contains_enumeration() {
        let spec = ZeroedOutSpec { nu: 0.5, ..ZeroedOutSpec::new(8, 2, 2, DistSpec::rademacher()) };
        for (seed, l) in [(1u64, 0.3), (2, 0.6), (3, 1.5)] {
            let g = DistSpec::gaussian();
            let v: Vec<f64> = (0..8).map(|i| g.sample(&mut StreamKey::new(seed).child(i).rng())).collect();
            let exact = threshold_gl_exact(&v, l, &spec).unwrap();
            let est = threshold_gl(&v, l, &spec, 20_000, StreamKey::new(seed)).unwrap();
            assert!(est.lo <= exact && exact <= est.hi, "{exact} not in {est:?}");
        }
        let big = ZeroedOutSpec::new(30, 2, 2, DistSpec::rademacher());
        assert!(threshold_gl(&vec![0.0; 30], 1.0, &big, 10, StreamKey::new(0)).is_err());
    }

    proptest! {
        #[test]
        fn torus_norm_ignores_integer_shifts(raw in proptest::collection::vec(-(1i64 << 30)..(1i64 << 30), 1..12),
                                             shift in proptest::collection::vec(-1000i64..1000, 12)) {
            let x: Vec<f64> = raw.iter().map(|&r| r as f64 / (1u64 << 20) as f64).collect();
            let y: Vec<f64> = x.iter().zip(&shift).map(|(a, &k)| a + k as f64).collect();
            prop_assert_eq!(torus_norm(&x), torus_norm(&y));
        }

        #[test]
        fn xi_norm_below_scaled_euclidean(x in proptest::collection::vec(-3.0f64..3.0, 1..10)) {
            let e = x.iter().map(|v| v * v).sum::<f64>().sqrt() * 2f64.sqrt();
            for d in [DistSpec::rademacher(), DistSpec::gaussian(), DistSpec::uniform()] {
                prop_assert!(xi_norm(&x, &d, XiMethod::Quadrature).unwrap() <= e * (1.0 + 1e-9) + 1e-12);
            }
        }

        #[test]
        fn vector_denominator_scales(c in 0.5f64..2.0, seed in 0u64..50) {
            let key = StreamKey::new(seed);
            let v: Vec<f64> = (0..6).map(|i| ((key.child(i).raw() % 7) as f64 + 1.0) / 4.0).collect();
            let p = LcdParams::new(0.5, 0.9, 400.0).unwrap();
            let r = DistSpec::rademacher();
            let a = rlogd_vector(&v, &p, &r).unwrap();
            let cv: Vec<f64> = v.iter().map(|x| c * x).collect();
            let b = rlogd_vector(&cv, &p, &r).unwrap();
            if a.hi.is_finite() && a.hi / c < p.theta_max / 1.01 {
                prop_assert!(b.hi <= a.hi / c * (1.0 + 1e-5), "{} vs {}", b.hi, a.hi / c);
                prop_assert!(rlogd_vector_witness_holds(&cv, b.hi, &p, &r).unwrap());
            }
        }
    }
}
