//! Lévy concentration estimators, exact oracles, characteristic functions of sparse
//! entries and numerical checks of the Fourier-side bounds.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arithmetic::{merge_atoms, torus_dist, SymmetrizedLaw, XiMethod, XiNorm};
use crate::ensembles::{symmetrize, DistSpec};
use crate::error::{Error, Result};
use crate::rng::StreamKey;
use crate::stats::{wilson_interval, Proportion, Z95};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LevyMethod {
    Mc,
    Exact,
}

/// Estimate of `sup_w P(||X - w|| <= t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevyEstimate {
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub method: LevyMethod,
    /// Confirmation trials, or the number of enumerated outcomes.
    pub size: u64,
    pub center: Vec<f64>,
}

/// Source of i.i.d. draws of a random vector, keyed per draw.
pub trait VectorSampler: Sync {
    fn dim(&self) -> usize;
    fn sample_into(&self, key: StreamKey, out: &mut [f64]);
}

/// Sampler built from a closure.
pub struct FnSampler<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(StreamKey, &mut [f64]) + Sync> VectorSampler for FnSampler<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn sample_into(&self, key: StreamKey, out: &mut [f64]) {
        (self.f)(key, out)
    }
}

/// The scalar `sum_i v_i xi_i`, or the same with symmetrised entries.
pub struct WeightedSum<'a> {
    pub weights: &'a [f64],
    pub dist: &'a DistSpec,
    pub symmetrized: bool,
}

impl VectorSampler for WeightedSum<'_> {
    fn dim(&self) -> usize {
        1
    }
    fn sample_into(&self, key: StreamKey, out: &mut [f64]) {
        let mut rng = key.rng();
        let sym = symmetrize(self.dist);
        out[0] = self
            .weights
            .iter()
            .map(|w| w * if self.symmetrized { sym.sample(&mut rng) } else { self.dist.sample(&mut rng) })
            .sum();
    }
}

/// `W^T tau` with `tau_j = delta_j xi_bar_j`, `delta_j ~ Bernoulli(nu)`.
pub struct SparseImage<'a> {
    pub w: &'a DMatrix<f64>,
    pub dist: &'a DistSpec,
    pub nu: f64,
    pub symmetrized: bool,
}

impl SparseImage<'_> {
    fn draw_tau(&self, key: StreamKey) -> DVector<f64> {
        let mut rng = key.rng();
        let sym = symmetrize(self.dist);
        DVector::from_iterator(
            self.w.nrows(),
            (0..self.w.nrows()).map(|_| {
                if rng.random::<f64>() < self.nu {
                    if self.symmetrized {
                        sym.sample(&mut rng)
                    } else {
                        self.dist.sample(&mut rng)
                    }
                } else {
                    0.0
                }
            }),
        )
    }
}

impl VectorSampler for SparseImage<'_> {
    fn dim(&self) -> usize {
        self.w.ncols()
    }
    fn sample_into(&self, key: StreamKey, out: &mut [f64]) {
        let y = self.w.tr_mul(&self.draw_tau(key));
        out.copy_from_slice(y.as_slice());
    }
}

/// Candidate centres for the supremum in the Lévy function.
#[derive(Debug, Clone, PartialEq)]
pub enum CenterGrid {
    /// Mode seeking over pilot samples.
    Auto,
    Points(Vec<Vec<f64>>),
}

const MIN_TRIALS: u64 = 1000;

#[inline]
fn within(x: &[f64], w: &[f64], t: f64) -> bool {
    let d2: f64 = x.iter().zip(w).map(|(a, b)| (a - b) * (a - b)).sum();
    d2.sqrt() <= t * (1.0 + 1e-12) + 1e-12
}

fn draw_block(sampler: &dyn VectorSampler, count: u64, key: StreamKey) -> Vec<f64> {
    let d = sampler.dim();
    let mut flat = vec![0.0; count as usize * d];
    flat.par_chunks_mut(d.max(1)).enumerate().for_each(|(i, out)| sampler.sample_into(key.child(i as u64), out));
    flat
}

fn count_near(flat: &[f64], d: usize, w: &[f64], t: f64) -> usize {
    flat.chunks(d).filter(|x| within(x, w, t)).count()
}

/// Widest-mass window of length `2t` over sorted scalars; returns its midpoint and count.
fn best_window(sorted: &[f64], t: f64) -> (f64, usize) {
    let reach = 2.0 * t * (1.0 + 1e-12) + 1e-12;
    let (mut best, mut centre, mut j) = (0usize, sorted.first().copied().unwrap_or(0.0), 0usize);
    for i in 0..sorted.len() {
        if j < i {
            j = i;
        }
        while j + 1 < sorted.len() && sorted[j + 1] - sorted[i] <= reach {
            j += 1;
        }
        if j + 1 - i > best {
            best = j + 1 - i;
            centre = 0.5 * (sorted[i] + sorted[j]);
        }
    }
    (centre, best)
}

fn mode_seek(flat: &[f64], d: usize, t: f64) -> Vec<f64> {
    let candidates = (flat.len() / d).min(256);
    let mut scored: Vec<(usize, Vec<f64>)> = (0..candidates)
        .into_par_iter()
        .map(|c| {
            let w = flat[c * d..(c + 1) * d].to_vec();
            (count_near(flat, d, &w, t), w)
        })
        .collect();
    scored.sort_by_key(|s| std::cmp::Reverse(s.0));
    scored.truncate(4);
    let mut best = scored[0].clone();
    for (mut score, mut w) in scored {
        for _ in 0..10 {
            let mut mean = vec![0.0; d];
            let mut hits = 0usize;
            for x in flat.chunks(d).filter(|x| within(x, &w, t)) {
                mean.iter_mut().zip(x).for_each(|(m, v)| *m += v);
                hits += 1;
            }
            if hits == 0 {
                break;
            }
            mean.iter_mut().for_each(|m| *m /= hits as f64);
            let s = count_near(flat, d, &mean, t);
            if s <= score {
                break;
            }
            score = s;
            w = mean;
        }
        if score > best.0 {
            best = (score, w);
        }
    }
    best.1
}

/// Monte Carlo Lévy concentration. A pilot sample selects the centre and an
/// independent confirmation sample of `trials` draws estimates the probability there.
pub fn levy_mc(
    sampler: &dyn VectorSampler,
    t: f64,
    trials: u64,
    grid: &CenterGrid,
    key: StreamKey,
) -> Result<LevyEstimate> {
    if trials < MIN_TRIALS {
        return Err(Error::InvalidParameter(format!("{trials} trials, at least {MIN_TRIALS} required")));
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("radius {t} must be non-negative")));
    }
    let d = sampler.dim();
    if d == 0 {
        return Err(Error::InvalidParameter("zero-dimensional sampler".into()));
    }
    // The pilot's noise decides how far the chosen centre falls short of the best one.
    // A scalar window scan is cheap, so it gets a pilot larger than the confirmation run.
    let pilot_n = if d == 1 { trials.saturating_mul(4) } else { trials / 5 }.max(MIN_TRIALS);
    let centre = match grid {
        CenterGrid::Points(p) if p.is_empty() => return Err(Error::InvalidParameter("empty centre grid".into())),
        CenterGrid::Points(p) => {
            if let Some(bad) = p.iter().find(|w| w.len() != d) {
                return Err(Error::DimensionMismatch { expected: d, got: bad.len() });
            }
            if p.len() == 1 {
                p[0].clone()
            } else {
                let pilot = draw_block(sampler, pilot_n, key.tagged("pilot"));
                p.iter().max_by_key(|w| count_near(&pilot, d, w, t)).cloned().unwrap()
            }
        }
        CenterGrid::Auto => {
            let mut pilot = draw_block(sampler, pilot_n, key.tagged("pilot"));
            if d == 1 {
                pilot.sort_by(f64::total_cmp);
                vec![best_window(&pilot, t).0]
            } else {
                mode_seek(&pilot, d, t)
            }
        }
    };
    let confirm = key.tagged("confirm");
    let hits = (0..trials)
        .into_par_iter()
        .map_init(
            || vec![0.0; d],
            |buf, i| {
                sampler.sample_into(confirm.child(i), buf);
                within(buf, &centre, t) as u64
            },
        )
        .sum::<u64>();
    let p = Proportion::new(hits, trials);
    Ok(LevyEstimate { value: p.p_hat, ci_low: p.ci_lo, ci_high: p.ci_hi, method: LevyMethod::Mc, size: trials, center: centre })
}

const MAX_OUTCOMES: f64 = (1u64 << 24) as f64;

/// Law of `sum_i v_i xi_i` (or with `xi_bar`) by convolution with merged atoms.
pub fn weighted_sum_law(v: &[f64], dist: &DistSpec, symmetrized: bool) -> Result<Vec<(f64, f64)>> {
    let atoms: Vec<(f64, f64)> = if symmetrized {
        SymmetrizedLaw::new(dist, XiMethod::Exact)?.atoms().expect("exact law has atoms").to_vec()
    } else {
        dist.atoms()
            .ok_or_else(|| Error::InvalidDistribution("enumeration needs a discrete law".into()))?
            .iter()
            .map(|a| (a.value, a.prob))
            .collect()
    };
    let mut law = vec![(0.0, 1.0)];
    for &w in v {
        if (law.len() * atoms.len()) as f64 > MAX_OUTCOMES {
            return Err(Error::TooLarge(format!("support exceeds {MAX_OUTCOMES} atoms")));
        }
        let mut next = Vec::with_capacity(law.len() * atoms.len());
        for &(s, p) in &law {
            for &(a, q) in &atoms {
                next.push((s + w * a, p * q));
            }
        }
        law = merge_atoms(next);
    }
    Ok(law)
}

/// Exact Lévy concentration of `sum_i v_i xi_i` for discrete laws.
pub fn levy_exact_discrete(v: &[f64], dist: &DistSpec, t: f64, symmetrized: bool) -> Result<LevyEstimate> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("radius {t} must be non-negative")));
    }
    let law = weighted_sum_law(v, dist, symmetrized)?;
    let reach = 2.0 * t * (1.0 + 1e-12) + 1e-12;
    let mut cum = Vec::with_capacity(law.len() + 1);
    cum.push(0.0);
    for (_, p) in &law {
        cum.push(cum.last().unwrap() + p);
    }
    let (mut best, mut centre, mut j) = (0.0f64, 0.0, 0usize);
    for i in 0..law.len() {
        j = j.max(i);
        while j + 1 < law.len() && law[j + 1].0 - law[i].0 <= reach {
            j += 1;
        }
        let mass = cum[j + 1] - cum[i];
        if mass > best {
            best = mass;
            centre = 0.5 * (law[i].0 + law[j].0);
        }
    }
    let value = best.min(1.0);
    let n_atoms = dist.atoms().map_or(1, |a| a.len()) as f64;
    let size = n_atoms.powi(v.len() as i32).min(u64::MAX as f64) as u64;
    Ok(LevyEstimate { value, ci_low: value, ci_high: value, method: LevyMethod::Exact, size, center: vec![centre] })
}

/// Characteristic function of a sparse entry with its two exponential bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharFnValue {
    pub value: f64,
    /// `E ||t xi_bar||_T^2`.
    pub torus_mean: f64,
    pub upper: f64,
    /// Present when `mu < 1/4`.
    pub lower: Option<f64>,
}

/// `1 - mu + mu E cos(2 pi t xi_bar)` with `exp(-mu x)` and `exp(-32 mu x)`.
pub fn char_fn_sparse(t: f64, mu: f64, dist: &DistSpec) -> Result<CharFnValue> {
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(Error::InvalidParameter(format!("mu = {mu} outside (0, 1]")));
    }
    let law = SymmetrizedLaw::new(dist, XiMethod::Quadrature)?;
    let x = law.torus_sq_mean(t);
    Ok(CharFnValue {
        value: 1.0 - mu * law.one_minus_cos_mean(t),
        torus_mean: x,
        upper: (-mu * x).exp(),
        lower: (mu < 0.25).then(|| (-32.0 * mu * x).exp()),
    })
}

/// `1 - 20 ||a||_T^2 <= cos(2 pi a) <= 1 - ||a||_T^2` on `grid_size` points of `[-2, 2]`.
pub fn cosine_bounds_check(grid_size: usize) -> bool {
    let cosine_holds = |a: f64| {
        let r = a - a.round();
        let c = (2.0 * std::f64::consts::PI * r).cos();
        let d2 = torus_dist(a).powi(2);
        1.0 - 20.0 * d2 <= c + 1e-14 && c <= 1.0 - d2 + 1e-14
    };
    match grid_size {
        0 => true,
        1 => cosine_holds(0.0),
        n => (0..n).all(|i| cosine_holds(-2.0 + 4.0 * i as f64 / (n - 1) as f64)),
    }
}

/// One side of the Fourier upper bound on the Lévy function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Check {
    pub levy: LevyEstimate,
    /// Level `m` maximising `gamma(S(m)) exp(-nu m / 2)`.
    pub best_level: f64,
    pub gamma: Proportion,
    pub rhs: f64,
    /// Right-hand side with the Wilson upper bound for the Gaussian measure.
    pub rhs_high: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F2Check {
    pub small_ball: Proportion,
    /// Level `t` where the lower bound comes closest to failing.
    pub worst_level: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1F2Report {
    /// `W = 0`; the upper bound is reported but not asserted.
    pub degenerate: bool,
    pub f1: F1Check,
    pub f2: Option<F2Check>,
}

impl F1F2Report {
    pub fn holds(&self) -> bool {
        (self.degenerate || self.f1.holds) && self.f2.as_ref().is_none_or(|c| c.holds)
    }
}

/// Evaluate both Fourier-side inequalities for `W` of shape `2n x l` and sparse
/// entries `tau_j = delta_j xi_bar_j`. The second is evaluated when `nu < 1/4`.
pub fn f1_f2_bound_eval(
    w: &DMatrix<f64>,
    beta: f64,
    nu: f64,
    dist: &DistSpec,
    trials: u64,
    key: StreamKey,
) -> Result<F1F2Report> {
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::InvalidParameter(format!("nu = {nu} outside (0, 1]")));
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!("beta = {beta} must be positive")));
    }
    if trials < MIN_TRIALS {
        return Err(Error::InvalidParameter(format!("{trials} trials, at least {MIN_TRIALS} required")));
    }
    let l = w.ncols();
    let radius = beta * (l as f64).sqrt();
    let image = SparseImage { w, dist, nu, symmetrized: true };
    let levy = levy_mc(&image, radius, trials, &CenterGrid::Auto, key.tagged("levy"))?;

    let xi = XiNorm::new(dist, XiMethod::Quadrature)?;
    let gkey = key.tagged("gauss");
    let sd = (2.0 * std::f64::consts::PI).sqrt().recip();
    let mut levels: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = gkey.child(i).rng();
            let g = DVector::from_iterator(l, (0..l).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); sd * z }));
            xi.norm_sq((w * g).as_slice())
        })
        .collect();
    levels.sort_by(f64::total_cmp);
    // Distinct levels with the count of samples at or below each.
    let mut steps: Vec<(f64, u64)> = Vec::new();
    for (i, &u) in levels.iter().enumerate() {
        match steps.last_mut() {
            Some(last) if last.0 == u => last.1 = i as u64 + 1,
            _ => steps.push((u, i as u64 + 1)),
        }
    }
    let (best_level, best_count) = steps
        .iter()
        .copied()
        .max_by(|a, b| {
            let fa = a.1 as f64 * (-nu * a.0 / 2.0).exp();
            let fb = b.1 as f64 * (-nu * b.0 / 2.0).exp();
            fa.total_cmp(&fb)
        })
        .expect("at least one level");
    let gamma = Proportion::new(best_count, trials);
    let factor = 2.0 * (2.0 * beta * beta * l as f64 - nu * best_level / 2.0).exp();
    let f1 = F1Check {
        rhs: factor * gamma.p_hat,
        rhs_high: factor * gamma.ci_hi,
        holds: levy.ci_low <= factor * gamma.ci_hi,
        best_level,
        gamma,
        levy,
    };

    let f2 = (nu < 0.25).then(|| {
        let skey = key.tagged("small");
        let hits = (0..trials)
            .into_par_iter()
            .map(|i| (image.w.tr_mul(&image.draw_tau(skey.child(i))).norm() <= radius * (1.0 + 1e-12)) as u64)
            .sum::<u64>();
        let small_ball = Proportion::new(hits, trials);
        let rhs = small_ball.ci_hi + (-beta * beta * l as f64).exp();
        let lower_at = |&(u, c): &(f64, u64)| wilson_interval(c, trials, Z95).0 * (-32.0 * nu * u).exp();
        let (worst_level, lhs) = std::iter::once((0.0, 0u64))
            .chain(steps.iter().copied())
            .map(|s| (s.0, lower_at(&s)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty");
        F2Check { small_ball, worst_level, lhs, rhs, holds: lhs <= rhs }
    });
    Ok(F1F2Report { degenerate: w.iter().all(|&x| x == 0.0), f1, f2 })
}

/// Anti-concentration of one symmetrised entry against `(2 psi_2)^{-4}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailCheck {
    pub dist: String,
    pub tail: f64,
    pub bound: f64,
    pub holds: bool,
}

/// `P(|xi_bar| >= 1) >= (2 psi_2)^{-4}`.
pub fn paley_zygmund_check(dist: &DistSpec) -> Result<TailCheck> {
    let tail = SymmetrizedLaw::new(dist, XiMethod::Quadrature)?.tail_at_least_one();
    let bound = (2.0 * dist.psi2).powi(-4);
    Ok(TailCheck { dist: dist.name(), tail, bound, holds: tail >= bound })
}

/// Settings for the decay check of `P(||W^T tau'|| <= beta' sqrt k)` in `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HansonWrightConfig {
    pub ks: Vec<usize>,
    pub nu: f64,
    pub beta: f64,
    pub trials: u64,
}

impl Default for HansonWrightConfig {
    fn default() -> Self {
        HansonWrightConfig { ks: vec![8, 16, 32], nu: 0.25, beta: 0.12, trials: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HansonWrightCheck {
    pub ks: Vec<usize>,
    pub probabilities: Vec<Proportion>,
    /// Least-squares slope of `ln p` against `k`.
    pub slope: f64,
    pub holds: bool,
}

/// Small-ball probability of `W^T tau'` for random orthogonal `W` of size `k x k`.
pub fn hanson_wright_check(dist: &DistSpec, cfg: &HansonWrightConfig, key: StreamKey) -> Result<HansonWrightCheck> {
    if cfg.ks.len() < 2 {
        return Err(Error::InvalidParameter("need at least two sizes".into()));
    }
    let mut probabilities = Vec::with_capacity(cfg.ks.len());
    for &k in &cfg.ks {
        let kkey = key.child(k as u64);
        let mut rng = kkey.tagged("w").rng();
        let g = DMatrix::from_fn(k, k, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
        let w = g.qr().q();
        let image = SparseImage { w: &w, dist, nu: cfg.nu, symmetrized: false };
        let radius = cfg.beta * (k as f64).sqrt();
        let hits = (0..cfg.trials)
            .into_par_iter()
            .map(|i| (w.tr_mul(&image.draw_tau(kkey.child(i))).norm() <= radius) as u64)
            .sum::<u64>();
        probabilities.push(Proportion::new(hits, cfg.trials));
    }
    let floor = 0.5 / cfg.trials as f64;
    let xs: Vec<f64> = cfg.ks.iter().map(|&k| k as f64).collect();
    let ys: Vec<f64> = probabilities.iter().map(|p| p.p_hat.max(floor).ln()).collect();
    let slope = crate::stats::ols_slope(&xs, &ys);
    let decreasing = probabilities.windows(2).all(|p| p[1].p_hat < p[0].p_hat || p[0].p_hat == 0.0);
    Ok(HansonWrightCheck { ks: cfg.ks.clone(), probabilities, slope, holds: slope < 0.0 && decreasing })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub tails: Vec<TailCheck>,
    pub hanson_wright: HansonWrightCheck,
}

impl InequalityReport {
    pub fn holds(&self) -> bool {
        self.tails.iter().all(|t| t.holds) && self.hanson_wright.holds
    }
}

/// Paley-Zygmund tails for each law and the sparse Hanson-Wright decay for the first.
pub fn inequality_suite(dists: &[DistSpec], cfg: &HansonWrightConfig, key: StreamKey) -> Result<InequalityReport> {
    let first = dists.first().ok_or_else(|| Error::InvalidParameter("no distributions".into()))?;
    Ok(InequalityReport {
        tails: dists.iter().map(paley_zygmund_check).collect::<Result<_>>()?,
        hanson_wright: hanson_wright_check(first, cfg, key)?,
    })
}
