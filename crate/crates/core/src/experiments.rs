//! Monte Carlo tail curves for spectral statistics, exponent fits and structural
//! probability checks.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arithmetic::{rlogd_vector, LcdParams};
use crate::ensembles::{
    sample_rectangular, sample_symmetric, sample_vector, sample_zeroed_out, DistSpec, MatrixProfile, SymMatrix,
    ZeroedOutSpec,
};
use crate::error::{Error, Result};
use crate::rng::StreamKey;
use crate::spectral::{eigen_sorted, eigen_sorted_with_vectors, gap_stat, min_gap, Spectrum};
use crate::stats::{Proportion, Z95};

/// Statistic whose lower tail is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Statistic {
    /// `lambda_{i+k} - lambda_i`, 1-based `i`.
    Gap { i: usize, k: usize },
    /// `min_i lambda_{i+k-1} - lambda_i`.
    MinGap { k: usize },
    /// `sigma_{n-k+1}(A)`.
    KthSv { k: usize },
    /// Least singular value of the `(n + extra) x n` matrix with a symmetric top block.
    RectSv { extra: usize },
    /// Smallest `||v_I||` over eigenvectors `v` and index sets of size `frac * n`.
    Deloc { frac: f64 },
    /// `dist(a, H)` for `H` spanned by the first `n - k` columns of `A`.
    Distance { k: usize },
}

impl Statistic {
    pub fn name(&self) -> &'static str {
        match self {
            Statistic::Gap { .. } => "gap",
            Statistic::MinGap { .. } => "min-gap",
            Statistic::KthSv { .. } => "kth-sv",
            Statistic::RectSv { .. } => "rect-sv",
            Statistic::Deloc { .. } => "deloc",
            Statistic::Distance { .. } => "distance",
        }
    }

    /// Normaliser: the event is `statistic <= eps * scale`.
    pub fn scale(&self, n: usize) -> f64 {
        let rn = (n as f64).sqrt();
        match *self {
            Statistic::Gap { .. } | Statistic::MinGap { .. } => 1.0 / rn,
            Statistic::KthSv { k } => k as f64 / rn,
            Statistic::RectSv { extra } => ((n + extra) as f64).sqrt() - ((n - 1) as f64).sqrt(),
            Statistic::Deloc { .. } => 1.0,
            Statistic::Distance { k } => (k as f64).sqrt(),
        }
    }

    /// Exponent of `eps` in the upper bound being tested, where one is asserted.
    pub fn predicted_exponent(&self) -> Option<f64> {
        match *self {
            Statistic::Gap { k, .. } => Some((k * (k + 1)) as f64 / 2.0),
            Statistic::KthSv { k: 1 } => Some(1.0),
            Statistic::RectSv { extra } => Some(extra as f64),
            Statistic::Distance { k } => Some(k as f64),
            _ => None,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match *self {
            Statistic::Gap { i, k } if i == 0 || k == 0 || i + k > n => bad(format!("gap ({i}, {k}) needs 1 <= i, i + k <= {n}")),
            Statistic::MinGap { k } if k < 2 || k > n => bad(format!("min-gap window {k} outside [2, {n}]")),
            Statistic::KthSv { k } if k == 0 || k > n => bad(format!("k = {k} outside [1, {n}]")),
            Statistic::RectSv { extra } if n < 2 || extra == 0 => bad("rect-sv needs n >= 2 and extra rows".into()),
            Statistic::Deloc { frac } if !(frac > 0.0 && frac <= 1.0) => bad(format!("fraction {frac} outside (0, 1]")),
            Statistic::Distance { k } if k == 0 || k >= n => bad(format!("k = {k} outside [1, {n})")),
            _ => Ok(()),
        }
    }
}

/// `lo, lo r, lo r^2, ...` up to `hi`.
pub fn geometric_grid(lo: f64, hi: f64, ratio: f64) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && ratio > 1.0) {
        return Err(Error::InvalidParameter(format!("grid [{lo}, {hi}] with ratio {ratio}")));
    }
    let mut out = Vec::new();
    let mut j = 0;
    loop {
        let e = lo * ratio.powi(j);
        if e > hi * (1.0 + 1e-12) {
            break;
        }
        out.push(e);
        j += 1;
    }
    Ok(out)
}

/// Default `[0.02, 0.8]` with ratio 1.5.
pub fn default_eps_grid() -> Vec<f64> {
    geometric_grid(0.02, 0.8, 1.5).expect("valid default grid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailExperiment {
    pub statistic: Statistic,
    pub profile_n: usize,
    pub trials: u64,
    pub seed: u64,
    pub eps: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub eps: f64,
    pub successes: u64,
    pub trials: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl TailPoint {
    pub fn new(eps: f64, successes: u64, trials: u64) -> Self {
        let p = Proportion::new(successes, trials);
        TailPoint { eps, successes, trials, p_hat: p.p_hat, ci_lo: p.ci_lo, ci_hi: p.ci_hi }
    }
}

/// Estimated `P(statistic <= eps * scale)` over a grid of `eps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailCurve {
    pub statistic: String,
    pub scale: f64,
    pub trials: u64,
    pub points: Vec<TailPoint>,
}

impl TailCurve {
    /// Count how many values lie at or below each threshold.
    pub fn from_values(statistic: &str, scale: f64, eps: &[f64], values: &[f64]) -> Self {
        let mut sorted: Vec<f64> = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let trials = values.len() as u64;
        let points = eps
            .iter()
            .map(|&e| TailPoint::new(e, sorted.partition_point(|&v| v <= e * scale) as u64, trials))
            .collect();
        TailCurve { statistic: statistic.to_string(), scale, trials, points }
    }

    /// Successes never decrease along the grid.
    pub fn is_monotone(&self) -> bool {
        self.points.windows(2).all(|w| w[0].eps > w[1].eps || w[0].successes <= w[1].successes)
    }

    /// Rows `eps,scale,successes,trials,p_hat,ci_lo,ci_hi`, LF line endings.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("eps,scale,successes,trials,p_hat,ci_lo,ci_hi\n");
        for p in &self.points {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                fmt_f64(p.eps),
                fmt_f64(self.scale),
                p.successes,
                p.trials,
                fmt_f64(p.p_hat),
                fmt_f64(p.ci_lo),
                fmt_f64(p.ci_hi)
            ));
        }
        s
    }
}

/// Seventeen significant digits in scientific notation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Smallest `||v_I||` over index sets of size `count`.
pub fn min_subset_norm(v: &[f64], count: usize) -> f64 {
    let mut sq: Vec<f64> = v.iter().map(|x| x * x).collect();
    sq.sort_by(f64::total_cmp);
    sq.iter().take(count).sum::<f64>().sqrt()
}

/// Index-set size for a delocalisation fraction.
pub fn deloc_count(n: usize, frac: f64) -> usize {
    ((frac * n as f64).round() as usize).clamp(1, n)
}

/// Smallest `min_subset_norm` over the eigenvectors of `a`.
pub fn deloc_statistic(a: &SymMatrix, frac: f64) -> f64 {
    let (_, vecs) = eigen_sorted_with_vectors(a);
    let count = deloc_count(a.dim(), frac);
    vecs.column_iter()
        .map(|c| min_subset_norm(c.as_slice(), count))
        .fold(f64::INFINITY, f64::min)
}

/// Evaluate a statistic on one sampled matrix.
pub fn evaluate_statistic(statistic: &Statistic, profile: &MatrixProfile, key: StreamKey) -> Result<f64> {
    let n = profile.n;
    match *statistic {
        Statistic::Gap { i, k } => gap_stat(&eigen_sorted(&sample_symmetric(profile, key)?), i, k),
        Statistic::MinGap { k } => min_gap(&eigen_sorted(&sample_symmetric(profile, key)?), k),
        Statistic::KthSv { k } => {
            let spec = eigen_sorted(&sample_symmetric(profile, key)?);
            let mut s: Vec<f64> = spec.values().iter().map(|x| x.abs()).collect();
            s.sort_by(f64::total_cmp);
            Ok(s[k - 1])
        }
        Statistic::RectSv { extra } => {
            let m = sample_rectangular(profile, n + extra, key)?;
            let s = m.singular_values();
            Ok(s.iter().copied().fold(f64::INFINITY, f64::min))
        }
        Statistic::Deloc { frac } => Ok(deloc_statistic(&sample_symmetric(profile, key)?, frac)),
        Statistic::Distance { k } => {
            let a = sample_vector(&vec![entry_law(profile)?; n], key.tagged("a"));
            Ok(distances_to_column_spans(&sample_symmetric(profile, key)?, &a, &[k])?[0])
        }
    }
}

fn entry_law(profile: &MatrixProfile) -> Result<DistSpec> {
    match &profile.zone {
        crate::ensembles::EntryZone::Uniform(d) => Ok(d.clone()),
        _ => Err(Error::InvalidParameter("distance vector needs a single entry law".into())),
    }
}

/// `dist(a, span of the first n - k columns of A)` for each `k`, from one QR.
pub fn distances_to_column_spans(a_mat: &SymMatrix, a: &[f64], ks: &[usize]) -> Result<Vec<f64>> {
    let n = a_mat.dim();
    if a.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: a.len() });
    }
    let kmin = *ks.iter().min().ok_or_else(|| Error::InvalidParameter("no k given".into()))?;
    if kmin == 0 || ks.iter().any(|&k| k >= n) {
        return Err(Error::InvalidParameter(format!("every k must lie in [1, {n})")));
    }
    let cols = n - kmin;
    let qr = a_mat.as_matrix().columns(0, cols).into_owned().qr();
    let mut c = DVector::from_column_slice(a);
    qr.q_tr_mul(&mut c);
    Ok(ks.iter().map(|&k| c.rows(n - k, k).norm()).collect())
}

fn sample_values(
    trials: u64,
    seed: u64,
    f: impl Fn(StreamKey) -> Result<f64> + Sync,
) -> Result<Vec<f64>> {
    let root = StreamKey::new(seed);
    (0..trials).into_par_iter().map(|t| f(root.child(t))).collect()
}

fn check_experiment(profile: &MatrixProfile, trials: u64, eps: &[f64]) -> Result<()> {
    profile.validate()?;
    if trials < 20 {
        return Err(Error::InvalidParameter(format!(
            "{trials} trials put the resolution floor 10/trials above 1/2"
        )));
    }
    if eps.iter().any(|&e| !(e > 0.0)) || eps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("eps grid must be positive and ascending".into()));
    }
    Ok(())
}

/// Estimate the tail curve of one statistic. Each trial is evaluated once and
/// compared against every threshold.
pub fn run_tail_experiment(
    statistic: &Statistic,
    profile: &MatrixProfile,
    trials: u64,
    seed: u64,
    eps: &[f64],
) -> Result<TailCurve> {
    check_experiment(profile, trials, eps)?;
    statistic.validate(profile.n)?;
    let values = sample_values(trials, seed, |key| evaluate_statistic(statistic, profile, key))?;
    let curve = TailCurve::from_values(statistic.name(), statistic.scale(profile.n), eps, &values);
    if !curve.is_monotone() {
        return Err(Error::Numerical("tail curve decreased along the grid".into()));
    }
    Ok(curve)
}

/// Distance curves for the configured entry law and a Gaussian control vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceCurves {
    pub k: usize,
    pub subgaussian: TailCurve,
    pub gaussian: TailCurve,
}

/// Distance tails for several `k` sharing each sampled matrix.
pub fn run_distance_experiment(
    profile: &MatrixProfile,
    ks: &[usize],
    trials: u64,
    seed: u64,
    eps: &[f64],
) -> Result<Vec<DistanceCurves>> {
    check_experiment(profile, trials, eps)?;
    for &k in ks {
        Statistic::Distance { k }.validate(profile.n)?;
    }
    let law = entry_law(profile)?;
    let n = profile.n;
    let root = StreamKey::new(seed);
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let key = root.child(t);
            let a_mat = sample_symmetric(profile, key)?;
            let a = sample_vector(&vec![law.clone(); n], key.tagged("a"));
            let g = sample_vector(&vec![DistSpec::gaussian(); n], key.tagged("control"));
            Ok((distances_to_column_spans(&a_mat, &a, ks)?, distances_to_column_spans(&a_mat, &g, ks)?))
        })
        .collect::<Result<_>>()?;
    Ok(ks
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let st = Statistic::Distance { k };
            let sub: Vec<f64> = rows.iter().map(|r| r.0[j]).collect();
            let gau: Vec<f64> = rows.iter().map(|r| r.1[j]).collect();
            DistanceCurves {
                k,
                subgaussian: TailCurve::from_values(st.name(), st.scale(n), eps, &sub),
                gaussian: TailCurve::from_values(st.name(), st.scale(n), eps, &gau),
            }
        })
        .collect())
}

/// Weighted log-log fit of a tail curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    /// Half-width of the 95% interval for the slope.
    pub slope_ci: f64,
    pub window: (f64, f64),
    pub points: usize,
    pub r_squared: f64,
}

impl ExponentFit {
    /// One-sided check `slope >= predicted - slope_ci`.
    pub fn conforms(&self, predicted: f64) -> bool {
        self.slope >= predicted - self.slope_ci
    }
}

/// Fit `ln p = intercept + slope ln eps` over points with `10/trials <= p <= 1/2`,
/// weighting each point by the inverse delta-method variance `p T / (1 - p)`.
pub fn fit_exponent(curve: &TailCurve) -> Result<ExponentFit> {
    let usable: Vec<&TailPoint> = curve
        .points
        .iter()
        .filter(|p| p.trials > 0 && p.p_hat >= 10.0 / p.trials as f64 && p.p_hat <= 0.5)
        .collect();
    if usable.len() < 4 {
        return Err(Error::InvalidParameter(format!(
            "{} usable grid points, at least 4 required",
            usable.len()
        )));
    }
    let xs: Vec<f64> = usable.iter().map(|p| p.eps.ln()).collect();
    let ys: Vec<f64> = usable.iter().map(|p| p.p_hat.ln()).collect();
    let ws: Vec<f64> = usable.iter().map(|p| p.p_hat * p.trials as f64 / (1.0 - p.p_hat)).collect();
    let sw: f64 = ws.iter().sum();
    let mx = ws.iter().zip(&xs).map(|(w, x)| w * x).sum::<f64>() / sw;
    let my = ws.iter().zip(&ys).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = ws.iter().zip(&xs).map(|(w, x)| w * (x - mx).powi(2)).sum();
    let sxy: f64 = ws.iter().zip(&xs).zip(&ys).map(|((w, x), y)| w * (x - mx) * (y - my)).sum();
    let syy: f64 = ws.iter().zip(&ys).map(|(w, y)| w * (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_se = (1.0 / sxx).sqrt();
    let r_squared = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    Ok(ExponentFit {
        slope,
        intercept,
        slope_se,
        slope_ci: Z95 * slope_se,
        window: (usable[0].eps, usable[usable.len() - 1].eps),
        points: usable.len(),
        r_squared,
    })
}

/// Both sides of `P(||MX|| <= s)^2 <= P(A1 and A2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecouplingReport {
    pub threshold: f64,
    pub lhs: Proportion,
    pub rhs: Proportion,
    /// `3 * (rhs width + width of the squared lhs interval)`.
    pub slack: f64,
    pub holds: bool,
}

pub const DECOUPLING_MAX_N: usize = 24;
pub const DECOUPLING_MAX_D: usize = 6;

/// Monte Carlo check of the decoupling inequality for a fixed vector `x`. The right side
/// uses two independent copies `H1, H2` of the random block: `||H1 x_[d]||, ||H2 x_[d]|| <= s`
/// and `||[H1 H2]^T x_[d+1,m]|| <= 2 s`. The threshold defaults to `2m`.
pub fn decoupling_check(
    spec: &ZeroedOutSpec,
    x: &[f64],
    threshold: Option<f64>,
    trials: u64,
    key: StreamKey,
) -> Result<DecouplingReport> {
    spec.validate()?;
    if spec.n > DECOUPLING_MAX_N || spec.d > DECOUPLING_MAX_D {
        return Err(Error::TooLarge(format!(
            "decoupling check needs n <= {DECOUPLING_MAX_N} and d <= {DECOUPLING_MAX_D}"
        )));
    }
    if x.len() != spec.n {
        return Err(Error::DimensionMismatch { expected: spec.n, got: x.len() });
    }
    let (m, d) = (spec.rows(), spec.d);
    let s = threshold.unwrap_or(2.0 * m as f64);
    let head = DVector::from_column_slice(&x[..d]);
    let tail = DVector::from_column_slice(&x[d..m]);
    let lhs_hits = (0..trials)
        .into_par_iter()
        .map(|t| {
            let z = sample_zeroed_out(spec, key.tagged("m").child(t))?;
            let v = &z.matrix * DVector::from_column_slice(x);
            Ok((v.norm() <= s) as u64)
        })
        .collect::<Result<Vec<u64>>>()?
        .into_iter()
        .sum();
    let rhs_hits = (0..trials)
        .into_par_iter()
        .map(|t| {
            let h1 = sample_zeroed_out(spec, key.tagged("h1").child(t))?.block;
            let h2 = sample_zeroed_out(spec, key.tagged("h2").child(t))?.block;
            let a1 = (&h1 * &head).norm() <= s && (&h2 * &head).norm() <= s;
            let cross = (h1.tr_mul(&tail).norm_squared() + h2.tr_mul(&tail).norm_squared()).sqrt();
            Ok((a1 && cross <= 2.0 * s) as u64)
        })
        .collect::<Result<Vec<u64>>>()?
        .into_iter()
        .sum();
    let lhs = Proportion::new(lhs_hits, trials);
    let rhs = Proportion::new(rhs_hits, trials);
    if lhs.p_hat < 10.0 / trials as f64 {
        return Err(Error::OutOfRange(format!(
            "left side {} is below the resolution floor 10/{trials}",
            lhs.p_hat
        )));
    }
    let slack = 3.0 * (rhs.width() + (lhs.ci_hi.powi(2) - lhs.ci_lo.powi(2)));
    Ok(DecouplingReport { threshold: s, holds: lhs.p_hat.powi(2) <= rhs.p_hat + slack, lhs, rhs, slack })
}

/// Settings for the box denominator experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRlogdConfig {
    /// Inner radius `N` of the annulus.
    pub base: i64,
    pub kappa: f64,
    pub d: usize,
    /// Dimension entering `r_n = c0 / (32 sqrt n)`.
    pub n: usize,
    pub c0: f64,
    /// Threshold `K` on the denominator.
    pub k_max: f64,
    pub lcd: LcdParams,
    pub trials: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRlogdReport {
    pub fraction: Proportion,
    /// Whether every box point was enumerated.
    pub exhaustive: bool,
    pub points: u64,
}

/// Integers in `[-kappa N, -N] u [N, kappa N]`.
pub fn annulus_values(base: i64, kappa: f64) -> Vec<i64> {
    let hi = (kappa * base as f64).floor() as i64;
    (-hi..=-base).chain(base..=hi).collect()
}

fn box_hit(x: &[i64], cfg: &BoxRlogdConfig, dist: &DistSpec) -> Result<bool> {
    let rn = cfg.c0 / (32.0 * (cfg.n as f64).sqrt());
    let v: Vec<f64> = x.iter().map(|&c| rn * c as f64).collect();
    let params = LcdParams { theta_max: cfg.k_max, ..cfg.lcd.clone() };
    Ok(rlogd_vector(&v, &params, dist)?.hi <= cfg.k_max)
}

fn box_validate_config(cfg: &BoxRlogdConfig) -> Result<Vec<i64>> {
    if cfg.d == 0 || cfg.d > 16 {
        return Err(Error::InvalidParameter(format!("d = {} outside [1, 16]", cfg.d)));
    }
    if cfg.base < 1 || !(cfg.kappa >= 2.0) || !(cfg.k_max > 0.0) || !(cfg.c0 > 0.0) || cfg.n == 0 {
        return Err(Error::InvalidParameter("box needs N >= 1, kappa >= 2, K > 0, c0 > 0, n > 0".into()));
    }
    Ok(annulus_values(cfg.base, cfg.kappa))
}

/// Fraction of uniform box points `X` with `RlogD(r_n X) <= K`.
pub fn box_rlogd_experiment(cfg: &BoxRlogdConfig, dist: &DistSpec) -> Result<BoxRlogdReport> {
    let values = box_validate_config(cfg)?;
    let root = StreamKey::new(cfg.seed);
    let hits = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = root.child(t).rng();
            let x: Vec<i64> = (0..cfg.d).map(|_| values[rng.random_range(0..values.len())]).collect();
            box_hit(&x, cfg, dist).map(u64::from)
        })
        .collect::<Result<Vec<u64>>>()?
        .into_iter()
        .sum();
    Ok(BoxRlogdReport { fraction: Proportion::new(hits, cfg.trials), exhaustive: false, points: cfg.trials })
}

/// Same fraction computed over every point of the box.
pub fn box_rlogd_exhaustive(cfg: &BoxRlogdConfig, dist: &DistSpec) -> Result<BoxRlogdReport> {
    let values = box_validate_config(cfg)?;
    let total = (values.len() as f64).powi(cfg.d as i32);
    if total > 1e6 {
        return Err(Error::TooLarge(format!("{total} box points")));
    }
    let total = total as u64;
    let hits = (0..total)
        .into_par_iter()
        .map(|mut idx| {
            let x: Vec<i64> = (0..cfg.d)
                .map(|_| {
                    let v = values[(idx % values.len() as u64) as usize];
                    idx /= values.len() as u64;
                    v
                })
                .collect();
            box_hit(&x, cfg, dist).map(u64::from)
        })
        .collect::<Result<Vec<u64>>>()?
        .into_iter()
        .sum();
    Ok(BoxRlogdReport { fraction: Proportion::new(hits, total), exhaustive: true, points: total })
}

/// Counts for the implication chain from a small gap to small projections.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainCounts {
    /// `(matrix, i)` pairs examined.
    pub cases: u64,
    /// Pairs where `|b| < c / sqrt(n)`, so the final implication is vacuous.
    pub hypothesis_skips: u64,
    /// Violations of `|b| |v_j^T X| <= |lambda_{i+j-1}(A_{n-1}) - lambda_i(A_n)|`.
    pub identity_failures: u64,
    /// Violations of `|lambda_{i+j-1}(A_{n-1}) - lambda_i(A_n)| <= lambda_{i+k}(A_n) - lambda_i(A_n)`.
    pub interlacing_failures: u64,
    /// Violations of `|v_j^T X| <= eps / c` with `eps = sqrt(n) (lambda_{i+k} - lambda_i)`.
    pub conclusion_failures: u64,
}

impl ChainCounts {
    pub fn failures(&self) -> u64 {
        self.identity_failures + self.interlacing_failures + self.conclusion_failures
    }

    fn merge(mut self, o: ChainCounts) -> Self {
        self.cases += o.cases;
        self.hypothesis_skips += o.hypothesis_skips;
        self.identity_failures += o.identity_failures;
        self.interlacing_failures += o.interlacing_failures;
        self.conclusion_failures += o.conclusion_failures;
        self
    }
}

/// Check the chain on one matrix for every `1 <= i <= n - k`, splitting off the last
/// row and column: `A = [[A', X], [X^T, a]]`.
pub fn interlace_gap_chain_on(a: &SymMatrix, k: usize, c: f64) -> Result<ChainCounts> {
    let n = a.dim();
    if k == 0 || n < k + 2 {
        return Err(Error::InvalidParameter(format!("need k >= 1 and n >= k + 2, got n = {n}, k = {k}")));
    }
    let (spec, u) = eigen_sorted_with_vectors(a);
    let minor = a.leading_minor(n - 1);
    let (spec_minor, v) = eigen_sorted_with_vectors(&minor);
    let x = a.as_matrix().view((0, n - 1), (n - 1, 1)).into_owned();
    let proj: Vec<f64> = (0..n - 1).map(|j| v.column(j).dot(&x.column(0))).collect();
    let norm = spec.values().iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let tol = 1e-9 * norm.max(1.0);
    let rn = (n as f64).sqrt();
    let mut out = ChainCounts::default();
    for i in 1..=n - k {
        out.cases += 1;
        let lam = spec.nth(i);
        let b = u[(n - 1, i - 1)].abs();
        let gap = spec.nth(i + k) - lam;
        let eps = rn * gap;
        let strong = b >= c / rn;
        if !strong {
            out.hypothesis_skips += 1;
        }
        for j in 1..=k {
            let idx = i + j - 1;
            let diff = (spec_minor_nth(&spec_minor, idx) - lam).abs();
            let pj = proj[idx - 1].abs();
            if b * pj > diff + tol {
                out.identity_failures += 1;
            }
            if diff > gap + tol {
                out.interlacing_failures += 1;
            }
            if strong && pj > eps / c + tol * rn / c {
                out.conclusion_failures += 1;
            }
        }
    }
    Ok(out)
}

fn spec_minor_nth(s: &Spectrum, i: usize) -> f64 {
    s.nth(i)
}

/// Run the chain check on `trials` sampled matrices.
pub fn interlace_gap_chain_check(
    profile: &MatrixProfile,
    k: usize,
    c: f64,
    trials: u64,
    seed: u64,
) -> Result<ChainCounts> {
    profile.validate()?;
    let root = StreamKey::new(seed);
    let parts = (0..trials)
        .into_par_iter()
        .map(|t| interlace_gap_chain_on(&sample_symmetric(profile, root.child(t))?, k, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.into_iter().fold(ChainCounts::default(), ChainCounts::merge))
}

/// Matrix with the given diagonal and zero off-diagonal part.
pub fn diagonal_matrix(diag: &[f64]) -> SymMatrix {
    SymMatrix::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag))).expect("diagonal is symmetric")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::DistKind;
    use proptest::prelude::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn synthetic(f: impl Fn(f64) -> f64, trials: u64) -> TailCurve {
        synthetic_on(f, trials, 1.0)
    }

    fn synthetic_on(f: impl Fn(f64) -> f64, trials: u64, hi: f64) -> TailCurve {
        let eps = geometric_grid(0.01, hi, 1.25).unwrap();
        let points = eps.iter().map(|&e| TailPoint::new(e, (f(e) * trials as f64).round() as u64, trials)).collect();
        TailCurve { statistic: "synthetic".into(), scale: 1.0, trials, points }
    }

    #[test]
    fn grid_shape() {
        let g = default_eps_grid();
        assert_eq!(g.len(), 10);
        assert!((g[0] - 0.02).abs() < 1e-15 && g[9] <= 0.8);
        assert!(geometric_grid(0.1, 0.05, 1.5).is_err());
    }

    #[test]
    fn exact_power_law_fit() {
        let fit = fit_exponent(&synthetic(|e| e * e, 100_000_000)).unwrap();
        assert!((fit.slope - 2.0).abs() < 0.01, "{fit:?}");
        let fit = fit_exponent(&synthetic(|e| (3.0 * e).min(1.0), 100_000_000)).unwrap();
        assert!((fit.slope - 1.0).abs() < 0.01, "{fit:?}");
        assert!(fit.window.1 <= 0.5 / 3.0 * 1.0001);
        let flat = synthetic(|_| 0.9, 1000);
        assert!(fit_exponent(&flat).is_err());
    }

    #[test]
    fn chi_curve_fit_near_k() {
        let chi = ChiSquared::new(4.0).unwrap();
        let k = 4.0f64;
        // Small-argument grid, where the chi tail behaves like t^k.
        let fit = fit_exponent(&synthetic_on(|e| chi.cdf((e * k.sqrt()).powi(2)), 10_000_000, 0.4)).unwrap();
        assert!((fit.slope - 4.0).abs() < 0.3, "{fit:?}");
    }

    #[test]
    fn two_by_two_gap_median() {
        // Eigenvalues of [[a, b], [b, c]] differ by sqrt((a - c)^2 + 4 b^2): 2 when a = c, 2 sqrt 2 otherwise.
        let profile = MatrixProfile::new(2, DistSpec::rademacher());
        let values = sample_values(4001, 3, |key| evaluate_statistic(&Statistic::Gap { i: 1, k: 1 }, &profile, key)).unwrap();
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[2000];
        assert!((median - 2.0).abs() < 1e-12 || (median - 8f64.sqrt()).abs() < 1e-12);
        let small = values.iter().filter(|&&v| (v - 2.0).abs() < 1e-12).count() as f64 / 4001.0;
        assert!((small - 0.5).abs() < 0.03);
        assert!(values.iter().all(|&v| (v - 2.0).abs() < 1e-12 || (v - 8f64.sqrt()).abs() < 1e-12));
    }

    #[test]
    fn deloc_on_coordinate_vector() {
        let v = [1.0, 0.0, 0.0, 0.0];
        assert_eq!(min_subset_norm(&v, 2), 0.0);
        assert!((min_subset_norm(&[0.5; 4], 3) - 0.75f64.sqrt()).abs() < 1e-15);
        let diag = diagonal_matrix(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(deloc_statistic(&diag, 0.5), 0.0);
    }

    #[test]
    fn gaussian_distance_matches_chi() {
        let n = 24;
        let profile = MatrixProfile::new(n, DistSpec::gaussian());
        let eps = geometric_grid(0.1, 1.5, 1.3).unwrap();
        let curves = run_distance_experiment(&profile, &[1, 3], 4000, 11, &eps).unwrap();
        for c in &curves {
            let chi = ChiSquared::new(c.k as f64).unwrap();
            let covered = c
                .gaussian
                .points
                .iter()
                .filter(|p| {
                    let t = p.eps * (c.k as f64).sqrt();
                    let want = chi.cdf(t * t);
                    let se = (want * (1.0 - want) / p.trials as f64).sqrt();
                    (p.p_hat - want).abs() <= 4.0 * se + 1e-12
                })
                .count();
            assert_eq!(covered, c.gaussian.points.len(), "k={}", c.k);
            assert!(c.subgaussian.is_monotone());
        }
    }

    #[test]
    fn distance_nested_spans() {
        let profile = MatrixProfile::new(10, DistSpec::gaussian());
        let a_mat = sample_symmetric(&profile, StreamKey::new(5)).unwrap();
        let a: Vec<f64> = (0..10).map(|i| (i as f64 * 0.7).sin()).collect();
        let got = distances_to_column_spans(&a_mat, &a, &[1, 2, 5]).unwrap();
        for (&k, g) in [1usize, 2, 5].iter().zip(&got) {
            let basis = a_mat.as_matrix().columns(0, 10 - k).into_owned();
            let want = crate::geometry::dist_to_affine_subspace(&a, &basis, &[0.0; 10]).unwrap();
            assert!((g - want).abs() < 1e-10, "k={k}: {g} vs {want}");
        }
        assert!(got[0] <= got[1] && got[1] <= got[2]);
    }

    #[test]
    fn curves_are_deterministic_and_monotone() {
        let profile = MatrixProfile::new(12, DistSpec::rademacher());
        let eps = default_eps_grid();
        for st in [
            Statistic::Gap { i: 6, k: 1 },
            Statistic::MinGap { k: 2 },
            Statistic::KthSv { k: 2 },
            Statistic::RectSv { extra: 2 },
            Statistic::Deloc { frac: 0.25 },
            Statistic::Distance { k: 2 },
        ] {
            let a = run_tail_experiment(&st, &profile, 300, 9, &eps).unwrap();
            let b = run_tail_experiment(&st, &profile, 300, 9, &eps).unwrap();
            assert_eq!(a.to_csv(), b.to_csv());
            assert!(a.is_monotone());
            assert_eq!(a.to_csv().lines().count(), eps.len() + 1);
        }
        assert!(run_tail_experiment(&Statistic::Gap { i: 12, k: 1 }, &profile, 300, 9, &eps).is_err());
        assert!(run_tail_experiment(&Statistic::Gap { i: 1, k: 1 }, &profile, 10, 9, &eps).is_err());
    }

    #[test]
    fn symmetric_sv_from_eigenvalues() {
        let profile = MatrixProfile::new(7, DistSpec::gaussian());
        let key = StreamKey::new(4);
        let m = sample_symmetric(&profile, key).unwrap().into_inner();
        for k in 1..=3 {
            let via_eig = evaluate_statistic(&Statistic::KthSv { k }, &profile, key).unwrap();
            let via_svd = crate::spectral::kth_smallest_sv(&m, k).unwrap();
            assert!((via_eig - via_svd).abs() < 1e-10);
        }
    }

    #[test]
    fn empty_grid_gives_header_only() {
        let c = TailCurve::from_values("gap", 1.0, &[], &[0.1, 0.2]);
        assert_eq!(c.to_csv(), "eps,scale,successes,trials,p_hat,ci_lo,ci_hi\n");
    }

    #[test]
    fn decoupling_trivial_cases() {
        let spec = ZeroedOutSpec { nu: 0.5, ..ZeroedOutSpec::new(12, 1, 3, DistSpec::rademacher()) };
        let zero = vec![0.0; 12];
        let r = decoupling_check(&spec, &zero, None, 2000, StreamKey::new(1)).unwrap();
        assert_eq!((r.lhs.p_hat, r.rhs.p_hat), (1.0, 1.0));
        assert!(r.holds);
        let x: Vec<f64> = (0..12).map(|i| (i % 3) as f64 + 1.0).collect();
        let r = decoupling_check(&spec, &x, Some(1e6), 2000, StreamKey::new(1)).unwrap();
        assert_eq!((r.lhs.p_hat, r.rhs.p_hat), (1.0, 1.0));
        let big = ZeroedOutSpec::new(30, 1, 3, DistSpec::rademacher());
        assert!(decoupling_check(&big, &vec![0.0; 30], None, 100, StreamKey::new(1)).is_err());
    }

    #[test]
    fn decoupling_holds_on_spread_vector() {
        let spec = ZeroedOutSpec { nu: 0.5, ..ZeroedOutSpec::new(12, 1, 3, DistSpec::rademacher()) };
        let x: Vec<f64> = (0..12).map(|i| if i % 2 == 0 { 2.0 } else { -3.0 }).collect();
        for seed in 0..4 {
            let r = decoupling_check(&spec, &x, Some(9.0), 20_000, StreamKey::new(seed)).unwrap();
            assert!(r.lhs.p_hat > 0.05 && r.lhs.p_hat < 0.95, "{r:?}");
            assert!(r.holds, "{r:?}");
        }
    }

    fn box_cfg(k_max: f64) -> BoxRlogdConfig {
        BoxRlogdConfig {
            base: 2,
            kappa: 2.0,
            d: 2,
            n: 2,
            c0: 1.0,
            k_max,
            lcd: LcdParams::new(0.05, 0.5, 1.0).unwrap(),
            trials: 3000,
            seed: 6,
        }
    }

    #[test]
    fn box_fraction_extremes_and_oracle() {
        let r = DistSpec::rademacher();
        assert_eq!(box_rlogd_experiment(&box_cfg(1e-6), &r).unwrap().fraction.successes, 0);
        let ex = box_rlogd_exhaustive(&box_cfg(40.0), &r).unwrap();
        assert_eq!(ex.points, 36);
        let mc = box_rlogd_experiment(&box_cfg(40.0), &r).unwrap();
        assert!(mc.fraction.covers(ex.fraction.p_hat), "{mc:?} vs {ex:?}");
        let mut prev = 0.0;
        for k in [1.0, 5.0, 20.0, 40.0, 80.0] {
            let f = box_rlogd_exhaustive(&box_cfg(k), &r).unwrap().fraction.p_hat;
            assert!(f >= prev);
            prev = f;
        }
        assert_eq!(annulus_values(2, 2.0), vec![-4, -3, -2, 2, 3, 4]);
    }

    #[test]
    fn chain_on_diagonal_matrix() {
        let c = interlace_gap_chain_on(&diagonal_matrix(&[1.0, -2.0, 0.5, 3.0, 3.0, 7.0]), 2, 0.5).unwrap();
        assert_eq!(c.failures(), 0);
        assert_eq!(c.cases, 4);
        assert!(interlace_gap_chain_on(&diagonal_matrix(&[1.0, 2.0]), 1, 0.5).is_err());
    }

    #[test]
    fn chain_on_gaussian_samples() {
        let profile = MatrixProfile::new(8, DistSpec::gaussian());
        let c = interlace_gap_chain_check(&profile, 1, 0.5, 500, 2).unwrap();
        assert_eq!(c.failures(), 0, "{c:?}");
        assert!(c.hypothesis_skips < c.cases);
        let sparse = crate::ensembles::make_dist(DistKind::Sparse { base: Box::new(DistKind::Rademacher), mu: 0.3 }).unwrap();
        let c = interlace_gap_chain_check(&MatrixProfile::new(9, sparse), 3, 0.5, 300, 2).unwrap();
        assert_eq!(c.failures(), 0, "{c:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn chain_holds_for_any_seed(seed in any::<u64>(), n in 4usize..10, k in 1usize..3) {
            let profile = MatrixProfile::new(n, DistSpec::uniform());
            let a = sample_symmetric(&profile, StreamKey::new(seed)).unwrap();
            let c = interlace_gap_chain_on(&a, k, 0.5).unwrap();
            prop_assert_eq!(c.failures(), 0);
        }

        #[test]
        fn tail_curve_counts_monotone(values in proptest::collection::vec(0.0f64..2.0, 1..200)) {
            let c = TailCurve::from_values("x", 1.0, &default_eps_grid(), &values);
            prop_assert!(c.is_monotone());
            for p in &c.points {
                prop_assert!(p.ci_lo <= p.p_hat && p.p_hat <= p.ci_hi);
            }
        }
    }
}
