//! Brute-force checks of the Rademacher inequalities behind the bound.
//!
//! Suprema are taken exactly over finite [`ConstraintGrid`]s. The
//! inequalities hold for every subset of the weight class, so a pass on a
//! grid is sound evidence and a failure would be a genuine counterexample.
//! Expectations over sign vectors are exact (full enumeration) for small
//! `n` and Monte-Carlo otherwise, with each draw seeded from
//! `(seed, draw index)` so results do not depend on the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::{constants, eval_derivs, ActivationSpec};
use crate::error::{Error, Result};
use crate::experiment::Domain;
use crate::linalg::{dot, mean, norm2};
use crate::network::FieldEvaluator;
use crate::residual::{point_losses, standard_error, CollocationSet, InitialCondition, LossConfig};

/// `rademacher_linear` enumerates every sign vector up to this many points.
pub const LINEAR_EXACT_MAX: usize = 20;
/// The inequality checks enumerate every sign vector up to this many points.
pub const CHECK_EXACT_MAX: usize = 12;
/// Monte-Carlo comparisons allow this many standard errors of slack.
pub const SIGMA_SLACK: f64 = 3.0;
/// Absolute slack for ties that are exact in real arithmetic.
pub const ROUNDING_SLACK: f64 = 1e-12;

/// A finite set of admissible weight rows, all within a common 2-norm cap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintGrid {
    vectors: Vec<Vec<f64>>,
    b: f64,
}

impl ConstraintGrid {
    pub fn new(vectors: Vec<Vec<f64>>, b: f64) -> Result<Self> {
        let Some(first) = vectors.first() else {
            return Err(Error::config("constraint grid is empty"));
        };
        let dim = first.len();
        if !(b >= 0.0) || !b.is_finite() {
            return Err(Error::config("grid norm cap must be finite and nonnegative"));
        }
        for v in &vectors {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "grid vector length",
                    expected: dim,
                    found: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("grid vector".into()));
            }
            let n = norm2(v);
            if n > b * (1.0 + 1e-12) {
                return Err(Error::config(format!("grid vector norm {n} exceeds cap {b}")));
            }
        }
        if !vectors.iter().any(|v| v.iter().all(|&x| x == 0.0)) {
            return Err(Error::config("constraint grid must contain the zero vector"));
        }
        Ok(Self { vectors, b })
    }

    /// The zero vector plus `size - 1` draws uniform in the ball of radius `b`.
    pub fn random(dim: usize, size: usize, b: f64, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("grid dimension must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut vectors = vec![vec![0.0; dim]];
        while vectors.len() < size.max(1) {
            let dir: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let len = norm2(&dir);
            if len == 0.0 {
                continue;
            }
            let r = b * rng.random::<f64>().powf(1.0 / dim as f64);
            vectors.push(dir.iter().map(|x| x * r / len).collect());
        }
        Self::new(vectors, b)
    }

    /// Adds the negation of every vector not already present.
    pub fn symmetrized(&self) -> Self {
        let mut vectors = self.vectors.clone();
        for v in &self.vectors {
            let neg: Vec<f64> = v.iter().map(|x| -x).collect();
            if !vectors.contains(&neg) {
                vectors.push(neg);
            }
        }
        Self { vectors, b: self.b }
    }

    /// Union with another grid of the same dimension.
    pub fn extended(&self, other: &Self) -> Result<Self> {
        let mut vectors = self.vectors.clone();
        vectors.extend(other.vectors.iter().cloned());
        Self::new(vectors, self.b.max(other.b))
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    fn check_points(&self, points: &[Vec<f64>]) -> Result<()> {
        if points.is_empty() {
            return Err(Error::config("point list is empty"));
        }
        for z in points {
            if z.len() != self.dim() {
                return Err(Error::DimensionMismatch {
                    context: "point length vs grid dimension",
                    expected: self.dim(),
                    found: z.len(),
                });
            }
        }
        Ok(())
    }

    /// `⟨w, z_i⟩` for every grid vector (rows) and point (columns).
    fn projections(&self, points: &[Vec<f64>]) -> Vec<Vec<f64>> {
        self.vectors
            .iter()
            .map(|w| points.iter().map(|z| dot(w, z)).collect())
            .collect()
    }
}

/// Number of sign vectors and how they were produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignSampling {
    pub n_draws: usize,
    pub seed: u64,
}

impl Default for SignSampling {
    fn default() -> Self {
        Self {
            n_draws: 4000,
            seed: 0,
        }
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn random_signs(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect()
}

fn enumerated_signs(n: usize, k: u64) -> Vec<f64> {
    (0..n).map(|i| if (k >> i) & 1 == 1 { 1.0 } else { -1.0 }).collect()
}

/// Per-sign-vector values of `f`, either for all `2^n` vectors or for
/// `n_draws` random ones.
fn over_signs<R: Send>(
    n: usize,
    exact_max: usize,
    sampling: SignSampling,
    f: impl Fn(&[f64]) -> R + Sync,
) -> Result<(Vec<R>, bool)> {
    if n <= exact_max {
        let count = 1u64 << n;
        Ok(((0..count).into_par_iter().map(|k| f(&enumerated_signs(n, k))).collect(), true))
    } else {
        if sampling.n_draws < 2 {
            return Err(Error::config("n_draws must be at least 2 when sampling signs"));
        }
        let vals = (0..sampling.n_draws as u64)
            .into_par_iter()
            .map(|k| f(&random_signs(&mut rng_for(sampling.seed, k), n)))
            .collect();
        Ok((vals, false))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RademacherEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_draws: usize,
    pub seed: u64,
    pub exact: bool,
}

/// `(1/n) E_ε sup_{‖w‖≤B} Σ ε_i ⟨w, z_i⟩ = (B/n) E_ε ‖Σ ε_i z_i‖`.
pub fn rademacher_linear(points: &[Vec<f64>], b: f64, sampling: SignSampling) -> Result<RademacherEstimate> {
    rademacher_linear_with(points, b, sampling, LINEAR_EXACT_MAX)
}

/// As [`rademacher_linear`], enumerating exactly only when `n <= exact_max`.
pub fn rademacher_linear_with(
    points: &[Vec<f64>],
    b: f64,
    sampling: SignSampling,
    exact_max: usize,
) -> Result<RademacherEstimate> {
    let Some(first) = points.first() else {
        return Err(Error::config("point list is empty"));
    };
    let dim = first.len();
    if points.iter().any(|z| z.len() != dim) {
        return Err(Error::config("points differ in length"));
    }
    let n = points.len();
    let (vals, exact) = over_signs(n, exact_max, sampling, |eps| {
        let mut s = vec![0.0; dim];
        for (e, z) in eps.iter().zip(points) {
            for (acc, x) in s.iter_mut().zip(z) {
                *acc += e * x;
            }
        }
        b * norm2(&s) / n as f64
    })?;
    Ok(RademacherEstimate {
        mean: mean(&vals),
        std_error: if exact { 0.0 } else { standard_error(&vals) },
        n_draws: vals.len(),
        seed: sampling.seed,
        exact,
    })
}

/// Outcome of one inequality check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub std_error: f64,
    pub exact: bool,
    pub n_points: usize,
    pub n_draws: usize,
    pub passed: bool,
    pub verdict: String,
    pub notes: Vec<String>,
}

impl CheckReport {
    fn new(name: &str, lhs: f64, rhs: f64, std_error: f64, exact: bool, n_points: usize, n_draws: usize, notes: Vec<String>) -> Self {
        let passed = notes.is_empty() && lhs <= rhs + SIGMA_SLACK * std_error + ROUNDING_SLACK * (1.0 + rhs.abs());
        Self {
            name: name.to_string(),
            lhs,
            rhs,
            margin: rhs - lhs,
            std_error,
            exact,
            n_points,
            n_draws,
            passed,
            verdict: if passed { "PASS" } else { "FAIL" }.to_string(),
            notes,
        }
    }

    fn from_pairs(name: &str, pairs: &[(f64, f64)], exact: bool, n_points: usize, notes: Vec<String>) -> Self {
        let lhs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let rhs: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let diff: Vec<f64> = pairs.iter().map(|p| p.0 - p.1).collect();
        let se = if exact { 0.0 } else { standard_error(&diff) };
        Self::new(name, mean(&lhs), mean(&rhs), se, exact, n_points, pairs.len(), notes)
    }
}

/// Compares the linear-class estimate with `B √(Σ‖z_i‖²) / n`.
pub fn check_rademacher_linear(points: &[Vec<f64>], b: f64, sampling: SignSampling) -> Result<CheckReport> {
    let est = rademacher_linear(points, b, sampling)?;
    let sq: f64 = points.iter().map(|z| dot(z, z)).sum();
    let rhs = b * sq.sqrt() / points.len() as f64;
    Ok(CheckReport::new(
        "rademacher_linear",
        est.mean,
        rhs,
        est.std_error,
        est.exact,
        points.len(),
        est.n_draws,
        Vec::new(),
    ))
}

fn sup_linear(proj: &[Vec<f64>], eps: &[f64]) -> f64 {
    proj.iter()
        .map(|row| dot(row, eps))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `E sup_w |⟨ε, φ(Zᵀw)⟩| ≤ 2 E sup_w ⟨ε, φ(Zᵀw) − c⟩ + |c|√n`.
pub fn check_abs_removal(
    grid: &ConstraintGrid,
    points: &[Vec<f64>],
    phi: impl Fn(f64) -> f64 + Sync,
    c: f64,
    sampling: SignSampling,
) -> Result<CheckReport> {
    grid.check_points(points)?;
    let n = points.len();
    let f: Vec<Vec<f64>> = grid
        .projections(points)
        .iter()
        .map(|row| row.iter().map(|&s| phi(s)).collect())
        .collect();
    let mut notes = Vec::new();
    let phi0 = phi(0.0);
    if (phi0 - c).abs() > 1e-12 * (1.0 + c.abs()) {
        notes.push(format!("c = {c} differs from phi(0) = {phi0}"));
    }
    let sqrt_n = (n as f64).sqrt();
    let (pairs, exact) = over_signs(n, CHECK_EXACT_MAX, sampling, |eps| {
        let mut lhs = 0.0f64;
        let mut sup_g = f64::NEG_INFINITY;
        let sum_eps: f64 = eps.iter().sum();
        for row in &f {
            let s = dot(row, eps);
            lhs = lhs.max(s.abs());
            sup_g = sup_g.max(s - c * sum_eps);
        }
        (lhs, 2.0 * sup_g + c.abs() * sqrt_n)
    })?;
    Ok(CheckReport::from_pairs("abs_removal", &pairs, exact, n, notes))
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// `E sup (1/n) Σ ε_i ⟨f, φ(W z_i)⟩ ≤ (2BL/n) E sup_w Σ ε_i ⟨w, z_i⟩ + B|c|/√n`,
/// with rows of `W` ranging independently over the grid and `f` over `heads`.
/// `B` is the largest head ℓ1 norm.
pub fn check_contraction_single(
    grid: &ConstraintGrid,
    points: &[Vec<f64>],
    heads: &[Vec<f64>],
    phi: impl Fn(f64) -> f64 + Sync,
    l_phi: f64,
    c: f64,
    sampling: SignSampling,
) -> Result<CheckReport> {
    grid.check_points(points)?;
    if heads.is_empty() {
        return Err(Error::config("head family is empty"));
    }
    let n = points.len();
    let b = heads.iter().map(|h| l1(h)).fold(0.0, f64::max);
    let proj = grid.projections(points);
    let f: Vec<Vec<f64>> = proj
        .iter()
        .map(|row| row.iter().map(|&s| phi(s)).collect())
        .collect();
    let mut notes = Vec::new();
    let phi0 = phi(0.0);
    if (phi0 - c).abs() > 1e-12 * (1.0 + c.abs()) {
        notes.push(format!("c = {c} differs from phi(0) = {phi0}"));
    }
    let nf = n as f64;
    let (pairs, exact) = over_signs(n, CHECK_EXACT_MAX, sampling, |eps| {
        let (mut xmin, mut xmax) = (f64::INFINITY, f64::NEG_INFINITY);
        for row in &f {
            let s = dot(row, eps);
            xmin = xmin.min(s);
            xmax = xmax.max(s);
        }
        let lhs = heads
            .iter()
            .map(|h| {
                h.iter()
                    .map(|&fq| if fq >= 0.0 { fq * xmax } else { fq * xmin })
                    .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let rhs = 2.0 * b * l_phi / nf * sup_linear(&proj, eps) + b * c.abs() / nf.sqrt();
        (lhs / nf, rhs)
    })?;
    Ok(CheckReport::from_pairs("contraction_single", &pairs, exact, n, notes))
}

/// Bounds and Lipschitz constants of the two factors in the product check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductConstants {
    pub b_phi1: f64,
    pub l_phi1: f64,
    pub b_phi2: f64,
    pub l_phi2: f64,
}

/// Largest `p` for which the product check enumerates all of `grid^p`.
pub const PRODUCT_MAX_P: usize = 3;

/// The product contraction inequality for
/// `Σ_m ⟨f_m, φ1(W z)⟩ ⟨a_m, φ2(W z)⟩` with `W ∈ grid^p`, `p` the head width,
/// `B = Σ_m ‖f_m‖₁ ‖a_m‖₁` and `k = φ1(0) φ2(0)`.
pub fn check_contraction_product(
    grid: &ConstraintGrid,
    points: &[Vec<f64>],
    f_heads: &[Vec<f64>],
    a_heads: &[Vec<f64>],
    phi1: impl Fn(f64) -> f64 + Sync,
    phi2: impl Fn(f64) -> f64 + Sync,
    consts: ProductConstants,
    sampling: SignSampling,
) -> Result<CheckReport> {
    grid.check_points(points)?;
    if f_heads.is_empty() || f_heads.len() != a_heads.len() {
        return Err(Error::config("head families must be nonempty and of equal length"));
    }
    let p = f_heads[0].len();
    if p == 0 || p > PRODUCT_MAX_P {
        return Err(Error::config(format!("head width must be in 1..={PRODUCT_MAX_P}")));
    }
    if f_heads.iter().chain(a_heads).any(|h| h.len() != p) {
        return Err(Error::config("head vectors differ in length"));
    }
    let n = points.len();
    let g = grid.len();
    let b: f64 = f_heads.iter().zip(a_heads).map(|(f, a)| l1(f) * l1(a)).sum();
    let coef: Vec<f64> = (0..p * p)
        .map(|idx| {
            let (q1, q2) = (idx / p, idx % p);
            f_heads.iter().zip(a_heads).map(|(f, a)| f[q1] * a[q2]).sum()
        })
        .collect();
    let proj = grid.projections(points);
    let v1: Vec<Vec<f64>> = proj.iter().map(|r| r.iter().map(|&s| phi1(s)).collect()).collect();
    let v2: Vec<Vec<f64>> = proj.iter().map(|r| r.iter().map(|&s| phi2(s)).collect()).collect();

    let mut notes = Vec::new();
    let max1 = v1.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    let max2 = v2.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    if max1 > consts.b_phi1 * (1.0 + 1e-12) {
        notes.push(format!("|phi1| reaches {max1} above B_phi1 = {}", consts.b_phi1));
    }
    if max2 > consts.b_phi2 * (1.0 + 1e-12) {
        notes.push(format!("|phi2| reaches {max2} above B_phi2 = {}", consts.b_phi2));
    }
    // products of the two factors at every ordered pair of grid vectors
    let prod: Vec<Vec<f64>> = (0..g * g)
        .map(|idx| {
            let (i, j) = (idx / g, idx % g);
            v1[i].iter().zip(&v2[j]).map(|(a, b)| a * b).collect()
        })
        .collect();
    let phi1_0 = phi1(0.0);
    let k = phi1_0 * phi2(0.0);
    let nf = n as f64;
    let lin = 4.0 * b * (consts.b_phi1 * consts.l_phi2 + consts.b_phi2 * consts.l_phi1) / nf;
    let offset = b * (2.0 * consts.b_phi2 * phi1_0.abs() + k.abs()) / nf.sqrt();
    let combos = g.pow(p as u32);
    let (pairs, exact) = over_signs(n, CHECK_EXACT_MAX, sampling, |eps| {
        let s: Vec<f64> = prod.iter().map(|row| dot(row, eps)).collect();
        let mut best = f64::NEG_INFINITY;
        let mut choice = vec![0usize; p];
        for mut code in 0..combos {
            for slot in choice.iter_mut() {
                *slot = code % g;
                code /= g;
            }
            let mut total = 0.0;
            for q1 in 0..p {
                for q2 in 0..p {
                    total += coef[q1 * p + q2] * s[choice[q1] * g + choice[q2]];
                }
            }
            best = best.max(total);
        }
        (best / nf, lin * sup_linear(&proj, eps) + offset)
    })?;
    Ok(CheckReport::from_pairs("contraction_product", &pairs, exact, n, notes))
}

/// Settings for the symmetrization check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetrizationConfig {
    pub n_interior: usize,
    pub n_initial: usize,
    pub n_trials: usize,
    pub quadrature_points: usize,
    /// Sign draws per trial when a sample is too large to enumerate.
    pub n_draws: usize,
    pub seed: u64,
}

impl Default for SymmetrizationConfig {
    fn default() -> Self {
        Self {
            n_interior: 8,
            n_initial: 8,
            n_trials: 400,
            quadrature_points: 20_000,
            n_draws: 512,
            seed: 0,
        }
    }
}

pub const MAX_HYPOTHESES: usize = 8;

/// `E_ε sup_h (1/n) Σ ε_i ℓ_i(h)` for a table `losses[h][i]`.
fn rademacher_of_table(losses: &[Vec<f64>], rng: &mut ChaCha8Rng, n_draws: usize) -> f64 {
    let n = losses[0].len();
    let sup = |eps: &[f64]| {
        losses
            .iter()
            .map(|row| dot(row, eps))
            .fold(f64::NEG_INFINITY, f64::max)
            / n as f64
    };
    if n <= CHECK_EXACT_MAX {
        let vals: Vec<f64> = (0..1u64 << n).map(|k| sup(&enumerated_signs(n, k))).collect();
        mean(&vals)
    } else {
        let vals: Vec<f64> = (0..n_draws).map(|_| sup(&random_signs(rng, n))).collect();
        mean(&vals)
    }
}

/// `E_S sup_h (R̂(h, S) − R(h)) ≤ 2 R_res + 2 R_0` over a finite hypothesis class.
///
/// Population risks come from a fixed quadrature sample; its standard error
/// is folded into the reported one.
pub fn check_symmetrization(
    hypotheses: &[&dyn FieldEvaluator<f64>],
    loss_cfg: &LossConfig<f64>,
    f0: &dyn InitialCondition<f64>,
    domain: &Domain,
    cfg: &SymmetrizationConfig,
) -> Result<CheckReport> {
    if hypotheses.is_empty() {
        return Err(Error::config("hypothesis list is empty"));
    }
    if hypotheses.len() > MAX_HYPOTHESES {
        return Err(Error::config(format!("at most {MAX_HYPOTHESES} hypotheses")));
    }
    if cfg.n_interior == 0 || cfg.n_initial == 0 || cfg.n_trials < 2 || cfg.quadrature_points < 2 {
        return Err(Error::config("symmetrization sizes are too small"));
    }
    let mut qrng = rng_for(cfg.seed, u64::MAX);
    let quad = CollocationSet::new(
        domain.sample_interior_rng(cfg.quadrature_points, &mut qrng),
        domain.sample_initial_rng(cfg.quadrature_points, &mut qrng),
    )?;
    let mut population = Vec::with_capacity(hypotheses.len());
    let mut quad_se = 0.0f64;
    for h in hypotheses {
        let pl = point_losses(*h, loss_cfg, &quad, f0)?;
        let res = pl.interior_totals();
        population.push(mean(&res) + mean(&pl.initial));
        let se = (standard_error(&res).powi(2) + standard_error(&pl.initial).powi(2)).sqrt();
        quad_se = quad_se.max(se);
    }

    let trials: Vec<Result<(f64, f64)>> = (0..cfg.n_trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_for(cfg.seed, t);
            let set = CollocationSet::new(
                domain.sample_interior_rng(cfg.n_interior, &mut rng),
                domain.sample_initial_rng(cfg.n_initial, &mut rng),
            )?;
            let mut res_table = Vec::with_capacity(hypotheses.len());
            let mut init_table = Vec::with_capacity(hypotheses.len());
            let mut lhs = f64::NEG_INFINITY;
            for (h, pop) in hypotheses.iter().zip(&population) {
                let pl = point_losses(*h, loss_cfg, &set, f0)?;
                let res = pl.interior_totals();
                lhs = lhs.max(mean(&res) + mean(&pl.initial) - pop);
                res_table.push(res);
                init_table.push(pl.initial);
            }
            let r_res = rademacher_of_table(&res_table, &mut rng, cfg.n_draws);
            let r_0 = rademacher_of_table(&init_table, &mut rng, cfg.n_draws);
            Ok((lhs, 2.0 * r_res + 2.0 * r_0))
        })
        .collect();
    let pairs = trials.into_iter().collect::<Result<Vec<_>>>()?;
    let mut report = CheckReport::from_pairs("symmetrization", &pairs, false, cfg.n_interior + cfg.n_initial, Vec::new());
    let se = (report.std_error.powi(2) + quad_se.powi(2)).sqrt();
    report = CheckReport::new(
        "symmetrization",
        report.lhs,
        report.rhs,
        se,
        false,
        report.n_points,
        report.n_draws,
        Vec::new(),
    );
    Ok(report)
}

/// Which derivative of the activation a check uses as its scalar map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Derivative {
    Value,
    First,
    Second,
}

/// A scalar map drawn from an activation, with its Lipschitz constant,
/// sup-norm bound and value at zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarMap {
    pub activation: ActivationSpec,
    pub derivative: Derivative,
    pub lipschitz: f64,
    pub bound: f64,
    pub at_zero: f64,
}

impl ScalarMap {
    pub fn new(activation: ActivationSpec, derivative: Derivative) -> Self {
        let sc = constants::<f64>(activation);
        let (lipschitz, bound, at_zero) = match derivative {
            Derivative::Value => (sc.l_sigma, sc.b_sigma, sc.c0),
            Derivative::First => (sc.l_sigma1, sc.b_sigma1, sc.c1),
            // sup|σ″| is bounded by the Lipschitz constant of σ′
            Derivative::Second => (sc.l_sigma2, sc.l_sigma1, sc.c2),
        };
        Self {
            activation,
            derivative,
            lipschitz,
            bound,
            at_zero,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let d = eval_derivs(self.activation, x);
        match self.derivative {
            Derivative::Value => d.value,
            Derivative::First => d.d1,
            Derivative::Second => d.d2,
        }
    }
}

/// Shape of the randomized instances in [`run_suite`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub instances: usize,
    pub n_points: usize,
    pub grid_size: usize,
    pub product_grid_size: usize,
    pub grid_norm: f64,
    pub head_width: usize,
    pub d: usize,
    pub sampling: SignSampling,
    pub symmetrization_classes: usize,
    pub symmetrization: SymmetrizationConfig,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            instances: 20,
            n_points: 10,
            grid_size: 40,
            product_grid_size: 16,
            grid_norm: 2.0,
            head_width: 2,
            d: 2,
            sampling: SignSampling::default(),
            symmetrization_classes: 5,
            symmetrization: SymmetrizationConfig::default(),
        }
    }
}

/// All reports from one suite run, grouped by inequality.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub abs_removal: Vec<CheckReport>,
    pub contraction_single: Vec<CheckReport>,
    pub contraction_product: Vec<CheckReport>,
    pub rademacher_linear: Vec<CheckReport>,
    pub symmetrization: Vec<CheckReport>,
}

impl SuiteReport {
    pub fn groups(&self) -> [(&'static str, &[CheckReport]); 5] {
        [
            ("abs_removal", &self.abs_removal),
            ("contraction_single", &self.contraction_single),
            ("contraction_product", &self.contraction_product),
            ("rademacher_linear", &self.rademacher_linear),
            ("symmetrization", &self.symmetrization),
        ]
    }

    pub fn all_passed(&self) -> bool {
        self.groups().iter().all(|(_, g)| g.iter().all(|r| r.passed))
    }
}

const SUITE_ACTIVATIONS: [(u32, u32); 3] = [(0, 1), (0, 3), (1, 1)];

fn suite_activation(i: usize) -> ActivationSpec {
    use crate::activation::ActivationFamily::*;
    let (fam, k) = SUITE_ACTIVATIONS[i % SUITE_ACTIVATIONS.len()];
    let family = if fam == 0 { TanhPow } else { SigmoidPow };
    ActivationSpec::new(family, k).expect("suite activations are valid")
}

fn unit_points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect()
}

fn random_head(rng: &mut ChaCha8Rng, width: usize) -> Vec<f64> {
    (0..width).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Randomized desk-scale instances of every check.
///
/// `hypothesis_classes` supplies the symmetrization classes; the caller owns
/// the evaluators so any field (networks, exact solutions) can be used.
pub fn run_suite(
    cfg: &SuiteConfig,
    hypothesis_classes: &[Vec<&dyn FieldEvaluator<f64>>],
    loss_cfg: &LossConfig<f64>,
    f0: &dyn InitialCondition<f64>,
    domain: &Domain,
) -> Result<SuiteReport> {
    let dim = cfg.d + 1;
    let mut report = SuiteReport::default();
    for i in 0..cfg.instances {
        let seed = cfg.sampling.seed.wrapping_add(i as u64);
        let sampling = SignSampling { seed, ..cfg.sampling };
        let mut rng = rng_for(seed, 1 << 32);
        let points = unit_points(&mut rng, cfg.n_points, dim);
        let grid = ConstraintGrid::random(dim, cfg.grid_size, cfg.grid_norm, seed)?;
        let act = suite_activation(i);
        let derivative = [Derivative::Value, Derivative::First, Derivative::Second][i % 3];
        let map = ScalarMap::new(act, derivative);

        report
            .abs_removal
            .push(check_abs_removal(&grid, &points, |x| map.eval(x), map.at_zero, sampling)?);

        let heads: Vec<Vec<f64>> = (0..4).map(|_| random_head(&mut rng, cfg.head_width)).collect();
        report.contraction_single.push(check_contraction_single(
            &grid,
            &points,
            &heads,
            |x| map.eval(x),
            map.lipschitz,
            map.at_zero,
            sampling,
        )?);

        let small = ConstraintGrid::random(dim, cfg.product_grid_size, cfg.grid_norm, seed ^ 0x5eed)?;
        let phi1 = ScalarMap::new(act, Derivative::Value);
        let phi2 = ScalarMap::new(act, Derivative::First);
        let f_heads: Vec<Vec<f64>> = (0..cfg.d).map(|_| random_head(&mut rng, cfg.head_width)).collect();
        let a_heads: Vec<Vec<f64>> = (0..cfg.d).map(|_| random_head(&mut rng, cfg.head_width)).collect();
        report.contraction_product.push(check_contraction_product(
            &small,
            &points,
            &f_heads,
            &a_heads,
            |x| phi1.eval(x),
            |x| phi2.eval(x),
            ProductConstants {
                b_phi1: phi1.bound,
                l_phi1: phi1.lipschitz,
                b_phi2: phi2.bound,
                l_phi2: phi2.lipschitz,
            },
            sampling,
        )?);

        report
            .rademacher_linear
            .push(check_rademacher_linear(&points, cfg.grid_norm, sampling)?);
    }
    for (i, class) in hypothesis_classes.iter().enumerate() {
        let sym = SymmetrizationConfig {
            seed: cfg.symmetrization.seed.wrapping_add(i as u64),
            ..cfg.symmetrization
        };
        report
            .symmetrization
            .push(check_symmetrization(class, loss_cfg, f0, domain, &sym)?);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::TaylorGreen;
    use crate::network::{init_weights, FieldEval, Pinn, SpaceTimePoint};
    use approx::assert_abs_diff_eq;

    fn sampling() -> SignSampling {
        SignSampling { n_draws: 2000, seed: 3 }
    }

    fn points(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        unit_points(&mut rng_for(seed, 0), n, dim)
    }

    #[test]
    fn grid_validation() {
        assert!(ConstraintGrid::new(vec![], 1.0).is_err());
        assert!(ConstraintGrid::new(vec![vec![1.0, 0.0]], 1.0).is_err());
        assert!(ConstraintGrid::new(vec![vec![0.0, 0.0], vec![2.0, 0.0]], 1.0).is_err());
        assert!(ConstraintGrid::new(vec![vec![0.0, 0.0], vec![0.6, 0.8]], 1.0).is_ok());
        let g = ConstraintGrid::random(3, 30, 1.5, 9).unwrap();
        assert_eq!(g.len(), 30);
        assert!(g.vectors().iter().all(|v| norm2(v) <= 1.5 + 1e-12));
    }

    #[test]
    fn linear_two_point_example() {
        let pts = vec![vec![1.0, 0.0], vec![1.0, 0.0]];
        let est = rademacher_linear(&pts, 1.0, sampling()).unwrap();
        assert!(est.exact);
        assert_eq!(est.mean, 0.5);
        assert_eq!(est.std_error, 0.0);
        assert_eq!(rademacher_linear(&pts, 0.0, sampling()).unwrap().mean, 0.0);
        assert!(rademacher_linear(&[], 1.0, sampling()).is_err());
    }

    #[test]
    fn linear_enumeration_matches_sampling() {
        let pts = points(10, 3, 1);
        let exact = rademacher_linear(&pts, 1.3, sampling()).unwrap();
        let sampled = rademacher_linear_with(&pts, 1.3, sampling(), 0).unwrap();
        assert!(!sampled.exact);
        assert!((exact.mean - sampled.mean).abs() <= 3.0 * sampled.std_error);
        let other = rademacher_linear(&pts, 1.3, SignSampling { seed: 99, ..sampling() }).unwrap();
        assert_eq!(exact, RademacherEstimate { seed: exact.seed, ..other });
    }

    #[test]
    fn linear_bound_holds_for_sampled_sizes() {
        let r = check_rademacher_linear(&points(40, 3, 2), 2.0, sampling()).unwrap();
        assert!(!r.exact && r.passed, "{r:?}");
    }

    #[test]
    fn abs_removal_identity_symmetric_grid() {
        let grid = ConstraintGrid::random(3, 10, 1.0, 4).unwrap().symmetrized();
        let r = check_abs_removal(&grid, &points(8, 3, 5), |x| x, 0.0, sampling()).unwrap();
        assert!(r.exact && r.passed);
        assert_abs_diff_eq!(r.rhs, 2.0 * r.lhs, epsilon = 1e-12);
    }

    #[test]
    fn abs_removal_zero_grid_is_khintchine() {
        let grid = ConstraintGrid::new(vec![vec![0.0; 3]], 0.0).unwrap();
        let n = 6;
        let r = check_abs_removal(&grid, &points(n, 3, 5), |x| x.tanh() + 0.7, 0.7, sampling()).unwrap();
        let e_abs: f64 = (0..1u64 << n)
            .map(|k| enumerated_signs(n, k).iter().sum::<f64>().abs())
            .sum::<f64>()
            / (1u64 << n) as f64;
        assert_abs_diff_eq!(r.lhs, 0.7 * e_abs, epsilon = 1e-12);
        assert_abs_diff_eq!(r.rhs, 0.7 * (n as f64).sqrt(), epsilon = 1e-12);
        assert!(r.passed);
    }

    #[test]
    fn abs_removal_tanh_random_grid() {
        let grid = ConstraintGrid::random(3, 50, 2.0, 6).unwrap();
        let r = check_abs_removal(&grid, &points(8, 3, 7), f64::tanh, 0.0, sampling()).unwrap();
        assert!(r.exact && r.passed && r.lhs >= 0.0 && r.rhs >= 0.0);
    }

    #[test]
    fn abs_removal_flags_wrong_constant() {
        let grid = ConstraintGrid::random(3, 5, 1.0, 6).unwrap();
        let r = check_abs_removal(&grid, &points(4, 3, 7), f64::tanh, 0.5, sampling()).unwrap();
        assert!(!r.passed && !r.notes.is_empty());
    }

    #[test]
    fn contraction_single_cases() {
        let pts = points(8, 3, 8);
        let grid = ConstraintGrid::random(3, 40, 2.0, 9).unwrap();
        let heads = vec![vec![0.5, -0.5], vec![1.0, 0.0]];
        let id = check_contraction_single(&grid, &pts, &heads, |x| x, 1.0, 0.0, sampling()).unwrap();
        assert!(id.passed);
        let dtanh = ScalarMap::new(ActivationSpec::tanh(), Derivative::First);
        let r = check_contraction_single(&grid, &pts, &heads, |x| dtanh.eval(x), dtanh.lipschitz, 1.0, sampling())
            .unwrap();
        assert!(r.exact && r.passed, "{r:?}");
        let zero = ConstraintGrid::new(vec![vec![0.0; 3]], 0.0).unwrap();
        let z = check_contraction_single(&zero, &pts, &[vec![0.0, 0.0]], f64::tanh, 1.0, 0.0, sampling()).unwrap();
        assert_eq!((z.lhs, z.rhs), (0.0, 0.0));
        assert!(z.passed);
    }

    #[test]
    fn contraction_product_cases() {
        let pts = points(6, 3, 10);
        let grid = ConstraintGrid::random(3, 20, 1.5, 11).unwrap();
        let f = vec![vec![0.3, -0.7], vec![0.2, 0.1]];
        let a = vec![vec![-0.4, 0.9], vec![0.5, 0.5]];
        let c = ProductConstants { b_phi1: 1.0, l_phi1: 1.0, b_phi2: 1.0, l_phi2: 1.0 };
        let r = check_contraction_product(&grid, &pts, &f, &a, f64::tanh, f64::tanh, c, sampling()).unwrap();
        assert!(r.exact && r.passed, "{r:?}");
        let zero = ConstraintGrid::new(vec![vec![0.0; 3]], 0.0).unwrap();
        let z = check_contraction_product(&zero, &pts, &f, &a, f64::tanh, f64::tanh, c, sampling()).unwrap();
        assert_eq!(z.lhs, 0.0);
        assert!(z.passed);
    }

    #[test]
    fn product_with_constant_factor_matches_single() {
        let pts = points(7, 3, 12);
        let grid = ConstraintGrid::random(3, 15, 1.0, 13).unwrap();
        let f = vec![vec![0.3, -0.7], vec![0.2, 0.1]];
        let a = vec![vec![-0.4, 0.9], vec![0.5, 0.5]];
        let c = ProductConstants { b_phi1: 1.0, l_phi1: 0.0, b_phi2: 1.0, l_phi2: 1.0 };
        let prod = check_contraction_product(&grid, &pts, &f, &a, |_| 1.0, f64::tanh, c, sampling()).unwrap();
        // with φ1 ≡ 1 the class collapses to one head Σ_m (Σ_q f_{m,q}) a_m
        let head: Vec<f64> = (0..2)
            .map(|q| f.iter().zip(&a).map(|(fm, am)| fm.iter().sum::<f64>() * am[q]).sum())
            .collect();
        let single = check_contraction_single(&grid, &pts, &[head], f64::tanh, 1.0, 0.0, sampling()).unwrap();
        assert_abs_diff_eq!(prod.lhs, single.lhs, epsilon = 1e-12);
        assert!(prod.passed && single.passed);
    }

    #[test]
    fn product_flags_unbounded_factor() {
        let pts = points(4, 3, 12);
        let grid = ConstraintGrid::random(3, 5, 3.0, 13).unwrap();
        let c = ProductConstants { b_phi1: 0.1, l_phi1: 1.0, b_phi2: 1.0, l_phi2: 1.0 };
        let r = check_contraction_product(&grid, &pts, &[vec![1.0]], &[vec![1.0]], |x| x, f64::tanh, c, sampling())
            .unwrap();
        assert!(!r.passed && !r.notes.is_empty());
    }

    #[test]
    fn grid_refinement_never_lowers_suprema() {
        let pts = points(8, 3, 14);
        let coarse = ConstraintGrid::random(3, 10, 1.0, 15).unwrap();
        let fine = coarse.extended(&ConstraintGrid::random(3, 20, 1.0, 16).unwrap()).unwrap();
        let a = check_abs_removal(&coarse, &pts, f64::tanh, 0.0, sampling()).unwrap();
        let b = check_abs_removal(&fine, &pts, f64::tanh, 0.0, sampling()).unwrap();
        assert!(b.lhs >= a.lhs && b.rhs >= a.rhs);
    }

    #[test]
    fn exact_mode_ignores_seed() {
        let pts = points(9, 3, 17);
        let grid = ConstraintGrid::random(3, 12, 1.0, 18).unwrap();
        let a = check_abs_removal(&grid, &pts, f64::tanh, 0.0, sampling()).unwrap();
        let b = check_abs_removal(&grid, &pts, f64::tanh, 0.0, SignSampling { seed: 1234, n_draws: 5 }).unwrap();
        assert_eq!(a, b);
    }

    #[derive(Clone, Copy)]
    struct Constant(f64, f64);

    impl FieldEvaluator<f64> for Constant {
        fn dim(&self) -> usize {
            2
        }

        fn field_eval(&self, _z: &SpaceTimePoint<f64>) -> Result<FieldEval<f64>> {
            let mut fe = FieldEval::zeros(2);
            fe.u = vec![self.0, self.1];
            Ok(fe)
        }
    }

    fn sym_cfg(trials: usize) -> SymmetrizationConfig {
        SymmetrizationConfig {
            n_interior: 10,
            n_initial: 10,
            n_trials: trials,
            quadrature_points: 20_000,
            n_draws: 256,
            seed: 5,
        }
    }

    #[test]
    fn symmetrization_single_hypothesis() {
        let tg = TaylorGreen::new(0.01).unwrap();
        let h = Constant(0.2, -0.1);
        let r = check_symmetrization(&[&h], &LossConfig::default(), &tg, &Domain::unit_cube(2), &sym_cfg(300)).unwrap();
        assert!(r.rhs.abs() < 1e-12);
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn symmetrization_two_constant_fields() {
        let tg = TaylorGreen::new(0.01).unwrap();
        let (a, b) = (Constant(0.0, 0.0), Constant(0.5, 0.5));
        let r = check_symmetrization(&[&a, &b], &LossConfig::default(), &tg, &Domain::unit_cube(2), &sym_cfg(2000))
            .unwrap();
        assert!(r.passed && r.lhs.is_finite() && r.rhs > 0.0, "{r:?}");
    }

    #[test]
    fn symmetrization_exact_field_has_no_gap() {
        let tg = TaylorGreen::new(0.01).unwrap();
        let r = check_symmetrization(&[&tg], &LossConfig::default(), &tg, &Domain::unit_cube(2), &sym_cfg(20)).unwrap();
        assert!(r.lhs.abs() < 1e-12 && r.rhs.abs() < 1e-12);
        assert!(r.passed);
    }

    #[test]
    fn symmetrization_with_networks() {
        let tg = TaylorGreen::new(0.01).unwrap();
        let nets: Vec<_> = (0..3).map(|s| init_weights::<f64>(2, 4, s, 0.8).unwrap()).collect();
        let pinns: Vec<Pinn<f64>> = nets.iter().map(|w| Pinn::new(w, ActivationSpec::tanh())).collect();
        let class: Vec<&dyn FieldEvaluator<f64>> = pinns.iter().map(|p| p as &dyn FieldEvaluator<f64>).collect();
        let r = check_symmetrization(&class, &LossConfig::default(), &tg, &Domain::unit_cube(2), &sym_cfg(200)).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(check_symmetrization(&[], &LossConfig::default(), &tg, &Domain::unit_cube(2), &sym_cfg(5)).is_err());
    }

    #[test]
    fn scalar_map_constants() {
        let m = ScalarMap::new(ActivationSpec::tanh(), Derivative::First);
        assert_eq!((m.at_zero, m.eval(0.0)), (1.0, 1.0));
        let m = ScalarMap::new(ActivationSpec::tanh_cubed(), Derivative::Second);
        assert_eq!(m.at_zero, 0.0);
    }
}
