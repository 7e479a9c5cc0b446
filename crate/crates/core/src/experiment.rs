//! Taylor–Green benchmark, collocation sampling, gap measurement and the
//! bound-versus-gap sweep.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::{constants, ActivationSpec, SigmaConstants};
use crate::bound::{generalization_bound_with, weight_stats, BoundReport, NuTerm};
use crate::error::{Error, Result};
use crate::linalg::{mean, Matrix};
use crate::network::{default_w_scale, init_weights, FieldEval, FieldEvaluator, Pinn, PinnWeights, SpaceTimePoint};
use crate::residual::{point_losses, standard_error, CollocationSet, InitialCondition, LossConfig};
use crate::scalar::Scalar;
use crate::training::{train, TrainConfig};

/// Axis-aligned space-time box. Initial points live on the `t = 0` slice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub x_min: Vec<f64>,
    pub x_max: Vec<f64>,
    pub t_min: f64,
    pub t_max: f64,
}

impl Domain {
    /// `[0,1]^d × [0,1]`.
    pub fn unit_cube(d: usize) -> Self {
        Self {
            x_min: vec![0.0; d],
            x_max: vec![1.0; d],
            t_min: 0.0,
            t_max: 1.0,
        }
    }

    /// `[0,2]² × [0,1]`.
    pub fn figure1() -> Self {
        Self {
            x_min: vec![0.0; 2],
            x_max: vec![2.0; 2],
            t_min: 0.0,
            t_max: 1.0,
        }
    }

    pub fn d(&self) -> usize {
        self.x_min.len()
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self
            .x_min
            .iter()
            .chain(&self.x_max)
            .chain([&self.t_min, &self.t_max])
            .all(|v| v.is_finite());
        let ordered = self.x_min.len() == self.x_max.len()
            && !self.x_min.is_empty()
            && self.x_min.iter().zip(&self.x_max).all(|(a, b)| a < b)
            && self.t_min < self.t_max;
        if finite && ordered {
            Ok(())
        } else {
            Err(Error::config(format!("degenerate domain {self:?}")))
        }
    }

    fn spatial<T: Scalar>(&self, rng: &mut impl Rng) -> Vec<T> {
        self.x_min
            .iter()
            .zip(&self.x_max)
            .map(|(a, b)| T::lit(a + (b - a) * rng.random::<f64>()))
            .collect()
    }

    /// Coordinates are drawn `x_1..x_d, t` per point.
    pub fn sample_interior_rng<T: Scalar>(&self, n: usize, rng: &mut impl Rng) -> Vec<SpaceTimePoint<T>> {
        (0..n)
            .map(|_| {
                let x = self.spatial(rng);
                let t = T::lit(self.t_min + (self.t_max - self.t_min) * rng.random::<f64>());
                SpaceTimePoint::new(x, t)
            })
            .collect()
    }

    pub fn sample_initial_rng<T: Scalar>(&self, n: usize, rng: &mut impl Rng) -> Vec<Vec<T>> {
        (0..n).map(|_| self.spatial(rng)).collect()
    }
}

fn check_count(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::config("sample count must be at least 1"))
    } else {
        Ok(())
    }
}

/// Uniform i.i.d. interior points.
pub fn sample_interior<T: Scalar>(n: usize, domain: &Domain, seed: u64) -> Result<Vec<SpaceTimePoint<T>>> {
    check_count(n)?;
    domain.validate()?;
    Ok(domain.sample_interior_rng(n, &mut ChaCha8Rng::seed_from_u64(seed)))
}

/// Uniform i.i.d. points on the initial slice.
pub fn sample_initial<T: Scalar>(n: usize, domain: &Domain, seed: u64) -> Result<Vec<Vec<T>>> {
    check_count(n)?;
    domain.validate()?;
    Ok(domain.sample_initial_rng(n, &mut ChaCha8Rng::seed_from_u64(seed)))
}

/// Interior then initial points from one generator.
pub fn sample_collocation<T: Scalar>(n_r: usize, n_0: usize, domain: &Domain, seed: u64) -> Result<CollocationSet<T>> {
    check_count(n_r)?;
    check_count(n_0)?;
    domain.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let interior = domain.sample_interior_rng(n_r, &mut rng);
    let initial = domain.sample_initial_rng(n_0, &mut rng);
    CollocationSet::new(interior, initial)
}

/// `C_z = √mean ‖z‖²` over interior points and `C_z0 = √mean ‖(x, 0)‖²`.
pub fn moment_constants<T: Scalar>(interior: &[SpaceTimePoint<T>], initial: &[Vec<T>]) -> Result<(T, T)> {
    if interior.is_empty() || initial.is_empty() {
        return Err(Error::config("moment constants need nonempty samples"));
    }
    let zi: Vec<T> = interior.iter().map(|z| z.norm_sq()).collect();
    let z0: Vec<T> = initial
        .iter()
        .map(|x| x.iter().fold(T::zero(), |acc, &v| acc + v * v))
        .collect();
    Ok((mean(&zi).sqrt(), mean(&z0).sqrt()))
}

/// Taylor–Green vortex with unit density:
///
/// ```text
/// u = −cos(πx) sin(πy) e^{−2π²νt}
/// v =  sin(πx) cos(πy) e^{−2π²νt}
/// p = −(ρ/4)(cos 2πx + cos 2πy) e^{−4π²νt}
/// ```
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaylorGreen {
    pub nu: f64,
    pub rho: f64,
}

impl TaylorGreen {
    pub fn new(nu: f64) -> Result<Self> {
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(Error::config("Taylor-Green viscosity must be positive"));
        }
        Ok(Self { nu, rho: 1.0 })
    }

    pub fn velocity_at<T: Scalar>(&self, x: T, y: T, t: T) -> [T; 2] {
        let pi = T::PI();
        let e = (-T::lit(2.0) * pi * pi * T::lit(self.nu) * t).exp();
        [
            -(pi * x).cos() * (pi * y).sin() * e,
            (pi * x).sin() * (pi * y).cos() * e,
        ]
    }
}

/// Closed-form `FieldEval` of the Taylor–Green solution; `d` must be 2.
pub fn taylor_green_field<T: Scalar>(z: &SpaceTimePoint<T>, tg: &TaylorGreen) -> Result<FieldEval<T>> {
    if z.x.len() != 2 {
        return Err(Error::DimensionMismatch {
            context: "Taylor-Green spatial dimension",
            expected: 2,
            found: z.x.len(),
        });
    }
    let (x, y, t) = (z.x[0], z.x[1], z.t);
    let pi = T::PI();
    let two = T::lit(2.0);
    let nu = T::lit(tg.nu);
    let rho = T::lit(tg.rho);
    let e = (-two * pi * pi * nu * t).exp();
    let e2 = (-T::lit(4.0) * pi * pi * nu * t).exp();
    let (sx, cx) = ((pi * x).sin(), (pi * x).cos());
    let (sy, cy) = ((pi * y).sin(), (pi * y).cos());

    let u = -cx * sy * e;
    let v = sx * cy * e;
    let mut fe = FieldEval::zeros(2);
    fe.u = vec![u, v];
    fe.p = -(rho / T::lit(4.0)) * ((two * pi * x).cos() + (two * pi * y).cos()) * e2;
    let decay = -two * pi * pi * nu;
    fe.du_dt = vec![decay * u, decay * v];
    fe.jac_u = Matrix::from_rows(vec![
        vec![pi * sx * sy * e, -pi * cx * cy * e],
        vec![pi * cx * cy * e, -pi * sx * sy * e],
    ])?;
    let half = rho * pi / two;
    fe.grad_p = vec![half * (two * pi * x).sin() * e2, half * (two * pi * y).sin() * e2];
    let lap = -two * pi * pi;
    fe.lap_u = vec![lap * u, lap * v];
    fe.div_u = fe.trace_jac();
    Ok(fe)
}

impl<T: Scalar> FieldEvaluator<T> for TaylorGreen {
    fn dim(&self) -> usize {
        2
    }

    fn field_eval(&self, z: &SpaceTimePoint<T>) -> Result<FieldEval<T>> {
        taylor_green_field(z, self)
    }

    fn velocity(&self, z: &SpaceTimePoint<T>) -> Result<Vec<T>> {
        if z.x.len() != 2 {
            return Err(Error::DimensionMismatch {
                context: "Taylor-Green spatial dimension",
                expected: 2,
                found: z.x.len(),
            });
        }
        Ok(self.velocity_at(z.x[0], z.x[1], z.t).to_vec())
    }
}

/// The `t = 0` slice is the initial condition.
impl<T: Scalar> InitialCondition<T> for TaylorGreen {
    fn eval(&self, x: &[T]) -> Vec<T> {
        self.velocity_at(x[0], x[1], T::zero()).to_vec()
    }
}

/// Training risk against a fresh population sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct GapMeasurement<T> {
    #[serde(rename = "N_r")]
    pub n_r: usize,
    #[serde(rename = "N_0")]
    pub n_0: usize,
    pub train_risk: T,
    pub population_estimate: T,
    pub population_std_error: T,
    pub population_points: usize,
    pub gap: T,
    #[serde(rename = "C_z")]
    pub c_z: T,
    #[serde(rename = "C_z0")]
    pub c_z0: T,
    pub population_seed: u64,
}

/// Default population sample size.
pub const DEFAULT_POPULATION_POINTS: usize = 100_000;

/// `population_points` interior and initial points are drawn from `seed`;
/// it must be at least ten times the training interior count.
pub fn measure_gap_field<T: Scalar>(
    field: &dyn FieldEvaluator<T>,
    loss_cfg: &LossConfig<T>,
    train_colloc: &CollocationSet<T>,
    f0: &dyn InitialCondition<T>,
    domain: &Domain,
    population_points: usize,
    seed: u64,
) -> Result<GapMeasurement<T>> {
    let n_r = train_colloc.n_interior();
    if population_points < 10 * n_r {
        return Err(Error::config(format!(
            "population_points {population_points} is below 10 x N_r = {}",
            10 * n_r
        )));
    }
    let train_risk = point_losses(field, loss_cfg, train_colloc, f0)?.breakdown().total;
    let population = sample_collocation(population_points, population_points, domain, seed)?;
    let pl = point_losses(field, loss_cfg, &population, f0)?;
    let res = pl.interior_totals();
    let population_estimate = mean(&res) + mean(&pl.initial);
    let se = (standard_error(&res).powi(2) + standard_error(&pl.initial).powi(2)).sqrt();
    let (c_z, c_z0) = moment_constants(&population.interior, &population.initial)?;
    let gap = (train_risk - population_estimate).abs();
    if !gap.is_finite() {
        return Err(Error::NonFinite("generalization gap".into()));
    }
    Ok(GapMeasurement {
        n_r,
        n_0: train_colloc.n_initial(),
        train_risk,
        population_estimate,
        population_std_error: se,
        population_points,
        gap,
        c_z,
        c_z0,
        population_seed: seed,
    })
}

/// A measured gap next to the bound evaluated at the same weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct GapReport<T> {
    pub measurement: GapMeasurement<T>,
    pub bound: BoundReport<T>,
}

/// Gap of a network plus its bound, using moment constants of the
/// population sample. `sigma` overrides the activation's tabulated constants.
#[allow(clippy::too_many_arguments)]
pub fn measure_gap<T: Scalar>(
    weights: &PinnWeights<T>,
    spec: ActivationSpec,
    loss_cfg: &LossConfig<T>,
    train_colloc: &CollocationSet<T>,
    f0: &dyn InitialCondition<T>,
    domain: &Domain,
    population_points: usize,
    seed: u64,
    sigma: Option<SigmaConstants<T>>,
    nu_term: NuTerm,
) -> Result<GapReport<T>> {
    let pinn = Pinn::new(weights, spec);
    let measurement = measure_gap_field(&pinn, loss_cfg, train_colloc, f0, domain, population_points, seed)?;
    let sc = match sigma {
        Some(sc) => {
            sc.validate()?;
            sc
        }
        None => constants(spec),
    };
    let bound = generalization_bound_with(
        &weight_stats(weights),
        &sc,
        loss_cfg,
        measurement.n_r,
        measurement.n_0,
        measurement.c_z,
        measurement.c_z0,
        nu_term,
    )?;
    Ok(GapReport { measurement, bound })
}

/// Sample Pearson correlation; needs three or more points and nonconstant inputs.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            context: "pearson inputs",
            expected: xs.len(),
            found: ys.len(),
        });
    }
    if xs.len() < 3 {
        return Err(Error::Undefined("pearson needs at least 3 points".into()));
    }
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined("pearson of a constant series".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Parameters for the bound-versus-gap sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub p: usize,
    pub n_r_values: Vec<usize>,
    pub n_0: usize,
    pub activation: ActivationSpec,
    pub loss: LossConfig<f64>,
    pub train: TrainConfig,
    pub domain: Domain,
    /// Every row starts from the same initial weights drawn from this seed.
    pub init_seed: u64,
    /// Rows derive their collocation and population seeds from this one.
    pub sweep_seed: u64,
    /// Spread of the initial first layer; `None` means `1/√(d+1)`.
    pub w_scale: Option<f64>,
    pub population_points: usize,
    pub sigma_constants: Option<SigmaConstants<f64>>,
    pub nu_term: NuTerm,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl SweepConfig {
    /// Laptop-scale: four interior sizes, 2000 epochs.
    pub fn desk() -> Self {
        Self {
            p: 64,
            n_r_values: vec![27, 64, 125, 216],
            n_0: 500,
            activation: ActivationSpec::tanh_cubed(),
            loss: LossConfig::default(),
            train: TrainConfig::default(),
            domain: Domain::unit_cube(2),
            init_seed: 0,
            sweep_seed: 0,
            w_scale: None,
            population_points: DEFAULT_POPULATION_POINTS,
            sigma_constants: None,
            nu_term: NuTerm::Statement,
        }
    }

    /// The full-size setup: `N_0 = 2500`, 20000 epochs, `N_r` up to 1000.
    pub fn full_scale() -> Self {
        Self {
            n_r_values: vec![27, 64, 125, 216, 343, 512, 729, 1000],
            n_0: 2500,
            train: TrainConfig {
                epochs: 20_000,
                log_every: 1000,
                ..TrainConfig::default()
            },
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_r_values.len() < 3 {
            return Err(Error::config("a sweep needs at least 3 N_r values"));
        }
        if self.n_r_values.contains(&0) || self.n_0 == 0 || self.p == 0 {
            return Err(Error::config("N_r, N_0 and p must be positive"));
        }
        let max_r = *self.n_r_values.iter().max().expect("nonempty");
        if self.population_points < 10 * max_r {
            return Err(Error::config("population_points must be at least 10 x max N_r"));
        }
        if self.domain.d() != 2 {
            return Err(Error::config("the Taylor-Green sweep is two-dimensional"));
        }
        self.domain.validate()?;
        self.loss.validate()?;
        self.train.validate()?;
        if let Some(sc) = &self.sigma_constants {
            sc.validate()?;
        }
        Ok(())
    }
}

/// SplitMix64 mix of `(base, index)`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One sweep row. `diverged` rows carry NaN measurements and are left out of
/// the correlation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "N_r")]
    pub n_r: usize,
    #[serde(rename = "N_0")]
    pub n_0: usize,
    pub activation: String,
    pub nu: f64,
    pub delta: f64,
    pub lambda0: f64,
    pub lambda1: f64,
    pub train_risk: f64,
    pub population_estimate: f64,
    pub population_std_error: f64,
    pub gap: f64,
    #[serde(rename = "C1")]
    pub c1: f64,
    #[serde(rename = "C2")]
    pub c2: f64,
    #[serde(rename = "C_z")]
    pub c_z: f64,
    #[serde(rename = "C_z0")]
    pub c_z0: f64,
    pub term_interior: f64,
    pub term_initial: f64,
    pub bound_total: f64,
    pub seed: u64,
    pub initial_train_risk: f64,
    pub diverged: bool,
    pub message: Option<String>,
}

impl SweepRow {
    fn from_report(cfg: &SweepConfig, seed: u64, initial_risk: f64, r: &GapReport<f64>) -> Self {
        let m = &r.measurement;
        Self {
            n_r: m.n_r,
            n_0: m.n_0,
            activation: cfg.activation.to_string(),
            nu: cfg.loss.nu,
            delta: cfg.loss.delta,
            lambda0: cfg.loss.lambda0,
            lambda1: cfg.loss.lambda1,
            train_risk: m.train_risk,
            population_estimate: m.population_estimate,
            population_std_error: m.population_std_error,
            gap: m.gap,
            c1: r.bound.c1,
            c2: r.bound.c2,
            c_z: m.c_z,
            c_z0: m.c_z0,
            term_interior: r.bound.term_interior,
            term_initial: r.bound.term_initial,
            bound_total: r.bound.total,
            seed,
            initial_train_risk: initial_risk,
            diverged: false,
            message: None,
        }
    }

    fn diverged(cfg: &SweepConfig, n_r: usize, seed: u64, message: String) -> Self {
        Self {
            n_r,
            n_0: cfg.n_0,
            activation: cfg.activation.to_string(),
            nu: cfg.loss.nu,
            delta: cfg.loss.delta,
            lambda0: cfg.loss.lambda0,
            lambda1: cfg.loss.lambda1,
            train_risk: f64::NAN,
            population_estimate: f64::NAN,
            population_std_error: f64::NAN,
            gap: f64::NAN,
            c1: f64::NAN,
            c2: f64::NAN,
            c_z: f64::NAN,
            c_z0: f64::NAN,
            term_interior: f64::NAN,
            term_initial: f64::NAN,
            bound_total: f64::NAN,
            seed,
            initial_train_risk: f64::NAN,
            diverged: true,
            message: Some(message),
        }
    }
}

pub const SWEEP_CSV_HEADER: &str = "N_r,N_0,activation,nu,delta,lambda0,lambda1,train_risk,population_estimate,gap,C1,C2,C_z,C_z0,term_interior,term_initial,bound_total,seed";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub rows: Vec<SweepRow>,
    /// Correlation of bound with gap over non-diverged rows, if defined.
    pub pearson_r: Option<f64>,
    pub pearson_note: Option<String>,
    pub bound_strictly_decreasing: bool,
}

impl CorrelationReport {
    pub fn from_rows(rows: Vec<SweepRow>) -> Self {
        let ok: Vec<&SweepRow> = rows.iter().filter(|r| !r.diverged).collect();
        let bounds: Vec<f64> = ok.iter().map(|r| r.bound_total).collect();
        let gaps: Vec<f64> = ok.iter().map(|r| r.gap).collect();
        let (pearson_r, pearson_note) = match pearson(&bounds, &gaps) {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        };
        let mut by_n: Vec<(usize, f64)> = ok.iter().map(|r| (r.n_r, r.bound_total)).collect();
        by_n.sort_by_key(|x| x.0);
        let bound_strictly_decreasing = by_n.windows(2).all(|w| w[0].0 < w[1].0 && w[1].1 < w[0].1);
        Self {
            rows,
            pearson_r,
            pearson_note,
            bound_strictly_decreasing,
        }
    }

    pub fn csv(&self) -> String {
        let mut out = String::from(SWEEP_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.n_r,
                r.n_0,
                r.activation,
                r.nu,
                r.delta,
                r.lambda0,
                r.lambda1,
                r.train_risk,
                r.population_estimate,
                r.gap,
                r.c1,
                r.c2,
                r.c_z,
                r.c_z0,
                r.term_interior,
                r.term_initial,
                r.bound_total,
                r.seed
            ));
        }
        out
    }

    /// Two columns, bound then gap, one line per non-diverged row.
    pub fn plot_data(&self) -> String {
        let mut out = String::from("# bound_total gap\n");
        for r in self.rows.iter().filter(|r| !r.diverged) {
            out.push_str(&format!("{} {}\n", r.bound_total, r.gap));
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
struct RowFile {
    config: SweepConfig,
    index: usize,
    row: SweepRow,
}

fn row_path(dir: &Path, index: usize) -> std::path::PathBuf {
    dir.join(format!("row_{index}.json"))
}

fn load_row(dir: &Path, index: usize, cfg: &SweepConfig) -> Option<SweepRow> {
    let text = fs::read_to_string(row_path(dir, index)).ok()?;
    let file: RowFile = serde_json::from_str(&text).ok()?;
    (file.config == *cfg && file.index == index).then_some(file.row)
}

fn run_row(cfg: &SweepConfig, index: usize, init: &PinnWeights<f64>) -> Result<SweepRow> {
    let n_r = cfg.n_r_values[index];
    let seed = derive_seed(cfg.sweep_seed, index as u64);
    let tg = TaylorGreen::new(cfg.loss.nu)?;
    let colloc = sample_collocation::<f64>(n_r, cfg.n_0, &cfg.domain, seed)?;
    let outcome = match train(init, cfg.activation, &cfg.loss, &colloc, &tg, &cfg.train) {
        Ok(o) => o,
        Err(e) if e.is_numerical() => {
            log::warn!("row {index} (N_r = {n_r}) diverged: {e}");
            return Ok(SweepRow::diverged(cfg, n_r, seed, e.to_string()));
        }
        Err(e) => return Err(e),
    };
    let report = measure_gap(
        &outcome.weights,
        cfg.activation,
        &cfg.loss,
        &colloc,
        &tg,
        &cfg.domain,
        cfg.population_points,
        derive_seed(seed, u64::MAX),
        cfg.sigma_constants,
        cfg.nu_term,
    );
    match report {
        Ok(r) => Ok(SweepRow::from_report(cfg, seed, outcome.initial_risk().total, &r)),
        Err(e) if e.is_numerical() => Ok(SweepRow::diverged(cfg, n_r, seed, e.to_string())),
        Err(e) => Err(e),
    }
}

/// Trains one network per `N_r`, measures its gap and bound, and correlates
/// the two. With `row_dir`, finished rows are cached there and reused when
/// the config matches.
pub fn sweep_experiment(cfg: &SweepConfig, row_dir: Option<&Path>) -> Result<CorrelationReport> {
    cfg.validate()?;
    if let Some(dir) = row_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let w_scale = cfg.w_scale.unwrap_or_else(|| default_w_scale(2));
    let init = init_weights::<f64>(2, cfg.p, cfg.init_seed, w_scale)?;
    let rows: Vec<SweepRow> = (0..cfg.n_r_values.len())
        .into_par_iter()
        .map(|i| {
            if let Some(dir) = row_dir {
                if let Some(row) = load_row(dir, i, cfg) {
                    log::info!("row {i}: reusing cached result");
                    return Ok(row);
                }
            }
            log::info!("row {i}: training with N_r = {}", cfg.n_r_values[i]);
            let row = run_row(cfg, i, &init)?;
            if let Some(dir) = row_dir {
                let file = RowFile {
                    config: cfg.clone(),
                    index: i,
                    row: row.clone(),
                };
                let path = row_path(dir, i);
                let text = serde_json::to_string_pretty(&file)?;
                fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    Ok(CorrelationReport::from_rows(rows))
}
