//! Huber-penalized Navier–Stokes residuals and the empirical PINN risk.
//!
//! Density is fixed at 1. Works with any [`FieldEvaluator`], so analytic
//! solutions and trained networks go through the same code.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{mean, pairwise_sum};
use crate::network::{FieldEval, FieldEvaluator, SpaceTimePoint};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"), deny_unknown_fields)]
pub struct LossConfig<T> {
    /// Huber threshold, also the Lipschitz constant of the loss.
    pub delta: T,
    /// Divergence penalty weight.
    pub lambda0: T,
    /// Initial-condition penalty weight.
    pub lambda1: T,
    /// Kinematic viscosity.
    pub nu: T,
}

impl<T: Scalar> LossConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let ok = self.delta > T::zero()
            && self.nu > T::zero()
            && self.lambda0 >= T::zero()
            && self.lambda1 >= T::zero()
            && [self.delta, self.lambda0, self.lambda1, self.nu]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!(
                "loss config needs delta > 0, nu > 0, lambda0/lambda1 >= 0 (got {self:?})"
            )))
        }
    }
}

impl<T: Scalar> Default for LossConfig<T> {
    fn default() -> Self {
        Self {
            delta: T::one(),
            lambda0: T::one(),
            lambda1: T::lit(0.3),
            nu: T::lit(0.01),
        }
    }
}

/// Interior space-time points and initial-slice spatial points.
#[derive(Clone, Debug, PartialEq)]
pub struct CollocationSet<T> {
    pub interior: Vec<SpaceTimePoint<T>>,
    pub initial: Vec<Vec<T>>,
}

impl<T: Scalar> CollocationSet<T> {
    pub fn new(interior: Vec<SpaceTimePoint<T>>, initial: Vec<Vec<T>>) -> Result<Self> {
        let set = Self { interior, initial };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.interior.is_empty() || self.initial.is_empty() {
            return Err(Error::config("collocation sets must be nonempty"));
        }
        let finite = self
            .interior
            .iter()
            .all(|z| z.t.is_finite() && z.x.iter().all(|v| v.is_finite()))
            && self.initial.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("collocation point".into()));
        }
        Ok(())
    }

    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    pub fn n_initial(&self) -> usize {
        self.initial.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct RiskBreakdown<T> {
    pub momentum_term: T,
    pub divergence_term: T,
    pub initial_term: T,
    pub total: T,
}

impl<T: Scalar> RiskBreakdown<T> {
    pub fn new(momentum_term: T, divergence_term: T, initial_term: T) -> Self {
        Self {
            momentum_term,
            divergence_term,
            initial_term,
            total: momentum_term + divergence_term + initial_term,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
    }
}

/// Initial condition `f0: x ↦ u(x, 0)`.
pub trait InitialCondition<T>: Sync {
    fn eval(&self, x: &[T]) -> Vec<T>;
}

impl<T, F> InitialCondition<T> for F
where
    F: Fn(&[T]) -> Vec<T> + Sync,
{
    fn eval(&self, x: &[T]) -> Vec<T> {
        self(x)
    }
}

/// `x²/2` inside `[-δ, δ]`, `δ(|x| - δ/2)` outside.
#[inline]
pub fn huber<T: Scalar>(delta: T, x: T) -> T {
    let a = x.abs();
    if a <= delta {
        T::lit(0.5) * x * x
    } else {
        delta * (a - T::lit(0.5) * delta)
    }
}

/// `d huber / dx`; continuous, equal to `δ·sign(x)` at the kink.
#[inline]
pub fn huber_grad<T: Scalar>(delta: T, x: T) -> T {
    if x.abs() <= delta {
        x
    } else {
        delta * x.signum()
    }
}

/// `∂_t u + (u·∇)u + ∇p − ν∇²u`, one entry per velocity component.
pub fn momentum_residual<T: Scalar>(fe: &FieldEval<T>, nu: T) -> Vec<T> {
    let d = fe.dim();
    (0..d)
        .map(|k| {
            let row = fe.jac_u.row(k);
            let convect = (0..d).fold(T::zero(), |acc, m| acc + fe.u[m] * row[m]);
            fe.du_dt[k] + convect + fe.grad_p[k] - nu * fe.lap_u[k]
        })
        .collect()
}

/// Interior loss split into its momentum and (λ0-weighted) divergence parts.
pub fn loss_res_parts<T: Scalar>(fe: &FieldEval<T>, cfg: &LossConfig<T>) -> (T, T) {
    let r = momentum_residual(fe, cfg.nu);
    let momentum = r.iter().fold(T::zero(), |acc, &v| acc + huber(cfg.delta, v));
    (momentum, cfg.lambda0 * huber(cfg.delta, fe.div_u))
}

pub fn loss_res<T: Scalar>(fe: &FieldEval<T>, cfg: &LossConfig<T>) -> T {
    let (m, dv) = loss_res_parts(fe, cfg);
    m + dv
}

/// `λ1 Σ_k huber(u_k − f0_k)` at one initial point.
pub fn loss_init<T: Scalar>(u_at_t0: &[T], f0_val: &[T], cfg: &LossConfig<T>) -> Result<T> {
    check_dim("initial condition length", u_at_t0.len(), f0_val.len())?;
    let s = u_at_t0
        .iter()
        .zip(f0_val)
        .fold(T::zero(), |acc, (&u, &f)| acc + huber(cfg.delta, u - f));
    Ok(cfg.lambda1 * s)
}

/// Per-point losses behind [`empirical_risk`], in collocation order.
#[derive(Clone, Debug)]
pub struct PointLosses<T> {
    pub momentum: Vec<T>,
    pub divergence: Vec<T>,
    pub initial: Vec<T>,
}

impl<T: Scalar> PointLosses<T> {
    pub fn breakdown(&self) -> RiskBreakdown<T> {
        RiskBreakdown::new(mean(&self.momentum), mean(&self.divergence), mean(&self.initial))
    }

    /// `ℓ_res` per interior point.
    pub fn interior_totals(&self) -> Vec<T> {
        self.momentum
            .iter()
            .zip(&self.divergence)
            .map(|(&a, &b)| a + b)
            .collect()
    }
}

pub fn point_losses<T: Scalar>(
    field: &dyn FieldEvaluator<T>,
    cfg: &LossConfig<T>,
    colloc: &CollocationSet<T>,
    f0: &dyn InitialCondition<T>,
) -> Result<PointLosses<T>> {
    cfg.validate()?;
    colloc.validate()?;
    let interior: Vec<(T, T)> = colloc
        .interior
        .par_iter()
        .map(|z| field.field_eval(z).map(|fe| loss_res_parts(&fe, cfg)))
        .collect::<Result<_>>()?;
    let initial: Vec<T> = colloc
        .initial
        .par_iter()
        .map(|x| {
            let u = field.velocity(&SpaceTimePoint::initial(x))?;
            loss_init(&u, &f0.eval(x), cfg)
        })
        .collect::<Result<_>>()?;
    let (momentum, divergence) = interior.into_iter().unzip();
    Ok(PointLosses {
        momentum,
        divergence,
        initial,
    })
}

/// Mean interior loss plus mean initial loss, reduced in a fixed tree order.
pub fn empirical_risk<T: Scalar>(
    field: &dyn FieldEvaluator<T>,
    cfg: &LossConfig<T>,
    colloc: &CollocationSet<T>,
    f0: &dyn InitialCondition<T>,
) -> Result<RiskBreakdown<T>> {
    Ok(point_losses(field, cfg, colloc, f0)?.breakdown())
}

/// Standard error of a sample mean.
pub fn standard_error<T: Scalar>(xs: &[T]) -> T {
    let n = xs.len();
    if n < 2 {
        return T::zero();
    }
    let m = mean(xs);
    let sq: Vec<T> = xs.iter().map(|&x| (x - m) * (x - m)).collect();
    let var = pairwise_sum(&sq) / T::from_usize_lossy(n - 1);
    (var / T::from_usize_lossy(n)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use approx::assert_abs_diff_eq;

    fn hand_case() -> FieldEval<f64> {
        FieldEval {
            u: vec![2.0],
            p: 0.0,
            du_dt: vec![1.0],
            jac_u: Matrix::from_rows(vec![vec![3.0]]).unwrap(),
            grad_p: vec![5.0],
            lap_u: vec![4.0],
            div_u: 2.0,
        }
    }

    struct Constant(FieldEval<f64>);

    impl FieldEvaluator<f64> for Constant {
        fn dim(&self) -> usize {
            self.0.dim()
        }
        fn field_eval(&self, _z: &SpaceTimePoint<f64>) -> Result<FieldEval<f64>> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn huber_branches() {
        assert_eq!(huber(1.0, 0.0), 0.0);
        assert_eq!(huber(1.0, 0.5), 0.125);
        assert_eq!(huber(1.0, 2.0), 1.5);
        assert_eq!(huber(1.0, -2.0), 1.5);
        assert_eq!(huber_grad(1.0, 1.0), 1.0);
        assert_eq!(huber_grad(1.0, -3.0), -1.0);
    }

    #[test]
    fn momentum_residual_hand_case() {
        assert_eq!(momentum_residual(&hand_case(), 0.5), vec![10.0]);
        assert_eq!(momentum_residual(&FieldEval::<f64>::zeros(3), 0.1), vec![0.0; 3]);
    }

    #[test]
    fn loss_res_hand_case() {
        let cfg = LossConfig {
            delta: 1e6,
            lambda0: 1.0,
            lambda1: 1.0,
            nu: 0.5,
        };
        assert_eq!(loss_res(&hand_case(), &cfg), 52.0);
        assert_eq!(loss_res(&FieldEval::zeros(2), &cfg), 0.0);
    }

    #[test]
    fn loss_init_cases() {
        let cfg = LossConfig {
            delta: 10.0,
            lambda0: 1.0,
            lambda1: 0.3,
            nu: 0.01,
        };
        assert_abs_diff_eq!(loss_init(&[1.0, -1.0], &[0.0, 0.0], &cfg).unwrap(), 0.3, epsilon = 1e-15);
        assert_eq!(loss_init(&[0.4, 0.2], &[0.4, 0.2], &cfg).unwrap(), 0.0);
        let zero = LossConfig { lambda1: 0.0, ..cfg };
        assert_eq!(loss_init(&[5.0, 1.0], &[0.0, 0.0], &zero).unwrap(), 0.0);
        assert!(loss_init(&[1.0], &[0.0, 0.0], &cfg).is_err());
    }

    #[test]
    fn single_point_risk_is_hand_case() {
        let cfg = LossConfig {
            delta: 1e6,
            lambda0: 1.0,
            lambda1: 1.0,
            nu: 0.5,
        };
        let colloc = CollocationSet::new(vec![SpaceTimePoint::new(vec![0.1], 0.2)], vec![vec![0.3]]).unwrap();
        let f0 = |_: &[f64]| vec![2.0];
        let r = empirical_risk(&Constant(hand_case()), &cfg, &colloc, &f0).unwrap();
        assert_eq!(r.momentum_term + r.divergence_term, 52.0);
        assert_eq!(r.initial_term, 0.0);
    }

    #[test]
    fn empty_sets_are_rejected() {
        let cfg = LossConfig::default();
        let empty = CollocationSet::<f64> {
            interior: vec![],
            initial: vec![vec![0.0]],
        };
        let f0 = |_: &[f64]| vec![0.0];
        assert!(empirical_risk(&Constant(FieldEval::zeros(1)), &cfg, &empty, &f0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn huber_is_delta_lipschitz_even_monotone(delta in 0.01f64..5.0, x in -20.0f64..20.0, y in -20.0f64..20.0) {
                prop_assert!((huber(delta, x) - huber(delta, y)).abs() <= delta * (x - y).abs() + 1e-12);
                prop_assert_eq!(huber(delta, x), huber(delta, -x));
                prop_assert!(huber(delta, x) >= 0.0);
                let (a, b) = (x.abs().min(y.abs()), x.abs().max(y.abs()));
                prop_assert!(huber(delta, a) <= huber(delta, b));
            }

            #[test]
            fn risk_is_nonnegative_and_permutation_stable(seed in 0u64..1000, shift in 1usize..20) {
                use rand::{Rng, SeedableRng};
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let pts: Vec<SpaceTimePoint<f64>> = (0..25)
                    .map(|_| SpaceTimePoint::new(vec![rng.random(), rng.random()], rng.random()))
                    .collect();
                let init: Vec<Vec<f64>> = (0..17).map(|_| vec![rng.random(), rng.random()]).collect();
                let w = crate::network::init_weights::<f64>(2, 6, seed, 0.9).unwrap();
                let net = crate::network::Pinn::new(&w, crate::activation::ActivationSpec::tanh());
                let f0 = |x: &[f64]| vec![x[0].sin(), x[1].cos()];
                let cfg = LossConfig::default();
                let a = empirical_risk(&net, &cfg, &CollocationSet::new(pts.clone(), init.clone()).unwrap(), &f0).unwrap();
                let mut pts2 = pts;
                pts2.rotate_left(shift);
                let mut init2 = init;
                init2.reverse();
                let b = empirical_risk(&net, &cfg, &CollocationSet::new(pts2, init2).unwrap(), &f0).unwrap();
                prop_assert!(a.total >= 0.0);
                prop_assert!((a.total - b.total).abs() <= 1e-12 * a.total.max(1.0));
                prop_assert!((a.total - (a.momentum_term + a.divergence_term + a.initial_term)).abs() <= 1e-12);
            }
        }
    }
}
