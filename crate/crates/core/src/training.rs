//! Exact gradient of the empirical risk with respect to the trainable layer,
//! AdamW, and the full-batch training loop.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::ActivationSpec;
use crate::error::{Error, Result};
use crate::linalg::{pairwise_reduce, Matrix};
use crate::network::{field_from_hidden, hidden_layer, PinnWeights, SpaceTimePoint};
use crate::residual::{
    huber, huber_grad, momentum_residual, CollocationSet, InitialCondition, LossConfig, PointLosses,
    RiskBreakdown,
};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            weight_decay: 0.01,
            seed: 0,
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be finite and >= 0"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("beta1 and beta2 must lie in [0, 1)"));
        }
        if !(self.eps_adam > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::config("eps_adam must be > 0 and weight_decay >= 0"));
        }
        if self.log_every == 0 {
            return Err(Error::config("log_every must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimState<T> {
    pub step: u64,
    pub m: Matrix<T>,
    pub v: Matrix<T>,
}

impl<T: Scalar> OptimState<T> {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            step: 0,
            m: Matrix::zeros(rows, cols),
            v: Matrix::zeros(rows, cols),
        }
    }

    pub fn for_weights(w: &PinnWeights<T>) -> Self {
        Self::new(w.w().rows(), w.w().cols())
    }
}

/// Loss at one interior point and its gradient with respect to `W`.
fn interior_point<T: Scalar>(
    weights: &PinnWeights<T>,
    spec: ActivationSpec,
    cfg: &LossConfig<T>,
    z: &SpaceTimePoint<T>,
) -> Result<(T, T, Matrix<T>)> {
    weights.check_point(z)?;
    let d = weights.d();
    let (w, a1, a2) = (weights.w(), weights.a1(), weights.a2());
    let hidden = hidden_layer(weights, spec, z);
    let fe = field_from_hidden(weights, &hidden);
    let r = momentum_residual(&fe, cfg.nu);
    let momentum = r.iter().fold(T::zero(), |acc, &v| acc + huber(cfg.delta, v));
    let divergence = cfg.lambda0 * huber(cfg.delta, fe.div_u);

    let g: Vec<T> = r.iter().map(|&v| huber_grad(cfg.delta, v)).collect();
    let g_div = cfg.lambda0 * huber_grad(cfg.delta, fe.div_u);
    // g_jac[m] = Σ_k g_k ∂u_k/∂x_m
    let g_jac: Vec<T> = (0..d)
        .map(|m| (0..d).fold(T::zero(), |acc, k| acc + g[k] * fe.jac_u.get(k, m)))
        .collect();
    let two = T::lit(2.0);

    let mut grad = Matrix::zeros(weights.p(), d + 1);
    for (q, h) in hidden.iter().enumerate() {
        let row = w.row(q);
        let mut g_a = T::zero();
        let mut a_gjac = T::zero();
        let mut u_w = T::zero();
        let mut g_w = T::zero();
        let mut a_w = T::zero();
        let mut w_sq = T::zero();
        for m in 0..d {
            let a = a1.get(m, q);
            g_a += g[m] * a;
            a_gjac += a * g_jac[m];
            u_w += fe.u[m] * row[m];
            g_w += g[m] * row[m];
            a_w += a * row[m];
            w_sq += row[m] * row[m];
        }
        // part of ∂ℓ/∂W[q, j] proportional to z_j (chain rule through Wz)
        let along_z = g_a * row[d] * h.d2
            + h.d1 * a_gjac
            + g_a * u_w * h.d2
            + a2[q] * g_w * h.d2
            - cfg.nu * g_a * w_sq * h.d3
            + g_div * a_w * h.d2;
        let out = grad.row_mut(q);
        for m in 0..d {
            // explicit dependence of the derivative fields on W[q, m]
            out[m] = along_z * z.x[m]
                + g_a * fe.u[m] * h.d1
                + a2[q] * g[m] * h.d1
                - cfg.nu * g_a * two * row[m] * h.d2
                + g_div * a1.get(m, q) * h.d1;
        }
        out[d] = along_z * z.t + g_a * h.d1;
    }
    Ok((momentum, divergence, grad))
}

/// Initial-condition loss at `x` and its gradient.
fn initial_point<T: Scalar>(
    weights: &PinnWeights<T>,
    spec: ActivationSpec,
    cfg: &LossConfig<T>,
    x: &[T],
    f0: &dyn InitialCondition<T>,
) -> Result<(T, Matrix<T>)> {
    let z = SpaceTimePoint::initial(x);
    weights.check_point(&z)?;
    let d = weights.d();
    let hidden = hidden_layer(weights, spec, &z);
    let target = f0.eval(x);
    crate::error::check_dim("initial condition length", d, target.len())?;
    let a1 = weights.a1();
    let mut u = vec![T::zero(); d];
    for (q, h) in hidden.iter().enumerate() {
        for (k, uk) in u.iter_mut().enumerate() {
            *uk += a1.get(k, q) * h.value;
        }
    }
    let mut loss = T::zero();
    let mut g = vec![T::zero(); d];
    for k in 0..d {
        let e = u[k] - target[k];
        loss += huber(cfg.delta, e);
        g[k] = cfg.lambda1 * huber_grad(cfg.delta, e);
    }
    let mut grad = Matrix::zeros(weights.p(), d + 1);
    for (q, h) in hidden.iter().enumerate() {
        let c = (0..d).fold(T::zero(), |acc, k| acc + g[k] * a1.get(k, q)) * h.d1;
        let out = grad.row_mut(q);
        for m in 0..d {
            out[m] = c * x[m];
        }
    }
    Ok((cfg.lambda1 * loss, grad))
}

/// Empirical risk together with `∂R̂/∂W`.
pub fn risk_and_grad<T: Scalar>(
    weights: &PinnWeights<T>,
    spec: ActivationSpec,
    cfg: &LossConfig<T>,
    colloc: &CollocationSet<T>,
    f0: &dyn InitialCondition<T>,
) -> Result<(RiskBreakdown<T>, Matrix<T>)> {
    cfg.validate()?;
    colloc.validate()?;
    let interior: Vec<(T, T, Matrix<T>)> = colloc
        .interior
        .par_iter()
        .map(|z| interior_point(weights, spec, cfg, z))
        .collect::<Result<_>>()?;
    let initial: Vec<(T, Matrix<T>)> = colloc
        .initial
        .par_iter()
        .map(|x| initial_point(weights, spec, cfg, x, f0))
        .collect::<Result<_>>()?;

    let add = |a: &Matrix<T>, b: &Matrix<T>| a.add(b);
    let (mut momentum, mut divergence, mut grads_r) = (Vec::new(), Vec::new(), Vec::new());
    for (m, dv, g) in interior {
        momentum.push(m);
        divergence.push(dv);
        grads_r.push(g);
    }
    let (init_losses, grads_0): (Vec<T>, Vec<Matrix<T>>) = initial.into_iter().unzip();
    let n_r = T::from_usize_lossy(colloc.n_interior());
    let n_0 = T::from_usize_lossy(colloc.n_initial());
    let g_r = pairwise_reduce(&grads_r, &add).expect("nonempty").scale(T::one() / n_r);
    let g_0 = pairwise_reduce(&grads_0, &add).expect("nonempty").scale(T::one() / n_0);
    let risk = PointLosses {
        momentum,
        divergence,
        initial: init_losses,
    }
    .breakdown();
    Ok((risk, g_r.add(&g_0)))
}

pub fn grad_risk<T: Scalar>(
    weights: &PinnWeights<T>,
    spec: ActivationSpec,
    cfg: &LossConfig<T>,
    colloc: &CollocationSet<T>,
    f0: &dyn InitialCondition<T>,
) -> Result<Matrix<T>> {
    risk_and_grad(weights, spec, cfg, colloc, f0).map(|(_, g)| g)
}

/// One AdamW update in place: decoupled decay first, then the bias-corrected
/// moment step.
pub fn adamw_step<T: Scalar>(
    w: &mut Matrix<T>,
    grad: &Matrix<T>,
    state: &mut OptimState<T>,
    tc: &TrainConfig,
) -> Result<()> {
    if !w.same_shape(grad) || !w.same_shape(&state.m) || !w.same_shape(&state.v) {
        return Err(Error::DimensionMismatch {
            context: "AdamW shapes",
            expected: w.as_slice().len(),
            found: grad.as_slice().len(),
        });
    }
    state.step += 1;
    let lr = T::lit(tc.learning_rate);
    let (b1, b2) = (T::lit(tc.beta1), T::lit(tc.beta2));
    let one = T::one();
    let decay = one - lr * T::lit(tc.weight_decay);
    let t = state.step as i32;
    let bc1 = one - b1.powi(t);
    let bc2 = one - b2.powi(t);
    let eps = T::lit(tc.eps_adam);
    let ws = w.as_mut_slice();
    let ms = state.m.as_mut_slice();
    let vs = state.v.as_mut_slice();
    for (i, &g) in grad.as_slice().iter().enumerate() {
        ws[i] *= decay;
        ms[i] = b1 * ms[i] + (one - b1) * g;
        vs[i] = b2 * vs[i] + (one - b2) * g * g;
        let m_hat = ms[i] / bc1;
        let v_hat = vs[i] / bc2;
        ws[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct HistoryEntry<T> {
    pub epoch: usize,
    pub risk: RiskBreakdown<T>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub weights: PinnWeights<T>,
    pub history: Vec<HistoryEntry<T>>,
}

impl<T: Scalar> TrainOutcome<T> {
    pub fn initial_risk(&self) -> &RiskBreakdown<T> {
        &self.history.first().expect("history is never empty").risk
    }

    pub fn final_risk(&self) -> &RiskBreakdown<T> {
        &self.history.last().expect("history is never empty").risk
    }
}

/// Full-batch AdamW on `W` for `tc.epochs` steps.
///
/// History holds the risk before step 0, every `log_every` steps, and after the
/// last step (logged with `epoch = tc.epochs`).
pub fn train<T: Scalar>(
    weights0: &PinnWeights<T>,
    spec: ActivationSpec,
    loss_cfg: &LossConfig<T>,
    colloc: &CollocationSet<T>,
    f0: &dyn InitialCondition<T>,
    tc: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    tc.validate()?;
    let mut weights = weights0.clone();
    let mut state = OptimState::for_weights(&weights);
    let mut history = Vec::new();
    for epoch in 0..tc.epochs {
        let (risk, grad) = risk_and_grad(&weights, spec, loss_cfg, colloc, f0)?;
        if !risk.is_finite() || !grad.all_finite() {
            return Err(Error::Diverged {
                epoch,
                message: format!("risk {} / gradient not finite", risk.total),
            });
        }
        if epoch % tc.log_every == 0 {
            history.push(HistoryEntry { epoch, risk });
            log::debug!("epoch {epoch}: total risk {}", risk.total);
        }
        adamw_step(weights.w_mut(), &grad, &mut state, tc)?;
        if !weights.is_finite() {
            return Err(Error::Diverged {
                epoch,
                message: "weights became non-finite".into(),
            });
        }
    }
    let (risk, _) = risk_and_grad(&weights, spec, loss_cfg, colloc, f0)?;
    if !risk.is_finite() {
        return Err(Error::Diverged {
            epoch: tc.epochs,
            message: format!("final risk {}", risk.total),
        });
    }
    history.push(HistoryEntry {
        epoch: tc.epochs,
        risk,
    });
    Ok(TrainOutcome { weights, history })
}

pub const HISTORY_CSV_HEADER: &str = "epoch,momentum_term,divergence_term,initial_term,total";

pub fn history_csv<T: Scalar>(history: &[HistoryEntry<T>]) -> String {
    let mut out = String::from(HISTORY_CSV_HEADER);
    out.push('\n');
    for e in history {
        let r = &e.risk;
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            e.epoch, r.momentum_term, r.divergence_term, r.initial_term, r.total
        ));
    }
    out
}
