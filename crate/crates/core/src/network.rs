//! Depth-2 network `z ↦ (A1 σ(Wz), ⟨a2, σ(Wz)⟩)` with frozen heads.
//!
//! Inputs are ordered `z = (x_1, …, x_d, t)`, so the time weights are the last
//! column of `W`. There are no bias terms.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::activation::{eval_derivs, ActivationSpec, Derivs};
use crate::error::{check_dim, Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct PinnWeights<T> {
    d: usize,
    p: usize,
    w: Matrix<T>,
    a1: Matrix<T>,
    a2: Vec<T>,
}

impl<T: Scalar> PinnWeights<T> {
    /// `w` is `p × (d+1)`, `a1` is `d × p`, `a2` has length `p`.
    pub fn new(w: Matrix<T>, a1: Matrix<T>, a2: Vec<T>) -> Result<Self> {
        let p = w.rows();
        if p == 0 || w.cols() < 2 {
            return Err(Error::config("W must be p x (d+1) with p >= 1 and d >= 1"));
        }
        let d = w.cols() - 1;
        check_dim("A1 rows", d, a1.rows())?;
        check_dim("A1 columns", p, a1.cols())?;
        check_dim("a2 length", p, a2.len())?;
        let finite = w.all_finite() && a1.all_finite() && a2.iter().all(|x| x.is_finite());
        if !finite {
            return Err(Error::NonFinite("network weights".into()));
        }
        Ok(Self { d, p, w, a1, a2 })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn w(&self) -> &Matrix<T> {
        &self.w
    }

    /// Trainable layer. The heads have no mutable access.
    pub fn w_mut(&mut self) -> &mut Matrix<T> {
        &mut self.w
    }

    pub fn a1(&self) -> &Matrix<T> {
        &self.a1
    }

    pub fn a2(&self) -> &[T] {
        &self.a2
    }

    /// Same heads, different first layer.
    pub fn with_w(&self, w: Matrix<T>) -> Result<Self> {
        check_dim("W rows", self.p, w.rows())?;
        check_dim("W columns", self.d + 1, w.cols())?;
        Self::new(w, self.a1.clone(), self.a2.clone())
    }

    pub fn is_finite(&self) -> bool {
        self.w.all_finite()
    }

    pub(crate) fn check_point(&self, z: &SpaceTimePoint<T>) -> Result<()> {
        check_dim("space-time point", self.d, z.x.len())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTimePoint<T> {
    pub x: Vec<T>,
    pub t: T,
}

impl<T: Scalar> SpaceTimePoint<T> {
    pub fn new(x: Vec<T>, t: T) -> Self {
        Self { x, t }
    }

    /// Point on the initial slice `t = 0`.
    pub fn initial(x: &[T]) -> Self {
        Self {
            x: x.to_vec(),
            t: T::zero(),
        }
    }

    pub fn coord(&self, j: usize) -> T {
        if j < self.x.len() {
            self.x[j]
        } else {
            self.t
        }
    }

    pub fn to_vec(&self) -> Vec<T> {
        let mut z = self.x.clone();
        z.push(self.t);
        z
    }

    pub fn norm_sq(&self) -> T {
        self.x.iter().fold(self.t * self.t, |acc, &v| acc + v * v)
    }
}

/// Velocity, pressure and every space-time derivative the momentum residual uses.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldEval<T> {
    pub u: Vec<T>,
    pub p: T,
    pub du_dt: Vec<T>,
    /// `jac_u[k][m] = ∂u_k/∂x_m`
    pub jac_u: Matrix<T>,
    pub grad_p: Vec<T>,
    pub lap_u: Vec<T>,
    pub div_u: T,
}

impl<T: Scalar> FieldEval<T> {
    pub fn zeros(d: usize) -> Self {
        Self {
            u: vec![T::zero(); d],
            p: T::zero(),
            du_dt: vec![T::zero(); d],
            jac_u: Matrix::zeros(d, d),
            grad_p: vec![T::zero(); d],
            lap_u: vec![T::zero(); d],
            div_u: T::zero(),
        }
    }

    pub fn dim(&self) -> usize {
        self.u.len()
    }

    pub fn trace_jac(&self) -> T {
        (0..self.dim()).fold(T::zero(), |acc, m| acc + self.jac_u.get(m, m))
    }
}

/// Anything that can report a velocity/pressure field and its derivatives.
pub trait FieldEvaluator<T: Scalar>: Sync {
    fn dim(&self) -> usize;

    fn field_eval(&self, z: &SpaceTimePoint<T>) -> Result<FieldEval<T>>;

    /// Velocity only; override when it is cheaper than the full evaluation.
    fn velocity(&self, z: &SpaceTimePoint<T>) -> Result<Vec<T>> {
        Ok(self.field_eval(z)?.u)
    }
}

/// Borrowed network plus its activation.
#[derive(Clone, Copy, Debug)]
pub struct Pinn<'a, T> {
    pub weights: &'a PinnWeights<T>,
    pub activation: ActivationSpec,
}

impl<'a, T: Scalar> Pinn<'a, T> {
    pub fn new(weights: &'a PinnWeights<T>, activation: ActivationSpec) -> Self {
        Self {
            weights,
            activation,
        }
    }
}

impl<T: Scalar> FieldEvaluator<T> for Pinn<'_, T> {
    fn dim(&self) -> usize {
        self.weights.d
    }

    fn field_eval(&self, z: &SpaceTimePoint<T>) -> Result<FieldEval<T>> {
        field_eval(self.weights, self.activation, z)
    }

    fn velocity(&self, z: &SpaceTimePoint<T>) -> Result<Vec<T>> {
        forward(self.weights, self.activation, z).map(|(u, _)| u)
    }
}

#[inline]
pub(crate) fn preactivation<T: Scalar>(row: &[T], z: &SpaceTimePoint<T>) -> T {
    let d = z.x.len();
    let mut s = T::zero();
    for m in 0..d {
        s += row[m] * z.x[m];
    }
    s + row[d] * z.t
}

/// `σ` stack for every hidden unit at `z`.
pub(crate) fn hidden_layer<T: Scalar>(
    weights: &PinnWeights<T>,
    spec: ActivationSpec,
    z: &SpaceTimePoint<T>,
) -> Vec<Derivs<T>> {
    (0..weights.p)
        .map(|q| eval_derivs(spec, preactivation(weights.w.row(q), z)))
        .collect()
}

/// Network output `(u, p)` at `z`.
pub fn forward<T: Scalar>(
    weights: &PinnWeights<T>,
    spec: ActivationSpec,
    z: &SpaceTimePoint<T>,
) -> Result<(Vec<T>, T)> {
    weights.check_point(z)?;
    let d = weights.d;
    let mut u = vec![T::zero(); d];
    let mut p = T::zero();
    for q in 0..weights.p {
        let h = spec.eval(preactivation(weights.w.row(q), z));
        p += weights.a2[q] * h;
        for (k, uk) in u.iter_mut().enumerate() {
            *uk += weights.a1.get(k, q) * h;
        }
    }
    Ok((u, p))
}

/// Closed-form derivatives of the network at `z`.
///
/// Each field is an inner product of a head/weight product with `σ′(Wz)` or
/// `σ″(Wz)`; `div_u` is the trace of `jac_u`.
pub fn field_eval<T: Scalar>(
    weights: &PinnWeights<T>,
    spec: ActivationSpec,
    z: &SpaceTimePoint<T>,
) -> Result<FieldEval<T>> {
    weights.check_point(z)?;
    Ok(field_from_hidden(weights, &hidden_layer(weights, spec, z)))
}

pub(crate) fn field_from_hidden<T: Scalar>(weights: &PinnWeights<T>, hidden: &[Derivs<T>]) -> FieldEval<T> {
    let d = weights.d;
    let mut fe = FieldEval::zeros(d);
    for (q, h) in hidden.iter().enumerate() {
        let row = weights.w.row(q);
        let a2 = weights.a2[q];
        let wt = row[d];
        let w_sq = row[..d].iter().fold(T::zero(), |acc, &w| acc + w * w);
        fe.p += a2 * h.value;
        for k in 0..d {
            let a = weights.a1.get(k, q);
            fe.u[k] += a * h.value;
            fe.du_dt[k] += a * wt * h.d1;
            let jac_row = fe.jac_u.row_mut(k);
            for m in 0..d {
                jac_row[m] += a * row[m] * h.d1;
            }
            fe.lap_u[k] += a * w_sq * h.d2;
            fe.grad_p[k] += a2 * row[k] * h.d1;
        }
    }
    fe.div_u = fe.trace_jac();
    fe
}

/// Default first-layer scale `1/√(d+1)`.
pub fn default_w_scale(d: usize) -> f64 {
    1.0 / ((d + 1) as f64).sqrt()
}

/// Standard-normal heads and `N(0, w_scale²)` first layer from a ChaCha8 stream.
///
/// Draw order is `A1` (row-major), `a2`, then `W` (row-major).
pub fn init_weights<T: Scalar>(d: usize, p: usize, seed: u64, w_scale: f64) -> Result<PinnWeights<T>> {
    if d == 0 || p == 0 {
        return Err(Error::config("d and p must be at least 1"));
    }
    if !w_scale.is_finite() || w_scale < 0.0 {
        return Err(Error::config("w_scale must be finite and non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(&mut rng)).collect() };
    let a1 = draw(d * p).into_iter().map(T::lit).collect();
    let a2 = draw(p).into_iter().map(T::lit).collect();
    let w = draw(p * (d + 1))
        .into_iter()
        .map(|n| if w_scale == 0.0 { T::zero() } else { T::lit(n * w_scale) })
        .collect();
    PinnWeights::new(
        Matrix::from_vec(p, d + 1, w)?,
        Matrix::from_vec(d, p, a1)?,
        a2,
    )
}

/// On-disk checkpoint: weights plus the activation they were trained with.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub weights: PinnWeights<T>,
    pub activation: ActivationSpec,
}

#[derive(Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
#[serde(deny_unknown_fields)]
struct CheckpointFile<T> {
    d: usize,
    p: usize,
    activation: ActivationSpec,
    #[serde(rename = "W")]
    w: Vec<Vec<T>>,
    #[serde(rename = "A1")]
    a1: Vec<Vec<T>>,
    a2: Vec<T>,
}

/// Serialize a checkpoint as JSON. Floats use shortest round-trip decimals.
pub fn checkpoint_to_string<T: Scalar>(weights: &PinnWeights<T>, activation: ActivationSpec) -> Result<String> {
    if !weights.is_finite() {
        return Err(Error::NonFinite("refusing to checkpoint non-finite weights".into()));
    }
    let file = CheckpointFile {
        d: weights.d,
        p: weights.p,
        activation,
        w: weights.w.to_rows(),
        a1: weights.a1.to_rows(),
        a2: weights.a2.clone(),
    };
    let mut s = serde_json::to_string_pretty(&file)?;
    s.push('\n');
    Ok(s)
}

pub fn checkpoint_from_str<T: Scalar>(text: &str, path: &Path) -> Result<Checkpoint<T>> {
    let bad = |message: String| Error::Checkpoint {
        path: path.to_path_buf(),
        message,
    };
    let file: CheckpointFile<T> = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    if file.w.len() != file.p || file.a2.len() != file.p || file.a1.len() != file.d {
        return Err(bad(format!("shapes disagree with d = {}, p = {}", file.d, file.p)));
    }
    let w = Matrix::from_rows(file.w).map_err(|e| bad(e.to_string()))?;
    let a1 = Matrix::from_rows(file.a1).map_err(|e| bad(e.to_string()))?;
    if w.cols() != file.d + 1 || a1.cols() != file.p {
        return Err(bad(format!("shapes disagree with d = {}, p = {}", file.d, file.p)));
    }
    let weights = PinnWeights::new(w, a1, file.a2).map_err(|e| bad(e.to_string()))?;
    Ok(Checkpoint {
        weights,
        activation: file.activation,
    })
}

pub fn save_checkpoint<T: Scalar>(
    weights: &PinnWeights<T>,
    activation: ActivationSpec,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let text = checkpoint_to_string(weights, activation)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Checkpoint<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_str(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::ActivationFamily;
    use approx::assert_abs_diff_eq;

    fn tiny(w: Vec<Vec<f64>>, a1: Vec<Vec<f64>>, a2: Vec<f64>) -> PinnWeights<f64> {
        PinnWeights::new(
            Matrix::from_rows(w).unwrap(),
            Matrix::from_rows(a1).unwrap(),
            a2,
        )
        .unwrap()
    }

    #[test]
    fn zero_first_layer_gives_zero_output() {
        let w = init_weights::<f64>(2, 5, 3, 0.0).unwrap();
        assert!(w.w().as_slice().iter().all(|&x| x == 0.0 && x.is_sign_positive()));
        let z = SpaceTimePoint::new(vec![0.3, 0.9], 0.4);
        for spec in [ActivationSpec::tanh(), ActivationSpec::tanh_cubed()] {
            let (u, p) = forward(&w, spec, &z).unwrap();
            assert_eq!((u, p), (vec![0.0, 0.0], 0.0));
        }
        let fe = field_eval(&w, ActivationSpec::tanh_cubed(), &z).unwrap();
        assert_eq!(fe, FieldEval::zeros(2));
    }

    #[test]
    fn scalar_forward() {
        let w = tiny(vec![vec![1.0, 0.0]], vec![vec![2.0]], vec![3.0]);
        let (u, p) = forward(&w, ActivationSpec::tanh(), &SpaceTimePoint::new(vec![1.0], 0.0)).unwrap();
        assert_eq!(u, vec![2.0 * 1f64.tanh()]);
        assert_eq!(p, 3.0 * 1f64.tanh());
    }

    #[test]
    fn scalar_field_eval_at_origin() {
        let w = tiny(vec![vec![1.0, 0.0]], vec![vec![1.0]], vec![1.0]);
        let fe = field_eval(&w, ActivationSpec::tanh(), &SpaceTimePoint::new(vec![0.0], 0.0)).unwrap();
        assert_eq!(fe.jac_u.get(0, 0), 1.0);
        assert_eq!(fe.du_dt, vec![0.0]);
        assert_eq!(fe.grad_p, vec![1.0]);
        assert_eq!(fe.lap_u, vec![0.0]);
        assert_eq!(fe.div_u, 1.0);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let w = init_weights::<f64>(2, 3, 1, 0.5).unwrap();
        let z = SpaceTimePoint::new(vec![0.1], 0.2);
        assert!(matches!(
            forward(&w, ActivationSpec::tanh(), &z),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(field_eval(&w, ActivationSpec::tanh(), &z).is_err());
        let a1 = Matrix::zeros(3, 3);
        assert!(PinnWeights::new(Matrix::zeros(3, 3), a1, vec![0.0; 3]).is_err());
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_weights::<f64>(2, 16, 42, 0.7).unwrap();
        let b = init_weights::<f64>(2, 16, 42, 0.7).unwrap();
        assert_eq!(a, b);
        let c = init_weights::<f64>(2, 16, 43, 0.7).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn head_entries_look_standard_normal() {
        let w = init_weights::<f64>(2, 64, 7, default_w_scale(2)).unwrap();
        let entries = w.a1().as_slice();
        let mean = entries.iter().sum::<f64>() / entries.len() as f64;
        assert!(mean.abs() < 3.0 / (2.0 * 64.0f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn forward_and_field_eval_agree_bitwise() {
        let w = init_weights::<f64>(3, 9, 11, 1.0).unwrap();
        let z = SpaceTimePoint::new(vec![0.2, -0.4, 0.9], 0.6);
        for spec in [
            ActivationSpec::tanh_cubed(),
            ActivationSpec::new(ActivationFamily::SigmoidPow, 2).unwrap(),
        ] {
            let (u, p) = forward(&w, spec, &z).unwrap();
            let fe = field_eval(&w, spec, &z).unwrap();
            assert_eq!(u, fe.u);
            assert_eq!(p.to_bits(), fe.p.to_bits());
            assert_eq!(fe.div_u, fe.trace_jac());
        }
    }

    #[test]
    fn field_eval_matches_finite_differences() {
        let w = init_weights::<f64>(2, 4, 5, 0.8).unwrap();
        let spec = ActivationSpec::tanh();
        let z = SpaceTimePoint::new(vec![0.31, 0.72], 0.44);
        let fe = field_eval(&w, spec, &z).unwrap();
        let h = 1e-5;
        let shifted = |j: usize, s: f64| {
            let mut v = z.to_vec();
            v[j] += s;
            let t = v.pop().unwrap();
            forward(&w, spec, &SpaceTimePoint::new(v, t)).unwrap()
        };
        for k in 0..2 {
            let dt = (shifted(2, h).0[k] - shifted(2, -h).0[k]) / (2.0 * h);
            assert_abs_diff_eq!(dt, fe.du_dt[k], epsilon = 1e-8);
            let dp = (shifted(k, h).1 - shifted(k, -h).1) / (2.0 * h);
            assert_abs_diff_eq!(dp, fe.grad_p[k], epsilon = 1e-8);
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        let w = init_weights::<f64>(2, 6, 9, 0.577).unwrap();
        save_checkpoint(&w, ActivationSpec::tanh_cubed(), &path).unwrap();
        let back = load_checkpoint::<f64>(&path).unwrap();
        assert_eq!(back.activation, ActivationSpec::tanh_cubed());
        for (a, b) in w.w().as_slice().iter().zip(back.weights.w().as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back.weights, w);
    }

    #[test]
    fn truncated_checkpoint_is_rejected() {
        let w = init_weights::<f64>(2, 3, 9, 0.5).unwrap();
        let text = checkpoint_to_string(&w, ActivationSpec::tanh()).unwrap();
        let cut = &text[..text.len() / 2];
        assert!(matches!(
            checkpoint_from_str::<f64>(cut, Path::new("cut.json")),
            Err(Error::Checkpoint { .. })
        ));
    }

    #[test]
    fn nan_and_shape_errors_are_rejected() {
        let nan = r#"{"d":1,"p":1,"activation":{"family":"tanh","k":1},"W":[[NaN,0.0]],"A1":[[1.0]],"a2":[1.0]}"#;
        assert!(checkpoint_from_str::<f64>(nan, Path::new("x")).is_err());
        let null = r#"{"d":1,"p":1,"activation":{"family":"tanh","k":1},"W":[[null,0.0]],"A1":[[1.0]],"a2":[1.0]}"#;
        assert!(checkpoint_from_str::<f64>(null, Path::new("x")).is_err());
        let shape = r#"{"d":1,"p":2,"activation":{"family":"tanh","k":1},"W":[[1.0,0.0]],"A1":[[1.0]],"a2":[1.0]}"#;
        assert!(checkpoint_from_str::<f64>(shape, Path::new("x")).is_err());
        let ok = r#"{"d":1,"p":1,"activation":{"family":"tanh","k":1},"W":[[1.0,0.0]],"A1":[[1.0]],"a2":[1.0]}"#;
        assert!(checkpoint_from_str::<f64>(ok, Path::new("x")).is_ok());
    }
}
