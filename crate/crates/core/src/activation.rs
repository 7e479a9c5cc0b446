//! Activation families and the constants the generalization bound consumes.
//!
//! Every family is a positive integer power of a base function, so the
//! derivative stack is assembled from the base derivatives with the
//! chain/product rule for `g^k`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActivationFamily {
    /// `tanh(x)^k`
    #[serde(rename = "tanh")]
    TanhPow,
    /// `sigmoid(x)^k`
    #[serde(rename = "sigmoid")]
    SigmoidPow,
    /// `exp(-x) * relu(x)^k`, requires `k >= 3`.
    #[serde(rename = "expnegrelu")]
    ExpNegReluPow,
}

impl ActivationFamily {
    pub fn name(self) -> &'static str {
        match self {
            ActivationFamily::TanhPow => "tanh",
            ActivationFamily::SigmoidPow => "sigmoid",
            ActivationFamily::ExpNegReluPow => "expnegrelu",
        }
    }
}

impl FromStr for ActivationFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(ActivationFamily::TanhPow),
            "sigmoid" => Ok(ActivationFamily::SigmoidPow),
            "expnegrelu" => Ok(ActivationFamily::ExpNegReluPow),
            other => Err(Error::config(format!("unknown activation family {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct ActivationSpec {
    family: ActivationFamily,
    k: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    family: ActivationFamily,
    k: u32,
}

impl TryFrom<RawSpec> for ActivationSpec {
    type Error = Error;
    fn try_from(raw: RawSpec) -> Result<Self> {
        ActivationSpec::new(raw.family, raw.k)
    }
}

impl From<ActivationSpec> for RawSpec {
    fn from(s: ActivationSpec) -> Self {
        RawSpec {
            family: s.family,
            k: s.k,
        }
    }
}

impl ActivationSpec {
    pub fn new(family: ActivationFamily, k: u32) -> Result<Self> {
        let min_k = match family {
            ActivationFamily::ExpNegReluPow => 3,
            _ => 1,
        };
        if k < min_k {
            return Err(Error::config(format!(
                "{} activation needs exponent k >= {min_k}, got {k}",
                family.name()
            )));
        }
        Ok(Self { family, k })
    }

    pub fn tanh() -> Self {
        Self {
            family: ActivationFamily::TanhPow,
            k: 1,
        }
    }

    pub fn tanh_cubed() -> Self {
        Self {
            family: ActivationFamily::TanhPow,
            k: 3,
        }
    }

    pub fn family(&self) -> ActivationFamily {
        self.family
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    #[inline]
    pub fn eval<T: Scalar>(&self, x: T) -> T {
        eval_derivs(*self, x).value
    }
}

impl fmt::Display for ActivationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.k == 1 {
            write!(f, "{}", self.family.name())
        } else {
            write!(f, "{}^{}", self.family.name(), self.k)
        }
    }
}

/// `σ(x)` and its first three derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Derivs<T> {
    pub value: T,
    pub d1: T,
    pub d2: T,
    pub d3: T,
}

/// Lipschitz and sup-norm constants of an activation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"), deny_unknown_fields)]
pub struct SigmaConstants<T> {
    /// Lipschitz constant of σ.
    pub l_sigma: T,
    /// Lipschitz constant of σ′.
    pub l_sigma1: T,
    /// Lipschitz constant of σ″.
    pub l_sigma2: T,
    /// sup |σ|
    pub b_sigma: T,
    /// sup |σ′|
    pub b_sigma1: T,
    pub c0: T,
    pub c1: T,
    pub c2: T,
}

impl<T: Scalar> SigmaConstants<T> {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("l_sigma", self.l_sigma),
            ("l_sigma1", self.l_sigma1),
            ("l_sigma2", self.l_sigma2),
            ("b_sigma", self.b_sigma),
            ("b_sigma1", self.b_sigma1),
        ];
        for (name, v) in nonneg {
            if !v.is_finite() || v < T::zero() {
                return Err(Error::config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        for (name, v) in [("c0", self.c0), ("c1", self.c1), ("c2", self.c2)] {
            if !v.is_finite() {
                return Err(Error::config(format!("{name} must be finite")));
            }
        }
        if self.c0.abs() > self.b_sigma || self.c1.abs() > self.b_sigma1 {
            return Err(Error::config("|c0| <= b_sigma and |c1| <= b_sigma1 required"));
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> SigmaConstants<U> {
        let c = |x: T| U::lit(x.as_f64());
        SigmaConstants {
            l_sigma: c(self.l_sigma),
            l_sigma1: c(self.l_sigma1),
            l_sigma2: c(self.l_sigma2),
            b_sigma: c(self.b_sigma),
            b_sigma1: c(self.b_sigma1),
            c0: c(self.c0),
            c1: c(self.c1),
            c2: c(self.c2),
        }
    }
}

/// Derivatives of `g^k` from those of `g`.
#[inline]
fn power_stack<T: Scalar>(k: u32, g: T, g1: T, g2: T, g3: T) -> Derivs<T> {
    let kf = T::lit(k as f64);
    // g^(k-j) with a zero coefficient whenever the falling factorial vanishes
    let gp = |j: u32| if j <= k { g.powi((k - j) as i32) } else { T::zero() };
    let k1 = kf * (kf - T::one());
    let k2 = k1 * (kf - T::lit(2.0));
    let three = T::lit(3.0);
    Derivs {
        value: gp(0),
        d1: kf * gp(1) * g1,
        d2: k1 * gp(2) * g1 * g1 + kf * gp(1) * g2,
        d3: k2 * gp(3) * g1 * g1 * g1 + three * k1 * gp(2) * g1 * g2 + kf * gp(1) * g3,
    }
}

/// Closed-form `σ, σ′, σ″, σ‴` at `x`.
///
/// `ExpNegReluPow` returns zeros for `x <= 0`.
pub fn eval_derivs<T: Scalar>(spec: ActivationSpec, x: T) -> Derivs<T> {
    let one = T::one();
    let two = T::lit(2.0);
    match spec.family {
        ActivationFamily::TanhPow => {
            let t = x.tanh();
            let s = one - t * t;
            let g2 = -two * t * s;
            let g3 = s * (T::lit(6.0) * t * t - two);
            if spec.k == 1 {
                Derivs {
                    value: t,
                    d1: s,
                    d2: g2,
                    d3: g3,
                }
            } else {
                power_stack(spec.k, t, s, g2, g3)
            }
        }
        ActivationFamily::SigmoidPow => {
            let s = if x >= T::zero() {
                one / (one + (-x).exp())
            } else {
                let e = x.exp();
                e / (one + e)
            };
            let g1 = s * (one - s);
            let g2 = g1 * (one - two * s);
            let g3 = g1 * (one - T::lit(6.0) * g1);
            power_stack(spec.k, s, g1, g2, g3)
        }
        ActivationFamily::ExpNegReluPow => {
            if x <= T::zero() {
                let z = T::zero();
                return Derivs {
                    value: z,
                    d1: z,
                    d2: z,
                    d3: z,
                };
            }
            // (x^k e^{-x})^{(n)} = e^{-x} Σ_j C(n,j) (-1)^{n-j} (x^k)^{(j)}
            let k = spec.k;
            let kf = T::lit(k as f64);
            let p0 = x.powi(k as i32);
            let p1 = kf * x.powi(k as i32 - 1);
            let p2 = kf * (kf - one) * x.powi(k as i32 - 2);
            let p3 = kf * (kf - one) * (kf - two) * x.powi(k as i32 - 3);
            let e = (-x).exp();
            let three = T::lit(3.0);
            Derivs {
                value: e * p0,
                d1: e * (p1 - p0),
                d2: e * (p2 - two * p1 + p0),
                d3: e * (p3 - three * p2 + three * p1 - p0),
            }
        }
    }
}

/// Constants for the bound. Tabulated for `tanh` and `tanh^3`, estimated on a
/// grid otherwise.
pub fn constants<T: Scalar>(spec: ActivationSpec) -> SigmaConstants<T> {
    let l = T::lit;
    match (spec.family, spec.k) {
        (ActivationFamily::TanhPow, 1) => SigmaConstants {
            l_sigma: l(1.0),
            l_sigma1: l(1.0),
            l_sigma2: l(2.0),
            b_sigma: l(1.0),
            b_sigma1: l(1.0),
            c0: l(0.0),
            c1: l(1.0),
            c2: l(0.0),
        },
        (ActivationFamily::TanhPow, 3) => SigmaConstants {
            l_sigma: l(0.75),
            l_sigma1: l(1.4),
            l_sigma2: l(6.0),
            b_sigma: l(1.0),
            b_sigma1: l(0.75),
            c0: l(0.0),
            c1: l(0.0),
            c2: l(0.0),
        },
        _ => estimate_constants(spec, l(DEFAULT_GRID_HALF_WIDTH), l(DEFAULT_GRID_STEP))
            .expect("default grid is valid and every family is finite on it"),
    }
}

pub const DEFAULT_GRID_HALF_WIDTH: f64 = 20.0;
pub const DEFAULT_GRID_STEP: f64 = 1e-3;
/// Multiplier applied to grid sups of the next-order derivative.
pub const LIPSCHITZ_SAFETY: f64 = 1.01;

/// Grid estimate of the constants on `[-half_width, half_width]`.
///
/// Lipschitz constants are the grid max of the next derivative times
/// [`LIPSCHITZ_SAFETY`]; sup bounds are plain grid maxima; `c0..c2` are
/// evaluated exactly at zero.
pub fn estimate_constants<T: Scalar>(
    spec: ActivationSpec,
    grid_half_width: T,
    grid_step: T,
) -> Result<SigmaConstants<T>> {
    if !(grid_half_width > T::zero()) || !(grid_step > T::zero()) {
        return Err(Error::config("grid half width and step must be positive"));
    }
    let n = (T::lit(2.0) * grid_half_width / grid_step).ceil().as_f64() as usize;
    let mut max = [T::zero(); 5];
    for i in 0..=n {
        let x = -grid_half_width + grid_step * T::from_usize_lossy(i);
        let x = if x > grid_half_width { grid_half_width } else { x };
        let d = eval_derivs(spec, x);
        let vals = [d.value, d.d1, d.d2, d.d3];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{spec} derivatives at x = {x}")));
        }
        for (m, v) in max.iter_mut().zip(vals) {
            if v.abs() > *m {
                *m = v.abs();
            }
        }
    }
    let at0 = eval_derivs(spec, T::zero());
    for (m, v) in max.iter_mut().zip([at0.value, at0.d1, at0.d2, at0.d3]) {
        if v.abs() > *m {
            *m = v.abs();
        }
    }
    let safety = T::lit(LIPSCHITZ_SAFETY);
    Ok(SigmaConstants {
        l_sigma: max[1] * safety,
        l_sigma1: max[2] * safety,
        l_sigma2: max[3] * safety,
        b_sigma: max[0],
        b_sigma1: max[1],
        c0: at0.value,
        c1: at0.d1,
        c2: at0.d2,
    })
}
