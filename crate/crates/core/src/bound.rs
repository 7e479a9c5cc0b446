//! Weight functionals, the Rademacher generalization bound, and the
//! collocation sample-size planner.
//!
//! Notation follows the network module: `w_t` is the last column of `W`,
//! `w_{x_m}` column `m`, `a_{1k}` row `k` of `A1`, and `a1 = Σ_k a_{1k}`.
//!
//! The bound for weights in the class is
//!
//! ```text
//! 2δ(B_w C_z C1 + C2)/√N_r + 4λ1 δ B_a (B_w C_z0 L_σ + |c0|)/√N_0
//! ```
//!
//! with
//!
//! ```text
//! C1 = 2B_f1 L_σ′ + 4B_f2 (B_σ L_σ′ + B_σ′ L_σ) + 2B_f3 L_σ′ + 2ν B_f4 L_σ″ + 2λ0 B_f5 L_σ′
//! C2 = B_f1|c1| + B_f2 (2B_σ′|c0| + |c0 c1|) + B_f3|c1| + ν B_f4|c2| + λ0 B_f5|c1|
//! ```

use serde::{Deserialize, Serialize};

use crate::activation::SigmaConstants;
use crate::error::{Error, Result};
use crate::linalg::norm2;
use crate::network::PinnWeights;
use crate::residual::LossConfig;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct WeightStats<T> {
    /// ‖a1 ⊙ w_t‖₁
    pub b_f1: T,
    /// Σ_m ‖a1 ⊙ w_{x_m}‖₁ ‖a_{1m}‖₁
    pub b_f2: T,
    /// ‖a2 ⊙ Σ_m w_{x_m}‖₁
    pub b_f3: T,
    /// ‖Σ_m a1 ⊙ w_{x_m} ⊙ w_{x_m}‖₁
    pub b_f4: T,
    /// ‖Σ_m a_{1m} ⊙ w_{x_m}‖₁
    pub b_f5: T,
    /// Largest row 2-norm of `W`.
    pub b_w: T,
    /// ‖a1‖₁
    pub b_a: T,
}

fn l1<T: Scalar>(v: impl IntoIterator<Item = T>) -> T {
    v.into_iter().fold(T::zero(), |acc, x| acc + x.abs())
}

pub fn weight_stats<T: Scalar>(weights: &PinnWeights<T>) -> WeightStats<T> {
    let (d, p) = (weights.d(), weights.p());
    let (w, a1m, a2) = (weights.w(), weights.a1(), weights.a2());
    let a1: Vec<T> = (0..p)
        .map(|q| (0..d).fold(T::zero(), |acc, k| acc + a1m.get(k, q)))
        .collect();

    let b_f1 = l1((0..p).map(|q| a1[q] * w.get(q, d)));
    let b_f2 = (0..d).fold(T::zero(), |acc, m| {
        let f2m = l1((0..p).map(|q| a1[q] * w.get(q, m)));
        acc + f2m * l1(a1m.row(m).iter().copied())
    });
    let b_f3 = l1((0..p).map(|q| {
        let wx = (0..d).fold(T::zero(), |acc, m| acc + w.get(q, m));
        a2[q] * wx
    }));
    let b_f4 = l1((0..p).map(|q| {
        (0..d).fold(T::zero(), |acc, m| acc + a1[q] * w.get(q, m) * w.get(q, m))
    }));
    let b_f5 = l1((0..p).map(|q| {
        (0..d).fold(T::zero(), |acc, m| acc + a1m.get(m, q) * w.get(q, m))
    }));
    let b_w = (0..p).fold(T::zero(), |acc, q| acc.max(norm2(w.row(q))));
    WeightStats {
        b_f1,
        b_f2,
        b_f3,
        b_f4,
        b_f5,
        b_w,
        b_a: l1(a1.iter().copied()),
    }
}

/// Which ν coefficient to use inside `C1`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NuTerm {
    /// `2ν B_f4 L_σ″`
    #[default]
    Statement,
    /// `2ν B_f4 (L_σ′ + L_σ)`, the form reached in the derivation's combining step.
    Derivation,
}

pub fn theorem_constants<T: Scalar>(stats: &WeightStats<T>, sc: &SigmaConstants<T>, nu: T, lambda0: T) -> (T, T) {
    theorem_constants_with(stats, sc, nu, lambda0, NuTerm::Statement)
}

pub fn theorem_constants_with<T: Scalar>(
    stats: &WeightStats<T>,
    sc: &SigmaConstants<T>,
    nu: T,
    lambda0: T,
    nu_term: NuTerm,
) -> (T, T) {
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    let nu_lip = match nu_term {
        NuTerm::Statement => sc.l_sigma2,
        NuTerm::Derivation => sc.l_sigma1 + sc.l_sigma,
    };
    let c1 = two * stats.b_f1 * sc.l_sigma1
        + four * stats.b_f2 * (sc.b_sigma * sc.l_sigma1 + sc.b_sigma1 * sc.l_sigma)
        + two * stats.b_f3 * sc.l_sigma1
        + two * nu * stats.b_f4 * nu_lip
        + two * lambda0 * stats.b_f5 * sc.l_sigma1;
    let (c0, c1_abs, c2) = (sc.c0.abs(), sc.c1.abs(), sc.c2.abs());
    let c2_const = stats.b_f1 * c1_abs
        + stats.b_f2 * (two * sc.b_sigma1 * c0 + (sc.c0 * sc.c1).abs())
        + stats.b_f3 * c1_abs
        + nu * stats.b_f4 * c2
        + lambda0 * stats.b_f5 * c1_abs;
    (c1, c2_const)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct BoundReport<T> {
    #[serde(rename = "C1")]
    pub c1: T,
    #[serde(rename = "C2")]
    pub c2: T,
    #[serde(rename = "C_z")]
    pub c_z: T,
    #[serde(rename = "C_z0")]
    pub c_z0: T,
    pub term_interior: T,
    pub term_initial: T,
    pub total: T,
    pub delta: T,
    pub nu: T,
    pub lambda0: T,
    pub lambda1: T,
    #[serde(rename = "N_r")]
    pub n_r: usize,
    #[serde(rename = "N_0")]
    pub n_0: usize,
    pub nu_term: NuTerm,
    pub sigma_constants: SigmaConstants<T>,
    pub weight_stats: WeightStats<T>,
    pub warnings: Vec<String>,
}

impl<T: Scalar> BoundReport<T> {
    pub const CSV_HEADER: &'static str =
        "N_r,N_0,delta,nu,lambda0,lambda1,C1,C2,C_z,C_z0,B_f1,B_f2,B_f3,B_f4,B_f5,B_w,B_a,term_interior,term_initial,total";

    pub fn csv_row(&self) -> String {
        let s = &self.weight_stats;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.n_r,
            self.n_0,
            self.delta,
            self.nu,
            self.lambda0,
            self.lambda1,
            self.c1,
            self.c2,
            self.c_z,
            self.c_z0,
            s.b_f1,
            s.b_f2,
            s.b_f3,
            s.b_f4,
            s.b_f5,
            s.b_w,
            s.b_a,
            self.term_interior,
            self.term_initial,
            self.total
        )
    }
}

fn interior_numerator<T: Scalar>(stats: &WeightStats<T>, c_z: T, c1: T, c2: T) -> T {
    stats.b_w * c_z * c1 + c2
}

fn initial_numerator<T: Scalar>(stats: &WeightStats<T>, sc: &SigmaConstants<T>, lambda1: T, c_z0: T) -> T {
    lambda1 * stats.b_a * (stats.b_w * c_z0 * sc.l_sigma + sc.c0.abs())
}

pub fn generalization_bound<T: Scalar>(
    stats: &WeightStats<T>,
    sc: &SigmaConstants<T>,
    loss_cfg: &LossConfig<T>,
    n_r: usize,
    n_0: usize,
    c_z: T,
    c_z0: T,
) -> Result<BoundReport<T>> {
    generalization_bound_with(stats, sc, loss_cfg, n_r, n_0, c_z, c_z0, NuTerm::Statement)
}

#[allow(clippy::too_many_arguments)]
pub fn generalization_bound_with<T: Scalar>(
    stats: &WeightStats<T>,
    sc: &SigmaConstants<T>,
    loss_cfg: &LossConfig<T>,
    n_r: usize,
    n_0: usize,
    c_z: T,
    c_z0: T,
    nu_term: NuTerm,
) -> Result<BoundReport<T>> {
    if n_r == 0 || n_0 == 0 {
        return Err(Error::config("N_r and N_0 must be at least 1"));
    }
    loss_cfg.validate()?;
    let mut warnings = Vec::new();
    if loss_cfg.lambda0 == T::zero() {
        warnings.push("lambda0 = 0: divergence penalty is off".to_string());
    }
    if loss_cfg.lambda1 == T::zero() {
        warnings.push("lambda1 = 0: initial-condition penalty is off".to_string());
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let (c1, c2) = theorem_constants_with(stats, sc, loss_cfg.nu, loss_cfg.lambda0, nu_term);
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    let term_interior = two * loss_cfg.delta * interior_numerator(stats, c_z, c1, c2)
        / T::from_usize_lossy(n_r).sqrt();
    let term_initial = four * loss_cfg.delta * initial_numerator(stats, sc, loss_cfg.lambda1, c_z0)
        / T::from_usize_lossy(n_0).sqrt();
    Ok(BoundReport {
        c1,
        c2,
        c_z,
        c_z0,
        term_interior,
        term_initial,
        total: term_interior + term_initial,
        delta: loss_cfg.delta,
        nu: loss_cfg.nu,
        lambda0: loss_cfg.lambda0,
        lambda1: loss_cfg.lambda1,
        n_r,
        n_0,
        nu_term,
        sigma_constants: *sc,
        weight_stats: *stats,
        warnings,
    })
}

/// Smallest `n >= 1` with `coef / √n <= target`.
fn smallest_count<T: Scalar>(coef: T, target: T) -> usize {
    if coef <= T::zero() {
        return 1;
    }
    let term = |n: usize| coef / T::from_usize_lossy(n).sqrt();
    let guess = (coef / target).powi(2).ceil().as_f64();
    let mut n = if guess.is_finite() && guess >= 1.0 { guess as usize } else { 1 };
    while n > 1 && term(n - 1) <= target {
        n -= 1;
    }
    while term(n) > target {
        n += 1;
    }
    n
}

/// Collocation counts that put each bound term at or below `eps / 2`.
pub fn sample_planner<T: Scalar>(
    eps: T,
    stats: &WeightStats<T>,
    sc: &SigmaConstants<T>,
    loss_cfg: &LossConfig<T>,
    c_z: T,
    c_z0: T,
) -> Result<(usize, usize)> {
    if !(eps > T::zero()) || !eps.is_finite() {
        return Err(Error::config("eps must be positive"));
    }
    let (c1, c2) = theorem_constants(stats, sc, loss_cfg.nu, loss_cfg.lambda0);
    let half = eps / T::lit(2.0);
    let coef_r = T::lit(2.0) * loss_cfg.delta * interior_numerator(stats, c_z, c1, c2);
    let coef_0 = T::lit(4.0) * loss_cfg.delta * initial_numerator(stats, sc, loss_cfg.lambda1, c_z0);
    Ok((smallest_count(coef_r, half), smallest_count(coef_0, half)))
}

/// Suggested `N_r / N_0`; undefined when the initial term vanishes.
pub fn point_ratio<T: Scalar>(
    stats: &WeightStats<T>,
    sc: &SigmaConstants<T>,
    loss_cfg: &LossConfig<T>,
    c_z: T,
    c_z0: T,
) -> Result<T> {
    let (c1, c2) = theorem_constants(stats, sc, loss_cfg.nu, loss_cfg.lambda0);
    let den = initial_numerator(stats, sc, loss_cfg.lambda1, c_z0);
    if den == T::zero() {
        return Err(Error::Undefined("initial term vanishes; ratio undefined".into()));
    }
    Ok((interior_numerator(stats, c_z, c1, c2) / den).powi(2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::{constants, ActivationSpec};
    use crate::linalg::Matrix;
    use crate::network::init_weights;
    use approx::assert_abs_diff_eq;

    fn unit_stats() -> WeightStats<f64> {
        WeightStats {
            b_f1: 1.0,
            b_f2: 1.0,
            b_f3: 1.0,
            b_f4: 1.0,
            b_f5: 1.0,
            b_w: 1.0,
            b_a: 1.0,
        }
    }

    fn cfg() -> LossConfig<f64> {
        LossConfig {
            delta: 1.0,
            lambda0: 1.0,
            lambda1: 0.3,
            nu: 0.01,
        }
    }

    #[test]
    fn zero_weights_have_zero_stats() {
        let w = init_weights::<f64>(2, 7, 1, 0.0).unwrap();
        let s = weight_stats(&w);
        assert_eq!([s.b_f1, s.b_f2, s.b_f3, s.b_f4, s.b_f5, s.b_w], [0.0; 6]);
    }

    #[test]
    fn hand_summed_stats() {
        let w = PinnWeights::new(
            Matrix::from_rows(vec![vec![1.0, 2.0, 3.0]]).unwrap(),
            Matrix::from_rows(vec![vec![1.0], vec![-1.0]]).unwrap(),
            vec![2.0],
        )
        .unwrap();
        let s = weight_stats(&w);
        assert_eq!((s.b_f1, s.b_f2, s.b_f4, s.b_a), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(s.b_f3, 6.0);
        assert_eq!(s.b_f5, 1.0);
        assert_eq!(s.b_w, 14f64.sqrt());
    }

    #[test]
    fn constants_arithmetic() {
        let tanh = constants::<f64>(ActivationSpec::tanh());
        let (c1, c2) = theorem_constants(&unit_stats(), &tanh, 0.01, 1.0);
        assert_abs_diff_eq!(c1, 14.04, epsilon = 1e-12);
        assert_abs_diff_eq!(c2, 3.0, epsilon = 1e-12);
        let cube = constants::<f64>(ActivationSpec::tanh_cubed());
        let (_, c2) = theorem_constants(&unit_stats(), &cube, 0.3, 2.0);
        assert_eq!(c2, 0.0);
        let zero = WeightStats { b_f1: 0.0, b_f2: 0.0, b_f3: 0.0, b_f4: 0.0, b_f5: 0.0, ..unit_stats() };
        assert_eq!(theorem_constants(&zero, &tanh, 0.01, 1.0), (0.0, 0.0));
    }

    #[test]
    fn derivation_variant_changes_only_nu_term() {
        let tanh = constants::<f64>(ActivationSpec::tanh());
        let (a, _) = theorem_constants_with(&unit_stats(), &tanh, 0.01, 1.0, NuTerm::Statement);
        let (b, _) = theorem_constants_with(&unit_stats(), &tanh, 0.01, 1.0, NuTerm::Derivation);
        // 2ν(L_σ″) = 0.04 vs 2ν(L_σ′ + L_σ) = 0.04
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        let cube = constants::<f64>(ActivationSpec::tanh_cubed());
        let (a, _) = theorem_constants_with(&unit_stats(), &cube, 0.1, 1.0, NuTerm::Statement);
        let (b, _) = theorem_constants_with(&unit_stats(), &cube, 0.1, 1.0, NuTerm::Derivation);
        assert_abs_diff_eq!(a - b, 0.2 * (6.0 - 2.15), epsilon = 1e-12);
    }

    #[test]
    fn worked_bound_example() {
        let tanh = constants::<f64>(ActivationSpec::tanh());
        let r = generalization_bound(&unit_stats(), &tanh, &cfg(), 100, 2500, 1.0, 0.8165).unwrap();
        assert_abs_diff_eq!(r.term_interior, 3.408, epsilon = 1e-12);
        assert_abs_diff_eq!(r.term_initial, 0.019596, epsilon = 1e-12);
        assert_abs_diff_eq!(r.total, 3.427596, epsilon = 1e-12);
        let r4 = generalization_bound(&unit_stats(), &tanh, &cfg(), 400, 2500, 1.0, 0.8165).unwrap();
        assert_eq!(r4.term_interior * 2.0, r.term_interior);
    }

    #[test]
    fn zero_weights_tanh_cubed_bound_is_zero() {
        let w = init_weights::<f64>(2, 7, 1, 0.0).unwrap();
        let mut s = weight_stats(&w);
        s.b_a = 0.0;
        let cube = constants::<f64>(ActivationSpec::tanh_cubed());
        let r = generalization_bound(&s, &cube, &cfg(), 10, 10, 1.0, 0.8).unwrap();
        assert_eq!(r.total, 0.0);
        assert_eq!(sample_planner(0.1, &s, &cube, &cfg(), 1.0, 0.8).unwrap(), (1, 1));
    }

    #[test]
    fn planner_inverts_the_worked_example() {
        let tanh = constants::<f64>(ActivationSpec::tanh());
        let (n_r, _) = sample_planner(6.816, &unit_stats(), &tanh, &cfg(), 1.0, 0.8165).unwrap();
        assert_eq!(n_r, 100);
        let (n_r, _) = sample_planner(6.855192, &unit_stats(), &tanh, &cfg(), 1.0, 0.8165).unwrap();
        assert_eq!(n_r, 99);
        assert!(sample_planner(0.0, &unit_stats(), &tanh, &cfg(), 1.0, 1.0).is_err());
    }

    #[test]
    fn halving_eps_quadruples_counts() {
        let tanh = constants::<f64>(ActivationSpec::tanh());
        let (a_r, a_0) = sample_planner(0.5, &unit_stats(), &tanh, &cfg(), 1.0, 0.8165).unwrap();
        let (b_r, b_0) = sample_planner(0.25, &unit_stats(), &tanh, &cfg(), 1.0, 0.8165).unwrap();
        assert!((b_r as f64 / a_r as f64 - 4.0).abs() < 4.0 / a_r as f64 + 1e-9);
        assert!((b_0 as f64 / a_0 as f64 - 4.0).abs() < 4.0 / a_0 as f64 + 1e-9);
    }

    #[test]
    fn ratio_cross_checks_planner() {
        let tanh = constants::<f64>(ActivationSpec::tanh());
        let ratio = point_ratio(&unit_stats(), &tanh, &cfg(), 1.0, 0.8165).unwrap();
        let (n_r, n_0) = sample_planner(0.01, &unit_stats(), &tanh, &cfg(), 1.0, 0.8165).unwrap();
        let planned = n_r as f64 / n_0 as f64;
        assert!((planned * 4.0 - ratio).abs() / ratio < 1e-3, "{planned} vs {ratio}");
        let double = LossConfig { lambda1: 0.6, ..cfg() };
        let r2 = point_ratio(&unit_stats(), &tanh, &double, 1.0, 0.8165).unwrap();
        assert_abs_diff_eq!(r2 * 4.0, ratio, epsilon = 1e-9 * ratio);
        let no_head = WeightStats { b_a: 0.0, ..unit_stats() };
        let cube = constants::<f64>(ActivationSpec::tanh_cubed());
        assert!(matches!(
            point_ratio(&no_head, &cube, &cfg(), 1.0, 0.8),
            Err(Error::Undefined(_))
        ));
    }

    #[test]
    fn zero_penalties_warn() {
        let tanh = constants::<f64>(ActivationSpec::tanh());
        let c = LossConfig { lambda0: 0.0, lambda1: 0.0, ..cfg() };
        let r = generalization_bound(&unit_stats(), &tanh, &c, 10, 10, 1.0, 1.0).unwrap();
        assert_eq!(r.warnings.len(), 2);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn stats_strategy() -> impl Strategy<Value = WeightStats<f64>> {
            proptest::array::uniform7(0.0f64..5.0).prop_map(|v| WeightStats {
                b_f1: v[0],
                b_f2: v[1],
                b_f3: v[2],
                b_f4: v[3],
                b_f5: v[4],
                b_w: v[5],
                b_a: v[6],
            })
        }

        proptest! {
            #[test]
            fn stats_homogeneity(seed in 0u64..500, c in 0.1f64..4.0) {
                let w = init_weights::<f64>(2, 5, seed, 0.8).unwrap();
                let scaled = w.with_w(w.w().scale(c)).unwrap();
                let (a, b) = (weight_stats(&w), weight_stats(&scaled));
                let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * y.abs().max(1.0);
                prop_assert!(close(b.b_f1, c * a.b_f1));
                prop_assert!(close(b.b_f2, c * a.b_f2));
                prop_assert!(close(b.b_f3, c * a.b_f3));
                prop_assert!(close(b.b_f4, c * c * a.b_f4));
                prop_assert!(close(b.b_f5, c * a.b_f5));
                prop_assert!(close(b.b_w, c * a.b_w));
                prop_assert_eq!(b.b_a, a.b_a);
            }

            #[test]
            fn bound_monotone(stats in stats_strategy(), which in 0usize..11, bump in 0.01f64..2.0,
                              n_r in 1usize..5000, n_0 in 1usize..5000) {
                let sc = constants::<f64>(ActivationSpec::tanh());
                let base = generalization_bound(&stats, &sc, &cfg(), n_r, n_0, 1.0, 0.8).unwrap().total;
                let mut s = stats;
                let mut c = cfg();
                let (mut cz, mut cz0) = (1.0, 0.8);
                match which {
                    0 => s.b_f1 += bump, 1 => s.b_f2 += bump, 2 => s.b_f3 += bump,
                    3 => s.b_f4 += bump, 4 => s.b_f5 += bump, 5 => s.b_w += bump,
                    6 => s.b_a += bump, 7 => c.delta += bump, 8 => c.nu += bump,
                    9 => { c.lambda0 += bump; c.lambda1 += bump; }
                    _ => { cz += bump; cz0 += bump; }
                }
                let bumped = generalization_bound(&s, &sc, &c, n_r, n_0, cz, cz0).unwrap().total;
                prop_assert!(bumped >= base);
                let more = generalization_bound(&stats, &sc, &cfg(), n_r + 1, n_0 + 1, 1.0, 0.8).unwrap().total;
                if base > 0.0 { prop_assert!(more < base); }
            }

            #[test]
            fn planner_meets_eps(stats in stats_strategy(), eps in 0.01f64..10.0) {
                let sc = constants::<f64>(ActivationSpec::tanh());
                let (n_r, n_0) = sample_planner(eps, &stats, &sc, &cfg(), 1.0, 0.8165).unwrap();
                let r = generalization_bound(&stats, &sc, &cfg(), n_r, n_0, 1.0, 0.8165).unwrap();
                prop_assert!(r.total <= eps);
            }
        }
    }
}
