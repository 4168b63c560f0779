//! Copula-based correlation: the quantile-level dependence measure
//! `[C(tau, iota) - tau iota] / sqrt(tau(1-tau) iota(1-iota))`, its plug-in
//! asymptotic variance and the two-covariate comparison test.

use serde::Serialize;

use crate::empirical::{
    check_level, equantile, nw_with_bandwidth, pseudo_observations, psi, quantile_rank, two_sided_p, KernelConfig,
    SortedSample,
};
use crate::error::{Error, Result};

/// Inference is only justified on a compact sub-square of the unit square.
pub const INFERENCE_RANGE: (f64, f64) = (0.05, 0.95);
/// Minimum sample size for the variance estimators.
pub const MIN_INFERENCE_N: usize = 20;
/// Variances at or below this are treated as degenerate.
pub const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuantilePair {
    pub tau: f64,
    pub iota: f64,
}

impl QuantilePair {
    pub fn new(tau: f64, iota: f64) -> Result<Self> {
        check_level(tau)?;
        check_level(iota)?;
        Ok(Self { tau, iota })
    }

    pub fn median() -> Self {
        Self { tau: 0.5, iota: 0.5 }
    }

    /// Both levels clamped to [`INFERENCE_RANGE`].
    pub fn clamped(self) -> Self {
        let (lo, hi) = INFERENCE_RANGE;
        Self { tau: self.tau.clamp(lo, hi), iota: self.iota.clamp(lo, hi) }
    }

    /// `sqrt(tau(1-tau) iota(1-iota))`, the normalizing constant.
    pub fn scale(&self) -> f64 {
        (self.tau * (1.0 - self.tau) * self.iota * (1.0 - self.iota)).sqrt()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        check_level(self.tau)?;
        check_level(self.iota)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationEstimate {
    pub value: f64,
    pub pair: QuantilePair,
    pub n: usize,
    pub variance: Option<f64>,
    pub z_stat: Option<f64>,
    pub p_value: Option<f64>,
}

impl CorrelationEstimate {
    pub(crate) fn with_inference(mut self, variance: f64) -> Result<Self> {
        if !(variance > VARIANCE_FLOOR) {
            return Err(Error::DegenerateVariance { value: variance });
        }
        let z = (self.n as f64).sqrt() * self.value / variance.sqrt();
        self.variance = Some(variance);
        self.z_stat = Some(z);
        self.p_value = Some(two_sided_p(z));
        Ok(self)
    }
}

/// Outcome of a test of equal dependence strength of two covariates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EqualityTest {
    pub delta: f64,
    pub variance: f64,
    pub z_stat: f64,
    pub p_value: f64,
}

impl EqualityTest {
    pub(crate) fn from_parts(delta: f64, variance: f64, n: usize) -> Result<Self> {
        if !(variance > VARIANCE_FLOOR) {
            return Err(Error::DegenerateVariance { value: variance });
        }
        let z_stat = (n as f64).sqrt() * delta / variance.sqrt();
        Ok(Self { delta, variance, z_stat, p_value: two_sided_p(z_stat) })
    }
}

pub(crate) fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { expected: a.len(), got: b.len() });
    }
    Ok(())
}

pub(crate) fn check_inference_n(n: usize, needed: usize) -> Result<()> {
    if n < needed {
        return Err(Error::InsufficientData { needed, got: n });
    }
    Ok(())
}

/// `n^-1 sum psi_tau(r_y) psi_iota(r_x) / scale`, shared with the partial
/// correlation so that a constant-only design reproduces this bit for bit.
pub(crate) fn score_product(ry: &[f64], rx: &[f64], pair: QuantilePair) -> f64 {
    let s: f64 = ry.iter().zip(rx).map(|(&a, &b)| psi(pair.tau, a) * psi(pair.iota, b)).sum();
    s / ry.len() as f64 / pair.scale()
}

fn quantile_of(v: &[f64], level: f64) -> Result<f64> {
    equantile(&SortedSample::new(v)?, level)
}

pub fn cc_estimate(y: &[f64], x: &[f64], pair: QuantilePair) -> Result<CorrelationEstimate> {
    check_lengths(y, x)?;
    pair.validate()?;
    let n = y.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let qy = quantile_of(y, pair.tau)?;
    let qx = quantile_of(x, pair.iota)?;
    let ry: Vec<f64> = y.iter().map(|v| v - qy).collect();
    let rx: Vec<f64> = x.iter().map(|v| v - qx).collect();
    Ok(CorrelationEstimate {
        value: score_product(&ry, &rx, pair),
        pair,
        n,
        variance: None,
        z_stat: None,
        p_value: None,
    })
}

/// `P(target <= its quantile | other = its quantile)`, estimated by kernel
/// regression of the indicator on the pseudo-observations of `other` at the
/// rank of its empirical quantile, clipped to [0, 1]. Smoothing on the rank
/// scale keeps the estimate invariant to monotone transforms and insensitive
/// to heavy tails; a fixed bandwidth is therefore on the (0, 1] scale.
fn conditional_at_quantile(
    other_ranks: &[f64],
    target_low: &[bool],
    other_level: f64,
    cfg: &KernelConfig,
) -> Result<f64> {
    let n = other_ranks.len();
    let u0 = quantile_rank(n, other_level) as f64 / n as f64;
    let h = cfg.bandwidth_for(other_ranks)?;
    let ind: Vec<f64> = target_low.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    Ok(nw_with_bandwidth(other_ranks, &ind, u0, h, cfg.kernel)?.clamp(0.0, 1.0))
}

/// Per-observation influence values of the correlation estimate,
/// `[1{y<=q_y, x<=q_x} - s_xy 1{y<=q_y} - s_yx 1{x<=q_x}] / scale`, where
/// `s_xy = P(X <= q_x | Y = q_y)` and `s_yx = P(Y <= q_y | X = q_x)`.
/// Their empirical variance estimates the asymptotic variance of
/// `sqrt(n) * value`.
pub fn cc_influence(y: &[f64], x: &[f64], pair: QuantilePair, cfg: &KernelConfig) -> Result<Vec<f64>> {
    check_lengths(y, x)?;
    pair.validate()?;
    cfg.validate()?;
    check_inference_n(y.len(), MIN_INFERENCE_N)?;
    let qy = quantile_of(y, pair.tau)?;
    let qx = quantile_of(x, pair.iota)?;
    let ylow: Vec<bool> = y.iter().map(|&v| v <= qy).collect();
    let xlow: Vec<bool> = x.iter().map(|&v| v <= qx).collect();
    let s_xy = conditional_at_quantile(&pseudo_observations(y), &xlow, pair.tau, cfg)?;
    let s_yx = conditional_at_quantile(&pseudo_observations(x), &ylow, pair.iota, cfg)?;
    let c = pair.scale();
    Ok(ylow
        .iter()
        .zip(&xlow)
        .map(|(&a, &b)| {
            let (a, b) = (a as u8 as f64, b as u8 as f64);
            (a * b - s_xy * a - s_yx * b) / c
        })
        .collect())
}

/// Centered empirical covariance `n^-1 sum (a_i - a_bar)(b_i - b_bar)`.
pub(crate) fn empirical_cov(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n
}

pub fn cc_variance(y: &[f64], x: &[f64], pair: QuantilePair, cfg: &KernelConfig) -> Result<f64> {
    let xi = cc_influence(y, x, pair, cfg)?;
    Ok(empirical_cov(&xi, &xi).max(0.0))
}

/// Asymptotic covariance between the estimates at two quantile pairs.
pub fn cc_offdiag_cov(
    y: &[f64],
    x: &[f64],
    pair1: QuantilePair,
    pair2: QuantilePair,
    cfg: &KernelConfig,
) -> Result<f64> {
    let a = cc_influence(y, x, pair1, cfg)?;
    if pair1 == pair2 {
        return Ok(empirical_cov(&a, &a).max(0.0));
    }
    let b = cc_influence(y, x, pair2, cfg)?;
    Ok(empirical_cov(&a, &b))
}

/// Test of zero correlation at `pair` (clamped to [`INFERENCE_RANGE`]).
pub fn cc_test_zero(y: &[f64], x: &[f64], pair: QuantilePair, cfg: &KernelConfig) -> Result<CorrelationEstimate> {
    let pair = pair.clamped();
    let variance = cc_variance(y, x, pair, cfg)?;
    cc_estimate(y, x, pair)?.with_inference(variance)
}

/// Test of `cc(y, x1) = cc(y, x2)` at `pair` (clamped to [`INFERENCE_RANGE`]).
pub fn cc_test_equal(
    y: &[f64],
    x1: &[f64],
    x2: &[f64],
    pair: QuantilePair,
    cfg: &KernelConfig,
) -> Result<EqualityTest> {
    check_lengths(y, x2)?;
    let pair = pair.clamped();
    let delta = cc_estimate(y, x1, pair)?.value - cc_estimate(y, x2, pair)?.value;
    let a = cc_influence(y, x1, pair, cfg)?;
    let b = cc_influence(y, x2, pair, cfg)?;
    let eta: Vec<f64> = a.iter().zip(&b).map(|(u, v)| u - v).collect();
    EqualityTest::from_parts(delta, empirical_cov(&eta, &eta).max(0.0), y.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| StandardNormal.sample(rng)).collect()
    }

    /// Double-loop evaluation of the joint ECDF form.
    fn brute_force(y: &[f64], x: &[f64], tau: f64, iota: f64) -> f64 {
        let n = y.len();
        let pick = |v: &[f64], level: f64| {
            let mut s = v.to_vec();
            s.sort_by(f64::total_cmp);
            s[((n as f64 * level - 1e-9).ceil() as usize).clamp(1, n) - 1]
        };
        let (qy, qx) = (pick(y, tau), pick(x, iota));
        let mut s = 0.0;
        for i in 0..n {
            let a = if y[i] <= qy { 1.0 } else { 0.0 };
            let b = if x[i] <= qx { 1.0 } else { 0.0 };
            s += (tau - a) * (iota - b);
        }
        s / n as f64 / (tau * (1.0 - tau) * iota * (1.0 - iota)).sqrt()
    }

    #[test]
    fn comonotone_and_countermonotone_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = normals(&mut rng, 100);
        assert_eq!(cc_estimate(&y, &y, QuantilePair::median()).unwrap().value, 1.0);
        let v = cc_estimate(&[1.0, 2.0, 3.0, 4.0], &[4.0, 3.0, 2.0, 1.0], QuantilePair::median()).unwrap();
        assert_eq!(v.value, -1.0);
        // At odd n the score form stays exactly 1; the joint-ECDF form would
        // give (51/101 - 0.25)/0.25.
        let y = normals(&mut rng, 101);
        assert_eq!(cc_estimate(&y, &y, QuantilePair::median()).unwrap().value, 1.0);
    }

    #[test]
    fn ecdf_form_agrees_on_integer_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y = normals(&mut rng, 40);
        let x = normals(&mut rng, 40);
        let pair = QuantilePair::new(0.25, 0.75).unwrap();
        let qy = quantile_of(&y, 0.25).unwrap();
        let qx = quantile_of(&x, 0.75).unwrap();
        let joint = (0..40).filter(|&i| y[i] <= qy && x[i] <= qx).count() as f64 / 40.0;
        let ecdf_form = (joint - 0.25 * 0.75) / pair.scale();
        assert!((cc_estimate(&y, &x, pair).unwrap().value - ecdf_form).abs() < 1e-12);
    }

    #[test]
    fn independence_gives_small_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 10_000;
        let y = normals(&mut rng, n);
        let x = normals(&mut rng, n);
        let v = cc_estimate(&y, &x, QuantilePair::median()).unwrap().value;
        assert!(v.abs() <= 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn rejects_short_or_mismatched_input() {
        assert!(matches!(
            cc_estimate(&[1.0], &[1.0], QuantilePair::median()),
            Err(Error::InsufficientData { .. })
        ));
        assert!(matches!(
            cc_estimate(&[1.0, 2.0], &[1.0], QuantilePair::median()),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(QuantilePair::new(0.0, 0.5).is_err());
    }

    proptest! {
        #[test]
        fn matches_brute_force(seed in any::<u64>(), n in 2usize..=12, tau in 0.05f64..0.95, iota in 0.05f64..0.95) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y = normals(&mut rng, n);
            let x = normals(&mut rng, n);
            let pair = QuantilePair::new(tau, iota).unwrap();
            let v = cc_estimate(&y, &x, pair).unwrap().value;
            prop_assert!((v - brute_force(&y, &x, tau, iota)).abs() < 1e-14);
        }

        #[test]
        fn bounded_on_integer_grid(seed in any::<u64>(), n in 2usize..=40, kt in 1usize..40, ki in 1usize..40) {
            // The normalization bound needs n*tau and n*iota to be integers;
            // off the grid small samples can exceed it.
            prop_assume!(kt < n && ki < n);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y = normals(&mut rng, n);
            let x = normals(&mut rng, n);
            let pair = QuantilePair::new(kt as f64 / n as f64, ki as f64 / n as f64).unwrap();
            prop_assert!(cc_estimate(&y, &x, pair).unwrap().value.abs() <= 1.0 + 1e-12);
        }

        #[test]
        fn monotone_invariance_is_exact(seed in any::<u64>(), n in 5usize..60) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y = normals(&mut rng, n);
            let x = normals(&mut rng, n);
            let pair = QuantilePair::new(rng.random_range(0.1..0.9), rng.random_range(0.1..0.9)).unwrap();
            let gy: Vec<f64> = y.iter().map(|v| v.exp()).collect();
            let hx: Vec<f64> = x.iter().map(|v| v.powi(3) + 2.0).collect();
            prop_assert_eq!(cc_estimate(&y, &x, pair).unwrap().value, cc_estimate(&gy, &hx, pair).unwrap().value);
        }

        #[test]
        fn swapping_roles_swaps_levels(seed in any::<u64>(), n in 2usize..40, tau in 0.05f64..0.95, iota in 0.05f64..0.95) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y = normals(&mut rng, n);
            let x = normals(&mut rng, n);
            let a = cc_estimate(&y, &x, QuantilePair::new(tau, iota).unwrap()).unwrap().value;
            let b = cc_estimate(&x, &y, QuantilePair::new(iota, tau).unwrap()).unwrap().value;
            prop_assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn variance_near_one_under_independence() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y = normals(&mut rng, 2000);
        let x = normals(&mut rng, 2000);
        let v = cc_variance(&y, &x, QuantilePair::median(), &KernelConfig::default()).unwrap();
        assert!((v - 1.0).abs() < 0.15, "{v}");
    }

    #[test]
    fn variance_below_one_for_identical_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = normals(&mut rng, 500);
        let v = cc_variance(&y, &y, QuantilePair::median(), &KernelConfig::default()).unwrap();
        assert!(v < 1.0);
    }

    #[test]
    fn variance_is_shift_and_monotone_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let y = normals(&mut rng, 300);
        let x: Vec<f64> = y.iter().map(|v| v + { let e: f64 = StandardNormal.sample(&mut rng); e }).collect();
        let cfg = KernelConfig::default();
        let pair = QuantilePair::new(0.3, 0.6).unwrap();
        let base = cc_variance(&y, &x, pair, &cfg).unwrap();
        let ys: Vec<f64> = y.iter().map(|v| v + 17.0).collect();
        let xs: Vec<f64> = x.iter().map(|v| (v - 3.0).exp()).collect();
        assert_eq!(base, cc_variance(&ys, &xs, pair, &cfg).unwrap());
    }

    #[test]
    fn offdiagonal_covariance_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let y = normals(&mut rng, 2000);
        let x = normals(&mut rng, 2000);
        let cfg = KernelConfig::default();
        let p1 = QuantilePair::new(0.25, 0.25).unwrap();
        let p2 = QuantilePair::new(0.75, 0.75).unwrap();
        let c12 = cc_offdiag_cov(&y, &x, p1, p2, &cfg).unwrap();
        let c21 = cc_offdiag_cov(&y, &x, p2, p1, &cfg).unwrap();
        let v1 = cc_variance(&y, &x, p1, &cfg).unwrap();
        let v2 = cc_variance(&y, &x, p2, &cfg).unwrap();
        assert!((c12 - c21).abs() < 1e-15);
        assert!(c12.abs() <= (v1 * v2).sqrt());
        assert_eq!(cc_offdiag_cov(&y, &x, p1, p1, &cfg).unwrap(), v1);
    }

    #[test]
    fn zero_test_on_identical_and_minimal_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let y = normals(&mut rng, 200);
        let t = cc_test_zero(&y, &y, QuantilePair::median(), &KernelConfig::default()).unwrap();
        assert!(t.p_value.unwrap() < 1e-6);
        let y = normals(&mut rng, 20);
        let x = normals(&mut rng, 20);
        let t = cc_test_zero(&y, &x, QuantilePair::median(), &KernelConfig::default()).unwrap();
        assert!(t.z_stat.unwrap().is_finite());
        let p = t.p_value.unwrap();
        assert!((p - two_sided_p(t.z_stat.unwrap())).abs() < 1e-15);
        assert!(cc_test_zero(&y[..19], &x[..19], QuantilePair::median(), &KernelConfig::default()).is_err());
    }

    #[test]
    fn inference_clamps_extreme_levels() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let y = normals(&mut rng, 100);
        let x = normals(&mut rng, 100);
        let t = cc_test_zero(&y, &x, QuantilePair::new(0.01, 0.99).unwrap(), &KernelConfig::default()).unwrap();
        assert_eq!(t.pair, QuantilePair::new(0.05, 0.95).unwrap());
    }

    #[test]
    fn equality_test_degenerates_for_identical_covariates() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let y = normals(&mut rng, 100);
        let x = normals(&mut rng, 100);
        let err = cc_test_equal(&y, &x, &x, QuantilePair::median(), &KernelConfig::default()).unwrap_err();
        assert!(matches!(err, Error::DegenerateVariance { .. }));
    }

    #[test]
    fn equality_variance_near_two_under_mutual_independence() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let y = normals(&mut rng, 3000);
        let x1 = normals(&mut rng, 3000);
        let x2 = normals(&mut rng, 3000);
        let t = cc_test_equal(&y, &x1, &x2, QuantilePair::median(), &KernelConfig::default()).unwrap();
        assert!((t.variance - 2.0).abs() < 0.25, "{}", t.variance);
    }
}
