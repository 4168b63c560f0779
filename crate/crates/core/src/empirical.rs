//! Order statistics, empirical distribution functions and Gaussian kernel
//! smoothers shared by the correlation estimators.

use std::f64::consts::PI;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// A sample sorted in ascending order, housing the empirical CDF and its
/// generalized inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedSample {
    values: Vec<f64>,
}

impl SortedSample {
    pub fn new(data: &[f64]) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        if data.iter().any(|v| v.is_nan()) {
            return Err(Error::Domain("sample contains NaN".into()));
        }
        let mut values = data.to_vec();
        values.sort_by(f64::total_cmp);
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of sample values `<= x`.
    pub fn count_le(&self, x: f64) -> usize {
        self.values.partition_point(|&v| v <= x)
    }
}

/// Right-continuous empirical CDF: `#{i : values[i] <= x} / n`.
pub fn ecdf(sample: &SortedSample, x: f64) -> f64 {
    sample.count_le(x) as f64 / sample.len() as f64
}

/// Index (1-based) of the order statistic returned by [`equantile`]:
/// `ceil(n * tau)`, guarded against floating noise in the product.
pub fn quantile_rank(n: usize, tau: f64) -> usize {
    let prod = n as f64 * tau;
    let nearest = prod.round();
    let k = if (prod - nearest).abs() <= 1e-9 * prod.max(1.0) {
        nearest
    } else {
        prod.ceil()
    };
    (k as usize).clamp(1, n)
}

/// Left-continuous generalized inverse `inf{x : F_n(x) >= tau}`, which is
/// the `ceil(n tau)`-th order statistic.
pub fn equantile(sample: &SortedSample, tau: f64) -> Result<f64> {
    check_level(tau)?;
    Ok(sample.values[quantile_rank(sample.len(), tau) - 1])
}

pub(crate) fn check_level(w: f64) -> Result<()> {
    if w > 0.0 && w < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("level {w} is not in (0, 1)")))
    }
}

/// Quantile score `w - 1{u <= 0}`.
#[inline]
pub fn psi(w: f64, u: f64) -> f64 {
    if u <= 0.0 {
        w - 1.0
    } else {
        w
    }
}

/// Check (pinball) loss `u (w - 1{u <= 0})`.
#[inline]
pub fn check_loss(w: f64, u: f64) -> f64 {
    u * psi(w, u)
}

/// Empirical CDF evaluated at every observation, `F_n(x_i)`. Ties share the
/// largest rank, matching the `<=` convention of [`ecdf`].
pub fn pseudo_observations(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && x[order[end]] == x[order[start]] {
            end += 1;
        }
        let u = end as f64 / n as f64;
        for &i in &order[start..end] {
            out[i] = u;
        }
        start = end;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum Kernel {
    #[default]
    Gaussian,
}

impl Kernel {
    #[inline]
    pub fn eval(self, u: f64) -> f64 {
        match self {
            Kernel::Gaussian => (-0.5 * u * u).exp() / (2.0 * PI).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub enum Bandwidth {
    /// Silverman's rule of thumb on the smoothing coordinate.
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct KernelConfig {
    pub kernel: Kernel,
    pub bandwidth: Bandwidth,
}

impl KernelConfig {
    pub fn fixed(h: f64) -> Self {
        Self {
            kernel: Kernel::Gaussian,
            bandwidth: Bandwidth::Fixed(h),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.bandwidth {
            Bandwidth::Fixed(h) if !(h > 0.0 && h.is_finite()) => {
                Err(Error::Config(format!("bandwidth must be positive, got {h}")))
            }
            _ => Ok(()),
        }
    }

    /// Resolve the bandwidth for smoothing over `x`.
    pub fn bandwidth_for(&self, x: &[f64]) -> Result<f64> {
        self.validate()?;
        match self.bandwidth {
            Bandwidth::Fixed(h) => Ok(h),
            Bandwidth::Auto => silverman_bandwidth(x),
        }
    }
}

/// `1.06 min(sd, IQR/1.34) n^{-1/5}`; falls back to whichever spread is
/// positive when the other vanishes.
pub fn silverman_bandwidth(x: &[f64]) -> Result<f64> {
    let n = x.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let sorted = SortedSample::new(x)?;
    let iqr = equantile(&sorted, 0.75)? - equantile(&sorted, 0.25)?;
    let robust = iqr / 1.34;
    let spread = match (sd > 0.0, robust > 0.0) {
        (true, true) => sd.min(robust),
        (true, false) => sd,
        (false, true) => robust,
        (false, false) => {
            return Err(Error::DegenerateWindow { bandwidth: 0.0 });
        }
    };
    if !spread.is_finite() {
        return Err(Error::Domain("non-finite spread in bandwidth selection".into()));
    }
    Ok(1.06 * spread * (n as f64).powf(-0.2))
}

/// Nadaraya-Watson kernel regression of `y` on `x`, evaluated at `x0`.
pub fn nw_regress(x: &[f64], y: &[f64], x0: f64, cfg: &KernelConfig) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: x.len(),
        });
    }
    let h = cfg.bandwidth_for(x)?;
    nw_with_bandwidth(x, y, x0, h, cfg.kernel)
}

pub(crate) fn nw_with_bandwidth(x: &[f64], y: &[f64], x0: f64, h: f64, kernel: Kernel) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        let k = kernel.eval((x0 - xi) / h);
        num += k * yi;
        den += k;
    }
    if den <= f64::MIN_POSITIVE {
        return Err(Error::DegenerateWindow { bandwidth: h });
    }
    Ok(num / den)
}

/// Kernel density estimate of the residual distribution at zero,
/// `(n h)^{-1} sum K(-r_i / h)`.
pub fn kde_at_zero(residuals: &[f64], cfg: &KernelConfig) -> Result<f64> {
    let n = residuals.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let h = cfg.bandwidth_for(residuals)?;
    Ok(kde_with_bandwidth(residuals, h, cfg.kernel))
}

pub(crate) fn kde_with_bandwidth(residuals: &[f64], h: f64, kernel: Kernel) -> f64 {
    let s: f64 = residuals.iter().map(|&r| kernel.eval(-r / h)).sum();
    s / (residuals.len() as f64 * h)
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    std_normal().cdf(z)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// Two-sided normal p-value `2 (1 - Phi(|z|))`, computed from the upper tail
/// to keep precision for large `|z|`.
pub fn two_sided_p(z: f64) -> f64 {
    (2.0 * std_normal().sf(z.abs())).min(1.0)
}

fn std_normal() -> Normal {
    Normal::standard()
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(v: &[f64]) -> SortedSample {
        SortedSample::new(v).unwrap()
    }

    #[test]
    fn ecdf_examples() {
        assert_eq!(ecdf(&s(&[1.0, 2.0, 3.0]), 2.0), 2.0 / 3.0);
        assert_eq!(ecdf(&s(&[1.0, 2.0, 3.0]), 0.5), 0.0);
        assert_eq!(ecdf(&s(&[5.0]), 5.0), 1.0);
    }

    #[test]
    fn equantile_examples() {
        assert_eq!(equantile(&s(&[10.0, 20.0, 30.0, 40.0]), 0.5).unwrap(), 20.0);
        for tau in [0.01, 0.3, 0.99] {
            assert_eq!(equantile(&s(&[7.0]), tau).unwrap(), 7.0);
        }
        // brute force inf{x in sample : ecdf(x) >= 0.61}
        let sample = s(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let brute = sample
            .values()
            .iter()
            .copied()
            .filter(|&x| ecdf(&sample, x) >= 0.61)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(brute, 4.0);
        assert_eq!(equantile(&sample, 0.61).unwrap(), brute);
    }

    #[test]
    fn equantile_rejects_levels_outside_unit_interval() {
        let sample = s(&[1.0, 2.0]);
        for tau in [0.0, 1.0, -0.2, 1.5, f64::NAN] {
            assert!(matches!(equantile(&sample, tau), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn psi_examples() {
        assert_eq!(psi(0.5, -1.0), -0.5);
        assert_eq!(psi(0.5, 1.0), 0.5);
        assert_eq!(psi(0.25, 0.0), -0.75);
    }

    #[test]
    fn nw_examples() {
        let cfg = KernelConfig::fixed(0.7);
        let c = nw_regress(&[0.0, 1.0, 5.0], &[3.5, 3.5, 3.5], 2.2, &cfg).unwrap();
        assert!((c - 3.5).abs() < 1e-15);

        for h in [0.1, 1.0, 10.0] {
            let v = nw_regress(&[0.0, 1.0], &[0.0, 1.0], 0.5, &KernelConfig::fixed(h)).unwrap();
            assert!((v - 0.5).abs() < 1e-15);
        }

        // oracle: explicit weights phi((1 - x_i) / 0.5)
        let phi = |u: f64| (-0.5 * u * u).exp() / (2.0 * PI).sqrt();
        let w = [phi(2.0), phi(0.0), phi(-2.0)];
        let oracle = w[1] / (w[0] + w[1] + w[2]);
        let v = nw_regress(&[0.0, 1.0, 2.0], &[0.0, 1.0, 0.0], 1.0, &KernelConfig::fixed(0.5)).unwrap();
        assert!((v - oracle).abs() < 1e-12);
        assert!((v - 0.78699).abs() < 1e-3);
    }

    #[test]
    fn nw_degenerate_window() {
        let r = nw_regress(&[0.0, 1.0], &[1.0, 2.0], 1e6, &KernelConfig::fixed(1e-3));
        assert!(matches!(r, Err(Error::DegenerateWindow { .. })));
    }

    #[test]
    fn kde_examples() {
        let cfg = KernelConfig::fixed(1.0);
        assert!((kde_at_zero(&[-1.0, 1.0], &cfg).unwrap() - 0.2420).abs() < 1e-4);
        assert!((kde_at_zero(&[0.0, 0.0, 0.0], &cfg).unwrap() - 0.3989).abs() < 1e-4);
        assert!((kde_at_zero(&[3.0, -3.0, 3.0, -3.0], &cfg).unwrap() - 0.00443).abs() < 1e-5);
    }

    #[test]
    fn kernel_config_rejects_nonpositive_bandwidth() {
        assert!(KernelConfig::fixed(0.0).validate().is_err());
        assert!(KernelConfig::fixed(-1.0).bandwidth_for(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn psi_has_mean_zero_at_the_quantile() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 20_000;
        let u: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        for w in [0.1, 0.25, 0.5, 0.9] {
            let m = u.iter().map(|&ui| psi(w, ui - w)).sum::<f64>() / n as f64;
            assert!(m.abs() < 3.0 / (n as f64).sqrt(), "w={w} mean={m}");
        }
    }

    #[test]
    fn pseudo_observations_share_ranks_on_ties() {
        assert_eq!(pseudo_observations(&[3.0, 1.0, 3.0, 2.0]), vec![1.0, 0.25, 1.0, 0.5]);
    }

    #[test]
    fn two_sided_p_matches_cdf() {
        for z in [-3.0, -0.5, 0.0, 1.2, 4.0] {
            let p = 2.0 * (1.0 - normal_cdf(f64::abs(z)));
            assert!((two_sided_p(z) - p).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn ecdf_is_monotone_with_correct_limits(
            mut v in prop::collection::vec(-1e3f64..1e3, 1..40),
            a in -2e3f64..2e3,
            b in -2e3f64..2e3,
        ) {
            let sample = s(&v);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(ecdf(&sample, lo) <= ecdf(&sample, hi));
            v.sort_by(f64::total_cmp);
            prop_assert_eq!(ecdf(&sample, v[0] - 1.0), 0.0);
            prop_assert_eq!(ecdf(&sample, v[v.len() - 1]), 1.0);
        }

        #[test]
        fn equantile_is_generalized_inverse(v in prop::collection::vec(-50i32..50, 1..30)) {
            let data: Vec<f64> = v.iter().map(|&x| x as f64).collect();
            let sample = s(&data);
            for k in 1..100 {
                let tau = k as f64 / 100.0;
                let q = equantile(&sample, tau).unwrap();
                prop_assert!(data.contains(&q));
                prop_assert!(ecdf(&sample, q) >= tau);
                for &x in sample.values() {
                    if x < q {
                        prop_assert!(ecdf(&sample, x) < tau);
                    }
                }
            }
        }

        #[test]
        fn nw_shift_and_permutation_invariance(
            pts in prop::collection::vec((-5f64..5.0, -5f64..5.0), 2..20),
            c in -10f64..10.0,
            x0 in -3f64..3.0,
        ) {
            let cfg = KernelConfig::fixed(0.8);
            let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
            let base = nw_regress(&x, &y, x0, &cfg).unwrap();
            let shifted: Vec<f64> = y.iter().map(|v| v + c).collect();
            let s2 = nw_regress(&x, &shifted, x0, &cfg).unwrap();
            prop_assert!((s2 - (base + c)).abs() < 1e-9);
            let xr: Vec<f64> = x.iter().rev().copied().collect();
            let yr: Vec<f64> = y.iter().rev().copied().collect();
            let rev = nw_regress(&xr, &yr, x0, &cfg).unwrap();
            prop_assert!((rev - base).abs() < 1e-9);
        }
    }
}
