//! Copula-based partial correlation: dependence between the quantile
//! regression residuals of `y` and `x` on a conditioning design `Z`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::cc::{
    check_inference_n, check_lengths, empirical_cov, score_product, CorrelationEstimate, EqualityTest, QuantilePair,
};
use crate::empirical::{psi, KernelConfig};
use crate::error::{Error, Result};
use crate::linalg;
use crate::quantreg::{self, QuantRegFit, DEFAULT_MAX_ITER, DEFAULT_TOL};

/// Minimum sample size for the partial-correlation variance estimators.
pub const MIN_CPC_INFERENCE_N: usize = 50;
const DELTA_RIDGE: f64 = 1e-8;

/// Where the columns of a conditioning design came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "covariates", rename_all = "snake_case")]
pub enum Provenance {
    ConstantOnly,
    ExternalW,
    CovariateSubset(Vec<usize>),
    Mixed(Vec<usize>),
}

/// An `n x q` conditioning design whose first column is the constant.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningDesign {
    z: DMatrix<f64>,
    provenance: Provenance,
}

impl ConditioningDesign {
    pub fn constant_only(n: usize) -> Self {
        Self { z: DMatrix::from_element(n, 1, 1.0), provenance: Provenance::ConstantOnly }
    }

    /// Wrap an explicit matrix; the first column must be all ones.
    pub fn new(z: DMatrix<f64>, provenance: Provenance) -> Result<Self> {
        let (n, q) = z.shape();
        if q == 0 || z.column(0).iter().any(|&v| v != 1.0) {
            return Err(Error::Config("conditioning design must start with a constant column".into()));
        }
        if n <= q {
            return Err(Error::DesignTooLarge { columns: q, n });
        }
        Ok(Self { z, provenance })
    }

    /// `[1, W, X_S]` from external columns `w` and indexed covariate columns.
    pub fn from_columns(n: usize, w: &[&[f64]], covariates: &[(usize, &[f64])]) -> Result<Self> {
        for col in w.iter().copied().chain(covariates.iter().map(|c| c.1)) {
            if col.len() != n {
                return Err(Error::LengthMismatch { expected: n, got: col.len() });
            }
        }
        let q = 1 + w.len() + covariates.len();
        let mut z = DMatrix::from_element(n, q, 1.0);
        for (c, col) in w.iter().copied().chain(covariates.iter().map(|c| c.1)).enumerate() {
            z.column_mut(c + 1).copy_from_slice(col);
        }
        let idx: Vec<usize> = covariates.iter().map(|c| c.0).collect();
        let provenance = match (w.is_empty(), idx.is_empty()) {
            (true, true) => Provenance::ConstantOnly,
            (false, true) => Provenance::ExternalW,
            (true, false) => Provenance::CovariateSubset(idx),
            (false, false) => Provenance::Mixed(idx),
        };
        Self::new(z, provenance)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn q(&self) -> usize {
        self.z.ncols()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    fn check_estimable(&self) -> Result<()> {
        if self.n() <= self.q() + 2 {
            return Err(Error::DesignTooLarge { columns: self.q(), n: self.n() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CpcEstimate {
    pub estimate: CorrelationEstimate,
    /// `y` on the design at level `tau`.
    pub alpha_fit: QuantRegFit,
    /// `x` on the design at level `iota`.
    pub theta_fit: QuantRegFit,
}

/// Quantile regression of `v` on the design with default solver settings.
pub fn fit_design(design: &ConditioningDesign, v: &[f64], level: f64) -> Result<QuantRegFit> {
    check_lengths(v, &vec![0.0; design.n()])?;
    quantreg::fit(design.matrix(), v, level, DEFAULT_TOL, DEFAULT_MAX_ITER)
}

pub fn cpc_estimate(y: &[f64], x: &[f64], design: &ConditioningDesign, pair: QuantilePair) -> Result<CpcEstimate> {
    pair.validate()?;
    design.check_estimable()?;
    let alpha = fit_design(design, y, pair.tau)?;
    cpc_estimate_with_alpha(alpha, x, design, pair)
}

/// Partial correlation reusing an existing fit of `y` at level `pair.tau`.
pub fn cpc_estimate_with_alpha(
    alpha_fit: QuantRegFit,
    x: &[f64],
    design: &ConditioningDesign,
    pair: QuantilePair,
) -> Result<CpcEstimate> {
    pair.validate()?;
    design.check_estimable()?;
    if alpha_fit.residuals.len() != design.n() || alpha_fit.level != pair.tau {
        return Err(Error::Config("response fit does not match the design or level".into()));
    }
    let theta_fit = fit_design(design, x, pair.iota)?;
    let value = score_product(&alpha_fit.residuals, &theta_fit.residuals, pair);
    Ok(CpcEstimate {
        estimate: CorrelationEstimate { value, pair, n: design.n(), variance: None, z_stat: None, p_value: None },
        alpha_fit,
        theta_fit,
    })
}

/// Kernel plug-ins for the Bahadur terms of the two quantile regressions.
///
/// With `A_i = 1{e1_i <= 0}`, `B_i = 1{e2_i <= 0}` and `K_h(u) = K(u/h)/h`:
/// `delta11 = n^-1 sum K_h1(e1_i) z_i z_i'`, `delta12 = n^-1 sum K_h1(e1_i) B_i z_i`,
/// `delta22 = n^-1 sum K_h2(e2_i) z_i z_i'`, `delta21 = n^-1 sum K_h2(e2_i) A_i z_i`.
/// Each vector block is a density at zero times a kernel regression at
/// zero, so its leading (intercept) entry is a density times a conditional
/// probability already inside [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct CpcPlugins {
    pub delta11: DMatrix<f64>,
    pub delta12: DVector<f64>,
    pub delta21: DVector<f64>,
    pub delta22: DMatrix<f64>,
    pub h1: f64,
    pub h2: f64,
}

fn kernel_blocks(
    z: &DMatrix<f64>,
    own: &[f64],
    other: &[f64],
    cfg: &KernelConfig,
) -> Result<(DMatrix<f64>, DVector<f64>, f64)> {
    let n = own.len() as f64;
    let h = cfg.bandwidth_for(own)?;
    let k: Vec<f64> = own.iter().map(|&r| cfg.kernel.eval(r / h) / (n * h)).collect();
    let kb: Vec<f64> = k.iter().zip(other).map(|(&ki, &r)| if r <= 0.0 { ki } else { 0.0 }).collect();
    Ok((linalg::weighted_gram(z, &k), linalg::weighted_colsum(z, &kb), h))
}

pub fn cpc_plugins(
    design: &ConditioningDesign,
    alpha_fit: &QuantRegFit,
    theta_fit: &QuantRegFit,
    cfg: &KernelConfig,
) -> Result<CpcPlugins> {
    cfg.validate()?;
    let (e1, e2) = (&alpha_fit.residuals, &theta_fit.residuals);
    let (delta11, delta12, h1) = kernel_blocks(design.matrix(), e1, e2, cfg)?;
    let (delta22, delta21, h2) = kernel_blocks(design.matrix(), e2, e1, cfg)?;
    Ok(CpcPlugins { delta11, delta12, delta21, delta22, h1, h2 })
}

fn ridge_solve(m: &DMatrix<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    let inv = linalg::ridge_inverse(m, DELTA_RIDGE).ok_or(Error::DegenerateVariance { value: 0.0 })?;
    Ok(inv * v)
}

/// Per-observation influence values of the partial correlation,
/// `[A_i B_i + a' z_i psi_tau(e1_i) + b' z_i psi_iota(e2_i)] / scale` with
/// `a = delta11^-1 delta12` and `b = delta22^-1 delta21`. Their empirical
/// variance estimates the asymptotic variance of `sqrt(n) * value`.
pub fn cpc_influence_from_fits(
    design: &ConditioningDesign,
    alpha_fit: &QuantRegFit,
    theta_fit: &QuantRegFit,
    pair: QuantilePair,
    cfg: &KernelConfig,
) -> Result<Vec<f64>> {
    let plug = cpc_plugins(design, alpha_fit, theta_fit, cfg)?;
    let a = ridge_solve(&plug.delta11, &plug.delta12)?;
    let b = ridge_solve(&plug.delta22, &plug.delta21)?;
    let za = linalg::mul_vec(design.matrix(), a.as_slice());
    let zb = linalg::mul_vec(design.matrix(), b.as_slice());
    let c = pair.scale();
    let (e1, e2) = (&alpha_fit.residuals, &theta_fit.residuals);
    Ok((0..design.n())
        .map(|i| {
            let joint = if e1[i] <= 0.0 && e2[i] <= 0.0 { 1.0 } else { 0.0 };
            (joint + za[i] * psi(pair.tau, e1[i]) + zb[i] * psi(pair.iota, e2[i])) / c
        })
        .collect())
}

pub fn cpc_influence(
    y: &[f64],
    x: &[f64],
    design: &ConditioningDesign,
    pair: QuantilePair,
    cfg: &KernelConfig,
) -> Result<Vec<f64>> {
    check_inference_n(design.n(), MIN_CPC_INFERENCE_N)?;
    let est = cpc_estimate(y, x, design, pair)?;
    cpc_influence_from_fits(design, &est.alpha_fit, &est.theta_fit, pair, cfg)
}

pub fn cpc_variance(
    y: &[f64],
    x: &[f64],
    design: &ConditioningDesign,
    pair: QuantilePair,
    cfg: &KernelConfig,
) -> Result<f64> {
    let zeta = cpc_influence(y, x, design, pair, cfg)?;
    Ok(empirical_cov(&zeta, &zeta).max(0.0))
}

/// Test of zero partial correlation at `pair` (clamped to the inference range).
pub fn cpc_test_zero(
    y: &[f64],
    x: &[f64],
    design: &ConditioningDesign,
    pair: QuantilePair,
    cfg: &KernelConfig,
) -> Result<CpcEstimate> {
    let pair = pair.clamped();
    check_inference_n(design.n(), MIN_CPC_INFERENCE_N)?;
    let mut est = cpc_estimate(y, x, design, pair)?;
    let zeta = cpc_influence_from_fits(design, &est.alpha_fit, &est.theta_fit, pair, cfg)?;
    est.estimate = est.estimate.with_inference(empirical_cov(&zeta, &zeta).max(0.0))?;
    Ok(est)
}

/// Test of equal partial correlation of `x1` and `x2` with `y` given the
/// design; both share the fit of `y`.
pub fn cpc_test_equal(
    y: &[f64],
    x1: &[f64],
    x2: &[f64],
    design: &ConditioningDesign,
    pair: QuantilePair,
    cfg: &KernelConfig,
) -> Result<EqualityTest> {
    check_lengths(y, x1)?;
    check_lengths(y, x2)?;
    let pair = pair.clamped();
    check_inference_n(design.n(), MIN_CPC_INFERENCE_N)?;
    design.check_estimable()?;
    let alpha = fit_design(design, y, pair.tau)?;
    let e1 = cpc_estimate_with_alpha(alpha.clone(), x1, design, pair)?;
    let e2 = cpc_estimate_with_alpha(alpha, x2, design, pair)?;
    let z1 = cpc_influence_from_fits(design, &e1.alpha_fit, &e1.theta_fit, pair, cfg)?;
    let z2 = cpc_influence_from_fits(design, &e2.alpha_fit, &e2.theta_fit, pair, cfg)?;
    let eta: Vec<f64> = z1.iter().zip(&z2).map(|(a, b)| a - b).collect();
    EqualityTest::from_parts(e1.estimate.value - e2.estimate.value, empirical_cov(&eta, &eta).max(0.0), design.n())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cc::{cc_estimate, cc_test_zero};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| StandardNormal.sample(rng)).collect()
    }

    #[test]
    fn constant_design_reproduces_cc() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [5, 12, 37, 200] {
            let y = normals(&mut rng, n);
            let x = normals(&mut rng, n);
            for pair in [QuantilePair::median(), QuantilePair::new(0.3, 0.8).unwrap()] {
                let d = ConditioningDesign::constant_only(n);
                let a = cpc_estimate(&y, &x, &d, pair).unwrap().estimate.value;
                let b = cc_estimate(&y, &x, pair).unwrap().value;
                assert!((a - b).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn common_factor_is_removed() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 2000;
        let w = normals(&mut rng, n);
        let y: Vec<f64> = w.iter().map(|v| 3.0 * v + { let e: f64 = StandardNormal.sample(&mut rng); e }).collect();
        let x: Vec<f64> = w.iter().map(|v| 3.0 * v + { let e: f64 = StandardNormal.sample(&mut rng); e }).collect();
        let d = ConditioningDesign::from_columns(n, &[&w], &[]).unwrap();
        assert_eq!(d.provenance(), &Provenance::ExternalW);
        let marginal = cc_estimate(&y, &x, QuantilePair::median()).unwrap().value;
        let partial = cpc_estimate(&y, &x, &d, QuantilePair::median()).unwrap().estimate.value;
        assert!(marginal > 0.5);
        assert!(partial.abs() <= 3.0 / (n as f64).sqrt(), "{partial}");
    }

    #[test]
    fn variance_near_one_for_constant_design_under_independence() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 2000;
        let y = normals(&mut rng, n);
        let x = normals(&mut rng, n);
        let d = ConditioningDesign::constant_only(n);
        let v = cpc_variance(&y, &x, &d, QuantilePair::median(), &KernelConfig::default()).unwrap();
        assert!((v - 1.0).abs() < 0.15, "{v}");
    }

    #[test]
    fn minimal_sample_gives_finite_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y = normals(&mut rng, 50);
        let x = normals(&mut rng, 50);
        let w = normals(&mut rng, 50);
        let d = ConditioningDesign::from_columns(50, &[&w], &[]).unwrap();
        let v = cpc_variance(&y, &x, &d, QuantilePair::median(), &KernelConfig::default()).unwrap();
        assert!(v.is_finite() && v >= 0.0);
        assert!(cpc_variance(&y[..49], &x[..49], &ConditioningDesign::constant_only(49), QuantilePair::median(), &KernelConfig::default()).is_err());
    }

    #[test]
    fn affine_response_map_leaves_statistic_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 150;
        let w = normals(&mut rng, n);
        let x: Vec<f64> = w.iter().map(|v| v + { let e: f64 = StandardNormal.sample(&mut rng); e }).collect();
        let y: Vec<f64> = x.iter().zip(&w).map(|(a, b)| a + b + { let e: f64 = StandardNormal.sample(&mut rng); e }).collect();
        let d = ConditioningDesign::from_columns(n, &[&w], &[]).unwrap();
        let cfg = KernelConfig::default();
        let base = cpc_test_zero(&y, &x, &d, QuantilePair::median(), &cfg).unwrap();
        let y2: Vec<f64> = y.iter().map(|v| 2.5 * v + 4.0).collect();
        let moved = cpc_test_zero(&y2, &x, &d, QuantilePair::median(), &cfg).unwrap();
        assert!((base.estimate.value - moved.estimate.value).abs() < 1e-6);
        assert!((base.estimate.z_stat.unwrap() - moved.estimate.z_stat.unwrap()).abs() < 1e-6);
    }

    #[test]
    fn strong_residual_dependence_is_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 400;
        let w = normals(&mut rng, n);
        let x = normals(&mut rng, n);
        let y: Vec<f64> = x.iter().zip(&w).map(|(a, b)| a + 2.0 * b + 0.3 * { let e: f64 = StandardNormal.sample(&mut rng); e }).collect();
        let d = ConditioningDesign::from_columns(n, &[&w], &[]).unwrap();
        let t = cpc_test_zero(&y, &x, &d, QuantilePair::median(), &KernelConfig::default()).unwrap();
        assert!(t.estimate.p_value.unwrap() < 1e-6);
    }

    #[test]
    fn constant_design_decisions_track_cc() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = KernelConfig::default();
        let mut agree = 0;
        let reps = 100;
        for _ in 0..reps {
            let y = normals(&mut rng, 500);
            let x: Vec<f64> = y.iter().map(|v| 0.1 * v + { let e: f64 = StandardNormal.sample(&mut rng); e }).collect();
            let d = ConditioningDesign::constant_only(500);
            let a = cpc_test_zero(&y, &x, &d, QuantilePair::median(), &cfg).unwrap().estimate.p_value.unwrap() < 0.05;
            let b = cc_test_zero(&y, &x, QuantilePair::median(), &cfg).unwrap().p_value.unwrap() < 0.05;
            agree += (a == b) as usize;
        }
        assert!(agree as f64 >= 0.95 * reps as f64, "{agree}");
    }

    #[test]
    fn identical_covariates_give_degenerate_equality_test() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let y = normals(&mut rng, 80);
        let x = normals(&mut rng, 80);
        let d = ConditioningDesign::constant_only(80);
        let err = cpc_test_equal(&y, &x, &x, &d, QuantilePair::median(), &KernelConfig::default()).unwrap_err();
        assert!(matches!(err, Error::DegenerateVariance { .. }));
    }

    #[test]
    fn design_validation() {
        let z = DMatrix::from_element(5, 2, 2.0);
        assert!(ConditioningDesign::new(z, Provenance::ExternalW).is_err());
        let d = ConditioningDesign::constant_only(3);
        assert!(matches!(
            cpc_estimate(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], &d, QuantilePair::median()),
            Err(Error::DesignTooLarge { .. })
        ));
        let col = [1.0, 2.0, 3.0, 4.0];
        let d = ConditioningDesign::from_columns(4, &[], &[(7, &col)]).unwrap();
        assert_eq!(d.provenance(), &Provenance::CovariateSubset(vec![7]));
        assert_eq!(d.q(), 2);
    }
}
