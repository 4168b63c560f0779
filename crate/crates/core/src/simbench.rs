//! Simulation designs for the testing and screening studies, with the
//! usual screening metrics (minimum model size, ranks, coverage).

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::Serialize;

use crate::cc::{cc_test_equal, QuantilePair};
use crate::cpc::{cpc_test_equal, ConditioningDesign};
use crate::empirical::KernelConfig;
use crate::error::{Error, Result};
use crate::screening::{baseline_screeners, default_d_n, screen, Baseline, ScreeningConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Example {
    /// `Y = exp(2 X1) + exp((2 + c0) X2)`, bivariate normal covariates.
    Ex1A1,
    /// `Y = 2 X01 + (2 + c0) X02 + e`, covariates contaminated with Cauchy/5.
    Ex1A2,
    /// Two covariates sharing a 4-dimensional AR confounder `Z`.
    Ex2,
    /// Linear response in five contaminated AR covariates.
    Ex3B1,
    /// Piecewise and sine effects of covariates 1, 2 and 10.
    Ex3B2,
    /// Exponential link with random coefficients.
    Ex3B3,
    /// Equicorrelated normal covariates, X4 marginally uncorrelated with Y.
    Ex4D1,
    /// As `Ex4D1` with correlation confined to the first four covariates and
    /// Cauchy contamination.
    Ex4D2,
    /// Covariates driven by an external 4-dimensional `W`.
    Ex5,
}

impl Example {
    pub const ALL: [Example; 9] = [
        Example::Ex1A1,
        Example::Ex1A2,
        Example::Ex2,
        Example::Ex3B1,
        Example::Ex3B2,
        Example::Ex3B3,
        Example::Ex4D1,
        Example::Ex4D2,
        Example::Ex5,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Example::Ex1A1 => "ex1_a1",
            Example::Ex1A2 => "ex1_a2",
            Example::Ex2 => "ex2",
            Example::Ex3B1 => "ex3_b1",
            Example::Ex3B2 => "ex3_b2",
            Example::Ex3B3 => "ex3_b3",
            Example::Ex4D1 => "ex4_d1",
            Example::Ex4D2 => "ex4_d2",
            Example::Ex5 => "ex5",
        }
    }

    /// Equality-testing designs with exactly two covariates.
    pub fn is_testing(self) -> bool {
        matches!(self, Example::Ex1A1 | Example::Ex1A2 | Example::Ex2)
    }

    /// Active covariates, 0-based.
    pub fn active_set(self) -> Vec<usize> {
        match self {
            Example::Ex1A1 | Example::Ex1A2 | Example::Ex2 => vec![0, 1],
            Example::Ex3B1 => vec![0, 1, 2, 3, 4],
            Example::Ex3B2 => vec![0, 1, 9],
            Example::Ex3B3 | Example::Ex4D1 | Example::Ex4D2 | Example::Ex5 => vec![0, 1, 2, 3],
        }
    }
}

impl FromStr for Example {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Example::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown example '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorDist {
    Normal,
    Cauchy,
    /// Cauchy divided by 3.
    ScaledCauchy,
    /// Student t with 3 degrees of freedom divided by 3.
    ScaledT3,
}

impl ErrorDist {
    pub fn name(self) -> &'static str {
        match self {
            ErrorDist::Normal => "normal",
            ErrorDist::Cauchy => "cauchy",
            ErrorDist::ScaledCauchy => "scaled_cauchy",
            ErrorDist::ScaledT3 => "scaled_t3",
        }
    }

    fn sample(self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            ErrorDist::Normal => normal(rng),
            ErrorDist::Cauchy => cauchy(rng),
            ErrorDist::ScaledCauchy => cauchy(rng) / 3.0,
            ErrorDist::ScaledT3 => t3(rng) / 3.0,
        }
    }
}

impl FromStr for ErrorDist {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [ErrorDist::Normal, ErrorDist::Cauchy, ErrorDist::ScaledCauchy, ErrorDist::ScaledT3]
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown error distribution '{s}'")))
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Standard Cauchy by inversion, so draws do not depend on a library's
/// sampling algorithm.
fn cauchy(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.random();
    (PI * (u - 0.5)).tan()
}

fn t3(rng: &mut ChaCha8Rng) -> f64 {
    StudentT::new(3.0).expect("valid degrees of freedom").sample(rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimulationSpec {
    pub example: Example,
    pub n: usize,
    /// Ignored by the two-covariate testing designs.
    pub p: usize,
    pub rho: f64,
    pub c0: f64,
    pub error_dist: ErrorDist,
    pub reps: usize,
    pub seed: u64,
}

impl SimulationSpec {
    pub fn new(example: Example, n: usize, p: usize, rho: f64) -> Self {
        Self { example, n, p, rho, c0: 0.0, error_dist: ErrorDist::Normal, reps: 100, seed: 1 }
    }

    /// Number of covariates actually generated.
    pub fn covariates(&self) -> usize {
        if self.example.is_testing() {
            2
        } else {
            self.p
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        if self.n < 2 {
            return Err(Error::Config("n must be at least 2".into()));
        }
        if !(self.rho.abs() < 1.0 || (self.rho == 1.0 && !self.example.is_testing())) || !self.c0.is_finite() {
            return Err(Error::Config(format!("rho = {} outside (-1, 1) or c0 not finite", self.rho)));
        }
        if matches!(self.example, Example::Ex4D1 | Example::Ex4D2) && !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Config("ex4 designs need rho in [0, 1]".into()));
        }
        let needed = self.example.active_set().iter().max().map_or(0, |m| m + 1);
        if self.covariates() < needed {
            return Err(Error::Config(format!("{} needs p >= {needed}", self.example.name())));
        }
        Ok(())
    }

    /// Stream-separated generator for one replication.
    pub fn rng_for(&self, rep: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(rep as u64);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimData {
    pub y: Vec<f64>,
    pub x: DMatrix<f64>,
    pub w: Option<DMatrix<f64>>,
    /// 0-based indices of the active covariates.
    pub active: Vec<usize>,
}

/// Fill `out` with a stationary AR(1) Gaussian vector, `corr = rho^|j-k|`.
fn ar_vector(rng: &mut ChaCha8Rng, rho: f64, out: &mut [f64]) {
    let innov = (1.0 - rho * rho).max(0.0).sqrt();
    let mut prev = 0.0;
    for (k, v) in out.iter_mut().enumerate() {
        let e = normal(rng);
        *v = if k == 0 { e } else { rho * prev + innov * e };
        prev = *v;
    }
}

/// Correlated normal block with `corr(j, k) = rho` off the fourth row and
/// `sqrt(rho)` on it, built from one common factor.
fn factor_block(rng: &mut ChaCha8Rng, rho: f64, out: &mut [f64]) {
    let f = normal(rng);
    let (a, b) = (rho.sqrt(), (1.0 - rho).sqrt());
    for (j, v) in out.iter_mut().enumerate() {
        let e = normal(rng);
        *v = if j == 3 { f } else { a * f + b * e };
    }
}

/// Generate one replication. Deterministic in `(spec.seed, rep)`.
pub fn generate(spec: &SimulationSpec, rep: usize) -> Result<SimData> {
    spec.validate()?;
    let mut rng = spec.rng_for(rep);
    let (n, p, rho, c0) = (spec.n, spec.covariates(), spec.rho, spec.c0);
    let mut y = vec![0.0; n];
    let mut x = DMatrix::zeros(n, p);
    let mut w = None;
    let mut latent = vec![0.0; p];
    let eps = |rng: &mut ChaCha8Rng| spec.error_dist.sample(rng);

    match spec.example {
        Example::Ex1A1 | Example::Ex1A2 => {
            let s = (1.0 - rho * rho).sqrt();
            for i in 0..n {
                let x1 = normal(&mut rng);
                let x2 = rho * x1 + s * normal(&mut rng);
                if spec.example == Example::Ex1A1 {
                    x[(i, 0)] = x1;
                    x[(i, 1)] = x2;
                    y[i] = (2.0 * x1).exp() + ((2.0 + c0) * x2).exp();
                } else {
                    x[(i, 0)] = 0.9 * x1 + 0.1 * cauchy(&mut rng) / 5.0;
                    x[(i, 1)] = 0.9 * x2 + 0.1 * cauchy(&mut rng) / 5.0;
                    y[i] = 2.0 * x1 + (2.0 + c0) * x2 + eps(&mut rng);
                }
            }
        }
        Example::Ex2 => {
            let b = [3.0, 4.0, 3.0, 4.0];
            let mut zm = DMatrix::zeros(n, 4);
            let mut z = [0.0; 4];
            for i in 0..n {
                ar_vector(&mut rng, rho, &mut z);
                let zb: f64 = z.iter().zip(&b).map(|(u, v)| u * v).sum();
                let x1 = zb + t3(&mut rng) / 3.0;
                let x2 = zb + t3(&mut rng) / 3.0;
                x[(i, 0)] = x1;
                x[(i, 1)] = x2;
                y[i] = 2.0 * x1 + (2.0 + c0) * x2 + zb + eps(&mut rng);
                for k in 0..4 {
                    zm[(i, k)] = z[k];
                }
            }
            w = Some(zm);
        }
        Example::Ex3B1 | Example::Ex3B2 | Example::Ex3B3 => {
            let beta = if spec.example == Example::Ex3B3 {
                let nf = n as f64;
                let base = 4.0 * nf.ln() / nf.sqrt();
                let flip = Bernoulli::new(0.4).expect("valid probability");
                [1.0, 0.5, 1.0].map(|c| {
                    let sign = if flip.sample(&mut rng) { -1.0 } else { 1.0 };
                    c * sign * (base + 0.5 * normal(&mut rng))
                })
            } else {
                [0.0; 3]
            };
            for i in 0..n {
                ar_vector(&mut rng, rho, &mut latent);
                for j in 0..p {
                    x[(i, j)] = 0.8 * latent[j] + 0.2 * cauchy(&mut rng);
                }
                let l = &latent;
                let signal = match spec.example {
                    Example::Ex3B1 => 3.0 * l[0] + 3.0 * l[1] + 2.0 * l[2] + 2.0 * l[3] + 2.0 * l[4],
                    Example::Ex3B2 => {
                        5.0 * l[0] * f64::from(l[0] < 0.0) + 5.0 * l[1] * f64::from(l[1] > 0.0) + 5.0 * l[9].sin()
                    }
                    _ => (3.0 * beta[0] * l[0].sin()
                        + 2.0 * beta[1] * l[1].exp()
                        + 1.5 * beta[2] * f64::from(l[2] > 0.0)
                        + 2.0 * l[3].abs().ln())
                    .exp(),
                };
                y[i] = signal + eps(&mut rng);
            }
        }
        Example::Ex4D1 | Example::Ex4D2 => {
            let beta = 4.0;
            let contaminated = spec.example == Example::Ex4D2;
            for i in 0..n {
                if contaminated {
                    factor_block(&mut rng, rho, &mut latent[..4]);
                    for v in latent[4..].iter_mut() {
                        *v = normal(&mut rng);
                    }
                    for j in 0..p {
                        x[(i, j)] = 0.9 * latent[j] + 0.1 * cauchy(&mut rng) / 5.0;
                    }
                } else {
                    factor_block(&mut rng, rho, &mut latent);
                    for j in 0..p {
                        x[(i, j)] = latent[j];
                    }
                }
                let l = &latent;
                y[i] = beta * (l[0] + l[1] + l[2]) - 3.0 * beta * rho.sqrt() * l[3] + eps(&mut rng);
            }
        }
        Example::Ex5 => {
            let b = [2.0, 4.0 / 3.0, 2.0, 4.0 / 3.0];
            let mut wm = DMatrix::zeros(n, 4);
            let mut z = [0.0; 4];
            for i in 0..n {
                ar_vector(&mut rng, rho, &mut z);
                let wb: f64 = z.iter().zip(&b).map(|(u, v)| u * v).sum();
                for j in 0..p {
                    x[(i, j)] = wb + cauchy(&mut rng) / 3.0;
                }
                y[i] = 2.0 * x[(i, 0)] + 2.0 * x[(i, 1)] - 4.0 * x[(i, 2)] + 3.0 * x[(i, 3)] + eps(&mut rng);
                for k in 0..4 {
                    wm[(i, k)] = z[k];
                }
            }
            w = Some(wm);
        }
    }
    Ok(SimData { y, x, w, active: spec.example.active_set() })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestStudyReport {
    pub spec: SimulationSpec,
    pub pair: QuantilePair,
    pub level: f64,
    /// Per-replication p-values; `None` when the test could not be computed.
    pub p_values: Vec<Option<f64>>,
    pub rejections: usize,
    pub failures: usize,
    /// Rejection fraction among all replications.
    pub rejection_rate: f64,
}

/// Size or power of the equality test on a two-covariate design: CC for the
/// first example, CPC given the confounders for the second.
pub fn run_test_study(spec: &SimulationSpec, pair: QuantilePair, level: f64) -> Result<TestStudyReport> {
    spec.validate()?;
    pair.validate()?;
    if !spec.example.is_testing() {
        return Err(Error::Config(format!("{} is a screening design", spec.example.name())));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config("level must be in (0, 1)".into()));
    }
    let kernel = KernelConfig::default();
    let p_values: Vec<Option<f64>> = (0..spec.reps)
        .into_par_iter()
        .map(|rep| -> Result<Option<f64>> {
            let data = generate(spec, rep)?;
            let (x1, x2) = (data.x.column(0), data.x.column(1));
            let test = match &data.w {
                None => cc_test_equal(&data.y, x1.as_slice(), x2.as_slice(), pair, &kernel),
                Some(w) => {
                    let cols: Vec<&[f64]> = (0..w.ncols()).map(|k| &w.as_slice()[k * spec.n..(k + 1) * spec.n]).collect();
                    let design = ConditioningDesign::from_columns(spec.n, &cols, &[])?;
                    cpc_test_equal(&data.y, x1.as_slice(), x2.as_slice(), &design, pair, &kernel)
                }
            };
            Ok(test.ok().map(|t| t.p_value))
        })
        .collect::<Result<_>>()?;
    let rejections = p_values.iter().filter(|p| p.is_some_and(|p| p < level)).count();
    let failures = p_values.iter().filter(|p| p.is_none()).count();
    Ok(TestStudyReport {
        spec: *spec,
        pair,
        level,
        rejection_rate: rejections as f64 / spec.reps as f64,
        p_values,
        rejections,
        failures,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StudyMethod {
    Screen(ScreeningConfig),
    Baseline { method: Baseline },
}

impl StudyMethod {
    pub fn label(&self) -> String {
        match self {
            StudyMethod::Screen(cfg) => {
                let kind = match cfg.case_mode {
                    crate::screening::CaseMode::MarginalCc => "cc_sis",
                    crate::screening::CaseMode::CpcCase1 => "cpc_sis_case1",
                    crate::screening::CaseMode::CpcCase2 => "cpc_sis_case2",
                    crate::screening::CaseMode::CpcCase3 => "cpc_sis_case3",
                };
                format!("{kind}({},{})", cfg.pair.tau, cfg.pair.iota)
            }
            StudyMethod::Baseline { method: Baseline::PearsonSis } => "pearson_sis".into(),
            StudyMethod::Baseline { method: Baseline::KendallSis } => "kendall_sis".into(),
        }
    }

    fn d_n(&self, n: usize) -> usize {
        match self {
            StudyMethod::Screen(cfg) => cfg.resolved_d_n(n),
            StudyMethod::Baseline { .. } => default_d_n(n),
        }
    }

    fn ranking(&self, data: &SimData) -> Result<Vec<usize>> {
        let r = match self {
            StudyMethod::Screen(cfg) => screen(&data.y, &data.x, data.w.as_ref(), cfg)?,
            StudyMethod::Baseline { method } => baseline_screeners(&data.y, &data.x, *method, default_d_n(data.y.len()))?,
        };
        Ok(r.ranking)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub d_n: usize,
    /// Per replication, the 1-based rank of each active covariate.
    pub ranks: Vec<Vec<usize>>,
    /// Per replication minimum model size.
    pub mms: Vec<usize>,
    pub mms_median: f64,
    pub mms_rsd: f64,
    pub rank_medians: Vec<f64>,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScreeningStudyReport {
    pub spec: SimulationSpec,
    pub active: Vec<usize>,
    pub methods: Vec<MethodSummary>,
}

/// Sample quantile with linear interpolation between order statistics
/// (the `(n - 1) q` rule).
pub fn sample_quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Robust standard deviation, interquartile range over 1.349.
pub fn robust_sd(values: &[f64]) -> f64 {
    (sample_quantile(values, 0.75) - sample_quantile(values, 0.25)) / 1.349
}

/// 1-based rank of each active covariate in `ranking`.
pub fn active_ranks(ranking: &[usize], active: &[usize]) -> Vec<usize> {
    let mut pos = vec![usize::MAX; ranking.len()];
    for (r, &j) in ranking.iter().enumerate() {
        pos[j] = r + 1;
    }
    active.iter().map(|&j| pos[j]).collect()
}

/// Smallest prefix of the ranking containing every active covariate.
pub fn minimum_model_size(ranking: &[usize], active: &[usize]) -> usize {
    active_ranks(ranking, active).into_iter().max().unwrap_or(0)
}

fn summarize(method: &StudyMethod, n: usize, ranks: Vec<Vec<usize>>) -> MethodSummary {
    let d_n = method.d_n(n);
    let mms: Vec<usize> = ranks.iter().map(|r| r.iter().copied().max().unwrap_or(0)).collect();
    let mms_f: Vec<f64> = mms.iter().map(|&m| m as f64).collect();
    let k = ranks.first().map_or(0, Vec::len);
    let rank_medians = (0..k)
        .map(|a| sample_quantile(&ranks.iter().map(|r| r[a] as f64).collect::<Vec<_>>(), 0.5))
        .collect();
    MethodSummary {
        method: method.label(),
        d_n,
        coverage: mms.iter().filter(|&&m| m <= d_n).count() as f64 / mms.len().max(1) as f64,
        mms_median: sample_quantile(&mms_f, 0.5),
        mms_rsd: robust_sd(&mms_f),
        rank_medians,
        ranks,
        mms,
    }
}

/// Run every method on each replication and summarize the ranks of the
/// active covariates.
pub fn run_screening_study(spec: &SimulationSpec, methods: &[StudyMethod]) -> Result<ScreeningStudyReport> {
    spec.validate()?;
    if methods.is_empty() {
        return Err(Error::Config("no screening methods given".into()));
    }
    let active = spec.example.active_set();
    let per_rep: Vec<Vec<Vec<usize>>> = (0..spec.reps)
        .into_par_iter()
        .map(|rep| {
            let data = generate(spec, rep)?;
            methods
                .iter()
                .map(|m| m.ranking(&data).map(|r| active_ranks(&r, &active)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let summaries = methods
        .iter()
        .enumerate()
        .map(|(m, method)| summarize(method, spec.n, per_rep.iter().map(|r| r[m].clone()).collect()))
        .collect();
    Ok(ScreeningStudyReport { spec: *spec, active, methods: summaries })
}

fn coordinates_header() -> &'static str {
    "example,n,p,rho,c0,error_dist,reps,seed"
}

fn coordinates(spec: &SimulationSpec) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        spec.example.name(),
        spec.n,
        spec.covariates(),
        spec.rho,
        spec.c0,
        spec.error_dist.name(),
        spec.reps,
        spec.seed
    )
}

impl TestStudyReport {
    pub fn summary_csv(&self) -> String {
        format!(
            "{},tau,iota,level,rejections,failures,rejection_rate\n{},{},{},{},{},{},{}\n",
            coordinates_header(),
            coordinates(&self.spec),
            self.pair.tau,
            self.pair.iota,
            self.level,
            self.rejections,
            self.failures,
            self.rejection_rate
        )
    }

    pub fn per_rep_csv(&self) -> String {
        let mut out = String::from("rep,p_value\n");
        for (rep, p) in self.p_values.iter().enumerate() {
            match p {
                Some(p) => writeln!(out, "{rep},{p}"),
                None => writeln!(out, "{rep},"),
            }
            .expect("writing to a String");
        }
        out
    }

    pub fn table(&self) -> String {
        format!(
            "{} n={} rho={} c0={} error={} pair=({}, {}) reps={}\nrejection rate at {}: {:.3} ({} failed)\n",
            self.spec.example.name(),
            self.spec.n,
            self.spec.rho,
            self.spec.c0,
            self.spec.error_dist.name(),
            self.pair.tau,
            self.pair.iota,
            self.spec.reps,
            self.level,
            self.rejection_rate,
            self.failures
        )
    }
}

impl ScreeningStudyReport {
    pub fn summary_csv(&self) -> String {
        let mut out = format!("{},method,d_n,mms_median,mms_rsd,coverage", coordinates_header());
        for a in &self.active {
            write!(out, ",rank_x{}", a + 1).expect("writing to a String");
        }
        out.push('\n');
        for m in &self.methods {
            write!(out, "{},{},{},{},{},{}", coordinates(&self.spec), m.method, m.d_n, m.mms_median, m.mms_rsd, m.coverage)
                .expect("writing to a String");
            for r in &m.rank_medians {
                write!(out, ",{r}").expect("writing to a String");
            }
            out.push('\n');
        }
        out
    }

    pub fn per_rep_csv(&self) -> String {
        let mut out = String::from("method,rep,mms");
        for a in &self.active {
            write!(out, ",rank_x{}", a + 1).expect("writing to a String");
        }
        out.push('\n');
        for m in &self.methods {
            for (rep, ranks) in m.ranks.iter().enumerate() {
                write!(out, "{},{rep},{}", m.method, m.mms[rep]).expect("writing to a String");
                for r in ranks {
                    write!(out, ",{r}").expect("writing to a String");
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn table(&self) -> String {
        let s = &self.spec;
        let mut out = format!(
            "{} n={} p={} rho={} error={} reps={}\n{:<24}",
            s.example.name(),
            s.n,
            s.covariates(),
            s.rho,
            s.error_dist.name(),
            s.reps,
            "method"
        );
        for a in &self.active {
            write!(out, "{:>8}", format!("R{}", a + 1)).expect("writing to a String");
        }
        writeln!(out, "{:>16}{:>8}", "MMS (RSD)", "P").expect("writing to a String");
        for m in &self.methods {
            write!(out, "{:<24}", m.method).expect("writing to a String");
            for r in &m.rank_medians {
                write!(out, "{r:>8}").expect("writing to a String");
            }
            writeln!(out, "{:>16}{:>8.2}", format!("{} ({:.1})", m.mms_median, m.mms_rsd), m.coverage)
                .expect("writing to a String");
        }
        out
    }
}
