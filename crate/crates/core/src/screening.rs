//! Sure independence screening with marginal (CC) and conditional (CPC)
//! utilities, FDR thresholding and the Pearson / Kendall baselines.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::cc::{cc_estimate, cc_variance, QuantilePair};
use crate::cpc::{cpc_estimate_with_alpha, cpc_influence_from_fits, fit_design, ConditioningDesign};
use crate::empirical::{normal_quantile, KernelConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "mode", content = "value", rename_all = "snake_case")]
pub enum ThresholdMode {
    /// Keep the `d_n` highest utilities.
    TopDn,
    /// Keep utilities at or above a fixed level.
    Absolute(f64),
    /// Keep covariates whose standardized utility exceeds
    /// `Phi^-1(1 - dbar / (2p))`, controlling the expected number of false
    /// positives at about `dbar`.
    Fdr(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseMode {
    MarginalCc,
    /// Iterative conditioning on covariates only.
    CpcCase1,
    /// One fixed external design `[1, W]`.
    CpcCase2,
    /// Iterative conditioning on `W` plus covariates.
    CpcCase3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScreeningConfig {
    pub pair: QuantilePair,
    /// Model size; `None` means `floor(n / ln n)`.
    pub d_n: Option<usize>,
    pub threshold_mode: ThresholdMode,
    pub case_mode: CaseMode,
    /// Size of each covariate's confounder set.
    pub ell: usize,
    pub kernel: KernelConfig,
}

impl Default for ScreeningConfig {
    fn default() -> Self {
        Self {
            pair: QuantilePair::median(),
            d_n: None,
            threshold_mode: ThresholdMode::TopDn,
            case_mode: CaseMode::MarginalCc,
            ell: 3,
            kernel: KernelConfig::default(),
        }
    }
}

impl ScreeningConfig {
    pub fn with_case(case_mode: CaseMode) -> Self {
        Self { case_mode, ..Self::default() }
    }

    pub fn resolved_d_n(&self, n: usize) -> usize {
        self.d_n.unwrap_or_else(|| default_d_n(n))
    }

    pub fn validate(&self) -> Result<()> {
        self.pair.validate()?;
        self.kernel.validate()?;
        if self.d_n == Some(0) {
            return Err(Error::Config("d_n must be at least 1".into()));
        }
        match self.threshold_mode {
            ThresholdMode::Fdr(d) if !(d >= 1.0) => Err(Error::Config("fdr mode requires dbar >= 1".into())),
            ThresholdMode::Absolute(v) if !v.is_finite() => Err(Error::Config("absolute threshold must be finite".into())),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub iteration: usize,
    pub chosen_index: usize,
    pub utility: f64,
    /// Covariate indices conditioned on when `chosen_index` was evaluated.
    pub conditional_set: Vec<usize>,
    /// Candidates whose quantile fits needed the ridge fallback while this
    /// step's utilities were computed.
    pub ridge_candidates: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScreeningResult {
    pub utilities: Vec<f64>,
    /// Covariate indices (0-based), most important first.
    pub ranking: Vec<usize>,
    pub selected: Vec<usize>,
    pub threshold_used: f64,
    pub per_step_log: Vec<StepRecord>,
}

/// `floor(n / ln n)`, at least 1.
pub fn default_d_n(n: usize) -> usize {
    if n < 3 {
        return 1;
    }
    ((n as f64 / (n as f64).ln()).floor() as usize).max(1)
}

/// Number of iterations that grow the conditioning set, `floor(2 sqrt(n / ln n))`.
pub fn conditioning_steps(n: usize) -> usize {
    if n < 3 {
        return 1;
    }
    (2.0 * (n as f64 / (n as f64).ln()).sqrt()).floor() as usize
}

/// Indices sorted by decreasing utility, ties to the lowest index, NaN last.
pub fn rank_by_utility(utilities: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..utilities.len()).collect();
    order.sort_by(|&a, &b| {
        let (ua, ub) = (utilities[a], utilities[b]);
        match (ua.is_nan(), ub.is_nan()) {
            (false, false) => ub.total_cmp(&ua),
            (a_nan, b_nan) => a_nan.cmp(&b_nan),
        }
        .then(a.cmp(&b))
    });
    order
}

/// Critical value `Phi^-1(1 - dbar / (2p))`.
pub fn fdr_delta(p: usize, dbar: f64) -> Result<f64> {
    if !(dbar >= 1.0) {
        return Err(Error::Config("dbar must be at least 1".into()));
    }
    if dbar >= 2.0 * p as f64 {
        return Err(Error::Config(format!("dbar = {dbar} must be below 2p = {}", 2 * p)));
    }
    Ok(normal_quantile(1.0 - dbar / (2.0 * p as f64)))
}

/// Covariates with `sqrt(n) u_j / sqrt(v_j) >= delta`, in index order, and
/// the critical value used.
pub fn fdr_threshold(utilities: &[f64], variances: &[f64], n: usize, dbar: f64) -> Result<(Vec<usize>, f64)> {
    if utilities.len() != variances.len() {
        return Err(Error::LengthMismatch { expected: utilities.len(), got: variances.len() });
    }
    if let Some(v) = variances.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::DegenerateVariance { value: *v });
    }
    let delta = fdr_delta(utilities.len(), dbar)?;
    let rn = (n as f64).sqrt();
    let selected = (0..utilities.len()).filter(|&j| rn * utilities[j] / variances[j].sqrt() >= delta).collect();
    Ok((selected, delta))
}

fn check_inputs(y: &[f64], x: &DMatrix<f64>) -> Result<()> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: y.len() });
    }
    if p == 0 {
        return Err(Error::Config("no covariates to screen".into()));
    }
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite value in screening inputs".into()));
    }
    Ok(())
}

fn column(x: &DMatrix<f64>, j: usize) -> &[f64] {
    let n = x.nrows();
    &x.as_slice()[j * n..(j + 1) * n]
}

/// Selection per threshold mode for non-iterative utilities.
fn finish(
    utilities: Vec<f64>,
    mode: ThresholdMode,
    d_n: usize,
    variances: impl FnOnce() -> Result<Vec<f64>>,
    n: usize,
) -> Result<ScreeningResult> {
    let ranking = rank_by_utility(&utilities);
    let (selected, threshold_used) = match mode {
        ThresholdMode::TopDn => {
            let k = d_n.min(ranking.len());
            let sel = ranking[..k].to_vec();
            let t = sel.last().map_or(0.0, |&j| utilities[j]);
            (sel, t)
        }
        ThresholdMode::Absolute(nu) => (ranking.iter().copied().filter(|&j| utilities[j] >= nu).collect(), nu),
        ThresholdMode::Fdr(dbar) => {
            let (sel, delta) = fdr_threshold(&utilities, &variances()?, n, dbar)?;
            // Report in ranking order for consistency with the other modes.
            let mut sel = sel;
            let pos: Vec<usize> = {
                let mut pos = vec![0; ranking.len()];
                for (r, &j) in ranking.iter().enumerate() {
                    pos[j] = r;
                }
                pos
            };
            sel.sort_by_key(|&j| pos[j]);
            (sel, delta)
        }
    };
    Ok(ScreeningResult { utilities, ranking, selected, threshold_used, per_step_log: Vec::new() })
}

/// Marginal screening by `|cc(y, X_j)|`.
pub fn cc_sis(y: &[f64], x: &DMatrix<f64>, cfg: &ScreeningConfig) -> Result<ScreeningResult> {
    check_inputs(y, x)?;
    cfg.validate()?;
    let (n, p) = x.shape();
    let utilities = (0..p)
        .into_par_iter()
        .map(|j| cc_estimate(y, column(x, j), cfg.pair).map(|e| e.value.abs()))
        .collect::<Result<Vec<f64>>>()?;
    let variances = || {
        (0..p)
            .into_par_iter()
            .map(|j| cc_variance(y, column(x, j), cfg.pair, &cfg.kernel))
            .collect::<Result<Vec<f64>>>()
    };
    finish(utilities, cfg.threshold_mode, cfg.resolved_d_n(n), variances, n)
}

fn w_columns(w: Option<&DMatrix<f64>>) -> Vec<&[f64]> {
    match w {
        Some(w) => (0..w.ncols()).map(|c| column(w, c)).collect(),
        None => Vec::new(),
    }
}

/// Conditional screening with the fixed design `[1, W]`; the fit of `y` is
/// shared across covariates.
pub fn cpc_sis_case2(y: &[f64], x: &DMatrix<f64>, w: &DMatrix<f64>, cfg: &ScreeningConfig) -> Result<ScreeningResult> {
    check_inputs(y, x)?;
    cfg.validate()?;
    let (n, p) = x.shape();
    if w.nrows() != n {
        return Err(Error::LengthMismatch { expected: n, got: w.nrows() });
    }
    let design = ConditioningDesign::from_columns(n, &w_columns(Some(w)), &[])?;
    if n <= design.q() + 2 {
        return Err(Error::DesignTooLarge { columns: design.q(), n });
    }
    let alpha = fit_design(&design, y, cfg.pair.tau)?;
    let estimates = (0..p)
        .into_par_iter()
        .map(|j| cpc_estimate_with_alpha(alpha.clone(), column(x, j), &design, cfg.pair))
        .collect::<Result<Vec<_>>>()?;
    let utilities: Vec<f64> = estimates.iter().map(|e| e.estimate.value.abs()).collect();
    let variances = || {
        estimates
            .par_iter()
            .map(|e| {
                let zeta = cpc_influence_from_fits(&design, &e.alpha_fit, &e.theta_fit, cfg.pair, &cfg.kernel)?;
                Ok(crate::cc::empirical_cov(&zeta, &zeta).max(0.0))
            })
            .collect::<Result<Vec<f64>>>()
    };
    finish(utilities, cfg.threshold_mode, cfg.resolved_d_n(n), variances, n)
}

/// Bit-packed indicators `1{v_i <= q}` at the empirical `level`-quantile.
fn low_bits(v: &[f64], level: f64) -> Result<Vec<u64>> {
    let q = crate::empirical::equantile(&crate::empirical::SortedSample::new(v)?, level)?;
    let mut bits = vec![0u64; v.len().div_ceil(64)];
    for (i, &vi) in v.iter().enumerate() {
        if vi <= q {
            bits[i / 64] |= 1 << (i % 64);
        }
    }
    Ok(bits)
}

/// For every covariate, the `ell` other covariates with the largest
/// `|cc(X_j, X_k)|` at level `(iota, iota)`, ties to the lowest index.
pub fn confounder_sets(x: &DMatrix<f64>, ell: usize, iota: f64) -> Result<Vec<Vec<usize>>> {
    let (n, p) = x.shape();
    if ell == 0 {
        return Ok(vec![Vec::new(); p]);
    }
    let bits = (0..p).map(|j| low_bits(column(x, j), iota)).collect::<Result<Vec<_>>>()?;
    let counts: Vec<u32> = bits.iter().map(|b| b.iter().map(|w| w.count_ones()).sum()).collect();
    let nf = n as f64;
    let scale = iota * (1.0 - iota);
    let cc = |j: usize, k: usize| {
        let joint: u32 = bits[j].iter().zip(&bits[k]).map(|(a, b)| (a & b).count_ones()).sum();
        // n^-1 sum (iota - a)(iota - b) from the counts.
        ((joint as f64 - iota * (counts[j] + counts[k]) as f64) / nf + iota * iota) / scale
    };
    Ok((0..p)
        .into_par_iter()
        .map(|j| {
            let mut scored: Vec<(f64, usize)> = (0..p).filter(|&k| k != j).map(|k| (cc(j, k).abs(), k)).collect();
            let take = ell.min(scored.len());
            if take < scored.len() {
                scored.select_nth_unstable_by(take, |a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                scored.truncate(take);
            }
            scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            scored.into_iter().map(|(_, k)| k).collect()
        })
        .collect())
}

struct Candidate {
    utility: f64,
    ridge: bool,
}

fn conditional_set(j: usize, active: &[usize], confounders: &[usize]) -> Vec<usize> {
    let mut s: Vec<usize> = active.iter().chain(confounders).copied().filter(|&k| k != j).collect();
    s.sort_unstable();
    s.dedup();
    s
}

fn evaluate_candidate(
    y: &[f64],
    x: &DMatrix<f64>,
    w_cols: &[&[f64]],
    j: usize,
    set: &[usize],
    pair: QuantilePair,
) -> Result<Candidate> {
    let n = x.nrows();
    let q = 1 + w_cols.len() + set.len();
    if q + 2 >= n {
        return Err(Error::DesignTooLarge { columns: q, n });
    }
    let covs: Vec<(usize, &[f64])> = set.iter().map(|&k| (k, column(x, k))).collect();
    let design = ConditioningDesign::from_columns(n, w_cols, &covs)?;
    let alpha = fit_design(&design, y, pair.tau)?;
    let est = cpc_estimate_with_alpha(alpha, column(x, j), &design, pair)?;
    Ok(Candidate {
        utility: est.estimate.value.abs(),
        ridge: est.alpha_fit.ridge_used || est.theta_fit.ridge_used,
    })
}

fn iterative(y: &[f64], x: &DMatrix<f64>, w: Option<&DMatrix<f64>>, cfg: &ScreeningConfig) -> Result<ScreeningResult> {
    check_inputs(y, x)?;
    cfg.validate()?;
    if cfg.threshold_mode != ThresholdMode::TopDn {
        return Err(Error::Config("iterative conditional screening supports only the top_dn threshold".into()));
    }
    let (n, p) = x.shape();
    if let Some(w) = w {
        if w.nrows() != n {
            return Err(Error::LengthMismatch { expected: n, got: w.nrows() });
        }
    }
    let w_cols = w_columns(w);
    let d_n = cfg.resolved_d_n(n).min(p);
    let d_star = conditioning_steps(n).min(d_n);
    let confounders = confounder_sets(x, cfg.ell, cfg.pair.iota)?;

    let mut active: Vec<usize> = Vec::with_capacity(d_n);
    let mut in_active = vec![false; p];
    let mut utilities = vec![0.0; p];
    let mut log = Vec::with_capacity(d_n);

    let evaluate_all = |active: &[usize], in_active: &[bool]| -> Result<Vec<(usize, Candidate)>> {
        (0..p)
            .into_par_iter()
            .filter(|&j| !in_active[j])
            .map(|j| {
                let set = conditional_set(j, active, &confounders[j]);
                evaluate_candidate(y, x, &w_cols, j, &set, cfg.pair).map(|c| (j, c))
            })
            .collect()
    };

    // Conditioning set grows by one selected covariate per iteration.
    for k in 1..=d_star {
        let scored = evaluate_all(&active, &in_active)?;
        let mut best: Option<(usize, f64)> = None;
        for (j, c) in &scored {
            if best.is_none_or(|(_, u)| c.utility > u) {
                best = Some((*j, c.utility));
            }
        }
        let (chosen, utility) = best.expect("at least one candidate remains");
        log.push(StepRecord {
            iteration: k,
            chosen_index: chosen,
            utility,
            conditional_set: conditional_set(chosen, &active, &confounders[chosen]),
            ridge_candidates: scored.iter().filter(|(_, c)| c.ridge).map(|(j, _)| *j).collect(),
        });
        utilities[chosen] = utility;
        active.push(chosen);
        in_active[chosen] = true;
    }

    // Conditioning sets frozen: utilities no longer change, so the remaining
    // iterations pick in decreasing order of one evaluation.
    let frozen = active.clone();
    let scored = evaluate_all(&frozen, &in_active)?;
    let mut rest: Vec<(usize, f64)> = scored.iter().map(|(j, c)| (*j, c.utility)).collect();
    for &(j, u) in &rest {
        utilities[j] = u;
    }
    rest.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut ridge_candidates: Vec<usize> = scored.iter().filter(|(_, c)| c.ridge).map(|(j, _)| *j).collect();
    for (k, &(j, u)) in rest.iter().take(d_n - d_star).enumerate() {
        log.push(StepRecord {
            iteration: d_star + k + 1,
            chosen_index: j,
            utility: u,
            conditional_set: conditional_set(j, &frozen, &confounders[j]),
            ridge_candidates: std::mem::take(&mut ridge_candidates),
        });
        active.push(j);
    }
    let selected = active.clone();
    let mut ranking = active;
    ranking.extend(rest.iter().skip(d_n - d_star).map(|&(j, _)| j));
    let threshold_used = selected.last().map_or(0.0, |&j| utilities[j]);
    Ok(ScreeningResult { utilities, ranking, selected, threshold_used, per_step_log: log })
}

/// Iterative conditional screening where each covariate is conditioned on
/// the already selected covariates plus its own confounder set.
pub fn cpc_sis_case1(y: &[f64], x: &DMatrix<f64>, cfg: &ScreeningConfig) -> Result<ScreeningResult> {
    if x.nrows() < 30 {
        return Err(Error::InsufficientData { needed: 30, got: x.nrows() });
    }
    iterative(y, x, None, cfg)
}

/// As [`cpc_sis_case1`] with the external columns `W` added to every design.
pub fn cpc_sis_case3(y: &[f64], x: &DMatrix<f64>, w: &DMatrix<f64>, cfg: &ScreeningConfig) -> Result<ScreeningResult> {
    if x.nrows() < 30 {
        return Err(Error::InsufficientData { needed: 30, got: x.nrows() });
    }
    iterative(y, x, Some(w), cfg)
}

/// Dispatch on `cfg.case_mode`. `w` is required by cases 2 and 3.
pub fn screen(y: &[f64], x: &DMatrix<f64>, w: Option<&DMatrix<f64>>, cfg: &ScreeningConfig) -> Result<ScreeningResult> {
    let need_w = || w.ok_or_else(|| Error::Config("this screening case needs conditioning columns W".into()));
    match cfg.case_mode {
        CaseMode::MarginalCc => cc_sis(y, x, cfg),
        CaseMode::CpcCase1 => cpc_sis_case1(y, x, cfg),
        CaseMode::CpcCase2 => cpc_sis_case2(y, x, need_w()?, cfg),
        CaseMode::CpcCase3 => cpc_sis_case3(y, x, need_w()?, cfg),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    PearsonSis,
    KendallSis,
}

/// Pearson correlation; 0 when either input has zero variance.
pub fn pearson(y: &[f64], x: &[f64]) -> f64 {
    let n = y.len() as f64;
    let my = y.iter().sum::<f64>() / n;
    let mx = x.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in y.iter().zip(x) {
        sxy += (a - my) * (b - mx);
        syy += (a - my) * (a - my);
        sxx += (b - mx) * (b - mx);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Kendall's tau-a, `(concordant - discordant) / C(n, 2)`.
pub fn kendall_tau(y: &[f64], x: &[f64]) -> f64 {
    let n = y.len();
    if n < 2 {
        return 0.0;
    }
    let mut s: i64 = 0;
    for i in 0..n {
        for j in i + 1..n {
            let a = (y[i] - y[j]).signum() * if y[i] == y[j] { 0.0 } else { 1.0 };
            let b = if x[i] == x[j] { 0.0 } else { (x[i] - x[j]).signum() };
            s += (a * b) as i64;
        }
    }
    s as f64 / (n * (n - 1) / 2) as f64
}

pub fn baseline_screeners(y: &[f64], x: &DMatrix<f64>, method: Baseline, d_n: usize) -> Result<ScreeningResult> {
    check_inputs(y, x)?;
    if d_n == 0 {
        return Err(Error::Config("d_n must be at least 1".into()));
    }
    let p = x.ncols();
    let utilities: Vec<f64> = (0..p)
        .into_par_iter()
        .map(|j| {
            let xj = column(x, j);
            match method {
                Baseline::PearsonSis => pearson(y, xj).abs(),
                Baseline::KendallSis => kendall_tau(y, xj).abs(),
            }
        })
        .collect();
    finish(utilities, ThresholdMode::TopDn, d_n, || Ok(Vec::new()), y.len())
}
