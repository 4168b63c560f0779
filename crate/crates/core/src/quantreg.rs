//! Linear quantile regression.
//!
//! The solver runs in two phases. A majorize-minimize iteratively reweighted
//! least squares pass on the smoothed check loss gets close to the optimum,
//! then an exact vertex search (simplex-style pivots over interpolating row
//! sets) lands on a basic solution where `q` residuals are exactly zero. The
//! second phase is what makes the subgradient condition hold to rounding
//! error instead of to the smoothing level.

use nalgebra::{DMatrix, DVector};

use crate::empirical::{check_level, check_loss, equantile, psi, SortedSample};
use crate::error::{Error, Result};
use crate::linalg;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 200;
const RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantRegOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Regularize rank-deficient designs instead of failing.
    pub ridge_fallback: bool,
}

impl Default for QuantRegOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER, ridge_fallback: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantRegFit {
    pub coefficients: Vec<f64>,
    pub level: f64,
    pub residuals: Vec<f64>,
    /// Mean check loss of `residuals`.
    pub objective: f64,
    pub converged: bool,
    /// Reweighting iterations plus vertex pivots.
    pub iterations: usize,
    /// The design was rank deficient and a ridge term was added.
    pub ridge_used: bool,
    /// Rows interpolated by the solution (residual exactly zero). Empty when
    /// no exact vertex was reached.
    pub basis: Vec<usize>,
    /// Subgradient multipliers for the `basis` rows, each in `[w-1, w]` at an
    /// exact optimum.
    pub duals: Vec<f64>,
}

impl QuantRegFit {
    /// `n^-1 sum_i z_i psi_w(r_i)` with the boundary convention `psi_w(0) = w - 1`.
    pub fn raw_score(&self, z: &DMatrix<f64>) -> Vec<f64> {
        let n = self.residuals.len() as f64;
        let scores: Vec<f64> = self.residuals.iter().map(|&r| psi(self.level, r)).collect();
        linalg::weighted_colsum(z, &scores).iter().map(|s| s / n).collect()
    }

    /// Score with the interpolated rows taking their subgradient multipliers
    /// instead of `psi_w(0)`. Zero up to rounding at an exact optimum.
    pub fn subgradient_score(&self, z: &DMatrix<f64>) -> Vec<f64> {
        let n = self.residuals.len() as f64;
        let mut scores: Vec<f64> = self.residuals.iter().map(|&r| psi(self.level, r)).collect();
        for (&i, &v) in self.basis.iter().zip(&self.duals) {
            scores[i] = v;
        }
        linalg::weighted_colsum(z, &scores).iter().map(|s| s / n).collect()
    }
}

/// Mean check loss of `y - Z beta`.
pub fn objective_at(z: &DMatrix<f64>, y: &[f64], w: f64, beta: &[f64]) -> f64 {
    let fitted = linalg::mul_vec(z, beta);
    mean_loss(w, y.iter().zip(&fitted).map(|(yi, fi)| yi - fi))
}

fn mean_loss(w: f64, residuals: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for r in residuals {
        s += check_loss(w, r);
        n += 1;
    }
    s / n as f64
}

/// Fit with the ridge fallback enabled.
pub fn fit(z: &DMatrix<f64>, y: &[f64], w: f64, tol: f64, max_iter: usize) -> Result<QuantRegFit> {
    fit_with(z, y, w, &QuantRegOptions { tol, max_iter, ridge_fallback: true })
}

pub fn fit_with(z: &DMatrix<f64>, y: &[f64], w: f64, opts: &QuantRegOptions) -> Result<QuantRegFit> {
    check_level(w)?;
    let (n, q) = z.shape();
    if q == 0 {
        return Err(Error::Config("design matrix has no columns".into()));
    }
    if y.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: y.len() });
    }
    if n <= q {
        return Err(Error::InsufficientData { needed: q + 1, got: n });
    }
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(Error::Config("tol must be positive and max_iter non-zero".into()));
    }
    if y.iter().chain(z.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite value in regression inputs".into()));
    }
    if q == 1 && z.iter().all(|&v| v == 1.0) {
        return intercept_only(y, w);
    }

    let ridge = if opts.ridge_fallback { RIDGE } else { 0.0 };
    let (ols, ridge_used) = linalg::least_squares(z, y, ridge).ok_or(Error::SingularDesign)?;
    let (beta, irls_iters, irls_converged) = irls(z, y, w, ols.clone(), opts, ridge, ridge_used);

    let mut best = Candidate::new(z, y, w, beta);
    let mut converged = irls_converged;
    let mut iterations = irls_iters;
    let mut basis = Vec::new();
    let mut duals = Vec::new();

    if !ridge_used {
        if let Some(v) = vertex_search(z, y, w, &best.residuals, opts.max_iter.max(10 * q), opts.tol) {
            iterations += v.pivots;
            if v.objective <= best.objective + 1e-12 * (1.0 + best.objective) {
                converged = v.optimal;
                best = Candidate { beta: v.beta, residuals: v.residuals, objective: v.objective };
                basis = v.basis;
                duals = v.duals;
            }
        }
    }

    // Contract: never worse than the zero vector or the least-squares fit.
    for alt in [vec![0.0; q], ols] {
        let cand = Candidate::new(z, y, w, alt);
        if cand.objective < best.objective - 1e-12 * (1.0 + best.objective) {
            best = cand;
            basis.clear();
            duals.clear();
            converged = false;
        }
    }

    Ok(QuantRegFit {
        coefficients: best.beta,
        level: w,
        residuals: best.residuals,
        objective: best.objective,
        converged,
        iterations,
        ridge_used,
        basis,
        duals,
    })
}

struct Candidate {
    beta: Vec<f64>,
    residuals: Vec<f64>,
    objective: f64,
}

impl Candidate {
    fn new(z: &DMatrix<f64>, y: &[f64], w: f64, beta: Vec<f64>) -> Self {
        let fitted = linalg::mul_vec(z, &beta);
        let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
        let objective = mean_loss(w, residuals.iter().copied());
        Self { beta, residuals, objective }
    }
}

/// Constant-only design: the minimizer set contains the `ceil(n w)`-th order
/// statistic, which is returned so that regression residuals line up exactly
/// with the empirical quantile.
fn intercept_only(y: &[f64], w: f64) -> Result<QuantRegFit> {
    let c = equantile(&SortedSample::new(y)?, w)?;
    let residuals: Vec<f64> = y.iter().map(|v| v - c).collect();
    let k = residuals.iter().position(|&r| r == 0.0).expect("order statistic is a sample value");
    let dual = -residuals
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != k)
        .map(|(_, &r)| psi(w, r))
        .sum::<f64>();
    let objective = mean_loss(w, residuals.iter().copied());
    Ok(QuantRegFit {
        coefficients: vec![c],
        level: w,
        residuals,
        objective,
        converged: true,
        iterations: 0,
        ridge_used: false,
        basis: vec![k],
        duals: vec![dual],
    })
}

fn scale_of(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    if sd > 0.0 {
        sd
    } else {
        y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0)
    }
}

/// Majorize-minimize reweighting on the check loss with the `|r|` term
/// floored at `eps`, which shrinks tenfold per level from `1e-2 sd(y)` to
/// `1e-8 sd(y)`. As a warm start (`precise = false`) each level takes at most
/// a couple of steps; otherwise a level ends once the coefficient step falls
/// below `tol`.
fn irls(
    z: &DMatrix<f64>,
    y: &[f64],
    w: f64,
    start: Vec<f64>,
    opts: &QuantRegOptions,
    ridge: f64,
    precise: bool,
) -> (Vec<f64>, usize, bool) {
    let scale = scale_of(y);
    let mut eps = 1e-2 * scale;
    let eps_min = 1e-8 * scale;
    let (level_tol, level_steps) = if precise { (opts.tol, usize::MAX) } else { (1e-2, 1) };
    let mut beta = start;
    let ones_shift = linalg::weighted_colsum(z, &vec![w - 0.5; y.len()]);
    let mut weights = vec![0.0; y.len()];
    let mut target = vec![0.0; y.len()];
    let mut steps_here = 0;

    for iter in 1..=opts.max_iter {
        let fitted = linalg::mul_vec(z, &beta);
        for i in 0..y.len() {
            let r = y[i] - fitted[i];
            weights[i] = 0.5 / r.abs().max(eps);
            target[i] = weights[i] * y[i];
        }
        let gram = linalg::weighted_gram(z, &weights);
        let rhs = linalg::weighted_colsum(z, &target) + &ones_shift;
        let Some((next, _)) = linalg::solve_spd(&gram, &rhs, ridge.max(1e-14)) else {
            return (beta, iter, false);
        };
        let size = beta.iter().fold(1.0f64, |m, b| m.max(b.abs()));
        let step = next.iter().zip(&beta).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        beta = next.iter().copied().collect();
        steps_here += 1;
        if step <= level_tol * size || steps_here >= level_steps {
            if eps <= eps_min {
                return (beta, iter, true);
            }
            eps = (eps * 0.1).max(eps_min);
            steps_here = 0;
        }
    }
    (beta, opts.max_iter, false)
}

struct Vertex {
    beta: Vec<f64>,
    residuals: Vec<f64>,
    objective: f64,
    basis: Vec<usize>,
    duals: Vec<f64>,
    pivots: usize,
    optimal: bool,
}

/// Pick `q` rows with the smallest absolute residual that form a nonsingular
/// square system (modified Gram-Schmidt on the rows).
fn initial_basis(z: &DMatrix<f64>, residuals: &[f64]) -> Option<Vec<usize>> {
    let (n, q) = z.shape();
    let by_size = |a: &usize, b: &usize| residuals[*a].abs().total_cmp(&residuals[*b].abs()).then(a.cmp(b));
    let mut order: Vec<usize> = (0..n).collect();
    // Usually the first few candidates suffice; only order a prefix.
    let prefix = (4 * q).min(n);
    if prefix < n {
        order.select_nth_unstable_by(prefix, by_size);
    }
    order[..prefix].sort_unstable_by(by_size);
    let mut tail_sorted = prefix == n;
    let mut ortho: Vec<DVector<f64>> = Vec::with_capacity(q);
    let mut basis = Vec::with_capacity(q);
    for pos in 0..n {
        if pos == prefix && !tail_sorted {
            order[prefix..].sort_unstable_by(by_size);
            tail_sorted = true;
        }
        let i = order[pos];
        let row = z.row(i).transpose();
        let norm0 = row.norm();
        if norm0 == 0.0 {
            continue;
        }
        let mut v = row.clone_owned();
        for u in &ortho {
            let c = u.dot(&v);
            v -= u * c;
        }
        let norm = v.norm();
        if norm > 1e-9 * norm0 {
            ortho.push(v / norm);
            basis.push(i);
            if basis.len() == q {
                return Some(basis);
            }
        }
    }
    None
}

fn basis_solve(z: &DMatrix<f64>, y: &[f64], basis: &[usize]) -> Option<(Vec<f64>, DMatrix<f64>)> {
    let q = basis.len();
    let b = DMatrix::from_fn(q, q, |r, c| z[(basis[r], c)]);
    let inv = b.try_inverse()?;
    let yh = DVector::from_iterator(q, basis.iter().map(|&i| y[i]));
    let beta = &inv * yh;
    beta.iter().all(|v| v.is_finite()).then(|| (beta.iter().copied().collect(), inv))
}

/// Exact descent over basic solutions. Moving off row `k` of the basis in
/// direction `s` changes residual `i` at rate `a_i = s * M_ik`, with
/// `M = Z B^-1`; the one-sided derivative of the loss is then
/// `rho_w(s) + sum a_i psi_w(r_i)` over non-basic rows (zero residuals
/// contribute `rho_w(a_i)`), and the step stops at the breakpoint where the
/// slope turns non-negative. `M` and the residuals are updated in place after
/// each pivot and refactorized periodically and before declaring optimality.
fn vertex_search(
    z: &DMatrix<f64>,
    y: &[f64],
    w: f64,
    start: &[f64],
    max_pivots: usize,
    tol: f64,
) -> Option<Vertex> {
    const REFRESH_EVERY: usize = 32;
    let (n, q) = z.shape();
    let mut basis = initial_basis(z, start)?;
    let mut in_basis = vec![false; n];
    let zero_tol = 1e-12 * scale_of(y);
    // Relative slack on directional derivatives before an edge counts as descent.
    let price_tol = 1e-2 * tol;
    let mut pivots = 0;
    let mut breaks: Vec<(f64, f64, usize)> = Vec::with_capacity(n);
    let mut col_k = vec![0.0; n];
    let mut row_e = vec![0.0; q];
    loop {
        in_basis.fill(false);
        for &i in &basis {
            in_basis[i] = true;
        }
        let (beta, inv) = basis_solve(z, y, &basis)?;
        let mut residuals: Vec<f64> = {
            let fitted = linalg::mul_vec(z, &beta);
            y.iter().zip(&fitted).map(|(a, b)| a - b).collect()
        };
        for &i in &basis {
            residuals[i] = 0.0;
        }
        let mut m = z * &inv;
        let mut fresh = true;
        loop {
            let (edge, duals) = steepest_edge(&m, &residuals, &in_basis, w, zero_tol, price_tol);
            let done = edge.is_none() || pivots >= max_pivots;
            if done && fresh {
                let objective = mean_loss(w, residuals.iter().copied());
                let optimal = edge.is_none();
                return Some(Vertex { beta, residuals, objective, basis, duals, pivots, optimal });
            }
            if done {
                break;
            }
            let (slope0, k, s) = edge?;

            // Ratio test along the chosen edge.
            breaks.clear();
            let md = m.as_mut_slice();
            let mk = &md[k * n..(k + 1) * n];
            for i in 0..n {
                let a = s * mk[i];
                let r = residuals[i];
                if !in_basis[i] && r.abs() > zero_tol && a != 0.0 && (r > 0.0) != (a > 0.0) {
                    breaks.push((-r / a, a.abs(), i));
                }
            }
            let entering = first_crossing(&mut breaks, -slope0);
            // The loss is bounded below, so an unbounded edge means numerical
            // trouble; give up on the exact phase.
            let (t, e) = entering?;

            col_k.copy_from_slice(mk);
            let ts = t * s;
            for (r, ck) in residuals.iter_mut().zip(&col_k) {
                *r += ts * ck;
            }
            residuals[e] = 0.0;
            let pivot = col_k[e];
            for c in 0..q {
                row_e[c] = md[c * n + e];
            }
            for c in 0..q {
                let g = (row_e[c] - if c == k { 1.0 } else { 0.0 }) / pivot;
                if g == 0.0 {
                    continue;
                }
                for (mi, ck) in md[c * n..(c + 1) * n].iter_mut().zip(&col_k) {
                    *mi -= ck * g;
                }
            }
            in_basis[basis[k]] = false;
            in_basis[e] = true;
            basis[k] = e;
            pivots += 1;
            fresh = false;
            if pivots % REFRESH_EVERY == 0 {
                break;
            }
        }
    }
}

/// Walking the breakpoints `(t, |a|, row)` in increasing `t`,
/// return `(t, row)` of the first one at which the accumulated slope
/// increments reach `need`. Expected linear time via repeated partitioning.
fn first_crossing(breaks: &mut [(f64, f64, usize)], mut need: f64) -> Option<(f64, usize)> {
    let order = |x: &(f64, f64, usize), y: &(f64, f64, usize)| x.0.total_cmp(&y.0);
    let (mut lo, mut hi) = (0, breaks.len());
    while hi > lo + 1 {
        let mid = lo + (hi - lo) / 2;
        breaks[lo..hi].select_nth_unstable_by(mid - lo, order);
        let left: f64 = breaks[lo..mid].iter().map(|b| b.1).sum();
        if left >= need {
            hi = mid;
        } else {
            need -= left;
            lo = mid;
        }
    }
    (hi == lo + 1 && breaks[lo].1 >= need).then(|| (breaks[lo].0, breaks[lo].2))
}

/// Most negative directional derivative over all edges `(k, s)`, together
/// with the basis multipliers `-sum_{i not in basis} psi_w(r_i) M_ik`.
fn steepest_edge(
    m: &DMatrix<f64>,
    residuals: &[f64],
    in_basis: &[bool],
    w: f64,
    zero_tol: f64,
    price_tol: f64,
) -> (Option<(f64, usize, f64)>, Vec<f64>) {
    let (n, q) = m.shape();
    // Slopes of non-basic rows; zero residuals are handled separately since
    // their contribution is not linear in the direction.
    let mut zeros = Vec::new();
    let slopes: Vec<f64> = residuals
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            if in_basis[i] {
                0.0
            } else if r.abs() <= zero_tol {
                zeros.push(i);
                0.0
            } else if r > 0.0 {
                w
            } else {
                w - 1.0
            }
        })
        .collect();
    let mut best: Option<(f64, usize, f64)> = None;
    let mut duals = vec![0.0; q];
    for k in 0..q {
        let col = &m.as_slice()[k * n..(k + 1) * n];
        let (mut slope_lin, mut mass) = (0.0, 0.0);
        for (mik, g) in col.iter().zip(&slopes) {
            slope_lin += mik * g;
            mass += (mik * g).abs();
        }
        let (mut plus_zero, mut minus_zero) = (0.0, 0.0);
        for &i in &zeros {
            plus_zero += check_loss(w, col[i]);
            minus_zero += check_loss(w, -col[i]);
            mass += col[i].abs();
        }
        duals[k] = -slope_lin;
        let threshold = -price_tol * (1.0 + mass);
        for (s, d) in [(1.0, w + slope_lin + plus_zero), (-1.0, (1.0 - w) - slope_lin + minus_zero)] {
            if d < threshold && best.is_none_or(|(bd, _, _)| d < bd) {
                best = Some((d, k, s));
            }
        }
    }
    (best, duals)
}
