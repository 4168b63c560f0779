//! Out-of-sample prediction error of median and least-squares fits on a
//! screened covariate subset, averaged over random train/test splits.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{least_squares, mul_vec};
use crate::quantreg::{fit, DEFAULT_MAX_ITER, DEFAULT_TOL};

const OLS_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeOptions {
    pub partitions: usize,
    /// Fraction of rows used for training.
    pub train_ratio: f64,
    pub seed: u64,
}

impl Default for PeOptions {
    fn default() -> Self {
        Self { partitions: 500, train_ratio: 0.8, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeReport {
    /// Mean test squared error of the median-regression fit.
    pub pe1_mean: f64,
    /// Mean test squared error of the least-squares fit.
    pub pe2_mean: f64,
    pub partitions: usize,
    pub train_ratio: f64,
    pub k: usize,
    /// Partitions in which either fit needed the ridge fallback.
    pub ridge_partitions: usize,
}

fn design(x: &DMatrix<f64>, rows: &[usize], selected: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), selected.len() + 1, |i, c| if c == 0 { 1.0 } else { x[(rows[i], selected[c - 1])] })
}

fn mse(z: &DMatrix<f64>, y: &[f64], beta: &[f64]) -> f64 {
    let pred = mul_vec(z, beta);
    pred.iter().zip(y).map(|(p, v)| (v - p) * (v - p)).sum::<f64>() / y.len() as f64
}

/// Average squared prediction error on held-out rows of fits of `y` on
/// `[1, X_selected]`.
pub fn prediction_error(y: &[f64], x: &DMatrix<f64>, selected: &[usize], opts: &PeOptions) -> Result<PeReport> {
    let n = y.len();
    if x.nrows() != n {
        return Err(Error::LengthMismatch { expected: n, got: x.nrows() });
    }
    if opts.partitions == 0 {
        return Err(Error::Config("partitions must be at least 1".into()));
    }
    if !(opts.train_ratio > 0.0 && opts.train_ratio < 1.0) {
        return Err(Error::Config("train_ratio must be in (0, 1)".into()));
    }
    if let Some(&j) = selected.iter().find(|&&j| j >= x.ncols()) {
        return Err(Error::Config(format!("selected covariate {j} out of range")));
    }
    let n_train = (opts.train_ratio * n as f64).round() as usize;
    if n_train >= n || n_train < 2 {
        return Err(Error::InsufficientData { needed: 3, got: n });
    }
    if selected.len() + 1 >= n_train {
        return Err(Error::DesignTooLarge { columns: selected.len() + 1, n: n_train });
    }

    let per_partition = (0..opts.partitions)
        .into_par_iter()
        .map(|part| -> Result<(f64, f64, bool)> {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(part as u64);
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let (train, test) = idx.split_at(n_train);
            let z_train = design(x, train, selected);
            let z_test = design(x, test, selected);
            let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let y_test: Vec<f64> = test.iter().map(|&i| y[i]).collect();
            let med = fit(&z_train, &y_train, 0.5, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
            let (ols, ols_ridge) = least_squares(&z_train, &y_train, OLS_RIDGE).ok_or(Error::SingularDesign)?;
            Ok((mse(&z_test, &y_test, &med.coefficients), mse(&z_test, &y_test, &ols), med.ridge_used || ols_ridge))
        })
        .collect::<Result<Vec<_>>>()?;

    let m = opts.partitions as f64;
    Ok(PeReport {
        pe1_mean: per_partition.iter().map(|r| r.0).sum::<f64>() / m,
        pe2_mean: per_partition.iter().map(|r| r.1).sum::<f64>() / m,
        partitions: opts.partitions,
        train_ratio: opts.train_ratio,
        k: selected.len(),
        ridge_partitions: per_partition.iter().filter(|r| r.2).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn data(n: usize, p: usize, noise: f64, seed: u64) -> (Vec<f64>, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
        let y = (0..n)
            .map(|i| {
                let e: f64 = StandardNormal.sample(&mut rng);
                1.0 + 3.0 * x[(i, 0)] - 2.0 * x[(i, 1)] + noise * e
            })
            .collect();
        (y, x)
    }

    fn opts(partitions: usize) -> PeOptions {
        PeOptions { partitions, ..PeOptions::default() }
    }

    #[test]
    fn exact_linear_model_predicts_perfectly() {
        let (y, x) = data(60, 4, 0.0, 1);
        let r = prediction_error(&y, &x, &[0, 1], &opts(20)).unwrap();
        assert!(r.pe1_mean < 1e-10 && r.pe2_mean < 1e-10, "{r:?}");
    }

    #[test]
    fn intercept_only_is_spread_around_training_center() {
        let (y, x) = data(50, 2, 1.0, 2);
        let r = prediction_error(&y, &x, &[], &opts(1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        rng.set_stream(0);
        let mut idx: Vec<usize> = (0..50).collect();
        idx.shuffle(&mut rng);
        let (train, test) = idx.split_at(40);
        let mean = train.iter().map(|&i| y[i]).sum::<f64>() / 40.0;
        let pe2: f64 = test.iter().map(|&i| (y[i] - mean).powi(2)).sum::<f64>() / 10.0;
        assert!((r.pe2_mean - pe2).abs() < 1e-10);
    }

    #[test]
    fn shift_invariance_and_determinism() {
        let (y, x) = data(80, 5, 1.0, 3);
        let a = prediction_error(&y, &x, &[0, 2], &opts(25)).unwrap();
        let shifted: Vec<f64> = y.iter().map(|v| v + 10.0).collect();
        let b = prediction_error(&shifted, &x, &[0, 2], &opts(25)).unwrap();
        assert!((a.pe1_mean - b.pe1_mean).abs() < 1e-8);
        assert!((a.pe2_mean - b.pe2_mean).abs() < 1e-8);
        assert_eq!(a, prediction_error(&y, &x, &[0, 2], &opts(25)).unwrap());
    }

    #[test]
    fn signal_beats_noise() {
        let (y, x) = data(200, 6, 1.0, 4);
        let good = prediction_error(&y, &x, &[0, 1], &opts(100)).unwrap();
        let bad = prediction_error(&y, &x, &[3, 4], &opts(100)).unwrap();
        assert!(bad.pe2_mean >= good.pe2_mean);
        assert!(bad.pe1_mean >= good.pe1_mean);
    }

    #[test]
    fn rejects_oversized_models() {
        let (y, x) = data(10, 9, 1.0, 5);
        assert!(matches!(
            prediction_error(&y, &x, &[0, 1, 2, 3, 4, 5, 6, 7], &opts(2)),
            Err(Error::DesignTooLarge { .. })
        ));
    }
}
