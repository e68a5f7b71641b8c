//! Synthetic experiments: the 1D piecewise surface, 2D Matérn fields and
//! binary probit data.
//!
//! Every generator is a pure function of its seed.

use nalgebra::{Cholesky, DMatrix};
use rand::RngExt;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::probit::{norm_cdf, BinaryDataset};
use crate::sampler::Dataset;
use crate::streams::{stream, Tag};
use crate::{dist, Coord, Error, Result};

/// Largest `n` accepted by the dense Matérn generators.
pub const MAX_DENSE_N: usize = 12_000;

/// The four-piece test surface on `[0, 10]`.
pub fn w0_1d(s: f64) -> Result<f64> {
    use std::f64::consts::PI;
    if !(0.0..=10.0).contains(&s) {
        return Err(Error::Domain(format!("1D surface is defined on [0, 10], got {s}")));
    }
    Ok(if s < 2.0 {
        (2.0 * PI * s).sin() * s
    } else if s < 4.0 {
        (s - 3.0).sin().abs().powi(3)
    } else if s < 6.0 {
        5.0 * (s - 5.0).abs()
    } else {
        (2.0 * PI * s).sin() * s
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaternParams {
    /// Marginal variance.
    pub theta1: f64,
    /// Decay.
    pub theta2: f64,
    /// Smoothness.
    pub nu: f64,
}

impl MaternParams {
    pub fn new(theta1: f64, theta2: f64, nu: f64) -> Result<Self> {
        if !(theta1 > 0.0 && theta2 > 0.0 && nu > 0.0) || !(theta1.is_finite() && theta2.is_finite() && nu.is_finite()) {
            return Err(Error::Config(format!("invalid Matérn parameters θ1={theta1}, θ2={theta2}, ν={nu}")));
        }
        Ok(Self { theta1, theta2, nu })
    }
}

impl Default for MaternParams {
    fn default() -> Self {
        Self { theta1: 1.0, theta2: 3.0, nu: 0.5 }
    }
}

/// `∫_0^∞ exp(−x(cosh t − 1)) cosh(νt) dt = e^x K_ν(x)`, by the trapezoid rule.
///
/// The integrand is analytic and decays doubly exponentially, so a fixed
/// step already gives full double precision.
pub fn bessel_k_scaled(nu: f64, x: f64) -> f64 {
    assert!(x > 0.0, "bessel_k_scaled needs x > 0");
    let h = 0.05;
    let f = |t: f64| (-x * (t.cosh() - 1.0) + nu.abs() * t).exp() * 0.5 * (1.0 + (-2.0 * nu.abs() * t).exp());
    let mut sum = 0.5 * f(0.0);
    let mut k = 1;
    loop {
        let v = f(k as f64 * h);
        sum += v;
        if v < 1e-18 * sum && x * ((k as f64 * h).cosh() - 1.0) > 1.0 {
            break;
        }
        k += 1;
    }
    sum * h
}

/// Modified Bessel function of the second kind `K_ν(x)`.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    bessel_k_scaled(nu, x) * (-x).exp()
}

/// Matérn covariance at distance `d`.
pub fn matern(d: f64, params: &MaternParams) -> f64 {
    let MaternParams { theta1, theta2, nu } = *params;
    if d <= 0.0 {
        return theta1;
    }
    let x = d * theta2;
    if nu == 0.5 {
        theta1 * (-x).exp()
    } else if nu == 1.5 {
        theta1 * (1.0 + x) * (-x).exp()
    } else if nu == 2.5 {
        theta1 * (1.0 + x + x * x / 3.0) * (-x).exp()
    } else {
        let log = nu * x.ln() - x - (nu - 1.0) * std::f64::consts::LN_2 - ln_gamma(nu);
        theta1 * log.exp() * bessel_k_scaled(nu, x)
    }
}

/// Dense Matérn covariance of `points`.
pub fn matern_matrix(points: &[Coord], params: &MaternParams) -> DMatrix<f64> {
    let n = points.len();
    let mut m = DMatrix::zeros(n, n);
    m.as_mut_slice().par_chunks_mut(n.max(1)).enumerate().for_each(|(j, col)| {
        for (i, v) in col.iter_mut().enumerate() {
            *v = matern(dist(&points[i], &points[j]), params);
        }
    });
    m
}

/// A simulated dataset and the true surface at its locations.
#[derive(Debug, Clone)]
pub struct SimData {
    pub data: Dataset,
    pub truth: Vec<f64>,
}

/// Training and held-out parts of one simulation.
#[derive(Debug, Clone)]
pub struct SimSplit<T> {
    pub train: T,
    /// Absent when no rows are held out.
    pub test: Option<T>,
}

fn normals(seed: u64, part: u64, n: usize) -> Vec<f64> {
    let mut rng = stream(seed, 0, Tag::Init, part);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// `X = [1, z_1, …]` with standard normal predictors, `p = gamma.len()` columns.
fn predictors(seed: u64, n: usize, p: usize) -> Result<DMatrix<f64>> {
    if p == 0 {
        return Err(Error::Config("gamma needs at least an intercept".into()));
    }
    let z = normals(seed, 2, n * (p - 1));
    Ok(DMatrix::from_fn(n, p, |i, k| if k == 0 { 1.0 } else { z[(k - 1) * n + i] }))
}

fn response(x: &DMatrix<f64>, gamma: &[f64], w: &[f64], noise: &[f64]) -> Vec<f64> {
    (0..x.nrows())
        .map(|i| (0..gamma.len()).map(|k| x[(i, k)] * gamma[k]).sum::<f64>() + w[i] + noise[i])
        .collect()
}

fn split_rows<T>(n: usize, n_test: usize, build: impl Fn(std::ops::Range<usize>) -> Result<T>) -> Result<SimSplit<T>> {
    if n_test >= n {
        return Err(Error::Config(format!("test size {n_test} leaves no training rows out of {n}")));
    }
    let test = if n_test == 0 { None } else { Some(build(n - n_test..n)?) };
    Ok(SimSplit { train: build(0..n - n_test)?, test })
}

/// 1D experiment: uniform locations on `[0, 10]`, `y = Xγ + w0_1d(s) + N(0, noise_sd²)`.
pub fn gen_1d(n: usize, noise_sd: f64, gamma: &[f64], seed: u64) -> Result<SimData> {
    if n == 0 {
        return Err(Error::Config("n must be at least 1".into()));
    }
    if !(noise_sd >= 0.0) {
        return Err(Error::Config(format!("noise_sd must be nonnegative, got {noise_sd}")));
    }
    let mut rng = stream(seed, 0, Tag::Init, 1);
    let locations: Vec<Coord> = (0..n).map(|_| [rng.random_range(0.0..=10.0), 0.0]).collect();
    let truth: Vec<f64> = locations.iter().map(|s| w0_1d(s[0])).collect::<Result<_>>()?;
    let x = predictors(seed, n, gamma.len())?;
    let noise: Vec<f64> = normals(seed, 3, n).into_iter().map(|z| z * noise_sd).collect();
    let y = response(&x, gamma, &truth, &noise);
    Ok(SimData { data: Dataset::new(y, x, locations)?, truth })
}

/// Uniform locations on `[0,1]²` and a Matérn field drawn through a dense
/// Cholesky factor. Returns locations, predictors and `w0`.
fn matern_field(n: usize, params: &MaternParams, p: usize, seed: u64) -> Result<(Vec<Coord>, DMatrix<f64>, Vec<f64>)> {
    if n == 0 || n > MAX_DENSE_N {
        return Err(Error::Config(format!("dense Matérn simulation needs 1 ≤ n ≤ {MAX_DENSE_N}, got {n}")));
    }
    let mut rng = stream(seed, 0, Tag::Init, 1);
    let locations: Vec<Coord> = (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
    let chol = match Cholesky::new(matern_matrix(&locations, params)) {
        Some(c) => c,
        None => {
            let mut m = matern_matrix(&locations, params);
            for i in 0..n {
                m[(i, i)] += 1e-8 * params.theta1;
            }
            Cholesky::new(m).ok_or_else(|| Error::Numerical("Matérn covariance is not positive definite".into()))?
        }
    };
    let z = normals(seed, 4, n);
    let l = chol.l_dirty();
    let mut w = vec![0.0; n];
    for j in 0..n {
        let col = &l.as_slice()[j * n..(j + 1) * n];
        for i in j..n {
            w[i] += col[i] * z[j];
        }
    }
    let x = predictors(seed, n, p)?;
    Ok((locations, x, w))
}

fn take(locations: &[Coord], x: &DMatrix<f64>, v: &[f64], rows: std::ops::Range<usize>) -> (Vec<Coord>, DMatrix<f64>, Vec<f64>) {
    (locations[rows.clone()].to_vec(), x.rows(rows.start, rows.len()).into_owned(), v[rows].to_vec())
}

/// 2D experiment: `y = Xγ + w0 + ε`, `Var ε = θ1 / noise_ratio`. The last
/// `n_test` rows are held out.
pub fn gen_2d(n: usize, params: &MaternParams, noise_ratio: f64, gamma: &[f64], n_test: usize, seed: u64) -> Result<SimSplit<SimData>> {
    if !(noise_ratio > 0.0) {
        return Err(Error::Config(format!("noise ratio must be positive, got {noise_ratio}")));
    }
    let (locations, x, w) = matern_field(n, params, gamma.len(), seed)?;
    let sd = (params.theta1 / noise_ratio).sqrt();
    let noise: Vec<f64> = normals(seed, 3, n).into_iter().map(|z| z * sd).collect();
    let y = response(&x, gamma, &w, &noise);
    split_rows(n, n_test, |rows| {
        let (l, xs, t) = take(&locations, &x, &w, rows.clone());
        Ok(SimData { data: Dataset::new(y[rows].to_vec(), xs, l)?, truth: t })
    })
}

/// A simulated binary dataset with its latent surface and success probabilities.
#[derive(Debug, Clone)]
pub struct SimBinary {
    pub data: BinaryDataset,
    pub truth: Vec<f64>,
    pub prob: Vec<f64>,
}

/// Probit experiment: `y ~ Bernoulli(Φ(x'γ + w0))` with `w0` as in [`gen_2d`].
pub fn gen_binary(n: usize, params: &MaternParams, gamma: &[f64], n_test: usize, seed: u64) -> Result<SimSplit<SimBinary>> {
    let (locations, x, w) = matern_field(n, params, gamma.len(), seed)?;
    let zero = vec![0.0; n];
    let eta = response(&x, gamma, &w, &zero);
    let prob: Vec<f64> = eta.iter().map(|&e| norm_cdf(e)).collect();
    let mut rng = stream(seed, 0, Tag::Init, 5);
    let y: Vec<f64> = prob.iter().map(|&p| if rng.random::<f64>() < p { 1.0 } else { 0.0 }).collect();
    split_rows(n, n_test, |rows| {
        let (l, xs, t) = take(&locations, &x, &w, rows.clone());
        Ok(SimBinary { data: BinaryDataset::new(y[rows.clone()].to_vec(), xs, l)?, truth: t, prob: prob[rows].to_vec() })
    })
}

/// Closed-form smooth surface on `[0,1]²`, used where a dense field is too costly.
pub fn smooth_surface(s: &Coord) -> f64 {
    use std::f64::consts::PI;
    let bump = (-((s[0] - 0.3).powi(2) + (s[1] - 0.7).powi(2)) / 0.02).exp();
    (3.0 * PI * s[0]).sin() * (2.0 * PI * s[1]).cos() + 1.5 * bump
}

/// Large-`n` 2D data on [`smooth_surface`] for timing runs.
pub fn gen_2d_fast(n: usize, noise_sd: f64, gamma: &[f64], seed: u64) -> Result<SimData> {
    if n == 0 {
        return Err(Error::Config("n must be at least 1".into()));
    }
    let mut rng = stream(seed, 0, Tag::Init, 1);
    let locations: Vec<Coord> = (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
    let truth: Vec<f64> = locations.iter().map(smooth_surface).collect();
    let x = predictors(seed, n, gamma.len())?;
    let noise: Vec<f64> = normals(seed, 3, n).into_iter().map(|z| z * noise_sd).collect();
    let y = response(&x, gamma, &truth, &noise);
    Ok(SimData { data: Dataset::new(y, x, locations)?, truth })
}
