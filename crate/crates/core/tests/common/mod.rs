#![allow(dead_code)]

use mdct::grid::{DomainBox, MultiresGrid};
use mdct::sampler::{ChainConfig, Dataset, Frozen, Hyperparams, ModelState, SamplerMode};
use mdct::shrinkage::ShrinkageState;
use mdct::SparseDesign;
use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// n = 50 points on [0, 1], R = 2, J(1) = 4, intercept and one predictor.
pub fn tiny_instance(seed: u64) -> (Dataset, MultiresGrid) {
    let grid = MultiresGrid::new(DomainBox::interval(0.0, 1.0).unwrap(), 2, &[4]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 50;
    let locs: Vec<[f64; 2]> = (0..n).map(|_| [rng.random::<f64>(), 0.0]).collect();
    let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let x = DMatrix::from_fn(n, 2, |i, k| if k == 0 { 1.0 } else { z[i] });
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let s = locs[i][0];
            let e: f64 = StandardNormal.sample(&mut rng);
            1.0 + 0.5 * z[i] + (6.0 * s).sin() + 0.2 * e
        })
        .collect();
    (Dataset::new(y, x, locs).unwrap(), grid)
}

/// A fixed state for the frozen-parameter oracles.
pub fn fixed_state(grid: &MultiresGrid, gamma: Vec<f64>, sigma2: f64, c: f64) -> ModelState {
    let mut delta = vec![c; grid.total_knots()];
    // vary the δ's so the oracle is not symmetric
    for (k, d) in delta.iter_mut().enumerate() {
        *d *= 1.0 + 0.1 * (k % 3) as f64;
    }
    ModelState {
        gamma,
        sigma2,
        beta: vec![0.0; grid.total_knots()],
        shrink: ShrinkageState::from_parts(c, 1.5, delta, grid).unwrap(),
        eta: 1,
    }
}

/// Exact Gaussian posterior of β given γ, σ², δ: `(mean, covariance)`.
pub fn beta_posterior(data: &Dataset, design: &SparseDesign, state: &ModelState) -> (DVector<f64>, DMatrix<f64>) {
    let k = design.to_dense();
    let resid = DVector::from_column_slice(data.y()) - data.x() * DVector::from_column_slice(&state.gamma);
    let mut prec = k.transpose() * &k / state.sigma2;
    for (j, a) in state.shrink.alphas().iter().enumerate() {
        prec[(j, j)] += 1.0 / a;
    }
    let cov = prec.clone().try_inverse().unwrap();
    let mean = &cov * (k.transpose() * resid) / state.sigma2;
    (mean, cov)
}

/// Chain configuration with everything but β frozen at `state`.
pub fn beta_only(state: ModelState, n_iter: usize, burn_in: usize, seed: u64, mode: SamplerMode) -> ChainConfig {
    ChainConfig {
        n_iter,
        burn_in,
        thin: 1,
        seed,
        mode,
        workers: 2,
        frozen: Frozen { gamma: true, sigma2: true, beta: false, shrinkage: true },
        fixed_eta: Some(state.eta),
        init: Some(state),
    }
}

pub fn hyper(h_eta: usize) -> Hyperparams {
    Hyperparams { h_eta, ..Default::default() }
}

/// Standard error of the mean of a correlated series by batch means.
pub fn batch_means_se(series: &[f64], batches: usize) -> f64 {
    let size = series.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| series[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
