mod common;

use common::*;
use mdct::grid::{DomainBox, MultiresGrid};
use mdct::probit::{auc, run_probit_chain, BinaryDataset};
use mdct::sampler::{ChainConfig, Frozen};
use mdct::simdata::{gen_binary, MaternParams};
use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn binary_data(n: usize, gamma: [f64; 2], seed: u64) -> BinaryDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let locs: Vec<[f64; 2]> = (0..n).map(|_| [rng.random::<f64>(), 0.0]).collect();
    let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let x = DMatrix::from_fn(n, 2, |i, k| if k == 0 { 1.0 } else { z[i] });
    let y = (0..n)
        .map(|i| {
            let e: f64 = StandardNormal.sample(&mut rng);
            if gamma[0] + gamma[1] * z[i] + e > 0.0 { 1.0 } else { 0.0 }
        })
        .collect();
    BinaryDataset::new(y, x, locs).unwrap()
}

/// Plain Albert–Chib probit regression with a flat prior on γ, written from scratch.
fn reference_chain(data: &BinaryDataset, n_iter: usize, seed: u64) -> Vec<Vec<f64>> {
    let x = data.data().x();
    let n = x.nrows();
    let xtx_inv = (x.transpose() * x).try_inverse().unwrap();
    let chol = xtx_inv.clone().cholesky().unwrap().l();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gamma = DVector::zeros(x.ncols());
    let mut out = Vec::with_capacity(n_iter);
    for _ in 0..n_iter {
        let m = x * &gamma;
        // naive rejection: fine while |m| stays moderate
        let z = DVector::from_fn(n, |i, _| loop {
            let e: f64 = StandardNormal.sample(&mut rng);
            let v = m[i] + e;
            if (v > 0.0) == data.labels()[i] {
                break v;
            }
        });
        let mean = &xtx_inv * (x.transpose() * z);
        let e = DVector::from_fn(x.ncols(), |_, _| StandardNormal.sample(&mut rng));
        gamma = mean + &chol * e;
        out.push(gamma.iter().copied().collect());
    }
    out
}

#[test]
fn all_ones_push_the_intercept_up() {
    let grid = MultiresGrid::new(DomainBox::interval(0.0, 1.0).unwrap(), 2, &[4]).unwrap();
    let n = 60;
    let locs: Vec<[f64; 2]> = (0..n).map(|i| [i as f64 / n as f64, 0.0]).collect();
    let data = BinaryDataset::new(vec![1.0; n], DMatrix::from_element(n, 1, 1.0), locs).unwrap();
    let cfg = ChainConfig { n_iter: 400, burn_in: 0, seed: 4, ..Default::default() };
    let chain = run_probit_chain(&data, &grid, &hyper(2), &cfg).unwrap();
    let early = mean(&chain.draws[..20].iter().map(|d| d.gamma[0]).collect::<Vec<_>>());
    let late = mean(&chain.draws[300..].iter().map(|d| d.gamma[0]).collect::<Vec<_>>());
    assert!(late > early && late > 1.0, "{early} -> {late}");
    assert!(chain.draws.iter().all(|d| d.sigma2 == 1.0));
}

#[test]
fn frozen_field_matches_reference_probit() {
    let data = binary_data(300, [0.3, -0.8], 17);
    let grid = MultiresGrid::new(DomainBox::interval(0.0, 1.0).unwrap(), 2, &[4]).unwrap();
    let state = fixed_state(&grid, vec![0.0, 0.0], 1.0, 3.0);
    let n_iter = 12_000;
    let burn = 1_000;
    let cfg = ChainConfig {
        n_iter,
        burn_in: burn,
        seed: 23,
        frozen: Frozen { gamma: false, sigma2: true, beta: true, shrinkage: true },
        fixed_eta: Some(1),
        init: Some(state),
        ..Default::default()
    };
    let ours = run_probit_chain(&data, &grid, &hyper(1), &cfg).unwrap();
    let reference = reference_chain(&data, n_iter, 5);
    for k in 0..2 {
        let a: Vec<f64> = ours.draws.iter().map(|d| d.gamma[k]).collect();
        let b: Vec<f64> = reference[burn..].iter().map(|g| g[k]).collect();
        let se = (batch_means_se(&a, 40).powi(2) + batch_means_se(&b, 40).powi(2)).sqrt();
        let diff = mean(&a) - mean(&b);
        assert!(diff.abs() < 3.0 * se, "γ{k}: {} vs {} (se {se})", mean(&a), mean(&b));
    }
}

#[test]
fn simulated_binary_field_is_learnable() {
    let params = MaternParams::new(1.0, 3.0, 0.5).unwrap();
    let split = gen_binary(700, &params, &[0.0, 0.0], 200, 31).unwrap();
    let train = split.train;
    let test = split.test.unwrap();
    assert!(train.prob.iter().all(|&p| (0.0..=1.0).contains(&p)));
    let grid = MultiresGrid::new(DomainBox::rect(0.0, 1.0, 0.0, 1.0).unwrap(), 2, &[5, 5]).unwrap();
    let cfg = ChainConfig { n_iter: 300, burn_in: 100, seed: 2, ..Default::default() };
    let chain = run_probit_chain(&train.data, &grid, &hyper(2), &cfg).unwrap();
    let draws = mdct::predict::predict(test.data.data().locations(), test.data.data().x(), &chain, &grid, 3).unwrap();
    let p: Vec<f64> = (0..test.prob.len()).map(|i| draws.p_mean(i)).collect();
    let a = auc(&p, test.data.labels()).unwrap();
    // the true probabilities bound what any fit can reach
    let oracle = auc(&test.prob, test.data.labels()).unwrap();
    assert!(a > 0.6 && a <= oracle + 0.05, "auc {a}, oracle {oracle}");
}
