//! Probit spatial regression by latent-variable augmentation.
//!
//! `y_i = 1{z_i > 0}` with `z_i ~ N(x_i'γ + (Kβ)_i, 1)`. Each sweep draws the
//! latents from their truncated normals and then runs the Gaussian updates on
//! `z` with σ² pinned at 1.

use nalgebra::DMatrix;
use rand::{Rng, RngExt};
use rand_distr::{Distribution, Exp};
use statrs::function::erf::{erfc, erfc_inv};

use crate::grid::MultiresGrid;
use crate::sampler::{ChainConfig, ChainSamples, Dataset, Hyperparams, Sampler};
use crate::{Coord, Error, Result};

/// Truncation points beyond this many standard deviations use rejection sampling.
const TAIL: f64 = 6.0;

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile.
pub fn norm_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// Standard normal truncated to `(a, ∞)`.
pub fn std_normal_above<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    if a > TAIL {
        // exponential proposal with the optimal rate
        let lambda = 0.5 * (a + (a * a + 4.0).sqrt());
        let exp = Exp::new(lambda).expect("positive rate");
        loop {
            let x = a + exp.sample(rng);
            let u: f64 = rng.random();
            if u <= (-0.5 * (x - lambda).powi(2)).exp() {
                return x;
            }
        }
    }
    let upper = norm_cdf(-a);
    loop {
        let u: f64 = rng.random();
        let x = -norm_quantile(u * upper);
        if x > a && x.is_finite() {
            return x;
        }
    }
}

/// `N(mean, 1)` truncated to `(0, ∞)` when `positive`, else to `(−∞, 0]`.
pub fn truncated_normal<R: Rng + ?Sized>(mean: f64, positive: bool, rng: &mut R) -> f64 {
    if positive {
        mean + std_normal_above(-mean, rng)
    } else {
        let z = mean - std_normal_above(mean, rng);
        z.min(0.0)
    }
}

/// One latent draw per observation.
pub fn update_latents<R: Rng + ?Sized>(labels: &[bool], linear_predictor: &[f64], rng: &mut R) -> Vec<f64> {
    labels.iter().zip(linear_predictor).map(|(&y, &m)| truncated_normal(m, y, rng)).collect()
}

/// Binary responses with predictors and locations.
#[derive(Debug, Clone)]
pub struct BinaryDataset {
    labels: Vec<bool>,
    data: Dataset,
}

impl BinaryDataset {
    /// `y` must hold only 0 and 1.
    pub fn new(y: Vec<f64>, x: DMatrix<f64>, locations: Vec<Coord>) -> Result<Self> {
        if let Some(v) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::Data(format!("binary response must be 0 or 1, found {v}")));
        }
        let labels = y.iter().map(|&v| v == 1.0).collect();
        Ok(Self { labels, data: Dataset::new(y, x, locations)? })
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    /// Underlying data with `y` as 0/1 values.
    pub fn data(&self) -> &Dataset {
        &self.data
    }
}

/// Run a probit chain. Stored draws carry `σ² = 1`.
pub fn run_probit_chain(data: &BinaryDataset, grid: &MultiresGrid, hyper: &Hyperparams, config: &ChainConfig) -> Result<ChainSamples> {
    config.validate()?;
    // start the latents at the truncated standard normal means
    let mean = (2.0 / std::f64::consts::PI).sqrt();
    let start = data.data.with_response(data.labels.iter().map(|&y| if y { mean } else { -mean }).collect())?;
    let mut sampler = Sampler::new(&start, grid, *hyper, config)?;
    sampler.set_binary(data.labels.clone());
    sampler.run(config.n_iter)
}

/// Area under the ROC curve in Mann–Whitney form; tied scores count ½.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch { left: scores.len(), right: labels.len() });
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut k = 0;
    while k < order.len() {
        let mut end = k;
        while end + 1 < order.len() && scores[order[end + 1]] == scores[order[k]] {
            end += 1;
        }
        // average 1-based rank of the tie group
        let rank = (k + end) as f64 / 2.0 + 1.0;
        for &i in &order[k..=end] {
            if labels[i] {
                rank_sum_pos += rank;
            }
        }
        k = end + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}
