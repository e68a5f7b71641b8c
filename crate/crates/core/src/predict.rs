//! Composition-sampling prediction and evaluation metrics.
//!
//! For each stored draw `Θ^(l)` the predictive mean at `s0` is
//! `μ^(l) = x0'γ^(l) + Σ K(s0, s_j^r; φ_r(η^(l))) β_j^{r,(l)}` and a predictive
//! sample is `y^(l) ~ N(μ^(l), σ^{2,(l)})`. The bandwidths follow the η
//! stored with each draw.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::grid::MultiresGrid;
use crate::kernel::{kernel_row, KernelConfig};
use crate::probit::norm_cdf;
use crate::sampler::ChainSamples;
use crate::streams::{stream, Tag};
use crate::{Coord, Error, Result};

/// Draws at one location.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionEntry {
    /// Predictive samples `y^(l)`.
    pub y: Vec<f64>,
    /// Residual surface samples `w^(l)`.
    pub w: Vec<f64>,
    /// Mean function samples `μ^(l)`.
    pub mu: Vec<f64>,
}

/// Mean, median and central 95% interval of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub lo95: f64,
    pub hi95: f64,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl Summary {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::UndefinedMetric("summary of an empty sample".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            median: quantile_sorted(&sorted, 0.5),
            lo95: quantile_sorted(&sorted, 0.025),
            hi95: quantile_sorted(&sorted, 0.975),
        })
    }
}

/// Kernel configurations for every η appearing in a chain.
struct Bandwidths(Vec<Option<KernelConfig>>);

impl Bandwidths {
    fn new(chain: &ChainSamples, grid: &MultiresGrid) -> Result<Self> {
        let max = chain.draws.iter().map(|d| d.eta).max().unwrap_or(0);
        let mut v: Vec<Option<KernelConfig>> = (0..=max).map(|_| None).collect();
        for d in &chain.draws {
            if v[d.eta].is_none() {
                v[d.eta] = Some(KernelConfig::new(grid, d.eta as f64)?);
            }
        }
        Ok(Self(v))
    }

    /// `w^(l)(s0)` for every draw.
    fn surface(&self, s0: &Coord, chain: &ChainSamples, grid: &MultiresGrid) -> Vec<f64> {
        let mut rows: Vec<Option<Vec<(u32, f64)>>> = vec![None; self.0.len()];
        chain
            .draws
            .iter()
            .map(|d| {
                let row = rows[d.eta].get_or_insert_with(|| kernel_row(s0, grid, self.0[d.eta].as_ref().unwrap()));
                row.iter().map(|&(c, v)| v * d.beta[c as usize]).sum()
            })
            .collect()
    }
}

fn check_point(s0: &Coord, grid: &MultiresGrid) -> Result<()> {
    if grid.domain().contains(s0) {
        Ok(())
    } else {
        Err(Error::OutOfDomain(s0[..grid.dim()].to_vec()))
    }
}

/// Predictive draws at `s0` with predictors `x0`.
pub fn predict_at<R: Rng + ?Sized>(
    s0: &Coord,
    x0: &[f64],
    chain: &ChainSamples,
    grid: &MultiresGrid,
    rng: &mut R,
) -> Result<PredictionEntry> {
    check_point(s0, grid)?;
    let bw = Bandwidths::new(chain, grid)?;
    entry(s0, x0, chain, grid, &bw, rng)
}

fn entry<R: Rng + ?Sized>(
    s0: &Coord,
    x0: &[f64],
    chain: &ChainSamples,
    grid: &MultiresGrid,
    bw: &Bandwidths,
    rng: &mut R,
) -> Result<PredictionEntry> {
    let w = bw.surface(s0, chain, grid);
    let mut mu = Vec::with_capacity(w.len());
    let mut y = Vec::with_capacity(w.len());
    for (d, wl) in chain.draws.iter().zip(&w) {
        if d.gamma.len() != x0.len() {
            return Err(Error::LengthMismatch { left: x0.len(), right: d.gamma.len() });
        }
        let m = x0.iter().zip(&d.gamma).map(|(a, b)| a * b).sum::<f64>() + wl;
        let z: f64 = StandardNormal.sample(rng);
        mu.push(m);
        y.push(m + d.sigma2.sqrt() * z);
    }
    Ok(PredictionEntry { y, w, mu })
}

/// Draws at many locations.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionDraws {
    pub locations: Vec<Coord>,
    pub entries: Vec<PredictionEntry>,
}

impl PredictionDraws {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn y_summary(&self, i: usize) -> Result<Summary> {
        Summary::of(&self.entries[i].y)
    }

    pub fn w_summary(&self, i: usize) -> Result<Summary> {
        Summary::of(&self.entries[i].w)
    }

    /// Posterior mean of `Φ(μ)` at point `i` (probit models).
    pub fn p_mean(&self, i: usize) -> f64 {
        let mu = &self.entries[i].mu;
        mu.iter().map(|&m| norm_cdf(m)).sum::<f64>() / mu.len().max(1) as f64
    }
}

/// Predict at every row of `locations` / `x`; point `i` uses its own random stream.
pub fn predict(locations: &[Coord], x: &DMatrix<f64>, chain: &ChainSamples, grid: &MultiresGrid, seed: u64) -> Result<PredictionDraws> {
    if x.nrows() != locations.len() {
        return Err(Error::LengthMismatch { left: x.nrows(), right: locations.len() });
    }
    if chain.is_empty() {
        return Err(Error::Data("chain has no stored draws".into()));
    }
    for s in locations {
        check_point(s, grid)?;
    }
    let bw = Bandwidths::new(chain, grid)?;
    let entries = (0..locations.len())
        .into_par_iter()
        .map(|i| {
            let x0: Vec<f64> = x.row(i).iter().copied().collect();
            let mut rng = stream(seed, 0, Tag::Predict, i as u64);
            entry(&locations[i], &x0, chain, grid, &bw, &mut rng)
        })
        .collect::<Result<_>>()?;
    Ok(PredictionDraws { locations: locations.to_vec(), entries })
}

/// Residual surface draws `w^(l)(s)` at each point, no noise added.
pub fn residual_surface(points: &[Coord], chain: &ChainSamples, grid: &MultiresGrid) -> Result<Vec<Vec<f64>>> {
    for s in points {
        check_point(s, grid)?;
    }
    let bw = Bandwidths::new(chain, grid)?;
    Ok(points.par_iter().map(|s| bw.surface(s, chain, grid)).collect())
}

/// Posterior median of the residual surface at each point.
pub fn surface_median(points: &[Coord], chain: &ChainSamples, grid: &MultiresGrid) -> Result<Vec<f64>> {
    residual_surface(points, chain, grid)?
        .iter()
        .map(|w| Summary::of(w).map(|s| s.median))
        .collect()
}

/// `(1/n) Σ (est_i − truth_i)²`.
pub fn mse(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::LengthMismatch { left: estimate.len(), right: truth.len() });
    }
    if estimate.is_empty() {
        return Err(Error::UndefinedMetric("MSE of an empty vector".into()));
    }
    Ok(estimate.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / estimate.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictiveMetrics {
    /// Mean squared error of the predictive means.
    pub mspe: f64,
    /// Fraction of truths inside the central 95% predictive interval.
    pub coverage95: f64,
    pub mean_length95: f64,
}

pub fn predictive_metrics(draws: &PredictionDraws, truth: &[f64]) -> Result<PredictiveMetrics> {
    if draws.len() != truth.len() {
        return Err(Error::LengthMismatch { left: draws.len(), right: truth.len() });
    }
    if truth.is_empty() {
        return Err(Error::UndefinedMetric("no prediction points".into()));
    }
    let summaries: Vec<Summary> = (0..draws.len()).map(|i| draws.y_summary(i)).collect::<Result<_>>()?;
    let means: Vec<f64> = summaries.iter().map(|s| s.mean).collect();
    let n = truth.len() as f64;
    let covered = summaries.iter().zip(truth).filter(|(s, &t)| s.lo95 <= t && t <= s.hi95).count();
    Ok(PredictiveMetrics {
        mspe: mse(&means, truth)?,
        coverage95: covered as f64 / n,
        mean_length95: summaries.iter().map(|s| s.hi95 - s.lo95).sum::<f64>() / n,
    })
}
