//! Blocked Gibbs sampler for the MDCT regression
//!
//! ```text
//! y = Xγ + K_η β + ε,   ε ~ N(0, σ² I)
//! ```
//!
//! One iteration runs, in order: η selection over `1..=h_eta`, every
//! resolution-1 subtree block of β, γ, σ², the `δ_{j,r}` coarse to fine,
//! and finally `δ_1`.
//!
//! Three block schedules are available:
//!
//! - [`SamplerMode::Sequential`]: blocks are swept one at a time, always
//!   conditioning on the latest values. Exact Gibbs.
//! - [`SamplerMode::Chromatic`]: blocks whose data supports do not overlap
//!   share a color and are drawn concurrently. Exact Gibbs, and draw-for-draw
//!   identical to `Sequential` at equal seed.
//! - [`SamplerMode::Jacobi`]: every block is drawn concurrently from the
//!   previous iteration's values. This is an approximate sampler and is kept
//!   for benchmarking.

mod blocks;
mod checkpoint;
mod engine;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::grid::MultiresGrid;
use crate::shrinkage::ShrinkageState;
use crate::{Coord, Error, Result};

pub use blocks::BlockLayout;
pub use checkpoint::{meta_path, read_chain, write_chain, ChainMeta};
pub use engine::{block_conditional_direct, BlockConditional, Sampler};

/// Observations, predictors and locations for the Gaussian model.
#[derive(Debug, Clone)]
pub struct Dataset {
    y: Vec<f64>,
    x: DMatrix<f64>,
    locations: Vec<Coord>,
}

impl Dataset {
    /// Checks lengths and that `X` has full column rank.
    pub fn new(y: Vec<f64>, x: DMatrix<f64>, locations: Vec<Coord>) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::Data("dataset has no rows".into()));
        }
        if x.nrows() != n {
            return Err(Error::LengthMismatch { left: x.nrows(), right: n });
        }
        if locations.len() != n {
            return Err(Error::LengthMismatch { left: locations.len(), right: n });
        }
        if x.ncols() == 0 {
            return Err(Error::Data("predictor matrix has no columns".into()));
        }
        if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite value in y or X".into()));
        }
        if x.ncols() > n {
            return Err(Error::Data(format!("{} predictors for {} rows", x.ncols(), n)));
        }
        let sv = x.clone().svd(false, false).singular_values;
        let max = sv.max();
        let tol = max * n.max(x.ncols()) as f64 * f64::EPSILON;
        if !(max > 0.0) || sv.iter().any(|&s| s <= tol) {
            return Err(Error::Data("predictor matrix X is rank deficient".into()));
        }
        Ok(Self { y, x, locations })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn locations(&self) -> &[Coord] {
        &self.locations
    }

    /// Same predictors and locations with a new response.
    pub fn with_response(&self, y: Vec<f64>) -> Result<Self> {
        if y.len() != self.n() {
            return Err(Error::LengthMismatch { left: y.len(), right: self.n() });
        }
        Ok(Self { y, x: self.x.clone(), locations: self.locations.clone() })
    }

    /// Rows `rows` as a new dataset.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let y = rows.iter().map(|&i| self.y[i]).collect();
        let x = self.x.select_rows(rows.iter());
        let locations = rows.iter().map(|&i| self.locations[i]).collect();
        Self::new(y, x, locations)
    }
}

/// Prior hyperparameters and the η grid size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    /// Gamma shape of the `δ_{j,r}`; must exceed 2.
    pub c: f64,
    /// Inverse-Gamma shape of σ².
    pub a_sigma: f64,
    /// Inverse-Gamma rate of σ².
    pub b_sigma: f64,
    /// η ranges over `1..=h_eta`.
    pub h_eta: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self { c: 3.0, a_sigma: 2.0, b_sigma: 1.0, h_eta: 5 }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 2.0 && self.c.is_finite()) {
            return Err(Error::Hyperparameter(format!("c must exceed 2, got {}", self.c)));
        }
        if !(self.a_sigma > 0.0 && self.b_sigma > 0.0 && self.a_sigma.is_finite() && self.b_sigma.is_finite()) {
            return Err(Error::Hyperparameter("a_sigma and b_sigma must be positive".into()));
        }
        if self.h_eta == 0 {
            return Err(Error::Hyperparameter("h_eta must be at least 1".into()));
        }
        Ok(())
    }
}

/// Current values of all model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub gamma: Vec<f64>,
    pub sigma2: f64,
    /// Coefficients in the grid's column layout.
    pub beta: Vec<f64>,
    pub shrink: ShrinkageState,
    /// Bandwidth multiplier, in `1..=h_eta`.
    pub eta: usize,
}

/// Block schedule of the β updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplerMode {
    Sequential,
    #[default]
    Chromatic,
    Jacobi,
}

impl fmt::Display for SamplerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplerMode::Sequential => "sequential",
            SamplerMode::Chromatic => "chromatic",
            SamplerMode::Jacobi => "jacobi",
        })
    }
}

impl FromStr for SamplerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sequential" => Ok(SamplerMode::Sequential),
            "chromatic" => Ok(SamplerMode::Chromatic),
            "jacobi" => Ok(SamplerMode::Jacobi),
            other => Err(Error::Config(format!("unknown sampler mode '{other}'"))),
        }
    }
}

/// Parameters held fixed at their initial values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Frozen {
    pub gamma: bool,
    pub sigma2: bool,
    pub beta: bool,
    /// All δ, including `δ_1`.
    pub shrinkage: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub mode: SamplerMode,
    /// Worker threads for `Chromatic` and `Jacobi`; `Sequential` always uses one.
    pub workers: usize,
    pub frozen: Frozen,
    /// Skip η selection and hold η at this value.
    pub fixed_eta: Option<usize>,
    /// Starting state; the default initialization is used when absent.
    pub init: Option<ModelState>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_iter: 1000,
            burn_in: 500,
            thin: 1,
            seed: 1,
            mode: SamplerMode::default(),
            workers: 1,
            frozen: Frozen::default(),
            fixed_eta: None,
            init: None,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iter < self.burn_in {
            return Err(Error::Config(format!("n_iter ({}) is smaller than burn_in ({})", self.n_iter, self.burn_in)));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of draws a chain with this configuration stores.
    pub fn stored_count(&self) -> usize {
        (self.n_iter - self.burn_in).div_ceil(self.thin)
    }

    #[cfg(test)]
    fn keeps(&self, iter: usize) -> bool {
        keeps(self.burn_in, self.thin, iter)
    }
}

/// Whether iteration `iter` (0-based) is stored.
pub(crate) fn keeps(burn_in: usize, thin: usize, iter: usize) -> bool {
    iter >= burn_in && (iter - burn_in) % thin == 0
}

/// One stored iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    /// 0-based iteration number.
    pub iter: usize,
    pub eta: usize,
    pub sigma2: f64,
    pub delta1: f64,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    /// `δ_{j,r}` for `r ≥ 2`, column order.
    pub delta: Vec<f64>,
}

/// Stored draws of a chain plus run metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSamples {
    pub draws: Vec<Draw>,
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub mode: SamplerMode,
    /// Wall time of each iteration in seconds (not persisted in chain files).
    pub iter_seconds: Vec<f64>,
}

impl ChainSamples {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Posterior mean of β.
    pub fn beta_mean(&self) -> Vec<f64> {
        column_mean(self.draws.iter().map(|d| &d.beta[..]))
    }

    /// Posterior mean of γ.
    pub fn gamma_mean(&self) -> Vec<f64> {
        column_mean(self.draws.iter().map(|d| &d.gamma[..]))
    }

    /// How often each η in `1..=h` was selected among stored draws.
    pub fn eta_counts(&self, h: usize) -> Vec<usize> {
        let mut counts = vec![0; h];
        for d in &self.draws {
            if (1..=h).contains(&d.eta) {
                counts[d.eta - 1] += 1;
            }
        }
        counts
    }
}

fn column_mean<'a>(rows: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut acc: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for row in rows {
        if acc.is_empty() {
            acc = vec![0.0; row.len()];
        }
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
        n += 1;
    }
    acc.iter_mut().for_each(|a| *a /= n.max(1) as f64);
    acc
}

/// Run a Gaussian-model chain.
pub fn run_chain(data: &Dataset, grid: &MultiresGrid, hyper: &Hyperparams, config: &ChainConfig) -> Result<ChainSamples> {
    config.validate()?;
    let mut sampler = Sampler::new(data, grid, *hyper, config)?;
    sampler.run(config.n_iter)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_checks() {
        let x = DMatrix::from_column_slice(3, 2, &[1.0, 1.0, 1.0, 1.0, 2.0, 3.0]);
        let locs = vec![[0.1, 0.0], [0.2, 0.0], [0.3, 0.0]];
        assert!(Dataset::new(vec![1.0, 2.0, 3.0], x.clone(), locs.clone()).is_ok());
        assert!(matches!(Dataset::new(vec![1.0, 2.0], x.clone(), locs.clone()), Err(Error::LengthMismatch { .. })));
        let collinear = DMatrix::from_column_slice(3, 2, &[1.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
        assert!(matches!(Dataset::new(vec![1.0, 2.0, 3.0], collinear, locs), Err(Error::Data(_))));
    }

    #[test]
    fn config_checks_and_counts() {
        let mut c = ChainConfig { n_iter: 10, burn_in: 11, ..Default::default() };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.burn_in = 3;
        c.thin = 2;
        assert_eq!(c.stored_count(), 4);
        let kept: Vec<usize> = (0..10).filter(|&t| c.keeps(t)).collect();
        assert_eq!(kept, vec![3, 5, 7, 9]);
        c.n_iter = 0;
        c.burn_in = 0;
        assert_eq!(c.stored_count(), 0);
    }

    #[test]
    fn mode_parsing() {
        for m in [SamplerMode::Sequential, SamplerMode::Chromatic, SamplerMode::Jacobi] {
            assert_eq!(m.to_string().parse::<SamplerMode>().unwrap(), m);
        }
        assert!("gibbs".parse::<SamplerMode>().is_err());
    }

    #[test]
    fn hyperparameter_checks() {
        assert!(Hyperparams::default().validate().is_ok());
        assert!(Hyperparams { c: 2.0, ..Default::default() }.validate().is_err());
        assert!(Hyperparams { h_eta: 0, ..Default::default() }.validate().is_err());
    }
}
