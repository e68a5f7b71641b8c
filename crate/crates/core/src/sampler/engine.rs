use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::blocks::{BlockLayout, EtaBlocks};
use super::{ChainConfig, ChainSamples, Dataset, Draw, Frozen, Hyperparams, ModelState, SamplerMode};
use crate::grid::MultiresGrid;
use crate::kernel::SparseDesign;
use crate::linalg::{chunked_sum, chunked_vec_sum, cholesky_with_jitter, draw_from_precision, DisjointSlice, CHUNK};
use crate::shrinkage::{gamma_draw, ShrinkageState};
use crate::streams::{stream, Tag};
use crate::{probit, Error, Result};

const BLOCK_JITTER: f64 = 1e-10;

/// Gaussian full conditional of one block, `N(mean, precision⁻¹)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockConditional {
    pub mean: DVector<f64>,
    pub precision: DMatrix<f64>,
}

fn normals<R: Rng + ?Sized>(q: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(q, (0..q).map(|_| StandardNormal.sample(rng)))
}

fn conditional_from_parts(gram: &DMatrix<f64>, rhs: DVector<f64>, alpha: impl Iterator<Item = f64>, sigma2: f64) -> Result<(BlockConditional, Cholesky<f64, Dyn>)> {
    let mut precision = gram / sigma2;
    for (k, a) in alpha.enumerate() {
        precision[(k, k)] += 1.0 / a;
    }
    let chol = cholesky_with_jitter(precision.clone(), BLOCK_JITTER)?;
    let mean = chol.solve(&rhs) / sigma2;
    Ok((BlockConditional { mean, precision }, chol))
}

/// Block conditional built from scratch: reads `y` and `X` only on rows where
/// the block's basis functions are nonzero, and `β` only through the stored
/// nonzeros of those rows.
pub fn block_conditional_direct(
    y: &[f64],
    x: &DMatrix<f64>,
    design: &SparseDesign,
    layout: &BlockLayout,
    state: &ModelState,
    m: usize,
) -> Result<BlockConditional> {
    if m == 0 || m > layout.n_blocks() {
        return Err(Error::Index { index: m, max: layout.n_blocks() });
    }
    let b = m - 1;
    let q = layout.block_size();
    let mut rhs = DVector::zeros(q);
    for i in layout.rows(b, design) {
        let (cols, vals) = design.row(i);
        let mut r = y[i];
        for (k, g) in state.gamma.iter().enumerate() {
            r -= x[(i, k)] * g;
        }
        for (&c, &v) in cols.iter().zip(vals) {
            if layout.block_of(c as usize) != b {
                r -= v * state.beta[c as usize];
            }
        }
        for (&c, &v) in cols.iter().zip(vals) {
            if layout.block_of(c as usize) == b {
                rhs[layout.position_of(c as usize)] += v * r;
            }
        }
    }
    let alpha = layout.columns(b).iter().map(|&c| state.shrink.alphas()[c]);
    Ok(conditional_from_parts(&layout.gram(b, design), rhs, alpha, state.sigma2)?.0)
}

/// Gibbs sampler over one dataset and grid.
///
/// Keeps the residual `e = response − Xγ − K_η β` current across updates.
pub struct Sampler<'a> {
    grid: &'a MultiresGrid,
    hyper: Hyperparams,
    seed: u64,
    mode: SamplerMode,
    frozen: Frozen,
    fixed_eta: Option<usize>,
    burn_in: usize,
    thin: usize,
    layout: BlockLayout,
    /// η values with a cached design, ascending.
    etas: Vec<usize>,
    designs: Vec<SparseDesign>,
    blocks: Vec<EtaBlocks>,
    xrows: Vec<f64>,
    xtx: Cholesky<f64, Dyn>,
    response: Vec<f64>,
    labels: Option<Vec<bool>>,
    resid: Vec<f64>,
    state: ModelState,
    pool: rayon::ThreadPool,
    next_iter: usize,
}

impl<'a> Sampler<'a> {
    pub fn new(data: &'a Dataset, grid: &'a MultiresGrid, hyper: Hyperparams, config: &ChainConfig) -> Result<Self> {
        hyper.validate()?;
        config.validate()?;
        let workers = if config.mode == SamplerMode::Sequential { 1 } else { config.workers };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;

        let etas: Vec<usize> = match config.fixed_eta {
            Some(e) if e == 0 || e > hyper.h_eta => {
                return Err(Error::Config(format!("fixed eta {e} outside 1..={}", hyper.h_eta)))
            }
            Some(e) => vec![e],
            None => (1..=hyper.h_eta).collect(),
        };
        let layout = BlockLayout::new(grid);
        let (designs, blocks) = pool.install(|| -> Result<_> {
            let mut designs = Vec::with_capacity(etas.len());
            let mut blocks = Vec::with_capacity(etas.len());
            for &eta in &etas {
                let d = SparseDesign::build(data.locations(), grid, eta as f64)?;
                blocks.push(EtaBlocks::new(&layout, &d, grid)?);
                designs.push(d);
            }
            Ok((designs, blocks))
        })?;

        let (n, p) = (data.n(), data.p());
        let x = data.x();
        let mut xrows = vec![0.0; n * p];
        for i in 0..n {
            for k in 0..p {
                xrows[i * p + k] = x[(i, k)];
            }
        }
        let xtx = Cholesky::new(x.transpose() * x)
            .ok_or_else(|| Error::Data("X'X is not positive definite".into()))?;

        let state = match &config.init {
            Some(s) => {
                if s.gamma.len() != p || s.beta.len() != grid.total_knots() || !(s.sigma2 > 0.0) {
                    return Err(Error::Config("initial state does not match the data and grid".into()));
                }
                if !etas.contains(&s.eta) {
                    return Err(Error::Config(format!("initial eta {} is not available", s.eta)));
                }
                s.clone()
            }
            None => {
                let gamma: Vec<f64> = xtx.solve(&(x.transpose() * DVector::from_column_slice(data.y()))).iter().copied().collect();
                let sse: f64 = (0..n)
                    .map(|i| {
                        let fit: f64 = (0..p).map(|k| xrows[i * p + k] * gamma[k]).sum();
                        (data.y()[i] - fit).powi(2)
                    })
                    .sum();
                let dof = if n > p { n - p } else { n };
                let sigma2 = (sse / dof as f64).max(1e-8);
                ModelState {
                    gamma,
                    sigma2,
                    beta: vec![0.0; grid.total_knots()],
                    shrink: ShrinkageState::at_prior_means(hyper.c, grid)?,
                    eta: etas[0],
                }
            }
        };

        let mut sampler = Self {
            grid,
            hyper,
            seed: config.seed,
            mode: config.mode,
            frozen: config.frozen,
            fixed_eta: config.fixed_eta,
            burn_in: config.burn_in,
            thin: config.thin,
            layout,
            etas,
            designs,
            blocks,
            xrows,
            xtx,
            response: data.y().to_vec(),
            labels: None,
            resid: vec![0.0; n],
            state,
            pool,
            next_iter: 0,
        };
        sampler.recompute_residual();
        Ok(sampler)
    }

    /// Switch to the probit model: `labels` drive latent draws that replace the response.
    pub(crate) fn set_binary(&mut self, labels: Vec<bool>) {
        self.labels = Some(labels);
        self.frozen.sigma2 = true;
        self.state.sigma2 = 1.0;
    }

    pub fn state(&self) -> &ModelState {
        &self.state
    }

    pub fn set_state(&mut self, state: ModelState) -> Result<()> {
        if !self.etas.contains(&state.eta) || state.beta.len() != self.grid.total_knots() {
            return Err(Error::Config("state does not match the sampler".into()));
        }
        self.state = state;
        self.recompute_residual();
        Ok(())
    }

    pub fn residual(&self) -> &[f64] {
        &self.resid
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    /// Cached design for `eta`, if any.
    pub fn design(&self, eta: usize) -> Option<&SparseDesign> {
        self.etas.iter().position(|&e| e == eta).map(|k| &self.designs[k])
    }

    /// Blocks of each color class (1-based ids) for `eta`.
    pub fn color_classes(&self, eta: usize) -> Option<Vec<Vec<usize>>> {
        let k = self.etas.iter().position(|&e| e == eta)?;
        Some(self.blocks[k].classes.iter().map(|c| c.iter().map(|b| b + 1).collect()).collect())
    }

    fn current(&self) -> usize {
        self.etas.iter().position(|&e| e == self.state.eta).expect("state eta has a design")
    }

    #[inline]
    fn xg(&self, i: usize) -> f64 {
        let p = self.state.gamma.len();
        self.xrows[i * p..(i + 1) * p].iter().zip(&self.state.gamma).map(|(a, b)| a * b).sum()
    }

    /// Recompute `e` from scratch for the current state.
    pub fn recompute_residual(&mut self) {
        let design = &self.designs[self.current()];
        let mut resid = std::mem::take(&mut self.resid);
        let this = &*self;
        this.pool.install(|| {
            resid.par_iter_mut().enumerate().for_each(|(i, e)| {
                *e = this.response[i] - this.xg(i) - design.row_dot(i, &this.state.beta);
            })
        });
        self.resid = resid;
    }

    /// Set η to the grid value with the largest Gaussian log-likelihood (ties
    /// to the smallest η) and refresh the residual.
    pub fn select_eta(&mut self) -> usize {
        if self.fixed_eta.is_none() && self.etas.len() > 1 {
            let this = &*self;
            let best = this.pool.install(|| {
                let xg: Vec<f64> = (0..this.response.len()).into_par_iter().map(|i| this.xg(i)).collect();
                let mut best = (f64::INFINITY, this.etas[0]);
                for (k, d) in this.designs.iter().enumerate() {
                    let sse = chunked_sum(xg.len(), |i| {
                        let r = this.response[i] - xg[i] - d.row_dot(i, &this.state.beta);
                        r * r
                    });
                    if sse < best.0 {
                        best = (sse, this.etas[k]);
                    }
                }
                best.1
            });
            self.state.eta = best;
        }
        self.recompute_residual();
        self.state.eta
    }

    /// Conditional of block `m` (1-based) given the current residual.
    pub fn block_conditional(&self, m: usize) -> Result<BlockConditional> {
        if m == 0 || m > self.layout.n_blocks() {
            return Err(Error::Index { index: m, max: self.layout.n_blocks() });
        }
        Ok(self.conditional(m - 1, &self.resid)?.0)
    }

    fn conditional(&self, b: usize, resid: &[f64]) -> Result<(BlockConditional, Cholesky<f64, Dyn>)> {
        let k = self.current();
        let design = &self.designs[k];
        let gram = &self.blocks[k].grams[b];
        let cols = self.layout.columns(b);
        let old = DVector::from_iterator(cols.len(), cols.iter().map(|&c| self.state.beta[c]));
        let mut rhs = gram * &old;
        for (pos, &c) in cols.iter().enumerate() {
            let (rows, vals) = design.column(c);
            rhs[pos] += rows.iter().zip(vals).map(|(&i, &v)| v * resid[i as usize]).sum::<f64>();
        }
        let alpha = cols.iter().map(|&c| self.state.shrink.alphas()[c]);
        conditional_from_parts(gram, rhs, alpha, self.state.sigma2)
    }

    fn draw_block(&self, b: usize, iter: usize, resid: &[f64]) -> Result<DVector<f64>> {
        let (cond, chol) = self.conditional(b, resid)?;
        let mut rng = stream(self.seed, iter as u64, Tag::Block, b as u64);
        let z = normals(cond.mean.len(), &mut rng);
        Ok(draw_from_precision(&chol, &cond.mean, z))
    }

    /// Write drawn block values into β and `e`. Blocks in `draws` must have
    /// pairwise disjoint row supports.
    fn apply_blocks(&mut self, draws: &[(usize, DVector<f64>)]) {
        let design = &self.designs[self.current()];
        let layout = &self.layout;
        let beta = &self.state.beta;
        let resid = DisjointSlice::new(&mut self.resid);
        let apply = |(b, new): &(usize, DVector<f64>)| {
            for (pos, &c) in layout.columns(*b).iter().enumerate() {
                let delta = new[pos] - beta[c];
                if delta != 0.0 {
                    let (rows, vals) = design.column(c);
                    for (&i, &v) in rows.iter().zip(vals) {
                        // SAFETY: rows of distinct blocks in `draws` are disjoint
                        // and `self.resid` is exclusively borrowed here.
                        unsafe { resid.sub(i as usize, v * delta) };
                    }
                }
            }
        };
        if draws.len() == 1 {
            apply(&draws[0]);
        } else {
            self.pool.install(|| draws.par_iter().for_each(apply));
        }
        for (b, new) in draws {
            for (pos, &c) in self.layout.columns(*b).iter().enumerate() {
                self.state.beta[c] = new[pos];
            }
        }
    }

    /// Draw every β block according to the sampler mode.
    pub fn update_beta_blocks(&mut self, iter: usize) -> Result<()> {
        let classes = self.blocks[self.current()].classes.clone();
        match self.mode {
            SamplerMode::Sequential => {
                for class in &classes {
                    for &b in class {
                        let new = self.draw_block(b, iter, &self.resid)?;
                        self.apply_blocks(&[(b, new)]);
                    }
                }
            }
            SamplerMode::Chromatic => {
                for class in &classes {
                    let this = &*self;
                    let draws: Vec<(usize, DVector<f64>)> = this.pool.install(|| {
                        class.par_iter().map(|&b| Ok((b, this.draw_block(b, iter, &this.resid)?))).collect::<Result<_>>()
                    })?;
                    self.apply_blocks(&draws);
                }
            }
            SamplerMode::Jacobi => {
                let this = &*self;
                let draws: Vec<DVector<f64>> = this.pool.install(|| {
                    (0..this.layout.n_blocks()).into_par_iter().map(|b| this.draw_block(b, iter, &this.resid)).collect::<Result<_>>()
                })?;
                for (b, new) in draws.iter().enumerate() {
                    for (pos, &c) in self.layout.columns(b).iter().enumerate() {
                        self.state.beta[c] = new[pos];
                    }
                }
                self.recompute_residual();
            }
        }
        Ok(())
    }

    /// Draw block `m` (1-based) alone, with the latest values of everything else.
    pub fn update_beta_block(&mut self, m: usize, iter: usize) -> Result<()> {
        if m == 0 || m > self.layout.n_blocks() {
            return Err(Error::Index { index: m, max: self.layout.n_blocks() });
        }
        let new = self.draw_block(m - 1, iter, &self.resid)?;
        self.apply_blocks(&[(m - 1, new)]);
        Ok(())
    }

    fn xte(&self) -> Vec<f64> {
        let p = self.state.gamma.len();
        self.pool.install(|| {
            chunked_vec_sum(self.resid.len(), p, |i, acc| {
                for k in 0..p {
                    acc[k] += self.xrows[i * p + k] * self.resid[i];
                }
            })
        })
    }

    /// Mean of the γ conditional, `(X'X)⁻¹X'(y − Kβ)`.
    pub fn gamma_conditional_mean(&self) -> Vec<f64> {
        let shift = self.xtx.solve(&DVector::from_vec(self.xte()));
        self.state.gamma.iter().zip(shift.iter()).map(|(g, s)| g + s).collect()
    }

    /// `γ | − ~ N((X'X)⁻¹X'(y − Kβ), σ²(X'X)⁻¹)`.
    pub fn update_gamma(&mut self, iter: usize) {
        let p = self.state.gamma.len();
        let shift = self.xtx.solve(&DVector::from_vec(self.xte()));
        let mut rng = stream(self.seed, iter as u64, Tag::Gamma, 0);
        let z = normals(p, &mut rng) * self.state.sigma2.sqrt();
        let step = draw_from_precision(&self.xtx, &shift, z);
        for (g, s) in self.state.gamma.iter_mut().zip(step.iter()) {
            *g += s;
        }
        let xrows = &self.xrows;
        self.pool.install(|| {
            self.resid.par_iter_mut().enumerate().for_each(|(i, e)| {
                *e -= xrows[i * p..(i + 1) * p].iter().zip(step.iter()).map(|(a, b)| a * b).sum::<f64>();
            })
        });
    }

    /// Shape and rate of the inverse-Gamma conditional of σ².
    pub fn sigma2_conditional(&self) -> (f64, f64) {
        let sse = self.pool.install(|| chunked_sum(self.resid.len(), |i| self.resid[i] * self.resid[i]));
        (self.resid.len() as f64 / 2.0 + self.hyper.a_sigma, self.hyper.b_sigma + 0.5 * sse)
    }

    pub fn update_sigma2(&mut self, iter: usize) -> Result<()> {
        let (shape, rate) = self.sigma2_conditional();
        let mut rng = stream(self.seed, iter as u64, Tag::Sigma2, 0);
        // 1/σ² ~ Gamma(shape, rate)
        self.state.sigma2 = 1.0 / gamma_draw(shape, rate, &mut rng)?;
        Ok(())
    }

    pub fn update_shrinkage(&mut self, iter: usize) -> Result<()> {
        let (seed, grid) = (self.seed, self.grid);
        let beta = std::mem::take(&mut self.state.beta);
        let shrink = &mut self.state.shrink;
        let result = self.pool.install(|| {
            shrink.update_all_deltas(&beta, grid, |idx| stream(seed, iter as u64, Tag::Delta, grid.column(idx) as u64))?;
            shrink.update_delta1(&beta, grid, &mut stream(seed, iter as u64, Tag::Delta1, 0))
        });
        self.state.beta = beta;
        result.map(|_| ())
    }

    fn update_latents(&mut self, iter: usize) {
        let Some(labels) = &self.labels else { return };
        let seed = self.seed;
        let resp = &mut self.response;
        let resid = &mut self.resid;
        self.pool.install(|| {
            resp.par_chunks_mut(CHUNK)
                .zip(resid.par_chunks_mut(CHUNK))
                .enumerate()
                .for_each(|(c, (zs, es))| {
                    let mut rng = stream(seed, iter as u64, Tag::Latent, c as u64);
                    for (k, (z, e)) in zs.iter_mut().zip(es.iter_mut()).enumerate() {
                        let lin = *z - *e;
                        let draw = probit::truncated_normal(lin, labels[c * CHUNK + k], &mut rng);
                        *e = draw - lin;
                        *z = draw;
                    }
                })
        });
    }

    /// One full Gibbs sweep.
    pub fn iterate(&mut self) -> Result<()> {
        let iter = self.next_iter;
        self.update_latents(iter);
        self.select_eta();
        if !self.frozen.beta {
            self.update_beta_blocks(iter)?;
        }
        if !self.frozen.gamma {
            self.update_gamma(iter);
        }
        if !self.frozen.sigma2 {
            self.update_sigma2(iter)?;
        }
        if !self.frozen.shrinkage {
            self.update_shrinkage(iter)?;
        }
        self.next_iter += 1;
        Ok(())
    }

    fn snapshot(&self, iter: usize) -> Draw {
        Draw {
            iter,
            eta: self.state.eta,
            sigma2: self.state.sigma2,
            delta1: self.state.shrink.delta1(),
            gamma: self.state.gamma.clone(),
            beta: self.state.beta.clone(),
            delta: self.state.shrink.deltas()[self.grid.knot_count(1)..].to_vec(),
        }
    }

    /// Run `n_iter` further iterations and collect the stored draws.
    pub fn run(&mut self, n_iter: usize) -> Result<ChainSamples> {
        if n_iter < self.burn_in {
            return Err(Error::Config(format!("n_iter ({n_iter}) is smaller than burn_in ({})", self.burn_in)));
        }
        let start = self.next_iter;
        let mut draws = Vec::with_capacity((n_iter - self.burn_in).div_ceil(self.thin));
        let mut iter_seconds = Vec::with_capacity(n_iter);
        for t in 0..n_iter {
            let clock = Instant::now();
            self.iterate()?;
            iter_seconds.push(clock.elapsed().as_secs_f64());
            if super::keeps(self.burn_in, self.thin, t) {
                draws.push(self.snapshot(start + t));
            }
        }
        Ok(ChainSamples {
            draws,
            n_iter,
            burn_in: self.burn_in,
            thin: self.thin,
            seed: self.seed,
            mode: self.mode,
            iter_seconds,
        })
    }
}
