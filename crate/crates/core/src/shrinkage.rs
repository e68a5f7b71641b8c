//! Multiscale tree shrinkage prior.
//!
//! ```text
//! β_j^r ~ N(0, α_j^r)
//! α_j^1 = 1/δ_1,   α_j^r = α_father(j,r) / δ_{j,r}
//! δ_1 ~ Gamma(2, 1),   δ_{j,r} ~ Gamma(c, 1),   c > 2
//! ```
//!
//! Every variance is the product of inverse-Gamma factors along the path from
//! the root, so `Var[β_j^r] = (c-1)^{-(r-1)}` a priori and finer resolutions
//! are shrunk harder. All conditionals of the δ's are Gamma.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;

use crate::grid::{MultiresGrid, TreeIndex};
use crate::{Error, Result};

/// Shape of the Gamma prior on the global scale `δ_1`.
pub const DELTA1_SHAPE: f64 = 2.0;

/// δ's on the tree and the cached coefficient variances α, both stored in
/// the resolution-major column layout of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkageState {
    c: f64,
    delta1: f64,
    /// `δ_{j,r}` per column; resolution-1 entries are unused and held at 1.
    delta: Vec<f64>,
    alpha: Vec<f64>,
}

fn check_c(c: f64) -> Result<()> {
    if c > 2.0 && c.is_finite() {
        Ok(())
    } else {
        Err(Error::Hyperparameter(format!("shrinkage shape c must exceed 2, got {c}")))
    }
}

pub(crate) fn gamma_draw<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    if !(rate.is_finite() && rate > 0.0 && shape.is_finite() && shape > 0.0) {
        return Err(Error::Numerical(format!("invalid Gamma parameters shape={shape} rate={rate}")));
    }
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(g.sample(rng).max(f64::MIN_POSITIVE))
}

impl ShrinkageState {
    /// State with every δ at its prior mean (`δ_1 = 2`, `δ_{j,r} = c`).
    pub fn at_prior_means(c: f64, grid: &MultiresGrid) -> Result<Self> {
        check_c(c)?;
        let n = grid.total_knots();
        let first = grid.knot_count(1);
        let delta = (0..n).map(|col| if col < first { 1.0 } else { c }).collect();
        Self::from_parts(c, DELTA1_SHAPE, delta, grid)
    }

    /// State from explicit δ values (`delta` in column layout; resolution-1 entries ignored).
    pub fn from_parts(c: f64, delta1: f64, mut delta: Vec<f64>, grid: &MultiresGrid) -> Result<Self> {
        check_c(c)?;
        if delta.len() != grid.total_knots() {
            return Err(Error::LengthMismatch { left: delta.len(), right: grid.total_knots() });
        }
        let first = grid.knot_count(1);
        for d in delta.iter_mut().take(first) {
            *d = 1.0;
        }
        if !(delta1 > 0.0) || delta.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(Error::Hyperparameter("all δ must be positive and finite".into()));
        }
        let mut state = Self { c, delta1, delta, alpha: vec![0.0; grid.total_knots()] };
        state.recompute_alpha(grid);
        Ok(state)
    }

    /// Draw δ's and β from the prior.
    pub fn draw_prior<R: Rng + ?Sized>(c: f64, grid: &MultiresGrid, rng: &mut R) -> Result<(Self, Vec<f64>)> {
        check_c(c)?;
        let delta1 = gamma_draw(DELTA1_SHAPE, 1.0, rng)?;
        let first = grid.knot_count(1);
        let mut delta = vec![1.0; grid.total_knots()];
        for d in delta.iter_mut().skip(first) {
            *d = gamma_draw(c, 1.0, rng)?;
        }
        let state = Self::from_parts(c, delta1, delta, grid)?;
        let beta = state
            .alpha
            .iter()
            .map(|&a| {
                let z: f64 = StandardNormal.sample(rng);
                z * a.sqrt()
            })
            .collect();
        Ok((state, beta))
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn delta1(&self) -> f64 {
        self.delta1
    }

    /// `δ_{j,r}` for `r ≥ 2`.
    pub fn delta(&self, idx: TreeIndex, grid: &MultiresGrid) -> f64 {
        self.delta[grid.column(idx)]
    }

    /// All δ in column layout (resolution-1 entries are 1).
    pub fn deltas(&self) -> &[f64] {
        &self.delta
    }

    /// Cached variances α in column layout.
    pub fn alphas(&self) -> &[f64] {
        &self.alpha
    }

    /// α of node `idx`, recomputed from the δ's along its ancestry.
    pub fn alpha_of(&self, idx: TreeIndex, grid: &MultiresGrid) -> f64 {
        let mut a = 1.0 / self.delta1;
        let mut path = Vec::with_capacity(idx.r);
        let mut node = idx;
        while node.r > 1 {
            path.push(node);
            node = grid.father(node).expect("r > 1 has a father");
        }
        for n in path.iter().rev() {
            a /= self.delta[grid.column(*n)];
        }
        a
    }

    #[inline]
    fn refresh(&mut self, col: usize, grid: &MultiresGrid) {
        let idx = grid.node_of_column(col);
        self.alpha[col] = if idx.r == 1 {
            1.0 / self.delta1
        } else {
            self.alpha[grid.column(grid.father(idx).unwrap())] / self.delta[col]
        };
    }

    /// Rebuild every α from the δ's.
    pub fn recompute_alpha(&mut self, grid: &MultiresGrid) {
        for col in 0..self.alpha.len() {
            self.refresh(col, grid);
        }
    }

    /// Rebuild α on the subtree rooted at `idx`.
    fn recompute_subtree(&mut self, idx: TreeIndex, grid: &MultiresGrid) {
        for node in grid.subtree(idx) {
            self.refresh(grid.column(node), grid);
        }
    }

    /// Shape and rate of `δ_1 | −`.
    pub fn delta1_conditional(&self, beta: &[f64]) -> Result<(f64, f64)> {
        if beta.len() != self.alpha.len() {
            return Err(Error::LengthMismatch { left: beta.len(), right: self.alpha.len() });
        }
        let quad: f64 = beta
            .iter()
            .zip(&self.alpha)
            .map(|(b, a)| b * b / (a * self.delta1))
            .sum();
        let rate = 1.0 + 0.5 * quad;
        if !rate.is_finite() {
            return Err(Error::Numerical("non-finite δ_1 rate".into()));
        }
        Ok((DELTA1_SHAPE + beta.len() as f64 / 2.0, rate))
    }

    pub fn update_delta1<R: Rng + ?Sized>(&mut self, beta: &[f64], grid: &MultiresGrid, rng: &mut R) -> Result<f64> {
        let (shape, rate) = self.delta1_conditional(beta)?;
        self.delta1 = gamma_draw(shape, rate, rng)?;
        self.recompute_alpha(grid);
        Ok(self.delta1)
    }

    /// Shape and rate of `δ_{j,r} | −` for `r ≥ 2`.
    pub fn delta_conditional(&self, idx: TreeIndex, beta: &[f64], grid: &MultiresGrid) -> Result<(f64, f64)> {
        if idx.r < 2 {
            return Err(Error::Config("δ at resolution 1 is the global δ_1; use update_delta1".into()));
        }
        if beta.len() != self.alpha.len() {
            return Err(Error::LengthMismatch { left: beta.len(), right: self.alpha.len() });
        }
        let own = self.delta[grid.column(idx)];
        let nodes = grid.subtree(idx);
        let quad: f64 = nodes
            .iter()
            .map(|n| {
                let col = grid.column(*n);
                beta[col] * beta[col] / (self.alpha[col] * own)
            })
            .sum();
        let rate = 1.0 + 0.5 * quad;
        if !rate.is_finite() {
            return Err(Error::Numerical(format!("non-finite δ rate at {idx:?}")));
        }
        Ok((self.c + nodes.len() as f64 / 2.0, rate))
    }

    pub fn update_delta<R: Rng + ?Sized>(
        &mut self,
        idx: TreeIndex,
        beta: &[f64],
        grid: &MultiresGrid,
        rng: &mut R,
    ) -> Result<f64> {
        let (shape, rate) = self.delta_conditional(idx, beta, grid)?;
        let v = gamma_draw(shape, rate, rng)?;
        self.delta[grid.column(idx)] = v;
        self.recompute_subtree(idx, grid);
        Ok(v)
    }

    /// Update every `δ_{j,r}`, coarse to fine. Nodes of one resolution have
    /// disjoint subtrees, so they are drawn concurrently, each from its own
    /// generator.
    pub fn update_all_deltas<R, F>(&mut self, beta: &[f64], grid: &MultiresGrid, rng_for: F) -> Result<()>
    where
        R: Rng,
        F: Fn(TreeIndex) -> R + Sync,
    {
        for r in 2..=grid.resolutions() {
            let this = &*self;
            let draws: Vec<f64> = (1..=grid.knot_count(r))
                .into_par_iter()
                .map(|j| {
                    let idx = TreeIndex::new(j, r);
                    let (shape, rate) = this.delta_conditional(idx, beta, grid)?;
                    gamma_draw(shape, rate, &mut rng_for(idx))
                })
                .collect::<Result<_>>()?;
            let off = grid.resolution_offset(r);
            self.delta[off..off + draws.len()].copy_from_slice(&draws);
            for col in off..self.alpha.len() {
                self.refresh(col, grid);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DomainBox;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> MultiresGrid {
        MultiresGrid::new(DomainBox::interval(0.0, 1.0).unwrap(), 2, &[1]).unwrap()
    }

    #[test]
    fn alpha_examples() {
        let g = tiny();
        let s = ShrinkageState::from_parts(3.0, 2.0, vec![1.0, 4.0, 1.0], &g).unwrap();
        assert_eq!(s.alpha_of(TreeIndex::new(1, 1), &g), 0.5);
        assert_eq!(s.alpha_of(TreeIndex::new(1, 2), &g), 0.125);
        assert_eq!(s.alphas(), &[0.5, 0.125, 0.5]);
        let g3 = MultiresGrid::new(DomainBox::interval(0.0, 1.0).unwrap(), 3, &[2]).unwrap();
        let ones = ShrinkageState::from_parts(3.0, 1.0, vec![1.0; g3.total_knots()], &g3).unwrap();
        assert!(ones.alphas().iter().all(|&a| a == 1.0));
    }

    #[test]
    fn hyperparameter_checks() {
        let g = tiny();
        assert!(matches!(ShrinkageState::at_prior_means(2.0, &g), Err(Error::Hyperparameter(_))));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(ShrinkageState::draw_prior(1.5, &g, &mut rng).is_err());
        let s = ShrinkageState::at_prior_means(3.0, &g).unwrap();
        assert!(s.delta_conditional(TreeIndex::new(1, 1), &[0.0; 3], &g).is_err());
    }

    #[test]
    fn delta1_conditional_examples() {
        let g = MultiresGrid::new(DomainBox::interval(0.0, 1.0).unwrap(), 3, &[3]).unwrap();
        let s = ShrinkageState::at_prior_means(3.0, &g).unwrap();
        let n = g.total_knots() as f64;
        assert_eq!(s.delta1_conditional(&vec![0.0; g.total_knots()]).unwrap(), (2.0 + n / 2.0, 1.0));
        let g1 = MultiresGrid::new(DomainBox::interval(0.0, 1.0).unwrap(), 1, &[1]).unwrap();
        let s1 = ShrinkageState::at_prior_means(3.0, &g1).unwrap();
        assert_eq!(s1.delta1_conditional(&[2.0]).unwrap(), (2.5, 3.0));
    }

    #[test]
    fn leaf_delta_conditional_examples() {
        let g = tiny();
        let c = 3.5;
        // α of the leaf without its own δ is α_father = 1/δ_1 = 1
        let s = ShrinkageState::from_parts(c, 1.0, vec![1.0, 7.0, 0.4], &g).unwrap();
        let leaf = TreeIndex::new(2, 2);
        assert_eq!(s.delta_conditional(leaf, &[0.3, -1.0, 0.0], &g).unwrap(), (c + 0.5, 1.0));
        let (shape, rate) = s.delta_conditional(leaf, &[0.3, -1.0, 2.0], &g).unwrap();
        assert_eq!(shape, c + 0.5);
        assert!((rate - 3.0).abs() < 1e-15);
    }

    #[test]
    fn alpha_cache_matches_scratch_after_updates() {
        let g = MultiresGrid::new(DomainBox::rect(0.0, 1.0, 0.0, 1.0).unwrap(), 3, &[2, 1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (mut s, beta) = ShrinkageState::draw_prior(3.0, &g, &mut rng).unwrap();
        let check = |s: &ShrinkageState| {
            for col in 0..g.total_knots() {
                let idx = g.node_of_column(col);
                assert_eq!(s.alphas()[col], s.alpha_of(idx, &g), "{idx:?}");
            }
        };
        check(&s);
        for r in 2..=3 {
            for j in 1..=g.knot_count(r) {
                s.update_delta(TreeIndex::new(j, r), &beta, &g, &mut rng).unwrap();
                check(&s);
            }
        }
        s.update_delta1(&beta, &g, &mut rng).unwrap();
        check(&s);
        s.update_all_deltas(&beta, &g, |idx| ChaCha8Rng::seed_from_u64(idx.j as u64 * 31 + idx.r as u64))
            .unwrap();
        check(&s);
        assert!(s.deltas().iter().all(|&d| d > 0.0));
    }

    #[test]
    fn level_update_matches_serial_updates() {
        let g = MultiresGrid::new(DomainBox::interval(0.0, 1.0).unwrap(), 3, &[3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (s0, beta) = ShrinkageState::draw_prior(3.0, &g, &mut rng).unwrap();
        let stream = |idx: TreeIndex| ChaCha8Rng::seed_from_u64(1000 * idx.r as u64 + idx.j as u64);
        let mut batched = s0.clone();
        batched.update_all_deltas(&beta, &g, stream).unwrap();
        let mut serial = s0;
        for r in 2..=3 {
            for j in 1..=g.knot_count(r) {
                let idx = TreeIndex::new(j, r);
                serial.update_delta(idx, &beta, &g, &mut stream(idx)).unwrap();
            }
        }
        assert_eq!(batched, serial);
    }

    #[test]
    fn prior_variance_shrinks_with_resolution() {
        let g = MultiresGrid::new(DomainBox::interval(0.0, 1.0).unwrap(), 3, &[2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut sums = [0.0f64; 3];
        let mut counts = [0usize; 3];
        let mut mean1 = 0.0;
        let draws = 20_000;
        for _ in 0..draws {
            let (_, beta) = ShrinkageState::draw_prior(4.0, &g, &mut rng).unwrap();
            for (col, b) in beta.iter().enumerate() {
                let r = g.node_of_column(col).r;
                sums[r - 1] += b * b;
                counts[r - 1] += 1;
            }
            mean1 += beta[0];
        }
        let var: Vec<f64> = (0..3).map(|r| sums[r] / counts[r] as f64).collect();
        assert!(var[0] > var[1] && var[1] > var[2], "{var:?}");
        assert!((mean1 / draws as f64).abs() < 0.05);
    }
}
