//! Recursive domain partition, knot placement and tree navigation.
//!
//! Resolution 1 splits the box into `J1_dims` equal cells per axis. Each cell
//! at resolution `r` is split into `P = 2^d` equal children at `r + 1`
//! (bisection in 1D, quadrisection in 2D). Knots sit at cell centers.
//!
//! Indices follow the tree layout: the children of node `k` at resolution
//! `r` occupy `(k-1)P+1 ..= kP` at resolution `r+1`, so the father of
//! `(j, r)` is `(⌊(j-1)/P⌋+1, r-1)`. Resolution-1 cells are numbered
//! row-major with the first axis fastest; within a split, children are
//! numbered row-major as well (first axis fastest).

use crate::{dist, Coord, Error, Result};

/// Rectangular domain `[lower, upper]` in one or two dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || !(1..=2).contains(&lower.len()) {
            return Err(Error::Config(format!(
                "domain needs matching lower/upper bounds in 1 or 2 dimensions, got {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (lo, hi) in lower.iter().zip(&upper) {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!("invalid domain extent [{lo}, {hi}]")));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The interval `[lo, hi]`.
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo], vec![hi])
    }

    /// The rectangle `[x0, x1] × [y0, y1]`.
    pub fn rect(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self> {
        Self::new(vec![x0, y0], vec![x1, y1])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Closed-box membership.
    pub fn contains(&self, s: &Coord) -> bool {
        (0..self.dim()).all(|a| s[a] >= self.lower[a] && s[a] <= self.upper[a])
            && (self.dim() == 2 || s[1] == 0.0)
    }
}

/// Node `(j, r)` of the partition tree; both components are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TreeIndex {
    pub j: usize,
    pub r: usize,
}

impl TreeIndex {
    pub fn new(j: usize, r: usize) -> Self {
        Self { j, r }
    }
}

/// Father of `idx` in a tree with `p` children per node.
pub fn father(idx: TreeIndex, p: usize) -> Result<TreeIndex> {
    if idx.r < 2 {
        return Err(Error::NoFather { j: idx.j });
    }
    Ok(TreeIndex::new((idx.j - 1) / p + 1, idx.r - 1))
}

/// Which neighborhood [`MultiresGrid::neighborhood`] should compute.
#[derive(Debug, Clone, Copy)]
pub enum NeighborhoodKind<'a> {
    /// Resolution-1 blocks whose knot lies within `2η·Δ₁` of knot `m`.
    Blocks,
    /// Data rows whose location lies within `η·Δ₁` of knot `m`.
    Data(&'a [Coord]),
}

/// The multiresolution partition with its knots.
#[derive(Debug, Clone)]
pub struct MultiresGrid {
    domain: DomainBox,
    resolutions: usize,
    j1_dims: Vec<usize>,
    children: usize,
    /// `knots[r-1][j-1]` is the center of cell `(j, r)`.
    knots: Vec<Vec<Coord>>,
    /// Per-axis cell width at resolution 1.
    spacing1: Vec<f64>,
    /// First column of each resolution in the resolution-major coefficient layout.
    offsets: Vec<usize>,
}

impl MultiresGrid {
    pub fn new(domain: DomainBox, resolutions: usize, j1_dims: &[usize]) -> Result<Self> {
        let d = domain.dim();
        if resolutions == 0 {
            return Err(Error::Config("resolution count must be at least 1".into()));
        }
        if j1_dims.len() != d {
            return Err(Error::Config(format!(
                "expected {d} resolution-1 knot counts, got {}",
                j1_dims.len()
            )));
        }
        if j1_dims.iter().any(|&h| h == 0) {
            return Err(Error::Config("resolution-1 knot counts must be positive".into()));
        }
        // Keep the finest lattice addressable with 32-bit column ids.
        let j1: usize = j1_dims.iter().product();
        let children = 1usize << d;
        let total = (0..resolutions)
            .try_fold(0usize, |acc, r| {
                children
                    .checked_pow(r as u32)
                    .and_then(|f| f.checked_mul(j1))
                    .and_then(|jr| acc.checked_add(jr))
            })
            .filter(|&t| t < u32::MAX as usize)
            .ok_or_else(|| Error::Config("grid too large".into()))?;

        let spacing1: Vec<f64> = (0..d)
            .map(|a| (domain.upper[a] - domain.lower[a]) / j1_dims[a] as f64)
            .collect();

        let mut grid = Self {
            domain,
            resolutions,
            j1_dims: j1_dims.to_vec(),
            children,
            knots: Vec::with_capacity(resolutions),
            spacing1,
            offsets: Vec::with_capacity(resolutions + 1),
        };
        let mut offset = 0;
        for r in 1..=resolutions {
            grid.offsets.push(offset);
            let jr = grid.knot_count(r);
            let w = grid.spacing(r);
            let knots = (1..=jr)
                .map(|j| {
                    let cell = grid.lattice_of(j, r);
                    let mut c = [0.0; 2];
                    for a in 0..d {
                        c[a] = grid.domain.lower[a] + (cell[a] as f64 + 0.5) * w[a];
                    }
                    c
                })
                .collect();
            grid.knots.push(knots);
            offset += jr;
        }
        grid.offsets.push(offset);
        debug_assert_eq!(offset, total);
        Ok(grid)
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// `R`.
    pub fn resolutions(&self) -> usize {
        self.resolutions
    }

    pub fn j1_dims(&self) -> &[usize] {
        &self.j1_dims
    }

    /// `P`, the number of children per node.
    pub fn children(&self) -> usize {
        self.children
    }

    /// `J(r) = P^(r-1) J(1)`.
    pub fn knot_count(&self, r: usize) -> usize {
        self.children.pow((r - 1) as u32) * self.j1_dims.iter().product::<usize>()
    }

    /// Total number of basis functions over all resolutions.
    pub fn total_knots(&self) -> usize {
        self.offsets[self.resolutions]
    }

    /// Knots of resolution `r`, indexed by `j - 1`.
    pub fn knots(&self, r: usize) -> &[Coord] {
        &self.knots[r - 1]
    }

    pub fn knot(&self, idx: TreeIndex) -> Coord {
        self.knots[idx.r - 1][idx.j - 1]
    }

    /// Per-axis knot spacing (cell width) at resolution `r`.
    pub fn spacing(&self, r: usize) -> Vec<f64> {
        let scale = (1u64 << (r - 1)) as f64;
        self.spacing1.iter().map(|w| w / scale).collect()
    }

    /// `Δ_r`: the largest per-axis knot spacing at resolution `r`.
    pub fn max_spacing(&self, r: usize) -> f64 {
        self.spacing(r).into_iter().fold(0.0, f64::max)
    }

    /// Column of node `(j, r)` in the resolution-major coefficient layout (0-based).
    pub fn column(&self, idx: TreeIndex) -> usize {
        self.offsets[idx.r - 1] + idx.j - 1
    }

    /// First column of resolution `r`.
    pub fn resolution_offset(&self, r: usize) -> usize {
        self.offsets[r - 1]
    }

    /// Inverse of [`column`](Self::column).
    pub fn node_of_column(&self, col: usize) -> TreeIndex {
        let r = self.offsets.partition_point(|&o| o <= col);
        TreeIndex::new(col - self.offsets[r - 1] + 1, r)
    }

    pub fn is_valid(&self, idx: TreeIndex) -> bool {
        idx.r >= 1 && idx.r <= self.resolutions && idx.j >= 1 && idx.j <= self.knot_count(idx.r)
    }

    pub fn father(&self, idx: TreeIndex) -> Result<TreeIndex> {
        father(idx, self.children)
    }

    /// `idx` and all its descendants down to resolution `R`, resolution-major.
    pub fn subtree(&self, idx: TreeIndex) -> Vec<TreeIndex> {
        let mut out = Vec::with_capacity(self.subtree_size(idx.r));
        let (mut lo, mut hi) = (idx.j, idx.j);
        for r in idx.r..=self.resolutions {
            out.extend((lo..=hi).map(|j| TreeIndex::new(j, r)));
            lo = (lo - 1) * self.children + 1;
            hi *= self.children;
        }
        out
    }

    /// `(P^(R-r+1) - 1)/(P - 1)`.
    pub fn subtree_size(&self, r: usize) -> usize {
        (self.children.pow((self.resolutions - r + 1) as u32) - 1) / (self.children - 1)
    }

    /// Lattice coordinates (0-based, per axis) of cell `(j, r)`.
    pub fn lattice_of(&self, j: usize, r: usize) -> [usize; 2] {
        let mut digits = Vec::with_capacity(r);
        let mut k = j - 1;
        for _ in 1..r {
            digits.push(k % self.children);
            k /= self.children;
        }
        let hx = self.j1_dims[0];
        let (mut ix, mut iy) = (k % hx, k / hx);
        for &digit in digits.iter().rev() {
            ix = 2 * ix + (digit & 1);
            iy = 2 * iy + (digit >> 1);
        }
        [ix, iy]
    }

    /// Tree index `j` (1-based) of the cell at lattice position `cell` on resolution `r`.
    pub fn index_of(&self, cell: [usize; 2], r: usize) -> usize {
        let shift = r - 1;
        let (ix, iy) = (cell[0], cell[1]);
        let mut k = (iy >> shift) * self.j1_dims[0] + (ix >> shift);
        for l in (0..shift).rev() {
            let digit = ((iy >> l) & 1) << 1 | ((ix >> l) & 1);
            k = k * self.children + digit;
        }
        k + 1
    }

    /// Cells per axis at resolution `r`.
    pub fn lattice_dims(&self, r: usize) -> [usize; 2] {
        let scale = 1usize << (r - 1);
        let mut dims = [1, 1];
        for (a, &h) in self.j1_dims.iter().enumerate() {
            dims[a] = h * scale;
        }
        dims
    }

    /// The unique resolution-`r` cell containing `s`.
    ///
    /// Cells are `(low, high]` per axis with the first cell closed, so a point
    /// on an internal boundary goes to the lower-index neighbor.
    pub fn locate(&self, s: &Coord, r: usize) -> Result<TreeIndex> {
        if r == 0 || r > self.resolutions {
            return Err(Error::Index { index: r, max: self.resolutions });
        }
        if !self.domain.contains(s) {
            return Err(Error::OutOfDomain(s[..self.dim()].to_vec()));
        }
        let w = self.spacing(r);
        let dims = self.lattice_dims(r);
        let mut cell = [0usize; 2];
        for a in 0..self.dim() {
            let t = ((s[a] - self.domain.lower[a]) / w[a]).ceil() - 1.0;
            cell[a] = (t.max(0.0) as usize).min(dims[a] - 1);
        }
        Ok(TreeIndex::new(self.index_of(cell, r), r))
    }

    /// Neighborhood of resolution-1 block `m` (1-based) at bandwidth multiplier `eta`.
    ///
    /// Block neighborhoods return 1-based block ids; data neighborhoods return
    /// 0-based row indices. Both use strict inequalities.
    pub fn neighborhood(&self, m: usize, eta: f64, kind: NeighborhoodKind<'_>) -> Result<Vec<usize>> {
        let j1 = self.knot_count(1);
        if m == 0 || m > j1 {
            return Err(Error::Index { index: m, max: j1 });
        }
        let center = self.knots[0][m - 1];
        let delta1 = self.max_spacing(1);
        Ok(match kind {
            NeighborhoodKind::Blocks => {
                let radius = 2.0 * eta * delta1;
                self.knots[0]
                    .iter()
                    .enumerate()
                    .filter(|(_, k)| dist(k, &center) < radius)
                    .map(|(j, _)| j + 1)
                    .collect()
            }
            NeighborhoodKind::Data(locations) => {
                let radius = eta * delta1;
                locations
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| dist(s, &center) < radius)
                    .map(|(i, _)| i)
                    .collect()
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid_1d() -> MultiresGrid {
        MultiresGrid::new(DomainBox::interval(0.0, 10.0).unwrap(), 3, &[5]).unwrap()
    }

    #[test]
    fn one_dimensional_counts_and_spacing() {
        let g = grid_1d();
        assert_eq!((g.knot_count(1), g.knot_count(2), g.knot_count(3)), (5, 10, 20));
        assert_eq!(g.spacing(1), vec![2.0]);
        assert_eq!(g.spacing(3), vec![0.5]);
        assert_eq!(g.knots(1).iter().map(|k| k[0]).collect::<Vec<_>>(), vec![1.0, 3.0, 5.0, 7.0, 9.0]);
        assert_eq!(g.total_knots(), 35);
    }

    #[test]
    fn single_cell_grid() {
        let g = MultiresGrid::new(DomainBox::rect(0.0, 1.0, 0.0, 1.0).unwrap(), 1, &[1, 1]).unwrap();
        assert_eq!(g.knots(1), &[[0.5, 0.5]]);
    }

    #[test]
    fn two_dimensional_counts_and_spacing() {
        let g = MultiresGrid::new(DomainBox::rect(0.0, 1.0, 0.0, 1.0).unwrap(), 2, &[4, 4]).unwrap();
        assert_eq!((g.knot_count(1), g.knot_count(2)), (16, 64));
        assert_eq!(g.spacing(2)[0], 0.125);
        // children of the first resolution-1 cell are the four quarter cells of [0,0.25]^2
        let kids: Vec<Coord> = (1..=4).map(|j| g.knot(TreeIndex::new(j, 2))).collect();
        assert_eq!(kids, vec![[0.0625, 0.0625], [0.1875, 0.0625], [0.0625, 0.1875], [0.1875, 0.1875]]);
    }

    #[test]
    fn invalid_configurations() {
        assert!(DomainBox::interval(1.0, 1.0).is_err());
        assert!(DomainBox::new(vec![0.0; 3], vec![1.0; 3]).is_err());
        let b = DomainBox::interval(0.0, 1.0).unwrap();
        assert!(MultiresGrid::new(b.clone(), 0, &[3]).is_err());
        assert!(MultiresGrid::new(b.clone(), 2, &[0]).is_err());
        assert!(MultiresGrid::new(b, 2, &[2, 2]).is_err());
    }

    #[test]
    fn father_examples() {
        assert_eq!(father(TreeIndex::new(1, 2), 2).unwrap(), TreeIndex::new(1, 1));
        assert_eq!(father(TreeIndex::new(5, 3), 2).unwrap(), TreeIndex::new(3, 2));
        assert_eq!(father(TreeIndex::new(7, 2), 4).unwrap(), TreeIndex::new(2, 1));
        assert!(matches!(father(TreeIndex::new(3, 1), 2), Err(Error::NoFather { j: 3 })));
    }

    #[test]
    fn subtree_examples() {
        let g = grid_1d();
        assert_eq!(g.subtree(TreeIndex::new(1, 3)), vec![TreeIndex::new(1, 3)]);
        let g2 = MultiresGrid::new(DomainBox::interval(0.0, 1.0).unwrap(), 2, &[1]).unwrap();
        assert_eq!(
            g2.subtree(TreeIndex::new(1, 1)),
            vec![TreeIndex::new(1, 1), TreeIndex::new(1, 2), TreeIndex::new(2, 2)]
        );
        let st = g.subtree(TreeIndex::new(2, 1));
        let expect: Vec<TreeIndex> = [(2, 1), (3, 2), (4, 2), (5, 3), (6, 3), (7, 3), (8, 3)]
            .iter()
            .map(|&(j, r)| TreeIndex::new(j, r))
            .collect();
        assert_eq!(st, expect);
    }

    #[test]
    fn block_neighborhoods() {
        let g = grid_1d();
        assert_eq!(g.neighborhood(3, 1.0, NeighborhoodKind::Blocks).unwrap(), vec![2, 3, 4]);
        for m in 1..=5 {
            assert_eq!(g.neighborhood(m, 1e-9, NeighborhoodKind::Blocks).unwrap(), vec![m]);
        }
        assert!(matches!(
            g.neighborhood(6, 1.0, NeighborhoodKind::Blocks),
            Err(Error::Index { index: 6, max: 5 })
        ));
    }

    #[test]
    fn data_neighborhoods() {
        let g = grid_1d();
        let far = [[9.5, 0.0], [0.1, 0.0], [7.0, 0.0]];
        assert!(g.neighborhood(3, 1.0, NeighborhoodKind::Data(&far)).unwrap().is_empty());
        let near = [[4.0, 0.0], [5.5, 0.0], [6.99, 0.0], [3.0, 0.0]];
        assert_eq!(g.neighborhood(3, 1.0, NeighborhoodKind::Data(&near)).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn locate_examples() {
        let g = grid_1d();
        assert_eq!(g.locate(&[3.2, 0.0], 1).unwrap(), TreeIndex::new(2, 1));
        assert_eq!(g.locate(&[4.0, 0.0], 1).unwrap(), TreeIndex::new(2, 1));
        assert_eq!(g.locate(&[0.0, 0.0], 1).unwrap(), TreeIndex::new(1, 1));
        assert_eq!(g.locate(&[10.0, 0.0], 3).unwrap(), TreeIndex::new(20, 3));
        assert!(matches!(g.locate(&[10.5, 0.0], 1), Err(Error::OutOfDomain(_))));
        for r in 1..=3 {
            for j in 1..=g.knot_count(r) {
                let idx = TreeIndex::new(j, r);
                assert_eq!(g.locate(&g.knot(idx), r).unwrap(), idx);
            }
        }
    }

    #[test]
    fn locate_boundary_prefers_lower_index_in_2d() {
        let g = MultiresGrid::new(DomainBox::rect(0.0, 1.0, 0.0, 1.0).unwrap(), 2, &[2, 2]).unwrap();
        // corner shared by all four resolution-1 cells
        assert_eq!(g.locate(&[0.5, 0.5], 1).unwrap(), TreeIndex::new(1, 1));
        let on_edge = g.locate(&[0.5, 0.75], 1).unwrap();
        assert_eq!(on_edge, TreeIndex::new(3, 1));
    }

    #[test]
    fn partition_property_dense_probe() {
        for g in [
            grid_1d(),
            MultiresGrid::new(DomainBox::rect(-1.0, 2.0, 0.0, 1.0).unwrap(), 3, &[3, 2]).unwrap(),
        ] {
            let d = g.dim();
            let steps = if d == 1 { 997 } else { 61 };
            for r in 1..=g.resolutions() {
                let w = g.spacing(r);
                let mut counts = vec![0usize; g.knot_count(r)];
                for a in 0..steps {
                    for b in 0..(if d == 2 { steps } else { 1 }) {
                        let lo = g.domain().lower();
                        let hi = g.domain().upper();
                        let mut s = [0.0; 2];
                        s[0] = lo[0] + (hi[0] - lo[0]) * a as f64 / (steps - 1) as f64;
                        if d == 2 {
                            s[1] = lo[1] + (hi[1] - lo[1]) * b as f64 / (steps - 1) as f64;
                        }
                        let idx = g.locate(&s, r).unwrap();
                        let k = g.knot(idx);
                        // the probe lies in the closed cell around its knot
                        for ax in 0..d {
                            assert!((s[ax] - k[ax]).abs() <= w[ax] / 2.0 + 1e-12);
                        }
                        counts[idx.j - 1] += 1;
                    }
                }
                assert!(counts.iter().all(|&c| c > 0));
            }
        }
    }

    #[test]
    fn knots_nested_in_father_cells() {
        let g = MultiresGrid::new(DomainBox::rect(0.0, 1.0, 0.0, 2.0).unwrap(), 3, &[2, 3]).unwrap();
        for r in 2..=3 {
            for j in 1..=g.knot_count(r) {
                let idx = TreeIndex::new(j, r);
                let f = g.father(idx).unwrap();
                assert_eq!(g.locate(&g.knot(idx), r - 1).unwrap(), f);
            }
        }
    }

    proptest! {
        #[test]
        fn tree_consistency(d in 1usize..=2, h0 in 1usize..4, h1 in 1usize..4, rr in 1usize..5) {
            let g = if d == 1 {
                MultiresGrid::new(DomainBox::interval(0.0, 1.0).unwrap(), rr, &[h0]).unwrap()
            } else {
                MultiresGrid::new(DomainBox::rect(0.0, 1.0, 0.0, 1.0).unwrap(), rr, &[h0, h1]).unwrap()
            };
            let p = g.children();
            let j1: usize = g.j1_dims().iter().product();
            for r in 1..=rr {
                prop_assert_eq!(g.knot_count(r), p.pow(r as u32 - 1) * j1);
                let s1 = g.spacing(1);
                for (a, w) in g.spacing(r).into_iter().enumerate() {
                    prop_assert_eq!(w, s1[a] / 2f64.powi(r as i32 - 1));
                }
                for j in 1..=g.knot_count(r) {
                    let idx = TreeIndex::new(j, r);
                    prop_assert_eq!(g.index_of(g.lattice_of(j, r), r), j);
                    prop_assert_eq!(g.subtree(idx).len(), g.subtree_size(r));
                    prop_assert_eq!(g.node_of_column(g.column(idx)), idx);
                    if r >= 2 {
                        let f = g.father(idx).unwrap();
                        prop_assert!(g.subtree(f).contains(&idx));
                    }
                }
            }
        }
    }
}
