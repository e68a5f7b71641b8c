//! Subtree blocks, their Gram matrices and the conflict coloring.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::grid::{MultiresGrid, NeighborhoodKind, TreeIndex};
use crate::kernel::SparseDesign;
use crate::Result;

/// Columns of every resolution-1 subtree block. Independent of η.
#[derive(Debug, Clone)]
pub struct BlockLayout {
    /// Per block (0-based), its columns in resolution-major subtree order.
    columns: Vec<Vec<usize>>,
    /// Block (0-based) owning each column.
    col_block: Vec<u32>,
    /// Position of each column within its block.
    col_pos: Vec<u32>,
}

impl BlockLayout {
    pub fn new(grid: &MultiresGrid) -> Self {
        let n_cols = grid.total_knots();
        let mut col_block = vec![0u32; n_cols];
        let mut col_pos = vec![0u32; n_cols];
        let columns: Vec<Vec<usize>> = (1..=grid.knot_count(1))
            .map(|m| {
                let cols: Vec<usize> = grid.subtree(TreeIndex::new(m, 1)).into_iter().map(|n| grid.column(n)).collect();
                for (pos, &c) in cols.iter().enumerate() {
                    col_block[c] = (m - 1) as u32;
                    col_pos[c] = pos as u32;
                }
                cols
            })
            .collect();
        Self { columns, col_block, col_pos }
    }

    pub fn n_blocks(&self) -> usize {
        self.columns.len()
    }

    /// Block dimension `q`.
    pub fn block_size(&self) -> usize {
        self.columns[0].len()
    }

    /// Columns of block `b` (0-based).
    pub fn columns(&self, b: usize) -> &[usize] {
        &self.columns[b]
    }

    pub fn block_of(&self, col: usize) -> usize {
        self.col_block[col] as usize
    }

    pub fn position_of(&self, col: usize) -> usize {
        self.col_pos[col] as usize
    }

    /// Rows with a nonzero in any column of block `b`, ascending.
    pub fn rows(&self, b: usize, design: &SparseDesign) -> Vec<usize> {
        let mut rows: Vec<usize> = self.columns[b]
            .iter()
            .flat_map(|&c| design.column(c).0.iter().map(|&i| i as usize))
            .collect();
        rows.sort_unstable();
        rows.dedup();
        rows
    }

    /// `A'A` for block `b`, `A` the block's columns restricted to its rows.
    pub fn gram(&self, b: usize, design: &SparseDesign) -> DMatrix<f64> {
        let q = self.block_size();
        let mut g = DMatrix::zeros(q, q);
        let mut local: Vec<(usize, f64)> = Vec::with_capacity(q);
        for i in self.rows(b, design) {
            local.clear();
            let (cols, vals) = design.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                if self.col_block[c as usize] as usize == b {
                    local.push((self.col_pos[c as usize] as usize, v));
                }
            }
            for &(a, va) in &local {
                for &(bb, vb) in &local {
                    g[(a, bb)] += va * vb;
                }
            }
        }
        g
    }
}

/// Per-η block data: Gram matrices and the color classes.
#[derive(Debug, Clone)]
pub(crate) struct EtaBlocks {
    pub(crate) grams: Vec<DMatrix<f64>>,
    /// Color classes in color order; blocks ascending within a class.
    pub(crate) classes: Vec<Vec<usize>>,
}

impl EtaBlocks {
    pub(crate) fn new(layout: &BlockLayout, design: &SparseDesign, grid: &MultiresGrid) -> Result<Self> {
        let grams = (0..layout.n_blocks()).into_par_iter().map(|b| layout.gram(b, design)).collect();
        let adjacency = conflict_graph(layout, design, grid)?;
        Ok(Self { grams, classes: greedy_coloring(&adjacency) })
    }
}

/// Blocks conflict when their neighborhoods `N(m)` say so or when they share
/// a data row. Either makes their conditionals depend on each other.
pub(crate) fn conflict_graph(layout: &BlockLayout, design: &SparseDesign, grid: &MultiresGrid) -> Result<Vec<BTreeSet<usize>>> {
    let nb = layout.n_blocks();
    let mut adj: Vec<BTreeSet<usize>> = (0..nb)
        .into_par_iter()
        .map(|b| {
            grid.neighborhood(b + 1, design.eta(), NeighborhoodKind::Blocks)
                .map(|ms| ms.into_iter().map(|m| m - 1).filter(|&m| m != b).collect())
        })
        .collect::<Result<_>>()?;
    let mut touched: Vec<usize> = Vec::new();
    for i in 0..design.n_rows() {
        touched.clear();
        touched.extend(design.row(i).0.iter().map(|&c| layout.block_of(c as usize)));
        touched.sort_unstable();
        touched.dedup();
        for (k, &a) in touched.iter().enumerate() {
            for &b in &touched[k + 1..] {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
    }
    Ok(adj)
}

/// Smallest-available-color greedy coloring in block order.
pub(crate) fn greedy_coloring(adj: &[BTreeSet<usize>]) -> Vec<Vec<usize>> {
    let mut color = vec![usize::MAX; adj.len()];
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for b in 0..adj.len() {
        let used: BTreeSet<usize> = adj[b].iter().map(|&o| color[o]).filter(|&c| c != usize::MAX).collect();
        let c = (0..).find(|c| !used.contains(c)).unwrap();
        color[b] = c;
        if c == classes.len() {
            classes.push(Vec::new());
        }
        classes[c].push(b);
    }
    classes
}
