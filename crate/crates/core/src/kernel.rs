//! Wendland kernel and the row-sparse multiresolution design matrix.

use rayon::prelude::*;

use crate::grid::MultiresGrid;
use crate::{dist, Coord, Error, Result};

/// Polynomial order `l = ⌊d/2⌋ + 2` for dimension `d`.
pub fn poly_order(d: usize) -> u32 {
    (d / 2 + 2) as u32
}

/// `(1 - z)_+^(l+1) (1 + (l+1) z)`, supported on `[0, 1)`.
pub fn wendland(z: f64, l: u32) -> Result<f64> {
    if !(z >= 0.0) {
        return Err(Error::Domain(format!("Wendland argument must be nonnegative, got {z}")));
    }
    Ok(kappa(z, l))
}

#[inline]
pub(crate) fn kappa(z: f64, l: u32) -> f64 {
    if z >= 1.0 {
        return 0.0;
    }
    let e = l + 1;
    (1.0 - z).powi(e as i32) * (1.0 + e as f64 * z)
}

/// `κ(‖s - knot‖ / φ)`.
pub fn kernel_eval(s: &Coord, knot: &Coord, phi: f64, l: u32) -> Result<f64> {
    if !(phi > 0.0) {
        return Err(Error::Domain(format!("bandwidth must be positive, got {phi}")));
    }
    wendland(dist(s, knot) / phi, l)
}

/// Bandwidths for one value of the multiplier `η`: `φ_r = η Δ_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelConfig {
    pub d: usize,
    pub l: u32,
    pub eta: f64,
    pub phi: Vec<f64>,
}

impl KernelConfig {
    pub fn new(grid: &MultiresGrid, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::Config(format!("eta must be positive, got {eta}")));
        }
        let phi: Vec<f64> = (1..=grid.resolutions()).map(|r| eta * grid.max_spacing(r)).collect();
        if phi.windows(2).any(|w| !(w[0] > w[1])) || phi.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::Config(format!("bandwidths must be strictly decreasing and positive: {phi:?}")));
        }
        Ok(Self { d: grid.dim(), l: poly_order(grid.dim()), eta, phi })
    }
}

/// Nonzero kernel entries `(column, value)` of the design row at `s`, column-ascending.
pub fn kernel_row(s: &Coord, grid: &MultiresGrid, config: &KernelConfig) -> Vec<(u32, f64)> {
    let d = grid.dim();
    let lower = grid.domain().lower();
    let mut out = Vec::new();
    for r in 1..=grid.resolutions() {
        let phi = config.phi[r - 1];
        let w = grid.spacing(r);
        let dims = grid.lattice_dims(r);
        let mut lo = [0usize; 2];
        let mut hi = [0usize; 2];
        for a in 0..d {
            let rel = s[a] - lower[a];
            let first = ((rel - phi) / w[a] - 0.5).floor().max(0.0);
            let last = ((rel + phi) / w[a] - 0.5).ceil();
            if last < 0.0 || first > (dims[a] - 1) as f64 {
                lo[a] = 1;
                hi[a] = 0;
                continue;
            }
            lo[a] = first as usize;
            hi[a] = (last as usize).min(dims[a] - 1);
        }
        let start = out.len();
        for iy in lo[1]..=hi[1] {
            for ix in lo[0]..=hi[0] {
                let j = grid.index_of([ix, iy], r);
                let knot = &grid.knots(r)[j - 1];
                let v = kappa(dist(s, knot) / phi, config.l);
                if v > 0.0 {
                    out.push(((grid.resolution_offset(r) + j - 1) as u32, v));
                }
            }
        }
        out[start..].sort_unstable_by_key(|e| e.0);
    }
    out
}

/// Basis matrix `K` for one `η`, stored both row- and column-compressed.
///
/// Columns are resolution-major, then knot index. Only strictly positive
/// kernel values are stored.
#[derive(Debug, Clone)]
pub struct SparseDesign {
    n_rows: usize,
    n_cols: usize,
    config: KernelConfig,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
    col_ptr: Vec<usize>,
    row_idx: Vec<u32>,
    col_values: Vec<f64>,
}

impl SparseDesign {
    pub fn build(locations: &[Coord], grid: &MultiresGrid, eta: f64) -> Result<Self> {
        let config = KernelConfig::new(grid, eta)?;
        if let Some(s) = locations.iter().find(|s| !grid.domain().contains(s)) {
            return Err(Error::OutOfDomain(s[..grid.dim()].to_vec()));
        }
        if locations.len() >= u32::MAX as usize {
            return Err(Error::Data("too many locations".into()));
        }
        let rows: Vec<Vec<(u32, f64)>> =
            locations.par_iter().map(|s| kernel_row(s, grid, &config)).collect();

        let n_rows = locations.len();
        let n_cols = grid.total_knots();
        let nnz: usize = rows.iter().map(Vec::len).sum();
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        let mut col_counts = vec![0usize; n_cols + 1];
        row_ptr.push(0);
        for row in &rows {
            for &(c, v) in row {
                col_idx.push(c);
                values.push(v);
                col_counts[c as usize + 1] += 1;
            }
            row_ptr.push(col_idx.len());
        }
        drop(rows);

        for c in 0..n_cols {
            col_counts[c + 1] += col_counts[c];
        }
        let col_ptr = col_counts;
        let mut fill = col_ptr.clone();
        let mut row_idx = vec![0u32; nnz];
        let mut col_values = vec![0.0; nnz];
        for i in 0..n_rows {
            for k in row_ptr[i]..row_ptr[i + 1] {
                let c = col_idx[k] as usize;
                row_idx[fill[c]] = i as u32;
                col_values[fill[c]] = values[k];
                fill[c] += 1;
            }
        }

        Ok(Self { n_rows, n_cols, config, row_ptr, col_idx, values, col_ptr, row_idx, col_values })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn eta(&self) -> f64 {
        self.config.eta
    }

    pub fn config(&self) -> &KernelConfig {
        &self.config
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column ids and values of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[range.clone()], &self.values[range])
    }

    /// Row ids and values of column `c`.
    #[inline]
    pub fn column(&self, c: usize) -> (&[u32], &[f64]) {
        let range = self.col_ptr[c]..self.col_ptr[c + 1];
        (&self.row_idx[range.clone()], &self.col_values[range])
    }

    /// Largest number of nonzeros in any row.
    pub fn max_row_nnz(&self) -> usize {
        self.row_ptr.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0)
    }

    /// `(Kβ)_i`.
    #[inline]
    pub fn row_dot(&self, i: usize, beta: &[f64]) -> f64 {
        let (cols, vals) = self.row(i);
        cols.iter().zip(vals).map(|(&c, &v)| v * beta[c as usize]).sum()
    }

    /// `Kβ`, computed row-parallel.
    pub fn mul_vec(&self, beta: &[f64]) -> Vec<f64> {
        assert_eq!(beta.len(), self.n_cols);
        (0..self.n_rows).into_par_iter().map(|i| self.row_dot(i, beta)).collect()
    }

    /// Dense copy, for checks on small instances.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                m[(i, c as usize)] = v;
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{DomainBox, TreeIndex};
    use nalgebra::DMatrix;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn wendland_values() {
        for l in 2..=4 {
            assert_eq!(wendland(0.0, l).unwrap(), 1.0);
            assert_eq!(wendland(1.0, l).unwrap(), 0.0);
            assert_eq!(wendland(3.5, l).unwrap(), 0.0);
        }
        assert_eq!(wendland(0.5, 3).unwrap(), 0.1875);
        assert!(matches!(wendland(-0.1, 3), Err(Error::Domain(_))));
        assert!(wendland(f64::NAN, 3).is_err());
        assert_eq!(poly_order(1), 2);
        assert_eq!(poly_order(2), 3);
    }

    #[test]
    fn kernel_eval_values() {
        let k = [0.3, 0.7];
        assert_eq!(kernel_eval(&k, &k, 0.2, 3).unwrap(), 1.0);
        assert_eq!(kernel_eval(&[0.5, 0.7], &k, 0.2, 3).unwrap(), 0.0);
        assert!((kernel_eval(&[0.4, 0.7], &k, 0.2, 3).unwrap() - 0.1875).abs() < 1e-15);
        assert!(kernel_eval(&k, &k, 0.0, 3).is_err());
    }

    #[test]
    fn monotone_and_smooth_at_support_edge() {
        let l = 3;
        let mut prev = kappa(0.0, l);
        for i in 1..=10_000 {
            let z = i as f64 / 10_000.0;
            let v = kappa(z, l);
            assert!(v <= prev);
            prev = v;
        }
        let second = |z: f64, h: f64| (kappa(z + h, l) - 2.0 * kappa(z, l) + kappa(z - h, l)) / (h * h);
        for h in [1e-2, 1e-3] {
            let left = second(1.0 - 2.0 * h, h);
            let right = second(1.0 + 2.0 * h, h);
            assert_eq!(right, 0.0);
            // κ'' vanishes at z = 1 like O(1 - z)
            assert!(left.abs() < 200.0 * h, "h={h} left={left}");
        }
    }

    #[test]
    fn bandwidths_decrease() {
        let g = MultiresGrid::new(DomainBox::rect(0.0, 2.0, 0.0, 1.0).unwrap(), 4, &[4, 3]).unwrap();
        for eta in [0.3, 1.0, 5.0] {
            let cfg = KernelConfig::new(&g, eta).unwrap();
            assert!(cfg.phi.windows(2).all(|w| w[0] > w[1]));
            assert_eq!(cfg.phi[0], eta * 0.5);
        }
        assert!(KernelConfig::new(&g, 0.0).is_err());
    }

    #[test]
    fn knot_row_has_unit_entry() {
        let g = MultiresGrid::new(DomainBox::interval(0.0, 10.0).unwrap(), 1, &[5]).unwrap();
        let k = SparseDesign::build(&[[5.0, 0.0]], &g, 1.0).unwrap();
        let (cols, vals) = k.row(0);
        assert_eq!(cols, &[2]);
        assert_eq!(vals, &[1.0]);
        let k3 = SparseDesign::build(&[[5.0, 0.0]], &g, 3.0).unwrap();
        let (cols, vals) = k3.row(0);
        // φ = 6 reaches every knot of 1, 3, 5, 7, 9
        assert_eq!(cols, &[0, 1, 2, 3, 4]);
        assert_eq!(vals[2], 1.0);
        assert_eq!(vals[1], vals[3]);
        assert!(vals.iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    fn dense_oracle(locs: &[Coord], g: &MultiresGrid, eta: f64) -> DMatrix<f64> {
        let l = poly_order(g.dim());
        let mut m = DMatrix::zeros(locs.len(), g.total_knots());
        for (i, s) in locs.iter().enumerate() {
            for r in 1..=g.resolutions() {
                let phi = eta * g.max_spacing(r);
                for j in 1..=g.knot_count(r) {
                    let idx = TreeIndex::new(j, r);
                    let z = dist(s, &g.knot(idx)) / phi;
                    let v = if z < 1.0 { (1.0 - z).powi(l as i32 + 1) * (1.0 + (l + 1) as f64 * z) } else { 0.0 };
                    m[(i, g.column(idx))] = v;
                }
            }
        }
        m
    }

    #[test]
    fn sparse_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g1 = MultiresGrid::new(DomainBox::interval(0.0, 10.0).unwrap(), 3, &[5]).unwrap();
        let g2 = MultiresGrid::new(DomainBox::rect(0.0, 1.0, 0.0, 1.0).unwrap(), 3, &[3, 3]).unwrap();
        for g in [g1, g2] {
            let locs: Vec<Coord> = (0..100)
                .map(|_| {
                    let lo = g.domain().lower();
                    let hi = g.domain().upper();
                    let mut s = [0.0; 2];
                    for a in 0..g.dim() {
                        s[a] = lo[a] + (hi[a] - lo[a]) * rng.random::<f64>();
                    }
                    s
                })
                .collect();
            for eta in 1..=5 {
                let k = SparseDesign::build(&locs, &g, eta as f64).unwrap();
                let dense = dense_oracle(&locs, &g, eta as f64);
                let diff = (k.to_dense() - &dense).abs().max();
                assert!(diff <= 1e-12, "eta={eta} diff={diff}");
                assert_eq!(k.nnz(), dense.iter().filter(|&&v| v > 0.0).count());
                // column storage mirrors row storage
                let mut total = 0.0;
                for c in 0..k.n_cols() {
                    let (rows, vals) = k.column(c);
                    for (&i, &v) in rows.iter().zip(vals) {
                        assert_eq!(v, dense[(i as usize, c)]);
                        total += v;
                    }
                }
                assert!((total - dense.sum()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn narrow_support_one_nonzero_per_resolution() {
        let g = MultiresGrid::new(DomainBox::interval(0.0, 10.0).unwrap(), 3, &[5]).unwrap();
        let locs: Vec<Coord> = (0..=1000).map(|i| [i as f64 / 100.0, 0.0]).collect();
        for eta in [0.5, 0.3, 0.1] {
            let k = SparseDesign::build(&locs, &g, eta).unwrap();
            let dense = dense_oracle(&locs, &g, eta);
            for i in 0..locs.len() {
                for r in 1..=3 {
                    let lo = g.resolution_offset(r);
                    let count = (lo..lo + g.knot_count(r)).filter(|&c| dense[(i, c)] > 0.0).count();
                    assert!(count <= 1);
                }
                assert!(k.row(i).0.len() <= 3);
            }
        }
    }

    #[test]
    fn row_nnz_bounded_independently_of_n() {
        let g = MultiresGrid::new(DomainBox::rect(0.0, 1.0, 0.0, 1.0).unwrap(), 2, &[6, 6]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let locs: Vec<Coord> = (0..3000).map(|_| [rng.random(), rng.random()]).collect();
        for eta in 1..=3 {
            let k = SparseDesign::build(&locs, &g, eta as f64).unwrap();
            // lattice points of spacing Δ inside an open disc of radius ηΔ, per resolution
            let per_res = (2 * eta + 1) * (2 * eta + 1);
            assert!(k.max_row_nnz() <= 2 * per_res);
        }
    }

    #[test]
    fn out_of_domain_rejected() {
        let g = MultiresGrid::new(DomainBox::interval(0.0, 1.0).unwrap(), 1, &[2]).unwrap();
        assert!(matches!(SparseDesign::build(&[[1.5, 0.0]], &g, 1.0), Err(Error::OutOfDomain(_))));
    }

    #[test]
    fn gram_matrix_positive_semidefinite() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Coord> = (0..200).map(|_| [rng.random(), rng.random()]).collect();
        let gram = DMatrix::from_fn(200, 200, |i, j| kappa(dist(&pts[i], &pts[j]) / 0.3, 3));
        let eig = gram.symmetric_eigenvalues();
        let max = eig.max();
        assert!(eig.min() >= -1e-8 * max);
    }
}
