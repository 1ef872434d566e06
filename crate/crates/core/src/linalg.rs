//! Dense kernels used by the POD code. Snapshot slices are handled as lists
//! of contiguous column-major blocks so no copy is needed to slice by time.

use nalgebra::DMatrix;

use crate::error::{Result, RomError};

/// Below this smaller dimension the SVD is computed directly; above it the
/// eigendecomposition of the Gram matrix on the smaller side is used.
pub const DIRECT_SVD_LIMIT: usize = 200;

/// A column-major matrix stored as a sequence of contiguous column blocks.
#[derive(Debug, Clone)]
pub struct ColumnBlocks<'a> {
    rows: usize,
    blocks: Vec<&'a [f64]>,
}

impl<'a> ColumnBlocks<'a> {
    pub fn new(rows: usize, blocks: Vec<&'a [f64]>) -> Result<Self> {
        if rows == 0 {
            return Err(RomError::invalid("matrix with zero rows"));
        }
        for b in &blocks {
            if b.len() % rows != 0 {
                return Err(RomError::invalid(format!("block of length {} is not a multiple of {rows} rows", b.len())));
            }
        }
        Ok(ColumnBlocks { rows, blocks: blocks.into_iter().filter(|b| !b.is_empty()).collect() })
    }

    pub fn single(rows: usize, data: &'a [f64]) -> Result<Self> {
        Self::new(rows, vec![data])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.blocks.iter().map(|b| b.len() / self.rows).sum()
    }

    pub fn blocks(&self) -> &[&'a [f64]] {
        &self.blocks
    }

    pub fn columns(&self) -> impl Iterator<Item = &'a [f64]> + '_ {
        self.blocks.iter().flat_map(move |b| b.chunks_exact(self.rows))
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let mut data = Vec::with_capacity(self.rows * self.cols());
        for b in &self.blocks {
            data.extend_from_slice(b);
        }
        DMatrix::from_vec(self.rows, self.cols(), data)
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.blocks.iter().flat_map(|b| b.iter()).map(|x| x * x).sum()
    }
}

/// Strided view `(data, row stride, column stride)`.
pub(crate) type View<'a> = (&'a [f64], usize, usize);

fn span(m: usize, n: usize, rs: usize, cs: usize) -> usize {
    if m == 0 || n == 0 {
        0
    } else {
        (m - 1) * rs + (n - 1) * cs + 1
    }
}

/// `C = alpha A B + beta C` for strided `A` (m x k), `B` (k x n), `C` (m x n).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(m: usize, k: usize, n: usize, alpha: f64, a: View, b: View, beta: f64, c: (&mut [f64], usize, usize)) {
    assert!(a.0.len() >= span(m, k, a.1, a.2), "gemm: A out of bounds");
    assert!(b.0.len() >= span(k, n, b.1, b.2), "gemm: B out of bounds");
    assert!(c.0.len() >= span(m, n, c.1, c.2), "gemm: C out of bounds");
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the assertions above keep every strided access in bounds.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.0.as_ptr(),
            a.1 as isize,
            a.2 as isize,
            b.0.as_ptr(),
            b.1 as isize,
            b.2 as isize,
            beta,
            c.0.as_mut_ptr(),
            c.1 as isize,
            c.2 as isize,
        );
    }
}

/// `A^T A` (cols x cols).
pub fn gram_columns(a: &ColumnBlocks) -> DMatrix<f64> {
    let rows = a.rows;
    let n = a.cols();
    let mut c = vec![0.0; n * n];
    let widths: Vec<usize> = a.blocks.iter().map(|b| b.len() / rows).collect();
    let mut op = 0;
    for (p, bp) in a.blocks.iter().enumerate() {
        let mut oq = op;
        for q in p..a.blocks.len() {
            let bq = a.blocks[q];
            gemm(widths[p], rows, widths[q], 1.0, (bp, rows, 1), (bq, 1, rows), 0.0, (&mut c[op + oq * n..], 1, n));
            oq += widths[q];
        }
        op += widths[p];
    }
    for j in 0..n {
        for i in (j + 1)..n {
            c[i + j * n] = c[j + i * n];
        }
    }
    DMatrix::from_vec(n, n, c)
}

/// `A A^T` (rows x rows).
pub fn gram_rows(a: &ColumnBlocks) -> DMatrix<f64> {
    let rows = a.rows;
    let mut c = vec![0.0; rows * rows];
    for (i, b) in a.blocks.iter().enumerate() {
        let w = b.len() / rows;
        gemm(rows, w, rows, 1.0, (b, 1, rows), (b, rows, 1), if i == 0 { 0.0 } else { 1.0 }, (&mut c, 1, rows));
    }
    DMatrix::from_vec(rows, rows, c)
}

/// `U^T A` for a column-major `U` (rows x r); result is r x cols.
pub fn project_columns(u: &DMatrix<f64>, a: &ColumnBlocks) -> DMatrix<f64> {
    let rows = a.rows;
    let r = u.ncols();
    let n = a.cols();
    let mut c = vec![0.0; r * n];
    if r == 0 {
        return DMatrix::from_vec(0, n, c);
    }
    let mut off = 0;
    for b in &a.blocks {
        let w = b.len() / rows;
        gemm(r, rows, w, 1.0, (u.as_slice(), rows, 1), (b, 1, rows), 0.0, (&mut c[off * r..], 1, r));
        off += w;
    }
    DMatrix::from_vec(r, n, c)
}

/// `U C` for `U` (rows x r) and `C` (r x n).
pub fn expand(u: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let (rows, r, n) = (u.nrows(), u.ncols(), c.ncols());
    let mut out = vec![0.0; rows * n];
    if r > 0 {
        gemm(rows, r, n, 1.0, (u.as_slice(), 1, rows), (c.as_slice(), 1, r), 0.0, (&mut out, 1, rows));
    }
    DMatrix::from_vec(rows, n, out)
}

fn sorted_desc_sqrt(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| b.total_cmp(a));
    v.into_iter().map(|x| x.max(0.0).sqrt()).collect()
}

fn check_finite(a: &ColumnBlocks) -> Result<()> {
    if a.blocks.iter().all(|b| b.iter().all(|x| x.is_finite())) {
        Ok(())
    } else {
        Err(RomError::NumericalFailure { message: "non-finite entry in matrix".into(), residual: f64::NAN })
    }
}

/// All singular values, sorted nonincreasing (length `min(rows, cols)`).
pub fn singular_values(a: &ColumnBlocks) -> Result<Vec<f64>> {
    check_finite(a)?;
    let (m, n) = (a.rows(), a.cols());
    if n == 0 {
        return Ok(Vec::new());
    }
    if m.min(n) <= DIRECT_SVD_LIMIT {
        let mut s: Vec<f64> = a.to_matrix().singular_values().iter().copied().collect();
        s.sort_by(|x, y| y.total_cmp(x));
        return Ok(s);
    }
    let g = if n <= m { gram_columns(a) } else { gram_rows(a) };
    Ok(sorted_desc_sqrt(g.symmetric_eigenvalues().iter().copied().collect()))
}

/// Singular values and the leading left singular vectors.
#[derive(Debug, Clone)]
pub struct LeftSvd {
    pub sigma: Vec<f64>,
    pub u: DMatrix<f64>,
}

/// Computes all singular values, lets `choose` pick a rank from them, and
/// returns the corresponding orthonormal left singular vectors.
pub fn left_svd(a: &ColumnBlocks, choose: impl FnOnce(&[f64]) -> usize) -> Result<LeftSvd> {
    check_finite(a)?;
    let (m, n) = (a.rows(), a.cols());
    if n == 0 {
        let r = choose(&[]);
        debug_assert_eq!(r, 0);
        return Ok(LeftSvd { sigma: Vec::new(), u: DMatrix::zeros(m, 0) });
    }
    if m.min(n) <= DIRECT_SVD_LIMIT {
        let svd = a.to_matrix().svd(true, false);
        let u = svd.u.expect("u requested");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
        let sigma: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
        let r = choose(&sigma).min(sigma.len());
        let cols: Vec<_> = order[..r].iter().map(|&i| u.column(i).into_owned()).collect();
        let u_r = if r == 0 { DMatrix::zeros(m, 0) } else { DMatrix::from_columns(&cols) };
        return Ok(LeftSvd { sigma, u: u_r });
    }
    if n >= m {
        let eig = gram_rows(a).symmetric_eigen();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let sigma: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0).sqrt()).collect();
        let r = choose(&sigma).min(sigma.len());
        let cols: Vec<_> = order[..r].iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
        let u_r = if r == 0 { DMatrix::zeros(m, 0) } else { orthonormalize(DMatrix::from_columns(&cols)) };
        return Ok(LeftSvd { sigma, u: u_r });
    }
    // n < m: right vectors from A^T A, then U = A V / sigma
    let eig = gram_columns(a).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let sigma: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0).sqrt()).collect();
    let r = choose(&sigma).min(sigma.len());
    if r == 0 {
        return Ok(LeftSvd { sigma, u: DMatrix::zeros(m, 0) });
    }
    if sigma[r - 1] <= 0.0 {
        return Err(RomError::NumericalFailure {
            message: format!("requested rank {r} exceeds numerical rank"),
            residual: sigma[r - 1],
        });
    }
    let v_cols: Vec<_> = order[..r].iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
    let mut v = DMatrix::from_columns(&v_cols);
    for (k, mut col) in v.column_iter_mut().enumerate() {
        col /= sigma[k];
    }
    let av = {
        let mut out = DMatrix::zeros(m, r);
        let mut off = 0;
        for b in a.blocks() {
            let w = b.len() / m;
            let vb = v.rows(off, w).into_owned();
            let part = expand(&DMatrix::from_column_slice(m, w, b), &vb);
            out += part;
            off += w;
        }
        out
    };
    Ok(LeftSvd { sigma, u: orthonormalize(av) })
}

/// Orthonormal basis of the column span, keeping the column signs.
pub fn orthonormalize(a: DMatrix<f64>) -> DMatrix<f64> {
    let (m, r) = a.shape();
    if r == 0 {
        return a;
    }
    let qr = a.qr();
    let rr = qr.r();
    let mut q = qr.q();
    for k in 0..r.min(m) {
        if rr[(k, k)] < 0.0 {
            q.column_mut(k).neg_mut();
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(m: usize, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m * n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn grams_match_nalgebra() {
        let (m, n) = (7, 9);
        let d = random(m, n, 1);
        let a = ColumnBlocks::new(m, vec![&d[..2 * m], &d[2 * m..6 * m], &d[6 * m..]]).unwrap();
        let full = DMatrix::from_column_slice(m, n, &d);
        assert!((gram_columns(&a) - full.transpose() * &full).norm() < 1e-12);
        assert!((gram_rows(&a) - &full * full.transpose()).norm() < 1e-12);
        let u = DMatrix::from_column_slice(m, 3, &random(m, 3, 2));
        assert!((project_columns(&u, &a) - u.transpose() * &full).norm() < 1e-12);
    }

    #[test]
    fn all_routes_agree() {
        for &(m, n) in &[(30, 20), (250, 230), (230, 260), (300, 900)] {
            let d = random(m, n, (m * n) as u64);
            let a = ColumnBlocks::single(m, &d).unwrap();
            let reference: Vec<f64> = {
                let mut s: Vec<f64> = DMatrix::from_column_slice(m, n, &d).singular_values().iter().copied().collect();
                s.sort_by(|x, y| y.total_cmp(x));
                s
            };
            let s = singular_values(&a).unwrap();
            assert_eq!(s.len(), m.min(n));
            for (x, y) in s.iter().zip(&reference) {
                assert!((x - y).abs() < 1e-9 * reference[0], "{m}x{n}: {x} vs {y}");
            }
            let l = left_svd(&a, |_| 5).unwrap();
            let gram = l.u.transpose() * &l.u;
            assert!((gram - DMatrix::identity(5, 5)).norm() < 1e-12);
            // A^T u_k = sigma_k v_k, so |A^T u_k| = sigma_k
            let full = DMatrix::from_column_slice(m, n, &d);
            for k in 0..5 {
                let norm = (full.transpose() * l.u.column(k)).norm();
                assert!((norm - l.sigma[k]).abs() < 1e-8 * l.sigma[0]);
            }
        }
    }

    #[test]
    fn zero_rank_and_empty() {
        let d = vec![0.0; 12];
        let a = ColumnBlocks::single(4, &d).unwrap();
        assert!(singular_values(&a).unwrap().iter().all(|&s| s == 0.0));
        let l = left_svd(&a, |_| 0).unwrap();
        assert_eq!(l.u.shape(), (4, 0));
        let e = ColumnBlocks::new(4, vec![]).unwrap();
        assert!(singular_values(&e).unwrap().is_empty());
        assert!(ColumnBlocks::new(4, vec![&d[..5]]).is_err());
    }
}
