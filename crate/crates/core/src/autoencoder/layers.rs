//! Batched 1D convolution kernels. Activations are stored channel-major as a
//! row-major `channels x (batch * length)` matrix.

use crate::linalg::gemm;

/// Geometry of a strided, zero-padded 1D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeom {
    pub fn out_len(&self, len: usize) -> usize {
        (len + 2 * self.padding - self.kernel) / self.stride + 1
    }
}

/// Unfolds `x` (`c x (batch * len_in)`) into `(c * kernel) x (batch * len_out)`.
pub(crate) fn im2col(x: &[f64], c: usize, batch: usize, len_in: usize, g: ConvGeom, out: &mut Vec<f64>) {
    let len_out = g.out_len(len_in);
    let n = batch * len_out;
    out.clear();
    out.resize(c * g.kernel * n, 0.0);
    for ci in 0..c {
        let xrow = &x[ci * batch * len_in..(ci + 1) * batch * len_in];
        for k in 0..g.kernel {
            let orow = &mut out[(ci * g.kernel + k) * n..(ci * g.kernel + k + 1) * n];
            for b in 0..batch {
                let xs = &xrow[b * len_in..(b + 1) * len_in];
                let os = &mut orow[b * len_out..(b + 1) * len_out];
                for (l, o) in os.iter_mut().enumerate() {
                    let p = (g.stride * l + k) as isize - g.padding as isize;
                    if p >= 0 && (p as usize) < len_in {
                        *o = xs[p as usize];
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates columns back into `x`.
pub(crate) fn col2im(cols: &[f64], c: usize, batch: usize, len_in: usize, g: ConvGeom, x: &mut [f64]) {
    let len_out = g.out_len(len_in);
    let n = batch * len_out;
    for ci in 0..c {
        let xrow = &mut x[ci * batch * len_in..(ci + 1) * batch * len_in];
        for k in 0..g.kernel {
            let crow = &cols[(ci * g.kernel + k) * n..(ci * g.kernel + k + 1) * n];
            for b in 0..batch {
                let xs = &mut xrow[b * len_in..(b + 1) * len_in];
                let cs = &crow[b * len_out..(b + 1) * len_out];
                for (l, v) in cs.iter().enumerate() {
                    let p = (g.stride * l + k) as isize - g.padding as isize;
                    if p >= 0 && (p as usize) < len_in {
                        xs[p as usize] += v;
                    }
                }
            }
        }
    }
}

fn add_bias_rows(y: &mut [f64], bias: &[f64], n: usize) {
    for (row, b) in y.chunks_exact_mut(n).zip(bias) {
        row.iter_mut().for_each(|v| *v += b);
    }
}

fn accumulate_row_sums(dy: &[f64], n: usize, db: &mut [f64]) {
    for (row, d) in dy.chunks_exact(n).zip(db.iter_mut()) {
        *d += row.iter().sum::<f64>();
    }
}

pub(crate) fn tanh_inplace(y: &mut [f64]) {
    y.iter_mut().for_each(|v| *v = v.tanh());
}

/// `dz = dy * (1 - y^2)` for `y = tanh(z)`.
pub(crate) fn tanh_backward(y: &[f64], dy: &mut [f64]) {
    for (d, v) in dy.iter_mut().zip(y) {
        *d *= 1.0 - v * v;
    }
}

/// Convolution: weight `c_out x (c_in * kernel)` row-major. Returns the
/// pre-activation output `c_out x (batch * len_out)`; `cols` keeps the
/// unfolded input for the backward pass.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_forward(
    x: &[f64],
    w: &[f64],
    bias: &[f64],
    c_in: usize,
    c_out: usize,
    batch: usize,
    len_in: usize,
    g: ConvGeom,
    cols: &mut Vec<f64>,
) -> Vec<f64> {
    im2col(x, c_in, batch, len_in, g, cols);
    let n = batch * g.out_len(len_in);
    let q = c_in * g.kernel;
    let mut y = vec![0.0; c_out * n];
    gemm(c_out, q, n, 1.0, (w, q, 1), (cols, n, 1), 0.0, (&mut y, n, 1));
    add_bias_rows(&mut y, bias, n);
    y
}

/// Accumulates weight/bias gradients and returns `dx`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward(
    dz: &[f64],
    cols: &[f64],
    w: &[f64],
    c_in: usize,
    c_out: usize,
    batch: usize,
    len_in: usize,
    g: ConvGeom,
    dw: &mut [f64],
    db: &mut [f64],
    need_dx: bool,
) -> Option<Vec<f64>> {
    let n = batch * g.out_len(len_in);
    let q = c_in * g.kernel;
    gemm(c_out, n, q, 1.0, (dz, n, 1), (cols, 1, n), 1.0, (dw, q, 1));
    accumulate_row_sums(dz, n, db);
    if !need_dx {
        return None;
    }
    let mut dcols = vec![0.0; q * n];
    gemm(q, c_out, n, 1.0, (w, 1, q), (dz, n, 1), 0.0, (&mut dcols, n, 1));
    let mut dx = vec![0.0; c_in * batch * len_in];
    col2im(&dcols, c_in, batch, len_in, g, &mut dx);
    Some(dx)
}

/// Transposed convolution with weight in `(c_in, c_out, kernel)` order; the
/// output length is the input length of the matching forward convolution.
#[allow(clippy::too_many_arguments)]
pub(crate) fn convt_forward(
    x: &[f64],
    w: &[f64],
    bias: &[f64],
    c_in: usize,
    c_out: usize,
    batch: usize,
    len_out: usize,
    g: ConvGeom,
) -> Vec<f64> {
    let len_in = g.out_len(len_out);
    let n = batch * len_in;
    let q = c_out * g.kernel;
    let mut z = vec![0.0; q * n];
    gemm(q, c_in, n, 1.0, (w, 1, q), (x, n, 1), 0.0, (&mut z, n, 1));
    let mut y = vec![0.0; c_out * batch * len_out];
    col2im(&z, c_out, batch, len_out, g, &mut y);
    add_bias_rows(&mut y, bias, batch * len_out);
    y
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn convt_backward(
    dy: &[f64],
    x: &[f64],
    w: &[f64],
    c_in: usize,
    c_out: usize,
    batch: usize,
    len_out: usize,
    g: ConvGeom,
    dw: &mut [f64],
    db: &mut [f64],
    scratch: &mut Vec<f64>,
) -> Vec<f64> {
    let len_in = g.out_len(len_out);
    let n = batch * len_in;
    let q = c_out * g.kernel;
    accumulate_row_sums(dy, batch * len_out, db);
    im2col(dy, c_out, batch, len_out, g, scratch);
    // dW[ci, q] += sum_n dZ[q, n] x[ci, n]
    gemm(q, n, c_in, 1.0, (scratch, n, 1), (x, 1, n), 1.0, (dw, 1, q));
    let mut dx = vec![0.0; c_in * n];
    gemm(c_in, q, n, 1.0, (w, q, 1), (scratch, n, 1), 0.0, (&mut dx, n, 1));
    dx
}

/// Fully connected layer on row-major `batch x d_in` input with weight
/// `d_out x d_in`; returns `batch x d_out`.
pub(crate) fn dense_forward(x: &[f64], w: &[f64], bias: &[f64], d_in: usize, d_out: usize, batch: usize) -> Vec<f64> {
    let mut y = vec![0.0; batch * d_out];
    gemm(batch, d_in, d_out, 1.0, (x, d_in, 1), (w, 1, d_in), 0.0, (&mut y, d_out, 1));
    for row in y.chunks_exact_mut(d_out) {
        row.iter_mut().zip(bias).for_each(|(v, b)| *v += b);
    }
    y
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn dense_backward(
    dy: &[f64],
    x: &[f64],
    w: &[f64],
    d_in: usize,
    d_out: usize,
    batch: usize,
    dw: &mut [f64],
    db: &mut [f64],
    need_dx: bool,
) -> Option<Vec<f64>> {
    gemm(d_out, batch, d_in, 1.0, (dy, 1, d_out), (x, d_in, 1), 1.0, (dw, d_in, 1));
    for row in dy.chunks_exact(d_out) {
        db.iter_mut().zip(row).for_each(|(d, v)| *d += v);
    }
    if !need_dx {
        return None;
    }
    let mut dx = vec![0.0; batch * d_in];
    gemm(batch, d_out, d_in, 1.0, (dy, d_out, 1), (w, d_in, 1), 0.0, (&mut dx, d_in, 1));
    Some(dx)
}

/// `(c, batch * len)` activation to row-major `batch x (c * len)`.
pub(crate) fn flatten(a: &[f64], c: usize, batch: usize, len: usize) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for ci in 0..c {
        for b in 0..batch {
            let src = &a[ci * batch * len + b * len..ci * batch * len + (b + 1) * len];
            out[b * c * len + ci * len..b * c * len + (ci + 1) * len].copy_from_slice(src);
        }
    }
    out
}

/// Inverse of [`flatten`].
pub(crate) fn unflatten(f: &[f64], c: usize, batch: usize, len: usize) -> Vec<f64> {
    let mut out = vec![0.0; f.len()];
    for ci in 0..c {
        for b in 0..batch {
            let src = &f[b * c * len + ci * len..b * c * len + (ci + 1) * len];
            out[ci * batch * len + b * len..ci * batch * len + (b + 1) * len].copy_from_slice(src);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const G: ConvGeom = ConvGeom { kernel: 10, stride: 2, padding: 4 };

    #[test]
    fn halving_lengths() {
        let mut l = 176;
        for _ in 0..4 {
            l = G.out_len(l);
        }
        assert_eq!(l, 11);
        let mut l = 256;
        for _ in 0..4 {
            l = G.out_len(l);
        }
        assert_eq!(l, 16);
    }

    #[test]
    fn direct_convolution_matches() {
        let (c_in, c_out, len, batch) = (2, 3, 8, 2);
        let x: Vec<f64> = (0..c_in * batch * len).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let w: Vec<f64> = (0..c_out * c_in * 10).map(|i| ((i * 13) % 7) as f64 * 0.1 - 0.3).collect();
        let bias = [0.5, -1.0, 0.25];
        let mut cols = Vec::new();
        let y = conv_forward(&x, &w, &bias, c_in, c_out, batch, len, G, &mut cols);
        let lo = G.out_len(len);
        for co in 0..c_out {
            for b in 0..batch {
                for l in 0..lo {
                    let mut s = bias[co];
                    for ci in 0..c_in {
                        for k in 0..10 {
                            let p = 2 * l as isize + k as isize - 4;
                            if (0..len as isize).contains(&p) {
                                s += w[co * c_in * 10 + ci * 10 + k] * x[ci * batch * len + b * len + p as usize];
                            }
                        }
                    }
                    assert!((y[co * batch * lo + b * lo + l] - s).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn flatten_round_trip() {
        let a: Vec<f64> = (0..24).map(f64::from).collect();
        assert_eq!(unflatten(&flatten(&a, 3, 2, 4), 3, 2, 4), a);
        assert_eq!(flatten(&a, 3, 2, 4)[4], a[8]);
    }
}
