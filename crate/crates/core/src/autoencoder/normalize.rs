use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result, RomError};
use crate::snapshot::SnapshotSlice;

/// Affine map of each (velocity, time) column of the reshaped snapshot
/// matrix onto `[-1, 1]`, with min and max taken over space and parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub n_v: usize,
    pub n_x: usize,
    pub times: Vec<f64>,
    /// Indexed `time * n_v + velocity`.
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Normalization {
    /// Constants from the centred training columns of `slice`.
    pub fn fit(slice: &SnapshotSlice) -> Result<Self> {
        let s = slice.matrix();
        let (n_v, n_x, n_t) = (s.n_v(), s.n_x(), slice.n_t());
        if n_t == 0 {
            return Err(RomError::EmptySlice { start: slice.start() as f64, end: slice.end() as f64 });
        }
        let mut min = vec![f64::INFINITY; n_t * n_v];
        let mut max = vec![f64::NEG_INFINITY; n_t * n_v];
        for p in 0..s.n_p() {
            for i in 0..n_t {
                let col = s.column(slice.start() + i, p);
                for j in 0..n_v {
                    let k = i * n_v + j;
                    for &x in &col[j * n_x..(j + 1) * n_x] {
                        min[k] = min[k].min(x);
                        max[k] = max[k].max(x);
                    }
                }
            }
        }
        Ok(Normalization { n_v, n_x, times: slice.times().to_vec(), min, max })
    }

    pub fn n_t(&self) -> usize {
        self.times.len()
    }

    pub fn n_h(&self) -> usize {
        self.n_v * self.n_x
    }

    fn check_time(&self, i: usize) -> Result<()> {
        if i < self.n_t() {
            Ok(())
        } else {
            Err(RomError::invalid(format!("time index {i} outside the {} normalised times", self.n_t())))
        }
    }

    /// Maps a centred column at local time index `i` in place.
    pub fn apply(&self, i: usize, col: &mut [f64]) -> Result<()> {
        self.check_time(i)?;
        check_dim(self.n_h(), col.len())?;
        for j in 0..self.n_v {
            let (lo, hi) = (self.min[i * self.n_v + j], self.max[i * self.n_v + j]);
            for x in &mut col[j * self.n_x..(j + 1) * self.n_x] {
                // a constant column carries no information; send it to 0
                *x = if hi > lo { 2.0 * (*x - lo) / (hi - lo) - 1.0 } else { 0.0 };
            }
        }
        Ok(())
    }

    /// Inverse of [`apply`](Self::apply).
    pub fn invert(&self, i: usize, col: &mut [f64]) -> Result<()> {
        self.check_time(i)?;
        check_dim(self.n_h(), col.len())?;
        for j in 0..self.n_v {
            let (lo, hi) = (self.min[i * self.n_v + j], self.max[i * self.n_v + j]);
            for x in &mut col[j * self.n_x..(j + 1) * self.n_x] {
                *x = if hi > lo { (*x + 1.0) * 0.5 * (hi - lo) + lo } else { lo };
            }
        }
        Ok(())
    }

    /// Normalised copies of every column of `slice`, in slice order.
    pub fn samples(&self, slice: &SnapshotSlice) -> Result<Vec<f64>> {
        if slice.times() != self.times.as_slice() {
            return Err(RomError::invalid("slice times differ from the normalisation times"));
        }
        let n_h = self.n_h();
        let mut out = Vec::with_capacity(slice.n_cols() * n_h);
        for (k, col) in slice.columns().enumerate() {
            let start = out.len();
            out.extend_from_slice(col);
            self.apply(k % slice.n_t(), &mut out[start..start + n_h])?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snapshot::SnapshotMatrix;

    #[test]
    fn endpoints_and_round_trip() {
        // one velocity, two nodes, one time, two parameters: raw columns
        // [0, 2] and [2, 0] have mean [1, 1], centred values span [-1, 1]
        let s = SnapshotMatrix::from_raw(2, 1, vec![1.0], vec![vec![0.0], vec![1.0]], vec![0.0, 2.0, 2.0, 0.0]).unwrap();
        let sl = s.full();
        let n = Normalization::fit(&sl).unwrap();
        let x = n.samples(&sl).unwrap();
        assert_eq!(x, vec![-1.0, 1.0, 1.0, -1.0]);
        let mut c = vec![0.0, 0.5];
        n.apply(0, &mut c).unwrap();
        assert_eq!(c, vec![0.0, 0.5]);
        n.invert(0, &mut c).unwrap();
        assert!((c[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let s = SnapshotMatrix::from_raw(2, 1, vec![1.0], vec![vec![0.0], vec![1.0]], vec![3.0, 3.0, 3.0, 3.0]).unwrap();
        let n = Normalization::fit(&s.full()).unwrap();
        let mut c = vec![0.0, 0.0];
        n.apply(0, &mut c).unwrap();
        assert_eq!(c, vec![0.0, 0.0]);
        n.invert(0, &mut c).unwrap();
        assert_eq!(c, vec![0.0, 0.0]);
    }
}
