//! Dense symmetric positive-definite kernel: packed lower-triangular
//! Cholesky factorization, triangular solves, and L*z products.
//!
//! Grids in this crate reach ~10^4 points, so the factor is stored packed
//! (row-major lower triangle) to halve memory, and the hot loops are plain
//! slice dot products that the compiler vectorizes.

use rayon::prelude::*;

#[inline]
fn row_offset(i: usize) -> usize {
    i * (i + 1) / 2
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix,
/// stored packed row-major.
#[derive(Debug, Clone)]
pub struct PackedCholesky {
    n: usize,
    data: Vec<f64>,
}

impl PackedCholesky {
    /// Factor a covariance given by `cov(i, j)` for `j <= i`.
    ///
    /// On failure returns the index of the leading minor that is not
    /// positive definite.
    pub fn factor(n: usize, cov: impl Fn(usize, usize) -> f64) -> Result<Self, usize> {
        let mut data = vec![0.0f64; row_offset(n)];
        // fill lower triangle with covariance entries
        for i in 0..n {
            let off = row_offset(i);
            for j in 0..=i {
                data[off + j] = cov(i, j);
            }
        }
        Self::factor_packed(n, data)
    }

    /// Factor in place from a packed lower triangle.
    ///
    /// Left-looking by column panels: the panel's own rows are finished
    /// serially, then every remaining row computes its panel columns in
    /// parallel while the panel rows stay cache-hot.
    pub fn factor_packed(n: usize, mut data: Vec<f64>) -> Result<Self, usize> {
        assert_eq!(data.len(), row_offset(n));
        const PANEL: usize = 128;

        let mut p0 = 0usize;
        while p0 < n {
            let p1 = (p0 + PANEL).min(n);

            // finish rows p0..p1; their columns below p0 are already final
            for i in p0..p1 {
                let (done, rest) = data.split_at_mut(row_offset(i));
                let row = &mut rest[..i + 1];
                for j in p0..i {
                    let offj = row_offset(j);
                    let ljj = done[offj + j];
                    let s = dot(&row[..j], &done[offj..offj + j]);
                    row[j] = (row[j] - s) / ljj;
                }
                let s = row[i] - dot(&row[..i], &row[..i]);
                if !(s > 0.0) || !s.is_finite() {
                    return Err(i);
                }
                row[i] = s.sqrt();
            }

            // columns p0..p1 of all rows below the panel, in parallel
            if p1 < n {
                let (head, tail) = data.split_at_mut(row_offset(p1));
                let head: &[f64] = head;
                let mut rows: Vec<&mut [f64]> = Vec::with_capacity(n - p1);
                let mut rest = tail;
                for i in p1..n {
                    let (row, r) = rest.split_at_mut(i + 1);
                    rows.push(row);
                    rest = r;
                }
                rows.par_iter_mut().for_each(|row| {
                    for j in p0..p1 {
                        let offj = row_offset(j);
                        let ljj = head[offj + j];
                        let s = dot(&row[..j], &head[offj..offj + j]);
                        row[j] = (row[j] - s) / ljj;
                    }
                });
            }
            p0 = p1;
        }
        Ok(PackedCholesky { n, data })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        debug_assert!(j <= i);
        self.data[row_offset(i) + j]
    }

    /// y = L * z, parallel over rows.
    pub fn mul_vec(&self, z: &[f64]) -> Vec<f64> {
        assert_eq!(z.len(), self.n);
        let data = &self.data;
        (0..self.n)
            .into_par_iter()
            .map(|i| {
                let off = row_offset(i);
                dot(&data[off..off + i + 1], &z[..i + 1])
            })
            .collect()
    }

    /// Solve L x = b in place.
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        for i in 0..self.n {
            let off = row_offset(i);
            let s = dot(&self.data[off..off + i], &b[..i]);
            b[i] = (b[i] - s) / self.data[off + i];
        }
    }

    /// Solve L^T x = b in place.
    pub fn solve_lower_transpose_in_place(&self, b: &mut [f64]) {
        for i in (0..self.n).rev() {
            let mut s = b[i];
            for k in i + 1..self.n {
                s -= self.data[row_offset(k) + i] * b[k];
            }
            b[i] = s / self.data[row_offset(i) + i];
        }
    }

    /// Solve A x = b where A = L L^T.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.solve_lower_in_place(b);
        self.solve_lower_transpose_in_place(b);
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc0 = 0.0;
    let mut acc1 = 0.0;
    let mut acc2 = 0.0;
    let mut acc3 = 0.0;
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc0 += a[i] * b[i];
        acc1 += a[i + 1] * b[i + 1];
        acc2 += a[i + 2] * b[i + 2];
        acc3 += a[i + 3] * b[i + 3];
    }
    let mut acc = acc0 + acc1 + acc2 + acc3;
    for i in 4 * chunks..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factors_small_spd_matrix() {
        // A = [[4,2,1],[2,5,3],[1,3,6]]
        let a = [[4.0, 2.0, 1.0], [2.0, 5.0, 3.0], [1.0, 3.0, 6.0]];
        let ch = PackedCholesky::factor(3, |i, j| a[i][j]).unwrap();
        // reconstruct and compare
        for i in 0..3 {
            for j in 0..=i {
                let mut s = 0.0;
                for k in 0..=j {
                    s += ch.entry(i, k) * ch.entry(j, k);
                }
                assert!((s - a[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reports_failing_minor() {
        // indefinite matrix fails on the second minor
        let a = [[1.0, 2.0], [2.0, 1.0]];
        match PackedCholesky::factor(2, |i, j| a[i][j]) {
            Err(m) => assert_eq!(m, 1),
            Ok(_) => panic!("expected failure"),
        }
    }

    #[test]
    fn solve_roundtrip() {
        let a = [[4.0, 2.0, 1.0], [2.0, 5.0, 3.0], [1.0, 3.0, 6.0]];
        let ch = PackedCholesky::factor(3, |i, j| a[i][j]).unwrap();
        let x_true = [1.0, -2.0, 0.5];
        let mut b = [0.0; 3];
        for i in 0..3 {
            for j in 0..3 {
                b[i] += a[i.max(j)][i.min(j)] * x_true[j];
            }
        }
        let mut x = b;
        ch.solve_in_place(&mut x);
        for i in 0..3 {
            assert!((x[i] - x_true[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn mul_vec_matches_direct() {
        let a = [[4.0, 2.0, 1.0], [2.0, 5.0, 3.0], [1.0, 3.0, 6.0]];
        let ch = PackedCholesky::factor(3, |i, j| a[i][j]).unwrap();
        let z = [0.3, -1.1, 2.2];
        let y = ch.mul_vec(&z);
        for i in 0..3 {
            let mut s = 0.0;
            for k in 0..=i {
                s += ch.entry(i, k) * z[k];
            }
            assert_eq!(y[i], s);
        }
    }
}
