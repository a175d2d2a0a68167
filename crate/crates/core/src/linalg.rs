//! Minimal dense linear algebra: row-major matrices and LU with partial
//! pivoting. Sized for desk-scale problems; no blocking, no BLAS.

#[derive(Debug, Clone)]
pub struct DMat {
    pub rows: usize,
    pub cols: usize,
    data: Vec<f64>,
}

impl DMat {
    pub fn zeros(rows: usize, cols: usize) -> DMat {
        DMat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] += v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// y = A x.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }

    /// y = A^T x.
    pub fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut y = vec![0.0; self.cols];
        for i in 0..self.rows {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            for (j, a) in self.row(i).iter().enumerate() {
                y[j] += a * xi;
            }
        }
        y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingularMatrix {
    /// Ratio of largest to smallest pivot magnitude seen before breakdown.
    pub condition_estimate: f64,
}

/// Solves `A x = b` in place by LU with partial pivoting.
///
/// Returns the solution, or the pivot-growth condition estimate when a
/// pivot underflows the singularity threshold.
pub fn lu_solve(mut a: DMat, mut b: Vec<f64>) -> Result<Vec<f64>, SingularMatrix> {
    let n = a.rows;
    assert_eq!(a.cols, n);
    assert_eq!(b.len(), n);
    let scale = a
        .data
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let mut max_piv = 0.0f64;
    let mut min_piv = f64::INFINITY;
    for k in 0..n {
        // partial pivot
        let mut piv_row = k;
        let mut piv_val = a.get(k, k).abs();
        for i in k + 1..n {
            let v = a.get(i, k).abs();
            if v > piv_val {
                piv_val = v;
                piv_row = i;
            }
        }
        if piv_val <= 1e-13 * scale {
            let cond = if min_piv > 0.0 && min_piv.is_finite() {
                max_piv / min_piv.max(f64::MIN_POSITIVE)
            } else {
                f64::INFINITY
            };
            return Err(SingularMatrix {
                condition_estimate: cond.max(scale / piv_val.max(f64::MIN_POSITIVE)),
            });
        }
        if piv_row != k {
            for j in 0..n {
                let tmp = a.get(k, j);
                a.set(k, j, a.get(piv_row, j));
                a.set(piv_row, j, tmp);
            }
            b.swap(k, piv_row);
        }
        max_piv = max_piv.max(piv_val);
        min_piv = min_piv.min(piv_val);
        let akk = a.get(k, k);
        for i in k + 1..n {
            let factor = a.get(i, k) / akk;
            if factor == 0.0 {
                continue;
            }
            a.set(i, k, 0.0);
            for j in k + 1..n {
                let v = a.get(i, j) - factor * a.get(k, j);
                a.set(i, j, v);
            }
            b[i] -= factor * b[k];
        }
    }
    // back substitution
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let mut s = b[k];
        for j in k + 1..n {
            s -= a.get(k, j) * x[j];
        }
        x[k] = s / a.get(k, k);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let mut a = DMat::zeros(3, 3);
        let rows = [[2.0, 1.0, -1.0], [-3.0, -1.0, 2.0], [-2.0, 1.0, 2.0]];
        for (i, r) in rows.iter().enumerate() {
            for (j, v) in r.iter().enumerate() {
                a.set(i, j, *v);
            }
        }
        let x = lu_solve(a, vec![8.0, -11.0, -3.0]).unwrap();
        let expect = [2.0, 3.0, -1.0];
        for (xi, ei) in x.iter().zip(expect.iter()) {
            assert!((xi - ei).abs() < 1e-12);
        }
    }

    #[test]
    fn reports_singularity() {
        let mut a = DMat::zeros(2, 2);
        a.set(0, 0, 1.0);
        a.set(0, 1, 2.0);
        a.set(1, 0, 2.0);
        a.set(1, 1, 4.0);
        let err = lu_solve(a, vec![1.0, 2.0]).unwrap_err();
        assert!(err.condition_estimate > 1e10);
    }
}
