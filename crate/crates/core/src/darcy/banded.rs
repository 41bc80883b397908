use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

/// Cholesky factor of a symmetric positive-definite band matrix.
#[derive(Debug, Clone)]
pub(crate) struct BandedCholesky {
    n: usize,
    bw: usize,
    /// `l[i*(bw+1) + k] = L[i][i-k]`
    l: Vec<f64>,
}

impl BandedCholesky {
    /// Factor the matrix whose lower band is given by `entry(i, j)` for
    /// `i - bw <= j <= i`. Returns `None` if it is not positive definite.
    pub(crate) fn factor<F: Fn(usize, usize) -> f64>(n: usize, bw: usize, entry: F) -> Option<Self> {
        let w = bw + 1;
        let mut l = vec![0.0; n * w];
        for j in 0..n {
            let i_end = (j + bw + 1).min(n);
            for i in j..i_end {
                let p0 = i.saturating_sub(bw);
                let mut s = entry(i, j);
                for p in p0..j {
                    s -= l[i * w + (i - p)] * l[j * w + (j - p)];
                }
                if i == j {
                    if !(s > 0.0) {
                        return None;
                    }
                    l[j * w] = s.sqrt();
                } else {
                    l[i * w + (i - j)] = s / l[j * w];
                }
            }
        }
        Some(BandedCholesky { n, bw, l })
    }

    pub(crate) fn solve_in_place(&self, x: &mut [f64]) {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        for i in 0..n {
            let mut s = x[i];
            for p in i.saturating_sub(bw)..i {
                s -= self.l[i * w + (i - p)] * x[p];
            }
            x[i] = s / self.l[i * w];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for q in (i + 1)..(i + bw + 1).min(n) {
                s -= self.l[q * w + (q - i)] * x[q];
            }
            x[i] = s / self.l[i * w];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_tridiagonal_system() {
        let n = 6;
        let a = |i: usize, j: usize| if i == j { 4.0 } else if i == j + 1 { -1.0 } else { 0.0 };
        let f = BandedCholesky::factor(n, 1, a).unwrap();
        let x_true: Vec<f64> = (0..n).map(|i| i as f64 - 2.5).collect();
        let mut b: Vec<f64> = (0..n)
            .map(|i| {
                let mut s = 4.0 * x_true[i];
                if i > 0 {
                    s -= x_true[i - 1];
                }
                if i + 1 < n {
                    s -= x_true[i + 1];
                }
                s
            })
            .collect();
        f.solve_in_place(&mut b);
        for (u, v) in b.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_indefinite_matrix() {
        let a = |i: usize, j: usize| if i == j { 1.0 } else { 2.0 };
        assert!(BandedCholesky::factor(3, 2, a).is_none());
    }
}
