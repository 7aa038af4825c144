//! Symmetric banded matrices and their Cholesky factorisation.

use alloc::vec;
use alloc::vec::Vec;

/// Lower band of a symmetric matrix: `band[i * (bw + 1) + d] = M[i][i - d]`.
#[derive(Debug, Clone)]
pub struct SymBand {
    n: usize,
    bw: usize,
    band: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, bw: usize) -> Self {
        SymBand { n, bw, band: vec![0.0; n * (bw + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    /// Adds `v` to `M[i][j]` (and by symmetry `M[j][i]`).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let d = r - c;
        debug_assert!(d <= self.bw, "entry outside band");
        self.band[r * (self.bw + 1) + d] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let d = r - c;
        if d > self.bw {
            0.0
        } else {
            self.band[r * (self.bw + 1) + d]
        }
    }

    pub fn add_diagonal(&mut self, v: f64) {
        for i in 0..self.n {
            self.band[i * (self.bw + 1)] += v;
        }
    }
}

/// Lower-triangular banded Cholesky factor `L` with `M = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    /// Factorises `m`; returns `None` when a pivot is not strictly positive.
    pub fn factor(m: &SymBand) -> Option<Self> {
        let (n, bw) = (m.n, m.bw);
        let w = bw + 1;
        let mut l = m.band.clone();
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let mut sum = l[i * w + (i - j)];
                let k0 = j0.max(j.saturating_sub(bw));
                for k in k0..j {
                    sum -= l[i * w + (i - k)] * l[j * w + (j - k)];
                }
                if i == j {
                    if !(sum > 0.0) || !sum.is_finite() {
                        return None;
                    }
                    l[i * w] = libm::sqrt(sum);
                } else {
                    l[i * w + (i - j)] = sum / l[j * w];
                }
            }
        }
        Some(BandCholesky { n, bw, l })
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let w = self.bw + 1;
        for i in 0..self.n {
            let mut sum = b[i];
            for k in i.saturating_sub(self.bw)..i {
                sum -= self.l[i * w + (i - k)] * b[k];
            }
            b[i] = sum / self.l[i * w];
        }
        for i in (0..self.n).rev() {
            let mut sum = b[i];
            for k in (i + 1)..self.n.min(i + self.bw + 1) {
                sum -= self.l[k * w + (k - i)] * b[k];
            }
            b[i] = sum / self.l[i * w];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_solve() {
        // [4 1 0; 1 4 1; 0 1 4] x = [1 2 3]
        let mut m = SymBand::zeros(3, 1);
        for i in 0..3 {
            m.add(i, i, 4.0);
        }
        m.add(1, 0, 1.0);
        m.add(2, 1, 1.0);
        let f = BandCholesky::factor(&m).unwrap();
        let mut b = [1.0, 2.0, 3.0];
        f.solve_in_place(&mut b);
        let r = [4.0 * b[0] + b[1] - 1.0, b[0] + 4.0 * b[1] + b[2] - 2.0, b[1] + 4.0 * b[2] - 3.0];
        assert!(r.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn indefinite_is_rejected() {
        let mut m = SymBand::zeros(2, 1);
        m.add(0, 0, 1.0);
        m.add(1, 1, 1.0);
        m.add(1, 0, 2.0);
        assert!(BandCholesky::factor(&m).is_none());
    }
}
