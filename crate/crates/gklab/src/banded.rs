//! Banded LU with partial pivoting and a bordered (Schur complement) solve.

use nalgebra::{DMatrix, DVector};

/// Square banded matrix with `kl` sub- and `ku` super-diagonals. Storage
/// keeps room for the `kl` extra super-diagonals created by pivoting.
#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> BandMatrix {
        let width = 2 * kl + ku + 1;
        BandMatrix { n, kl, ku, width, data: vec![0.0; n * width] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bands(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    /// True when `(i, j)` lies inside the declared band.
    pub fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.kl < i || j > i + self.ku + self.kl || j >= self.n {
            return 0.0;
        }
        self.data[self.slot(i, j)]
    }

    /// Sets an entry inside the declared band.
    ///
    /// # Panics
    /// Panics outside the band.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band");
        let s = self.slot(i, j);
        self.data[s] = v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku + 1).min(self.n);
                (lo..hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    /// Factorizes in place. Returns `None` on an exactly zero pivot.
    pub fn lu(mut self) -> Option<BandLu> {
        let (n, kl) = (self.n, self.kl);
        let reach = self.ku + self.kl;
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.get(k, k).abs();
            for i in k + 1..=last {
                let v = self.get(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return None;
            }
            piv[k] = p;
            let jmax = (k + reach).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let (a, b) = (self.slot(k, j), self.slot(p, j));
                    self.data.swap(a, b);
                }
            }
            let pivot = self.get(k, k);
            for i in k + 1..=last {
                let si = self.slot(i, k);
                let l = self.data[si] / pivot;
                self.data[si] = l;
                if l == 0.0 {
                    continue;
                }
                for j in k + 1..=jmax {
                    let a = self.data[self.slot(k, j)];
                    let s = self.slot(i, j);
                    self.data[s] -= l * a;
                }
            }
        }
        Some(BandLu { m: self, piv })
    }
}

#[derive(Clone, Debug)]
pub struct BandLu {
    m: BandMatrix,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let m = &self.m;
        let n = m.n;
        let reach = m.ku + m.kl;
        for k in 0..n {
            b.swap(k, self.piv[k]);
            let bk = b[k];
            for (i, bi) in b.iter_mut().enumerate().take((k + m.kl).min(n - 1) + 1).skip(k + 1) {
                *bi -= m.get(i, k) * bk;
            }
        }
        for k in (0..n).rev() {
            let jmax = (k + reach).min(n - 1);
            let mut s = b[k];
            for (j, bj) in b.iter().enumerate().take(jmax + 1).skip(k + 1) {
                s -= m.get(k, j) * bj;
            }
            b[k] = s / m.get(k, k);
        }
    }
}

/// `[A B; C D]` with `A` banded and a small dense border.
#[derive(Clone, Debug)]
pub struct Bordered {
    pub a: BandMatrix,
    /// `n x m`
    pub b: DMatrix<f64>,
    /// `m x n`
    pub c: DMatrix<f64>,
    /// `m x m`
    pub d: DMatrix<f64>,
}

impl Bordered {
    pub fn zeros(n: usize, m: usize, kl: usize, ku: usize) -> Bordered {
        Bordered {
            a: BandMatrix::zeros(n, kl, ku),
            b: DMatrix::zeros(n, m),
            c: DMatrix::zeros(m, n),
            d: DMatrix::zeros(m, m),
        }
    }

    /// Solves the full system through the Schur complement of `A`.
    pub fn solve(self, rhs: &[f64]) -> Option<Vec<f64>> {
        let n = self.a.dim();
        let m = self.d.nrows();
        let lu = self.a.lu()?;
        let mut x = rhs[..n].to_vec();
        lu.solve_in_place(&mut x);
        let mut ainv_b = self.b.clone();
        for k in 0..m {
            let mut col: Vec<f64> = ainv_b.column(k).iter().copied().collect();
            lu.solve_in_place(&mut col);
            ainv_b.set_column(k, &DVector::from_vec(col));
        }
        let schur = &self.d - &self.c * &ainv_b;
        let rhs2 = DVector::from_column_slice(&rhs[n..]) - &self.c * DVector::from_column_slice(&x);
        let y = schur.lu().solve(&rhs2)?;
        let corr = &ainv_b * &y;
        for (xi, ci) in x.iter_mut().zip(corr.iter()) {
            *xi -= ci;
        }
        x.extend(y.iter());
        Some(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (n, m, kl, ku) = (40, 2, 3, 4);
        let mut sys = Bordered::zeros(n, m, kl, ku);
        let mut dense = DMatrix::zeros(n + m, n + m);
        for i in 0..n {
            for j in 0..n {
                if sys.a.in_band(i, j) {
                    // Weak diagonal so that pivoting actually happens.
                    let v: f64 = rng.gen_range(-1.0..1.0) + if i == j { 0.01 } else { 0.0 };
                    sys.a.set(i, j, v);
                    dense[(i, j)] = v;
                }
            }
        }
        for i in 0..n {
            for k in 0..m {
                let (u, v): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                sys.b[(i, k)] = u;
                sys.c[(k, i)] = v;
                dense[(i, n + k)] = u;
                dense[(n + k, i)] = v;
            }
        }
        for a in 0..m {
            for b in 0..m {
                let v: f64 = rng.gen_range(-1.0..1.0);
                sys.d[(a, b)] = v;
                dense[(n + a, n + b)] = v;
            }
        }
        let rhs: Vec<f64> = (0..n + m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let want = dense.lu().solve(&DVector::from_vec(rhs.clone())).unwrap();
        let got = sys.solve(&rhs).unwrap();
        for (a, b) in got.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()), "{a} {b}");
        }
    }

    #[test]
    fn zero_pivot() {
        let a = BandMatrix::zeros(3, 1, 1);
        assert!(a.lu().is_none());
    }
}
