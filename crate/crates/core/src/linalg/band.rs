use super::scalar::Scalar;
use crate::error::{FwiError, Result};

/// Square banded matrix with `kl` sub- and `ku` super-diagonals, stored row-wise.
#[derive(Clone, Debug)]
pub struct BandMatrix<T> {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<T>,
}

impl<T: Scalar> BandMatrix<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self {
            n,
            kl,
            ku,
            data: vec![T::zero(); n * (kl + ku + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    #[inline]
    fn slot(&self, r: usize, c: usize) -> Option<usize> {
        if c + self.kl < r || c > r + self.ku {
            None
        } else {
            Some(r * (self.kl + self.ku + 1) + (c + self.kl - r))
        }
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.slot(r, c).map_or_else(T::zero, |s| self.data[s])
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        let s = self
            .slot(r, c)
            .unwrap_or_else(|| panic!("({r}, {c}) outside band ({}, {})", self.kl, self.ku));
        self.data[s] = v;
    }

    /// LU factorization with partial pivoting.
    pub fn factorize(&self, context: &str) -> Result<BandLu<T>> {
        BandLu::new(self, context)
    }
}

/// LU factors of a banded matrix (row pivoting, upper band widened to `kl + ku`).
#[derive(Clone, Debug)]
pub struct BandLu<T> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<T>,
    pivots: Vec<usize>,
}

impl<T: Scalar> BandLu<T> {
    fn new(a: &BandMatrix<T>, context: &str) -> Result<Self> {
        let n = a.n;
        let kl = a.kl;
        let ku = a.kl + a.ku;
        let width = kl + ku + 1;
        let mut data = vec![T::zero(); n * width];
        let mut scale = 0.0f64;
        for r in 0..n {
            let lo = r.saturating_sub(a.kl);
            let hi = (r + a.ku).min(n - 1);
            for c in lo..=hi {
                let v = a.get(r, c);
                if !v.is_finite() {
                    return Err(FwiError::NonFinite(format!("{context} matrix row {r}")));
                }
                scale = scale.max(v.abs());
                data[r * width + (c + kl - r)] = v;
            }
        }
        let idx = |r: usize, c: usize| r * width + (c + kl - r);
        let tiny = scale * f64::EPSILON * 1e-3;
        let mut pivots = vec![0; n];
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = data[idx(k, k)].abs();
            for r in k + 1..=last_row {
                let mag = data[idx(r, k)].abs();
                if mag > best {
                    best = mag;
                    p = r;
                }
            }
            if best <= tiny || scale == 0.0 {
                return Err(FwiError::Singular {
                    context: context.to_string(),
                    pivot: k,
                    magnitude: best,
                });
            }
            pivots[k] = p;
            let last_col = (k + ku).min(n - 1);
            if p != k {
                for c in k..=last_col {
                    data.swap(idx(k, c), idx(p, c));
                }
            }
            let pivot = data[idx(k, k)];
            for r in k + 1..=last_row {
                let l = data[idx(r, k)] / pivot;
                data[idx(r, k)] = l;
                if l == T::zero() {
                    continue;
                }
                for c in k + 1..=last_col {
                    let u = data[idx(k, c)];
                    data[idx(r, c)] -= l * u;
                }
            }
        }
        Ok(Self {
            n,
            kl,
            ku,
            width,
            data,
            pivots,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [T]) {
        assert_eq!(x.len(), self.n);
        let (n, kl, ku, w) = (self.n, self.kl, self.ku, self.width);
        let idx = |r: usize, c: usize| r * w + (c + kl - r);
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                x.swap(k, p);
            }
            let xk = x[k];
            for r in k + 1..=(k + kl).min(n - 1) {
                x[r] -= self.data[idx(r, k)] * xk;
            }
        }
        for k in (0..n).rev() {
            let mut acc = x[k];
            for c in k + 1..=(k + ku).min(n - 1) {
                acc -= self.data[idx(k, c)] * x[c];
            }
            x[k] = acc / self.data[idx(k, k)];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_band(n: usize, kl: usize, ku: usize, rng: &mut ChaCha8Rng) -> BandMatrix<f64> {
        let mut a = BandMatrix::zeros(n, kl, ku);
        for r in 0..n {
            for c in r.saturating_sub(kl)..=(r + ku).min(n - 1) {
                a.set(r, c, rng.gen_range(-1.0..1.0));
            }
        }
        a
    }

    #[test]
    fn solves_random_nonsymmetric_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(n, kl, ku) in &[(1, 0, 0), (5, 1, 1), (40, 3, 5), (60, 7, 2)] {
            let a = random_band(n, kl, ku, &mut rng);
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..n)
                .map(|r| (0..n).map(|c| a.get(r, c) * x[c]).sum())
                .collect();
            let got = a.factorize("test").unwrap().solve(&b);
            let err: f64 = got.iter().zip(&x).map(|(g, w)| (g - w).abs()).fold(0.0, f64::max);
            assert!(err < 1e-8, "n={n} kl={kl} ku={ku} err={err}");
        }
    }

    #[test]
    fn pivoting_handles_zero_diagonal() {
        let mut a = BandMatrix::zeros(2, 1, 1);
        a.set(0, 1, 1.0);
        a.set(1, 0, 1.0);
        let x = a.factorize("swap").unwrap().solve(&[2.0, 3.0]);
        assert_eq!(x, vec![3.0, 2.0]);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let mut a = BandMatrix::<Complex64>::zeros(3, 1, 1);
        a.set(0, 0, Complex64::new(1.0, 0.0));
        a.set(1, 1, Complex64::new(0.0, 0.0));
        a.set(2, 2, Complex64::new(1.0, 0.0));
        assert!(matches!(
            a.factorize("sing"),
            Err(FwiError::Singular { pivot: 1, .. })
        ));
    }
}
