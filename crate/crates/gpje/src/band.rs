//! Banded LU factorization with partial pivoting (LAPACK `dgbtrf` layout).
//!
//! The Newton systems assembled by the solver couple each grid node to a
//! 3x3 computational-coordinate stencil plus the angular wrap and the
//! pole-crossing columns, which keeps every entry within a fixed band of
//! the diagonal. A band solve is O(n * kl * ku) and needs no external
//! sparse backend.

use crate::error::{Error, Result};

/// Band matrix in expanded LAPACK storage: entry (i, j) lives at
/// `ab[j * stride + (kl + ku + i - j)]`; the leading `kl` rows per column
/// are fill-in space for pivoting.
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    stride: usize,
    ab: Vec<f64>,
}

/// LU factors of a [`BandMatrix`], consuming its storage.
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    stride: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let stride = 2 * kl + ku + 1;
        BandMatrix { n, kl, ku, stride, ab: vec![0.0; stride * n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n && j < self.n);
        debug_assert!(i + self.ku >= j && j + self.kl >= i, "entry ({i},{j}) outside band");
        j * self.stride + (self.kl + self.ku + i - j)
    }

    /// Add `v` into entry (i, j). Panics in debug builds if outside the band.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let idx = self.index(i, j);
        self.ab[idx] += v;
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i + self.ku < j || j + self.kl < i {
            return 0.0;
        }
        self.ab[self.index(i, j)]
    }

    /// Scale row `i` by `s` (all in-band entries).
    pub fn scale_row(&mut self, i: usize, s: f64) {
        let j_lo = i.saturating_sub(self.kl);
        let j_hi = (i + self.ku).min(self.n - 1);
        for j in j_lo..=j_hi {
            let idx = self.index(i, j);
            self.ab[idx] *= s;
        }
    }

    pub fn max_abs_row(&self, i: usize) -> f64 {
        let j_lo = i.saturating_sub(self.kl);
        let j_hi = (i + self.ku).min(self.n - 1);
        let mut m = 0.0f64;
        for j in j_lo..=j_hi {
            m = m.max(self.ab[self.index(i, j)].abs());
        }
        m
    }

    /// Factor in place. Fails on exact numerical singularity.
    pub fn factor(mut self) -> Result<BandLu> {
        let (n, kl, ku, stride) = (self.n, self.kl, self.ku, self.stride);
        let mut ipiv = vec![0usize; n];
        let mut ju = 0usize; // last column affected by row interchanges
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            // pivot search over matrix rows j..=j+km in column j
            let col = j * stride + kl + ku;
            let mut jp = 0usize;
            let mut best = self.ab[col].abs();
            for t in 1..=km {
                let v = self.ab[col + t].abs();
                if v > best {
                    best = v;
                    jp = t;
                }
            }
            ipiv[j] = j + jp;
            if best == 0.0 || !best.is_finite() {
                return Err(Error::LinearSolve { what: format!("zero pivot at column {j}") });
            }
            ju = ju.max((j + ku + jp).min(n - 1)).max(j);
            if jp != 0 {
                // swap matrix rows j and j+jp across columns j..=ju
                for c in j..=ju {
                    // entry (j, c) sits at distance (c - j) below the
                    // diagonal slot of column c
                    let at = c * stride + kl + ku - (c - j);
                    self.ab.swap(at + jp, at);
                }
            }
            // multipliers
            let piv = self.ab[col];
            for t in 1..=km {
                self.ab[col + t] /= piv;
            }
            // trailing update
            for c in j + 1..=ju {
                let at = c * stride + kl + ku - (c - j);
                let ujc = self.ab[at];
                if ujc != 0.0 {
                    for t in 1..=km {
                        let l = self.ab[col + t];
                        self.ab[at + t] -= l * ujc;
                    }
                }
            }
        }
        Ok(BandLu { n, kl, ku, stride, ab: self.ab, ipiv })
    }
}

impl BandLu {
    /// Solve in place.
    pub fn solve(&self, b: &mut [f64]) -> Result<()> {
        assert_eq!(b.len(), self.n);
        let (n, kl, ku, stride) = (self.n, self.kl, self.ku, self.stride);
        // forward: apply P and L
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
            let bj = b[j];
            if bj != 0.0 {
                let km = kl.min(n - 1 - j);
                let col = j * stride + kl + ku;
                for t in 1..=km {
                    b[j + t] -= self.ab[col + t] * bj;
                }
            }
        }
        // backward: U x = y
        for j in (0..n).rev() {
            let col = j * stride + kl + ku;
            let d = self.ab[col];
            b[j] /= d;
            if !b[j].is_finite() {
                return Err(Error::LinearSolve { what: format!("non-finite solve at row {j}") });
            }
            let bj = b[j];
            if bj != 0.0 {
                let i_lo = j.saturating_sub(kl + ku);
                for i in i_lo..j {
                    b[i] -= self.ab[col - (j - i)] * bj;
                }
            }
        }
        Ok(())
    }
}
