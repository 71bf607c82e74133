//! Diagonal reduction of integer matrices modulo `m`.
//!
//! [`diagonalize_mod`] finds `P`, `Q` invertible over `Z/m` and a diagonal
//! `D` with `P·A·Q ≡ D (mod m)`. Every elementary operation is unimodular
//! over `Z`, so this is the Smith normal form of `A` reduced mod `m` up to
//! units. Diagonal entries are normalized to `gcd(d_i, m)`.

use crate::error::{Error, Result};

/// Dense row-major matrix with entries in `[0, m)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModMatrix {
    rows: usize,
    cols: usize,
    modulus: u64,
    data: Vec<u64>,
}

/// Largest supported dense matrix, in entries.
pub const MAX_ENTRIES: usize = 1 << 26;

impl ModMatrix {
    pub fn zeros(rows: usize, cols: usize, modulus: u64) -> Result<Self> {
        if !(2..=1 << 31).contains(&modulus) {
            return Err(Error::InvalidConfig(format!("modulus {modulus} must lie in 2..=2^31")));
        }
        if rows.saturating_mul(cols) > MAX_ENTRIES {
            return Err(Error::SizeLimit(format!("{rows} x {cols} dense matrix")));
        }
        Ok(Self { rows, cols, modulus, data: vec![0; rows * cols] })
    }

    pub fn identity(n: usize, modulus: u64) -> Result<Self> {
        let mut a = Self::zeros(n, n, modulus)?;
        for i in 0..n {
            a.set(i, i, 1);
        }
        Ok(a)
    }

    /// Reduces signed integer entries mod `m`.
    pub fn from_rows(rows: &[Vec<i64>], cols: usize, modulus: u64) -> Result<Self> {
        let mut a = Self::zeros(rows.len(), cols, modulus)?;
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Mismatch(format!("row {i} has {} entries, expected {cols}", r.len())));
            }
            for (j, &v) in r.iter().enumerate() {
                a.set(i, j, v.rem_euclid(modulus as i64) as u64);
            }
        }
        Ok(a)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: u64) {
        debug_assert!(v < self.modulus);
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<u64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn mul_vec(&self, x: &[u64]) -> Vec<u64> {
        assert_eq!(x.len(), self.cols);
        let m = self.modulus as u128;
        (0..self.rows).map(|i| (self.row(i).iter().zip(x).map(|(&a, &b)| a as u128 * b as u128 % m).sum::<u128>() % m) as u64).collect()
    }

    pub fn mul(&self, other: &ModMatrix) -> Result<ModMatrix> {
        if self.cols != other.rows || self.modulus != other.modulus {
            return Err(Error::Mismatch("matrix product shapes".into()));
        }
        let m = self.modulus as u128;
        let mut out = ModMatrix::zeros(self.rows, other.cols, self.modulus)?;
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k) as u128;
                if a == 0 {
                    continue;
                }
                for j in 0..other.cols {
                    let cur = out.get(i, j) as u128;
                    out.set(i, j, ((cur + a * other.get(k, j) as u128) % m) as u64);
                }
            }
        }
        Ok(out)
    }

    fn reduce(&self, v: i128) -> u64 {
        v.rem_euclid(self.modulus as i128) as u64
    }

    /// `(row_i, row_j) ← (α row_i + β row_j, γ row_i + δ row_j)`.
    fn combine_rows(&mut self, i: usize, j: usize, [a, b, c, d]: [i128; 4]) {
        for k in 0..self.cols {
            let (x, y) = (self.get(i, k) as i128, self.get(j, k) as i128);
            let (nx, ny) = (self.reduce(a * x + b * y), self.reduce(c * x + d * y));
            self.set(i, k, nx);
            self.set(j, k, ny);
        }
    }

    /// `(col_i, col_j) ← (α col_i + β col_j, γ col_i + δ col_j)`.
    fn combine_cols(&mut self, i: usize, j: usize, [a, b, c, d]: [i128; 4]) {
        for k in 0..self.rows {
            let (x, y) = (self.get(k, i) as i128, self.get(k, j) as i128);
            let (nx, ny) = (self.reduce(a * x + b * y), self.reduce(c * x + d * y));
            self.set(k, i, nx);
            self.set(k, j, ny);
        }
    }

    fn scale_row(&mut self, i: usize, u: u64) {
        for k in 0..self.cols {
            let v = self.get(i, k) as u128 * u as u128 % self.modulus as u128;
            self.set(i, k, v as u64);
        }
    }
}

/// `u·a + v·b = g` with `g = gcd(a, b) ≥ 0`.
pub fn extended_gcd(a: i128, b: i128) -> (i128, i128, i128) {
    let (mut r0, mut r1, mut s0, mut s1, mut t0, mut t1) = (a, b, 1i128, 0i128, 0i128, 1i128);
    while r1 != 0 {
        let q = r0.div_euclid(r1);
        (r0, r1) = (r1, r0 - q * r1);
        (s0, s1) = (s1, s0 - q * s1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    if r0 < 0 {
        (-r0, -s0, -t0)
    } else {
        (r0, s0, t0)
    }
}

pub fn gcd(a: u64, b: u64) -> u64 {
    extended_gcd(a as i128, b as i128).0 as u64
}

/// A unit `u` mod `m` with `d·u ≡ gcd(d, m)`.
fn normalizing_unit(d: u64, m: u64) -> u64 {
    let g = gcd(d, m);
    let (mg, dg) = (m / g, d / g);
    let (_, inv, _) = extended_gcd(dg as i128, mg as i128);
    let mut u = inv.rem_euclid(mg as i128) as u64;
    while gcd(u, m) != 1 {
        u += mg;
    }
    u
}

/// `P·A·Q ≡ diag(d) (mod m)`, with `Q_inv = Q⁻¹`.
#[derive(Clone, Debug)]
pub struct Diagonalization {
    pub diag: Vec<u64>,
    pub p: ModMatrix,
    pub q: ModMatrix,
    pub q_inv: ModMatrix,
}

impl Diagonalization {
    pub fn modulus(&self) -> u64 {
        self.p.modulus
    }

    /// `d_i` for `i < min(rows, cols)`, zero beyond.
    fn d(&self, i: usize) -> u64 {
        self.diag.get(i).copied().unwrap_or(0)
    }

    /// Generators of `{x : A·x ≡ 0}`, with the order of each.
    pub fn kernel_generators(&self) -> Vec<(Vec<u64>, u64)> {
        let m = self.modulus();
        (0..self.q.cols)
            .filter_map(|i| {
                let g = gcd(self.d(i), m);
                let order = g;
                if order == 1 {
                    return None;
                }
                let scale = m / g;
                let col: Vec<u64> = self.q.column(i).iter().map(|&v| (v as u128 * scale as u128 % m as u128) as u64).collect();
                Some((col, order))
            })
            .collect()
    }

    /// `|{x : A·x ≡ 0}| = Π gcd(d_i, m)` over all columns.
    pub fn kernel_orders(&self) -> Vec<u64> {
        (0..self.q.cols).map(|i| gcd(self.d(i), self.modulus())).filter(|&o| o > 1).collect()
    }

    /// Orders of the cyclic factors of the image `A·(Z/m)^cols`.
    pub fn image_orders(&self) -> Vec<u64> {
        let m = self.modulus();
        self.diag.iter().map(|&d| m / gcd(d, m)).filter(|&o| o > 1).collect()
    }

    /// A preimage `x` with `A·x ≡ b`, if one exists.
    pub fn solve(&self, b: &[u64]) -> Option<Vec<u64>> {
        let m = self.modulus();
        let c = self.p.mul_vec(b);
        let mut y = vec![0u64; self.q.cols];
        for (i, &ci) in c.iter().enumerate() {
            let d = gcd(self.d(i), m);
            if i >= self.q.cols || self.d(i) == 0 {
                if ci != 0 {
                    return None;
                }
                continue;
            }
            if ci % d != 0 {
                return None;
            }
            // d_i is normalized to gcd(d_i, m), so y_i = c_i / d_i solves d_i·y_i ≡ c_i
            y[i] = ci / d;
        }
        Some(self.q.mul_vec(&y))
    }
}

/// Diagonalizes `a` modulo its modulus.
pub fn diagonalize_mod(a: &ModMatrix) -> Result<Diagonalization> {
    let m = a.modulus;
    let (rows, cols) = (a.rows, a.cols);
    let mut w = a.clone();
    let mut p = ModMatrix::identity(rows, m)?;
    let mut q = ModMatrix::identity(cols, m)?;
    let mut q_inv = ModMatrix::identity(cols, m)?;
    let apply_cols = |w: &mut ModMatrix, q: &mut ModMatrix, q_inv: &mut ModMatrix, i: usize, j: usize, e: [i128; 4]| {
        w.combine_cols(i, j, e);
        q.combine_cols(i, j, e);
        // Q' = Q·E  ⇒  Q'^{-1} = E^{-1}·Q^{-1}; det E = ±1
        let [a, b, c, d] = e;
        let det = a * d - b * c;
        q_inv.combine_rows(i, j, [d * det, -c * det, -b * det, a * det]);
    };
    let apply_rows = |w: &mut ModMatrix, p: &mut ModMatrix, i: usize, j: usize, e: [i128; 4]| {
        w.combine_rows(i, j, e);
        p.combine_rows(i, j, e);
    };
    let rank_bound = rows.min(cols);
    let mut diag = Vec::with_capacity(rank_bound);
    for k in 0..rank_bound {
        // pivot: smallest nonzero entry of the trailing block
        let mut best: Option<(u64, usize, usize)> = None;
        for i in k..rows {
            for j in k..cols {
                let v = w.get(i, j);
                if v != 0 && best.is_none_or(|(b, _, _)| v < b) {
                    best = Some((v, i, j));
                }
            }
        }
        let Some((_, pi, pj)) = best else {
            diag.extend(std::iter::repeat_n(0, rank_bound - k));
            break;
        };
        if pi != k {
            apply_rows(&mut w, &mut p, k, pi, [0, 1, 1, 0]);
        }
        if pj != k {
            apply_cols(&mut w, &mut q, &mut q_inv, k, pj, [0, 1, 1, 0]);
        }
        loop {
            let mut dirty = false;
            for i in (k + 1)..rows {
                let (a, b) = (w.get(k, k) as i128, w.get(i, k) as i128);
                if b == 0 {
                    continue;
                }
                if b % a == 0 {
                    apply_rows(&mut w, &mut p, k, i, [1, 0, -(b / a), 1]);
                } else {
                    let (g, u, v) = extended_gcd(a, b);
                    apply_rows(&mut w, &mut p, k, i, [u, v, -b / g, a / g]);
                }
            }
            for j in (k + 1)..cols {
                let (a, b) = (w.get(k, k) as i128, w.get(k, j) as i128);
                if b == 0 {
                    continue;
                }
                if b % a == 0 {
                    apply_cols(&mut w, &mut q, &mut q_inv, k, j, [1, 0, -(b / a), 1]);
                } else {
                    let (g, u, v) = extended_gcd(a, b);
                    apply_cols(&mut w, &mut q, &mut q_inv, k, j, [u, v, -b / g, a / g]);
                    dirty = true;
                }
            }
            if !dirty || ((k + 1)..rows).all(|i| w.get(i, k) == 0) {
                break;
            }
        }
        let d = w.get(k, k);
        let u = normalizing_unit(d, m);
        if u != 1 {
            w.scale_row(k, u);
            p.scale_row(k, u);
        }
        diag.push(w.get(k, k));
    }
    debug_assert!((0..rows).all(|i| (0..cols).all(|j| i == j || w.get(i, j) == 0)));
    Ok(Diagonalization { diag, p, q, q_inv })
}

/// Invariant factors `n_1 | n_2 | … ` of `⊕ Z/o_i`, dropping trivial factors.
pub fn invariant_factors(orders: &[u64]) -> Vec<u64> {
    let mut by_prime: std::collections::BTreeMap<u64, Vec<u64>> = Default::default();
    for &o in orders {
        let mut n = o;
        let mut p = 2;
        while p * p <= n {
            if n % p == 0 {
                let mut pk = 1;
                while n % p == 0 {
                    n /= p;
                    pk *= p;
                }
                by_prime.entry(p).or_default().push(pk);
            }
            p += 1;
        }
        if n > 1 {
            by_prime.entry(n).or_default().push(n);
        }
    }
    let longest = by_prime.values().map(Vec::len).max().unwrap_or(0);
    let mut factors = vec![1u64; longest];
    for powers in by_prime.values_mut() {
        powers.sort_unstable();
        // largest powers go to the largest factors
        for (slot, pk) in factors.iter_mut().rev().zip(powers.iter().rev()) {
            *slot *= pk;
        }
    }
    factors.retain(|&f| f > 1);
    factors
}
