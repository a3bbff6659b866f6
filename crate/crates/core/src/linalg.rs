//! Modular linear algebra with exact reconstruction.
//!
//! Integer systems are solved modulo a sequence of large primes; results are
//! combined by the Chinese remainder theorem and lifted back to rationals.
//! Every caller verifies the lifted answer exactly, so a wrong guess costs
//! another prime, never a wrong result.

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::rational::Q;

/// Arithmetic modulo an odd prime below 2^62.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Modulus(pub u64);

impl Modulus {
    #[inline]
    pub fn add(self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.0 {
            s - self.0
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.0 - b
        }
    }

    #[inline]
    pub fn mul(self, a: u64, b: u64) -> u64 {
        ((a as u128 * b as u128) % self.0 as u128) as u64
    }

    #[inline]
    pub fn neg(self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.0 - a
        }
    }

    pub fn pow(self, mut a: u64, mut e: u64) -> u64 {
        let mut acc = 1;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, a);
            }
            a = self.mul(a, a);
            e >>= 1;
        }
        acc
    }

    /// Inverse of a nonzero residue.
    pub fn inv(self, a: u64) -> u64 {
        debug_assert!(a != 0);
        self.pow(a, self.0 - 2)
    }

    pub fn reduce(self, x: &BigInt) -> u64 {
        let p = BigInt::from(self.0);
        let r = x.mod_floor(&p);
        r.to_u64_digits().1.first().copied().unwrap_or(0)
    }

    /// Reduces a rational whose denominator is a unit mod p.
    pub fn reduce_q(self, x: &Q) -> Option<u64> {
        let d = self.reduce(x.denom());
        if d == 0 {
            return None;
        }
        Some(self.mul(self.reduce(x.numer()), self.inv(d)))
    }
}

fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n % p == 0 {
            return n == p;
        }
    }
    let m = Modulus(n);
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = m.pow(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = m.mul(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Primes descending from 2^62.
pub fn primes() -> impl Iterator<Item = u64> {
    let mut c: u64 = (1 << 62) - 1;
    std::iter::from_fn(move || {
        while !is_prime_u64(c) {
            c -= 2;
        }
        let p = c;
        c -= 2;
        Some(p)
    })
}

/// Incremental CRT over a vector of residues.
#[derive(Debug, Clone)]
pub struct Crt {
    pub modulus: BigInt,
    pub values: Vec<BigInt>,
}

impl Crt {
    pub fn new(len: usize) -> Self {
        Crt {
            modulus: BigInt::one(),
            values: vec![BigInt::zero(); len],
        }
    }

    pub fn add(&mut self, m: Modulus, residues: &[u64]) {
        let p = BigInt::from(m.0);
        let minv = m.inv(m.reduce(&self.modulus));
        for (x, &r) in self.values.iter_mut().zip(residues) {
            let xr = m.reduce(x);
            let t = m.mul(m.sub(r, xr), minv);
            *x += &self.modulus * BigInt::from(t);
        }
        self.modulus *= p;
    }

    /// Symmetric representatives in `(-P/2, P/2]`.
    pub fn symmetric(&self) -> Vec<BigInt> {
        let half: BigInt = &self.modulus >> 1usize;
        self.values
            .iter()
            .map(|x| if x > &half { x - &self.modulus } else { x.clone() })
            .collect()
    }

    /// Rational reconstruction of every entry with a shared running
    /// denominator. `None` when some entry has no small representative.
    pub fn rationals(&self) -> Option<Vec<Q>> {
        let bound: BigInt = (&self.modulus >> 1usize).sqrt();
        let mut common = BigInt::one();
        let mut out = Vec::with_capacity(self.values.len());
        for x in &self.values {
            let scaled = (x * &common).mod_floor(&self.modulus);
            let (n, d) = rational_reconstruct(&scaled, &self.modulus, &bound)?;
            let q = Q::new(n, d * &common);
            common = common.lcm(q.denom());
            if common > bound {
                return None;
            }
            out.push(q);
        }
        Some(out)
    }
}

/// Finds `n/d ≡ a (mod m)` with `|n|, d <= bound`.
pub fn rational_reconstruct(a: &BigInt, m: &BigInt, bound: &BigInt) -> Option<(BigInt, BigInt)> {
    let (mut r0, mut r1) = (m.clone(), a.mod_floor(m));
    let (mut t0, mut t1) = (BigInt::zero(), BigInt::one());
    while &r1 > bound {
        let (qt, r2): (BigInt, BigInt) = r0.div_rem(&r1);
        let t2 = &t0 - &qt * &t1;
        r0 = std::mem::replace(&mut r1, r2);
        t0 = std::mem::replace(&mut t1, t2);
    }
    if t1.is_zero() || t1.abs() > *bound {
        return None;
    }
    let (n, d) = if t1.sign() == Sign::Minus {
        (-r1, -t1)
    } else {
        (r1, t1)
    };
    if !n.gcd(&d).is_one() {
        return None;
    }
    Some((n, d))
}

/// Sparse square system over the integers, stored by rows.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub n: usize,
    pub rows: Vec<Vec<(u32, BigInt)>>,
}

/// Solves `A x = b` mod p by Gaussian elimination with a minimum-degree
/// pivot rule. Returns `None` when `A` is singular mod p.
pub fn solve_mod(sys: &SparseSystem, rhs: &[u64], m: Modulus) -> Option<Vec<u64>> {
    let n = sys.n;
    let mut rows: Vec<Vec<(u32, u64)>> = sys
        .rows
        .iter()
        .map(|r| {
            let mut v: Vec<(u32, u64)> = r
                .iter()
                .map(|(c, x)| (*c, m.reduce(x)))
                .filter(|&(_, x)| x != 0)
                .collect();
            v.sort_unstable_by_key(|e| e.0);
            v
        })
        .collect();
    let mut b = rhs.to_vec();
    let mut cols: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut count = vec![0usize; n];
    for (i, r) in rows.iter().enumerate() {
        for &(c, _) in r {
            cols[c as usize].push(i as u32);
            count[c as usize] += 1;
        }
    }
    let mut row_done = vec![false; n];
    let mut col_done = vec![false; n];
    let mut pivots: Vec<(usize, usize)> = Vec::with_capacity(n);
    let find = |r: &[(u32, u64)], c: u32| r.binary_search_by_key(&c, |e| e.0).ok();
    for _ in 0..n {
        let c = (0..n)
            .filter(|&c| !col_done[c])
            .min_by_key(|&c| count[c])
            .expect("an active column remains");
        // Live rows holding column c, deduplicated.
        let mut holders: Vec<u32> = std::mem::take(&mut cols[c]);
        holders.sort_unstable();
        holders.dedup();
        holders.retain(|&i| !row_done[i as usize] && find(&rows[i as usize], c as u32).is_some());
        let &pr = holders.iter().min_by_key(|&&i| rows[i as usize].len())?;
        let pr = pr as usize;
        let prow = std::mem::take(&mut rows[pr]);
        let pval = prow[find(&prow, c as u32).expect("held")].1;
        let pinv = m.inv(pval);
        for &i in &holders {
            let i = i as usize;
            if i == pr {
                continue;
            }
            let row = std::mem::take(&mut rows[i]);
            let f = m.mul(row[find(&row, c as u32).expect("held")].1, pinv);
            let mut merged = Vec::with_capacity(row.len() + prow.len());
            let (mut a, mut q) = (0, 0);
            while a < row.len() || q < prow.len() {
                let ca = row.get(a).map_or(u32::MAX, |e| e.0);
                let cq = prow.get(q).map_or(u32::MAX, |e| e.0);
                if ca < cq {
                    merged.push(row[a]);
                    a += 1;
                } else if cq < ca {
                    let v = m.neg(m.mul(f, prow[q].1));
                    if !col_done[cq as usize] {
                        cols[cq as usize].push(i as u32);
                        count[cq as usize] += 1;
                    }
                    merged.push((cq, v));
                    q += 1;
                } else {
                    let v = m.sub(row[a].1, m.mul(f, prow[q].1));
                    if v != 0 {
                        merged.push((ca, v));
                    } else {
                        count[ca as usize] -= 1;
                    }
                    a += 1;
                    q += 1;
                }
            }
            rows[i] = merged;
            b[i] = m.sub(b[i], m.mul(f, b[pr]));
        }
        for &(cc, _) in &prow {
            count[cc as usize] -= 1;
        }
        rows[pr] = prow;
        row_done[pr] = true;
        col_done[c] = true;
        pivots.push((pr, c));
    }
    let mut x = vec![0u64; n];
    for &(r, c) in pivots.iter().rev() {
        let mut acc = b[r];
        let mut diag = 0;
        for &(cc, v) in &rows[r] {
            if cc as usize == c {
                diag = v;
            } else {
                acc = m.sub(acc, m.mul(v, x[cc as usize]));
            }
        }
        x[c] = m.mul(acc, m.inv(diag));
    }
    Some(x)
}

/// Dense `A x = b` mod p with partial pivoting; `None` when singular.
pub fn solve_dense_mod(mut a: Vec<Vec<u64>>, mut b: Vec<u64>, m: Modulus) -> Option<Vec<u64>> {
    let n = a.len();
    for k in 0..n {
        let p = (k..n).find(|&i| a[i][k] != 0)?;
        a.swap(p, k);
        b.swap(p, k);
        let inv = m.inv(a[k][k]);
        for i in k + 1..n {
            let f = m.mul(a[i][k], inv);
            if f == 0 {
                continue;
            }
            for j in k..n {
                let v = m.mul(f, a[k][j]);
                a[i][j] = m.sub(a[i][j], v);
            }
            b[i] = m.sub(b[i], m.mul(f, b[k]));
        }
    }
    let mut x = vec![0u64; n];
    for k in (0..n).rev() {
        let mut acc = b[k];
        for j in k + 1..n {
            acc = m.sub(acc, m.mul(a[k][j], x[j]));
        }
        x[k] = m.mul(acc, m.inv(a[k][k]));
    }
    Some(x)
}

/// Characteristic polynomial `det(λI − A)` mod p, ascending coefficients,
/// via reduction to upper Hessenberg form.
pub fn charpoly_mod(a: &[Vec<u64>], m: Modulus) -> Vec<u64> {
    let n = a.len();
    let mut h: Vec<Vec<u64>> = a.to_vec();
    for k in 0..n.saturating_sub(2) {
        let Some(piv) = (k + 1..n).find(|&i| h[i][k] != 0) else {
            continue;
        };
        if piv != k + 1 {
            h.swap(piv, k + 1);
            for row in h.iter_mut() {
                row.swap(piv, k + 1);
            }
        }
        let inv = m.inv(h[k + 1][k]);
        for i in k + 2..n {
            let f = m.mul(h[i][k], inv);
            if f == 0 {
                continue;
            }
            // Row i -= f * row k+1, then column k+1 += f * column i.
            for j in 0..n {
                let v = m.mul(f, h[k + 1][j]);
                h[i][j] = m.sub(h[i][j], v);
            }
            for row in h.iter_mut() {
                let v = m.mul(f, row[i]);
                row[k + 1] = m.add(row[k + 1], v);
            }
        }
    }
    // p_j = det of the leading j×j block of (λI − H).
    let mut polys: Vec<Vec<u64>> = vec![vec![1]];
    for j in 0..n {
        let prev = &polys[j];
        let mut next = vec![0u64; j + 2];
        for (d, &c) in prev.iter().enumerate() {
            next[d + 1] = m.add(next[d + 1], c);
            next[d] = m.sub(next[d], m.mul(h[j][j], c));
        }
        let mut prod = 1u64;
        for i in (0..j).rev() {
            prod = m.mul(prod, h[i + 1][i]);
            let f = m.mul(prod, h[i][j]);
            if f == 0 {
                continue;
            }
            for (d, &c) in polys[i].iter().enumerate() {
                next[d] = m.sub(next[d], m.mul(f, c));
            }
        }
        polys.push(next);
    }
    polys.pop().expect("nonempty")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::q;
    use proptest::prelude::*;

    #[test]
    fn primes_are_prime_and_large() {
        let ps: Vec<u64> = primes().take(3).collect();
        assert!(ps.iter().all(|&p| p > 1 << 61 && is_prime_u64(p)));
        assert!(ps.windows(2).all(|w| w[0] > w[1]));
        assert!(!is_prime_u64(561));
        assert!(is_prime_u64(1_000_000_007));
    }

    #[test]
    fn crt_reconstructs_fractions() {
        let target = [q(-3, 7), q(22, 9), q(0, 1), q(123_456_789, 1_000_003)];
        let mut crt = Crt::new(target.len());
        for p in primes().take(3) {
            let m = Modulus(p);
            let r: Vec<u64> = target.iter().map(|x| m.reduce_q(x).unwrap()).collect();
            crt.add(m, &r);
        }
        assert_eq!(crt.rationals().unwrap(), target.to_vec());
    }

    #[test]
    fn small_solve() {
        // [[2,1],[1,3]] x = [3, 5] mod p → x = (4/5, 7/5)
        let sys = SparseSystem {
            n: 2,
            rows: vec![
                vec![(0, BigInt::from(2)), (1, BigInt::from(1))],
                vec![(0, BigInt::from(1)), (1, BigInt::from(3))],
            ],
        };
        let m = Modulus(primes().next().unwrap());
        let x = solve_mod(&sys, &[3, 5], m).unwrap();
        assert_eq!(x[0], m.reduce_q(&q(4, 5)).unwrap());
        assert_eq!(x[1], m.reduce_q(&q(7, 5)).unwrap());
        let singular = SparseSystem {
            n: 2,
            rows: vec![
                vec![(0, BigInt::from(1)), (1, BigInt::from(1))],
                vec![(0, BigInt::from(2)), (1, BigInt::from(2))],
            ],
        };
        assert!(solve_mod(&singular, &[1, 2], m).is_none());
    }

    #[test]
    fn charpoly_two_by_two() {
        let m = Modulus(1_000_000_007);
        // [[1,2],[3,4]]: λ² − 5λ − 2
        let c = charpoly_mod(&[vec![1, 2], vec![3, 4]], m);
        assert_eq!(c, vec![m.neg(2), m.neg(5), 1]);
    }

    fn dense_det(a: &[Vec<i64>], m: Modulus) -> u64 {
        let n = a.len();
        let mut h: Vec<Vec<u64>> = a
            .iter()
            .map(|r| r.iter().map(|&x| m.reduce(&BigInt::from(x))).collect())
            .collect();
        let mut det = 1;
        for k in 0..n {
            let Some(p) = (k..n).find(|&i| h[i][k] != 0) else { return 0 };
            if p != k {
                h.swap(p, k);
                det = m.neg(det);
            }
            det = m.mul(det, h[k][k]);
            let inv = m.inv(h[k][k]);
            for i in k + 1..n {
                let f = m.mul(h[i][k], inv);
                for j in k..n {
                    let v = m.mul(f, h[k][j]);
                    h[i][j] = m.sub(h[i][j], v);
                }
            }
        }
        det
    }

    proptest! {
        #[test]
        fn charpoly_matches_determinant_at_points(
            entries in proptest::collection::vec(-5i64..6, 16),
            lam in -20i64..20,
        ) {
            let m = Modulus(1_000_000_007);
            let a: Vec<Vec<i64>> = entries.chunks(4).map(|c| c.to_vec()).collect();
            let am: Vec<Vec<u64>> = a.iter().map(|r| r.iter().map(|&x| m.reduce(&BigInt::from(x))).collect()).collect();
            let c = charpoly_mod(&am, m);
            let l = m.reduce(&BigInt::from(lam));
            let val = c.iter().rev().fold(0, |acc, &ci| m.add(m.mul(acc, l), ci));
            let shifted: Vec<Vec<i64>> = (0..4)
                .map(|i| (0..4).map(|j| if i == j { lam - a[i][j] } else { -a[i][j] }).collect())
                .collect();
            prop_assert_eq!(val, dense_det(&shifted, m));
        }

        #[test]
        fn sparse_solve_checks_out(entries in proptest::collection::vec(-3i64..4, 25), rhs in proptest::collection::vec(0u64..100, 5)) {
            let m = Modulus(1_000_000_007);
            let sys = SparseSystem {
                n: 5,
                rows: entries
                    .chunks(5)
                    .map(|r| r.iter().enumerate().filter(|(_, &x)| x != 0).map(|(j, &x)| (j as u32, BigInt::from(x))).collect())
                    .collect(),
            };
            if let Some(x) = solve_mod(&sys, &rhs, m) {
                for (i, row) in sys.rows.iter().enumerate() {
                    let s = row.iter().fold(0, |acc, (j, a)| m.add(acc, m.mul(m.reduce(a), x[*j as usize])));
                    prop_assert_eq!(s, rhs[i]);
                }
            } else {
                let a: Vec<Vec<i64>> = entries.chunks(5).map(|c| c.to_vec()).collect();
                prop_assert_eq!(dense_det(&a, m), 0);
            }
        }
    }
}
