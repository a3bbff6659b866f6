//! Exact polynomials: characteristic polynomials of transition matrices and
//! the partition-function check for the one-dimensional landslide chain.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::arborescence::{Arborescence, VertexSet};
use crate::chain::{Model, TransitionMatrix};
use crate::configuration::StateSpace;
use crate::error::{Result, SandpileError};
use crate::linalg::{charpoly_mod, primes, solve_dense_mod, Crt, Modulus};
use crate::operators::{image_table, Generator, OpKind, Table};
use crate::rational::{pow, Q};

/// Largest matrix accepted by [`char_poly_exact`].
pub const CHARPOLY_CAP: usize = 256;

/// Largest state space on which the conjecture check runs the fully
/// symbolic cofactor pipeline.
pub const SYMBOLIC_CAP: usize = 9;

/// Univariate polynomial with ascending rational coefficients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UniPoly(Vec<Q>);

impl UniPoly {
    pub fn new(mut coeffs: Vec<Q>) -> Self {
        while coeffs.last().is_some_and(Zero::is_zero) {
            coeffs.pop();
        }
        UniPoly(coeffs)
    }

    pub fn zero() -> Self {
        UniPoly(Vec::new())
    }

    pub fn one() -> Self {
        UniPoly(vec![Q::one()])
    }

    pub fn coeffs(&self) -> &[Q] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.0.len().checked_sub(1)
    }

    pub fn eval(&self, x: &Q) -> Q {
        self.0.iter().rev().fold(Q::zero(), |acc, c| acc * x + c)
    }

    /// `self · (λ − r)`.
    pub fn times_linear(&self, r: &Q) -> UniPoly {
        let mut out = vec![Q::zero(); self.0.len() + 1];
        for (i, c) in self.0.iter().enumerate() {
            out[i + 1] += c;
            out[i] -= c * r;
        }
        UniPoly::new(out)
    }

    /// `Π (λ − r)^k`.
    pub fn from_roots(roots: &[(Q, u64)]) -> UniPoly {
        let mut p = UniPoly::one();
        for (r, k) in roots {
            for _ in 0..*k {
                p = p.times_linear(r);
            }
        }
        p
    }

    pub fn scale(&self, c: &Q) -> UniPoly {
        UniPoly::new(self.0.iter().map(|x| x * c).collect())
    }

    pub fn to_json(&self, var: &str) -> PolyJson {
        PolyJson {
            vars: vec![var.to_string()],
            terms: self
                .0
                .iter()
                .enumerate()
                .filter(|(_, c)| !c.is_zero())
                .map(|(i, c)| TermJson {
                    exp: vec![i as u32],
                    coef: c.to_string(),
                })
                .collect(),
        }
    }
}

impl fmt::Display for UniPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .0
            .iter()
            .enumerate()
            .rev()
            .filter(|(_, c)| !c.is_zero())
            .map(|(i, c)| match i {
                0 => format!("{c}"),
                1 => format!("({c})λ"),
                _ => format!("({c})λ^{i}"),
            })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TermJson {
    pub exp: Vec<u32>,
    pub coef: String,
}

/// Serialized polynomial: variable names and sparse terms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PolyJson {
    pub vars: Vec<String>,
    pub terms: Vec<TermJson>,
}

/// Sparse multivariate polynomial; terms are keyed by exponent vectors and
/// ordered lexicographically with variable 0 most significant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiPoly {
    nvars: usize,
    terms: BTreeMap<Vec<u32>, Q>,
}

impl MultiPoly {
    pub fn zero(nvars: usize) -> Self {
        MultiPoly {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: Q) -> Self {
        let mut p = Self::zero(nvars);
        if !c.is_zero() {
            p.terms.insert(vec![0; nvars], c);
        }
        p
    }

    pub fn one(nvars: usize) -> Self {
        Self::constant(nvars, Q::one())
    }

    pub fn var(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        Self::monomial(e, Q::one())
    }

    pub fn monomial(exp: Vec<u32>, c: Q) -> Self {
        let mut p = Self::zero(exp.len());
        if !c.is_zero() {
            p.terms.insert(exp, c);
        }
        p
    }

    /// `c + Σ_i a_i v_i` from a coefficient per variable.
    pub fn linear(coeffs: &[Q]) -> Self {
        let n = coeffs.len();
        let mut p = Self::zero(n);
        for (i, c) in coeffs.iter().enumerate() {
            p.add_term(
                {
                    let mut e = vec![0; n];
                    e[i] = 1;
                    e
                },
                c.clone(),
            );
        }
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &Q)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.keys().all(|e| e.iter().all(|&x| x == 0))
    }

    fn add_term(&mut self, exp: Vec<u32>, c: Q) {
        if c.is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(exp) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn degree_in(&self, v: usize) -> u32 {
        self.terms.keys().map(|e| e[v]).max().unwrap_or(0)
    }

    pub fn total_degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn leading(&self) -> Option<(&Vec<u32>, &Q)> {
        self.terms.iter().next_back()
    }

    pub fn scale(&self, c: &Q) -> Self {
        if c.is_zero() {
            return Self::zero(self.nvars);
        }
        MultiPoly {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(e, x)| (e.clone(), x * c)).collect(),
        }
    }

    /// Scaled so the lexicographically leading coefficient is 1.
    pub fn monic(&self) -> Self {
        match self.leading() {
            None => self.clone(),
            Some((_, c)) => self.scale(&(Q::one() / c)),
        }
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut acc = Self::one(self.nvars);
        for _ in 0..k {
            acc = &acc * self;
        }
        acc
    }

    pub fn eval(&self, point: &[Q]) -> Q {
        self.terms.iter().fold(Q::zero(), |acc, (e, c)| {
            acc + e
                .iter()
                .zip(point)
                .fold(c.clone(), |t, (&k, x)| t * pow(x, k))
        })
    }

    fn check_vars(&self, other: &Self) {
        assert_eq!(self.nvars, other.nvars, "variable count mismatch");
    }

    /// Exact quotient, or `None` when `d` does not divide `self`.
    pub fn div_exact(&self, d: &MultiPoly) -> Option<MultiPoly> {
        self.check_vars(d);
        let (dl, dc) = d.leading()?;
        let mut r = self.clone();
        let mut q = MultiPoly::zero(self.nvars);
        while let Some((rl, rc)) = r.leading() {
            if rl.iter().zip(dl).any(|(a, b)| a < b) {
                return None;
            }
            let e: Vec<u32> = rl.iter().zip(dl).map(|(a, b)| a - b).collect();
            let c = rc / dc;
            let t = MultiPoly::monomial(e, c);
            r = &r - &(&t * d);
            q = &q + &t;
        }
        Some(q)
    }

    /// Coefficients with respect to variable `v`, indexed by degree.
    pub fn coefficients_in(&self, v: usize) -> Vec<MultiPoly> {
        let mut out = vec![MultiPoly::zero(self.nvars); self.degree_in(v) as usize + 1];
        for (e, c) in &self.terms {
            let mut e2 = e.clone();
            e2[v] = 0;
            out[e[v] as usize].add_term(e2, c.clone());
        }
        out
    }

    fn times_var_power(&self, v: usize, k: u32) -> Self {
        MultiPoly {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .map(|(e, c)| {
                    let mut e2 = e.clone();
                    e2[v] += k;
                    (e2, c.clone())
                })
                .collect(),
        }
    }

    pub fn to_json(&self, names: &[String]) -> PolyJson {
        PolyJson {
            vars: names.to_vec(),
            terms: self
                .terms
                .iter()
                .rev()
                .map(|(e, c)| TermJson {
                    exp: e.clone(),
                    coef: c.to_string(),
                })
                .collect(),
        }
    }

    pub fn eval_mod(&self, point: &[u64], m: Modulus) -> Option<u64> {
        let mut acc = 0;
        for (e, c) in &self.terms {
            let mut t = m.reduce_q(c)?;
            for (&k, &x) in e.iter().zip(point) {
                t = m.mul(t, m.pow(x, k as u64));
            }
            acc = m.add(acc, t);
        }
        Some(acc)
    }
}

impl Add for &MultiPoly {
    type Output = MultiPoly;
    fn add(self, o: &MultiPoly) -> MultiPoly {
        self.check_vars(o);
        let mut out = self.clone();
        for (e, c) in &o.terms {
            out.add_term(e.clone(), c.clone());
        }
        out
    }
}

impl Sub for &MultiPoly {
    type Output = MultiPoly;
    fn sub(self, o: &MultiPoly) -> MultiPoly {
        self.check_vars(o);
        let mut out = self.clone();
        for (e, c) in &o.terms {
            out.add_term(e.clone(), -c.clone());
        }
        out
    }
}

impl Neg for &MultiPoly {
    type Output = MultiPoly;
    fn neg(self) -> MultiPoly {
        self.scale(&-Q::one())
    }
}

impl Mul for &MultiPoly {
    type Output = MultiPoly;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn mul(self, o: &MultiPoly) -> MultiPoly {
        self.check_vars(o);
        let mut out = MultiPoly::zero(self.nvars);
        for (e1, c1) in &self.terms {
            for (e2, c2) in &o.terms {
                let e: Vec<u32> = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                out.add_term(e, c1 * c2);
            }
        }
        out
    }
}

fn prem(a: &MultiPoly, b: &MultiPoly, v: usize) -> MultiPoly {
    let db = b.degree_in(v);
    let lcb = b.coefficients_in(v).pop().expect("nonzero");
    let mut r = a.clone();
    while !r.is_zero() && r.degree_in(v) >= db {
        let dr = r.degree_in(v);
        let lcr = r.coefficients_in(v).pop().expect("nonzero");
        r = &(&r * &lcb) - &(&lcr * &b.times_var_power(v, dr - db));
    }
    r
}

fn content_in(a: &MultiPoly, v: usize) -> MultiPoly {
    a.coefficients_in(v)
        .into_iter()
        .filter(|c| !c.is_zero())
        .fold(MultiPoly::zero(a.nvars), |g, c| poly_gcd(&g, &c))
}

fn primitive_part(a: &MultiPoly, v: usize) -> MultiPoly {
    let c = content_in(a, v);
    a.div_exact(&c).expect("content divides")
}

/// Greatest common divisor (monic) by recursive primitive polynomial
/// remainder sequences, eliminating the highest-indexed variable first.
pub fn poly_gcd(a: &MultiPoly, b: &MultiPoly) -> MultiPoly {
    a.check_vars(b);
    if a.is_zero() {
        return b.monic();
    }
    if b.is_zero() {
        return a.monic();
    }
    let Some(v) = (0..a.nvars).rev().find(|&i| a.degree_in(i) > 0 || b.degree_in(i) > 0) else {
        return MultiPoly::one(a.nvars);
    };
    if a.degree_in(v) == 0 {
        return poly_gcd(a, &content_in(b, v));
    }
    if b.degree_in(v) == 0 {
        return poly_gcd(&content_in(a, v), b);
    }
    let c = poly_gcd(&content_in(a, v), &content_in(b, v));
    let (mut r0, mut r1) = (primitive_part(a, v), primitive_part(b, v));
    if r0.degree_in(v) < r1.degree_in(v) {
        std::mem::swap(&mut r0, &mut r1);
    }
    let g = loop {
        let r = prem(&r0, &r1, v);
        if r.is_zero() {
            break r1;
        }
        if r.degree_in(v) == 0 {
            break MultiPoly::one(a.nvars);
        }
        r0 = r1;
        r1 = primitive_part(&r, v);
    };
    (&c * &g).monic()
}

/// Determinant by fraction-free (Bareiss) elimination.
pub fn bareiss_det(matrix: &[Vec<MultiPoly>]) -> Result<MultiPoly> {
    let n = matrix.len();
    if matrix.iter().any(|r| r.len() != n) {
        return Err(SandpileError::Dimension("matrix is not square".into()));
    }
    if n == 0 {
        return Err(SandpileError::Dimension("empty matrix".into()));
    }
    let nv = matrix[0][0].nvars;
    if matrix.iter().flatten().any(|p| p.nvars != nv) {
        return Err(SandpileError::Dimension("variable count mismatch".into()));
    }
    let mut a = matrix.to_vec();
    let mut sign = false;
    let mut prev = MultiPoly::one(nv);
    for k in 0..n {
        let Some(p) = (k..n).find(|&i| !a[i][k].is_zero()) else {
            return Ok(MultiPoly::zero(nv));
        };
        if p != k {
            a.swap(p, k);
            sign = !sign;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let num = &(&a[k][k] * &a[i][j]) - &(&a[i][k] * &a[k][j]);
                a[i][j] = num
                    .div_exact(&prev)
                    .ok_or_else(|| SandpileError::Internal("Bareiss division was not exact".into()))?;
            }
            a[i][k] = MultiPoly::zero(nv);
        }
        prev = a[k][k].clone();
    }
    let d = a[n - 1][n - 1].clone();
    Ok(if sign { -&d } else { d })
}

/// `W` with `K W = 0` from the cofactors along the first row:
/// `W_t = (−1)^t det(K without row 0 and column t)`.
pub fn adjugate_column_stationary(k: &[Vec<MultiPoly>]) -> Result<Vec<MultiPoly>> {
    let n = k.len();
    if n == 0 || k.iter().any(|r| r.len() != n) {
        return Err(SandpileError::Dimension("matrix is not square".into()));
    }
    if n == 1 {
        return Ok(vec![MultiPoly::one(k[0][0].nvars)]);
    }
    (0..n)
        .map(|t| {
            let minor: Vec<Vec<MultiPoly>> = k[1..]
                .iter()
                .map(|row| {
                    row.iter()
                        .enumerate()
                        .filter(|&(j, _)| j != t)
                        .map(|(_, p)| p.clone())
                        .collect()
                })
                .collect();
            let d = bareiss_det(&minor)?;
            Ok(if t % 2 == 1 { -&d } else { d })
        })
        .collect()
}

/// Variables of a symbolic chain: `y_ℓ` per source vertex, then `x_v` per vertex.
#[derive(Debug, Clone)]
pub struct SymbolicRates {
    pub names: Vec<String>,
    /// Generator and the index of its rate variable.
    pub generators: Vec<(Generator, usize)>,
}

impl SymbolicRates {
    /// Sources at leaves (or at vertices with positive `y`), topples everywhere.
    pub fn new(tree: &Arborescence, model: Model) -> Self {
        let mut names = Vec::new();
        let mut generators = Vec::new();
        for v in 0..tree.len() {
            if tree.is_leaf(v) || tree.y(v).is_positive() {
                generators.push((Generator::new(OpKind::Source, v), names.len()));
                names.push(format!("y_{}", tree.id(v)));
            }
        }
        for v in 0..tree.len() {
            generators.push((Generator::new(model.topple(), v), names.len()));
            names.push(format!("x_{}", tree.id(v)));
        }
        SymbolicRates { names, generators }
    }

    pub fn nvars(&self) -> usize {
        self.names.len()
    }
}

/// Symbolic generator `K = Σ_g p_g (ρ(g) − I)` with one variable per rate.
pub fn symbolic_rate_matrix(tree: &Arborescence, vars: &SymbolicRates) -> Result<Vec<Vec<MultiPoly>>> {
    let space = StateSpace::new(tree)?;
    let n = space.size();
    let nv = vars.nvars();
    let mut k = vec![vec![MultiPoly::zero(nv); n]; n];
    for &(g, var) in &vars.generators {
        let table = image_table(tree, &space, g)?;
        let x = MultiPoly::var(nv, var);
        for (j, &i) in table.iter().enumerate() {
            if i as usize != j {
                k[i as usize][j] = &k[i as usize][j] + &x;
                k[j][j] = &k[j][j] - &x;
            }
        }
    }
    Ok(k)
}

/// `det(M − λI)` by modular Hessenberg reduction of the integer matrix
/// `A = D M` with a deterministic coefficient bound, then rescaling.
pub fn char_poly_exact(m: &TransitionMatrix) -> Result<UniPoly> {
    char_poly_exact_capped(m, CHARPOLY_CAP)
}

pub fn char_poly_exact_capped(m: &TransitionMatrix, cap: usize) -> Result<UniPoly> {
    let n = m.size();
    if n > cap {
        return Err(SandpileError::CapExceeded {
            what: "characteristic polynomial matrix",
            limit: cap,
            found: n,
        });
    }
    let d = m.denominator().clone();
    // |c_k| ≤ C(n, n−k) B^{n−k} ≤ 2^n B^n with B the largest column 1-norm.
    let b = (0..n)
        .map(|j| m.column(j).iter().map(|e| e.1.abs()).sum::<BigInt>())
        .max()
        .unwrap_or_else(BigInt::one)
        .max(BigInt::one());
    let bound = (BigInt::one() << n) * num_traits::pow(b, n);
    let mut crt = Crt::new(n + 1);
    for p in primes() {
        if crt.modulus > &bound * 2 {
            break;
        }
        let md = Modulus(p);
        let mut a = vec![vec![0u64; n]; n];
        for (j, row) in (0..n).map(|j| (j, m.column(j))) {
            for (i, x) in row {
                a[*i as usize][j] = md.reduce(x);
            }
        }
        crt.add(md, &charpoly_mod(&a, md));
    }
    let c = crt.symmetric();
    // det(λI − M) has λ^k coefficient c_k D^k / D^n; det(M − λI) = (−1)^n det(λI − M).
    let sign = if n % 2 == 1 { -Q::one() } else { Q::one() };
    let dn = num_traits::pow(d.clone(), n);
    let coeffs = c
        .into_iter()
        .enumerate()
        .map(|(k, ck)| Q::new(ck * num_traits::pow(d.clone(), k), dn.clone()) * &sign)
        .collect();
    Ok(UniPoly::new(coeffs))
}

/// Characteristic polynomial by Bareiss elimination over `Q[λ]`; a slow,
/// independent route for small matrices.
pub fn char_poly_bareiss(m: &TransitionMatrix) -> Result<UniPoly> {
    let n = m.size();
    let lam = MultiPoly::var(1, 0);
    let rows: Vec<Vec<MultiPoly>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let c = MultiPoly::constant(1, m.entry(i, j));
                    if i == j {
                        &c - &lam
                    } else {
                        c
                    }
                })
                .collect()
        })
        .collect();
    let det = bareiss_det(&rows)?;
    let deg = det.degree_in(0) as usize;
    let mut coeffs = vec![Q::zero(); deg + 1];
    for (e, c) in det.terms() {
        coeffs[e[0] as usize] = c.clone();
    }
    Ok(UniPoly::new(coeffs))
}

/// `(−1)^{|Ω|} Π_{S ⊆ V} (λ − y_S − x_S)^{T_{S^c}}`, i.e. `det(M − λI)` as
/// predicted by the subset spectrum.
pub fn char_poly_product_formula(tree: &Arborescence) -> Result<UniPoly> {
    let spec = crate::monoid::subset_spectrum(tree)?;
    let roots: Vec<(Q, u64)> = spec.into_iter().map(|(_, l, k)| (l, k)).collect();
    let p = UniPoly::from_roots(&roots);
    let size = StateSpace::new(tree)?.size();
    Ok(if size % 2 == 1 { p.scale(&-Q::one()) } else { p })
}

fn line_source(tree: &Arborescence) -> Result<usize> {
    let leaves = tree.leaves()?;
    let is_line = leaves.len() == 1 && tree.path(leaves.iter().next().expect("one leaf")).len() == tree.len();
    if !is_line {
        return Err(SandpileError::HypothesisUnmet {
            result: "one-dimensional formula",
            detail: "the arborescence must be a line".into(),
        });
    }
    Ok(leaves.iter().next().expect("one leaf"))
}

/// One-dimensional specialization
/// `(λ − y − x_{[n]}) Π_{S ⊊ [n]} (λ − x_S)^{T_{S^c}}`, sign-normalized to
/// `det(M − λI)`. The full-set factor carries the source rate `y`.
pub fn char_poly_line_formula(tree: &Arborescence) -> Result<UniPoly> {
    let src = line_source(tree)?;
    let n = tree.len();
    let mut roots = Vec::with_capacity(1 << n);
    for bits in 0u64..1 << n {
        let s = VertexSet(bits);
        let xs: Q = s.iter().map(|v| tree.x(v).clone()).sum();
        if s == VertexSet::full(n) {
            roots.push((xs + tree.y(src), 1));
        } else {
            let mult: u64 = (0..n).filter(|&v| !s.contains(v)).map(|v| tree.threshold(v) as u64).product();
            roots.push((xs, mult));
        }
    }
    let p = UniPoly::from_roots(&roots);
    let size = StateSpace::new(tree)?.size();
    Ok(if size % 2 == 1 { p.scale(&-Q::one()) } else { p })
}

/// Complex eigenvalues of the floating-point transition matrix.
pub fn numeric_eigenvalues(m: &TransitionMatrix) -> Vec<(f64, f64)> {
    let n = m.size();
    let dense = m.to_dense();
    let mat = nalgebra::DMatrix::from_fn(n, n, |i, j| crate::rational::to_f64(&dense[i][j]));
    let mut ev: Vec<(f64, f64)> = mat.complex_eigenvalues().iter().map(|c| (c.re, c.im)).collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    ev
}

/// The factor `y + x_U` on the line `1 → … → n`; `U` holds 0-based positions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LinearFactor {
    pub subset: Vec<usize>,
    pub exponent: u64,
}

fn factor_poly(nv: usize, u: VertexSet) -> MultiPoly {
    let mut coeffs = vec![Q::zero(); nv];
    coeffs[0] = Q::one();
    for i in u.iter() {
        coeffs[i + 1] = Q::one();
    }
    MultiPoly::linear(&coeffs)
}

/// Conjectured partition function of the 1-D landslide chain as exponents of
/// `y + x_U`. With every threshold 1 there is no `k`; it is taken as `n + 1`.
pub fn conjectured_partition_1d(thresholds: &[u32]) -> BTreeMap<u64, u64> {
    let n = thresholds.len();
    let k = thresholds.iter().position(|&t| t > 1).unwrap_or(n);
    let mut out = BTreeMap::new();
    for (i, &t) in thresholds.iter().enumerate().take(k) {
        *out.entry(1u64 << i).or_insert(0) += t as u64;
    }
    let tail = n - k;
    for bits in 1u64..(1 << tail) {
        let u = bits << k;
        let min = u.trailing_zeros() as usize;
        *out.entry(u).or_insert(0) += thresholds[min] as u64;
    }
    out
}

fn factors_to_poly(nv: usize, f: &BTreeMap<u64, u64>) -> MultiPoly {
    f.iter().fold(MultiPoly::one(nv), |acc, (&u, &e)| {
        &acc * &factor_poly(nv, VertexSet(u)).pow(e as u32)
    })
}

fn factor_list(f: &BTreeMap<u64, u64>) -> Vec<LinearFactor> {
    f.iter()
        .filter(|(_, &e)| e > 0)
        .map(|(&u, &e)| LinearFactor {
            subset: VertexSet(u).iter().collect(),
            exponent: e,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConjectureReport {
    pub thresholds: Vec<u32>,
    /// 1-based `k`, absent when no threshold exceeds 1.
    pub k: Option<usize>,
    pub note: Option<String>,
    pub method: &'static str,
    pub matches: bool,
    pub computed: Vec<LinearFactor>,
    pub conjectured: Vec<LinearFactor>,
    pub computed_poly: Option<PolyJson>,
    pub conjectured_poly: Option<PolyJson>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConjectureMethod {
    Auto,
    Symbolic,
    ModularLine,
}

/// Landslide line with generic placeholder rates.
fn line_tree(thresholds: &[u32]) -> Result<Arborescence> {
    let n = thresholds.len() as i64;
    let r = Q::new(BigInt::one(), BigInt::from(n + 1));
    Arborescence::line(thresholds, r.clone(), &vec![r; thresholds.len()])
}

fn var_names(n: usize) -> Vec<String> {
    std::iter::once("y".to_string())
        .chain((1..=n).map(|i| format!("x_{i}")))
        .collect()
}

/// Least common denominator of the stationary law as exponents of the
/// factors `y + x_U`, from the symbolic cofactor vector.
fn lcd_symbolic(thresholds: &[u32]) -> Result<(BTreeMap<u64, u64>, MultiPoly)> {
    let n = thresholds.len();
    let tree = line_tree(thresholds)?;
    let vars = SymbolicRates::new(&tree, Model::Landslide);
    let k = symbolic_rate_matrix(&tree, &vars)?;
    let w = adjugate_column_stationary(&k)?;
    let nv = vars.nvars();
    for row in &k {
        let s = row.iter().zip(&w).fold(MultiPoly::zero(nv), |acc, (a, b)| &acc + &(a * b));
        if !s.is_zero() {
            return Err(SandpileError::Internal("cofactor vector is not in the kernel".into()));
        }
    }
    let g = w.iter().fold(MultiPoly::zero(nv), |acc, p| poly_gcd(&acc, p));
    let total = w.iter().fold(MultiPoly::zero(nv), |acc, p| &acc + p);
    let z = total
        .div_exact(&g)
        .ok_or_else(|| SandpileError::Internal("gcd does not divide the sum".into()))?;
    let mut rest = z.clone();
    let mut exps = BTreeMap::new();
    for bits in 1u64..(1 << n) {
        let f = factor_poly(nv, VertexSet(bits));
        while let Some(q) = rest.div_exact(&f) {
            *exps.entry(bits).or_insert(0) += 1;
            rest = q;
        }
    }
    if !rest.is_constant() {
        return Err(SandpileError::Internal(
            "partition function has a factor outside the expected family".into(),
        ));
    }
    Ok((exps, z.monic()))
}

fn interpolate(xs: &[u64], ys: &[u64], m: Modulus) -> Vec<u64> {
    // Newton divided differences, then expansion to monomial coefficients.
    let n = xs.len();
    let mut coef = ys.to_vec();
    for j in 1..n {
        for i in (j..n).rev() {
            let num = m.sub(coef[i], coef[i - 1]);
            let den = m.sub(xs[i], xs[i - j]);
            coef[i] = m.mul(num, m.inv(den));
        }
    }
    let mut poly = vec![0u64; n];
    for i in (0..n).rev() {
        // poly = poly * (s − xs[i]) + coef[i]
        let mut next = vec![0u64; n];
        for d in 0..n {
            if poly[d] == 0 {
                continue;
            }
            if d + 1 < n {
                next[d + 1] = m.add(next[d + 1], poly[d]);
            }
            next[d] = m.sub(next[d], m.mul(poly[d], xs[i]));
        }
        next[0] = m.add(next[0], coef[i]);
        poly = next;
    }
    poly
}

fn eval_mod(p: &[u64], s: u64, m: Modulus) -> u64 {
    p.iter().rev().fold(0, |acc, &c| m.add(m.mul(acc, s), c))
}

fn root_multiplicity(p: &[u64], r: u64, m: Modulus) -> u64 {
    let mut p = p.to_vec();
    while p.last() == Some(&0) {
        p.pop();
    }
    let mut k = 0;
    while !p.is_empty() {
        // Synthetic division by (s − r).
        let mut q = vec![0u64; p.len() - 1];
        let mut acc = 0;
        for i in (0..p.len()).rev() {
            acc = m.add(m.mul(acc, r), p[i]);
            if i > 0 {
                q[i - 1] = acc;
            }
        }
        if acc != 0 {
            break;
        }
        k += 1;
        p = q;
    }
    k
}

/// LCD exponents from pole orders along a random line in rate space, over a
/// large prime field. The denominator of the summed cofactors is known to be
/// `Π_{U ≠ ∅} (y + x_U)^{T_U}`; each `π(t)` times that product must be a
/// polynomial, which is confirmed at extra sample points.
fn lcd_modular(thresholds: &[u32], seed: u64) -> Result<BTreeMap<u64, u64>> {
    let n = thresholds.len();
    let tree = line_tree(thresholds)?;
    let space = StateSpace::new(&tree)?;
    let size = space.size();
    let mut gens: Vec<Generator> = vec![Generator::new(OpKind::Source, 0)];
    gens.extend((0..n).map(|v| Generator::new(OpKind::Landslide, v)));
    let tables: Vec<Table> = gens
        .iter()
        .map(|&g| image_table(&tree, &space, g))
        .collect::<Result<_>>()?;
    let t_u = |u: u64| -> u64 {
        VertexSet(u).iter().map(|v| thresholds[v] as u64).product()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = primes().nth(rng.gen_range(0..64)).expect("infinite");
    let m = Modulus(p);
    'line: loop {
        // rates(s) = a + s b for (y, x_1, …, x_n)
        let a: Vec<u64> = (0..=n).map(|_| rng.gen_range(1..p)).collect();
        let b: Vec<u64> = (0..=n).map(|_| rng.gen_range(1..p)).collect();
        let subsets: Vec<u64> = (1u64..(1 << n)).collect();
        let mut roots = Vec::with_capacity(subsets.len());
        for &u in &subsets {
            let (mut ca, mut cb) = (a[0], b[0]);
            for i in VertexSet(u).iter() {
                ca = m.add(ca, a[i + 1]);
                cb = m.add(cb, b[i + 1]);
            }
            if cb == 0 {
                continue 'line;
            }
            roots.push(m.mul(m.neg(ca), m.inv(cb)));
        }
        let mut sorted = roots.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != roots.len() {
            continue 'line;
        }
        let extra = 3;
        let mut xs = Vec::with_capacity(size + extra);
        let mut values: Vec<Vec<u64>> = Vec::with_capacity(size + extra);
        let mut s = 0u64;
        while xs.len() < size + extra {
            s += 1;
            if roots.contains(&s) {
                continue;
            }
            let rate: Vec<u64> = (0..=n).map(|i| m.add(a[i], m.mul(s, b[i]))).collect();
            let mut k = vec![vec![0u64; size]; size];
            for (g, table) in tables.iter().enumerate() {
                for (j, &i) in table.iter().enumerate() {
                    let i = i as usize;
                    if i != j {
                        k[i][j] = m.add(k[i][j], rate[g]);
                        k[j][j] = m.sub(k[j][j], rate[g]);
                    }
                }
            }
            k[0] = vec![1; size];
            let mut rhs = vec![0u64; size];
            rhs[0] = 1;
            let Some(pi) = solve_dense_mod(k, rhs, m) else {
                continue 'line;
            };
            let dfull = subsets.iter().zip(&roots).fold(1u64, |acc, (&u, _)| {
                let mut l = rate[0];
                for i in VertexSet(u).iter() {
                    l = m.add(l, rate[i + 1]);
                }
                m.mul(acc, m.pow(l, t_u(u)))
            });
            xs.push(s);
            values.push(pi.iter().map(|&x| m.mul(x, dfull)).collect());
        }
        let mut min_mult: Vec<u64> = vec![u64::MAX; subsets.len()];
        for t in 0..size {
            let ys: Vec<u64> = values[..size].iter().map(|v| v[t]).collect();
            let poly = interpolate(&xs[..size], &ys, m);
            for e in size..size + extra {
                if eval_mod(&poly, xs[e], m) != values[e][t] {
                    return Err(SandpileError::Internal(
                        "scaled stationary entry is not a polynomial".into(),
                    ));
                }
            }
            for (ui, &r) in roots.iter().enumerate() {
                min_mult[ui] = min_mult[ui].min(root_multiplicity(&poly, r, m));
            }
        }
        let mut out = BTreeMap::new();
        for (ui, &u) in subsets.iter().enumerate() {
            let e = t_u(u) - min_mult[ui].min(t_u(u));
            if e > 0 {
                out.insert(u, e);
            }
        }
        return Ok(out);
    }
}

/// Compares the least common denominator of the stationary law of the 1-D
/// landslide chain with the conjectured product formula.
pub fn verify_conjecture_1d(thresholds: &[u32], method: ConjectureMethod) -> Result<ConjectureReport> {
    let n = thresholds.len();
    if n == 0 || n > 4 {
        return Err(SandpileError::CapExceeded {
            what: "line length",
            limit: 4,
            found: n,
        });
    }
    if let Some(&t) = thresholds.iter().find(|&&t| t == 0 || t > 3) {
        return Err(SandpileError::CapExceeded {
            what: "threshold",
            limit: 3,
            found: t as usize,
        });
    }
    let size: usize = thresholds.iter().map(|&t| t as usize + 1).product();
    let conj = conjectured_partition_1d(thresholds);
    let k = thresholds.iter().position(|&t| t > 1).map(|i| i + 1);
    let note = k.is_none().then(|| {
        "no threshold exceeds 1: k is taken as n + 1 and the second product is empty".to_string()
    });
    let nv = n + 1;
    let use_symbolic = match method {
        ConjectureMethod::Auto => size <= SYMBOLIC_CAP,
        ConjectureMethod::Symbolic => true,
        ConjectureMethod::ModularLine => false,
    };
    let (computed, computed_poly, method_name) = if use_symbolic {
        let (exps, poly) = lcd_symbolic(thresholds)?;
        (exps, Some(poly), "symbolic")
    } else {
        let first = lcd_modular(thresholds, 0x5eed_0001)?;
        let second = lcd_modular(thresholds, 0x5eed_0002)?;
        if first != second {
            return Err(SandpileError::Internal(
                "independent random lines disagree".into(),
            ));
        }
        (first, None, "modular-line")
    };
    let matches = computed == conj;
    let names = var_names(n);
    let small = size <= SYMBOLIC_CAP;
    Ok(ConjectureReport {
        thresholds: thresholds.to_vec(),
        k,
        note,
        method: method_name,
        matches,
        computed: factor_list(&computed),
        conjectured: factor_list(&conj),
        computed_poly: computed_poly
            .map(|p| p.to_json(&names))
            .or_else(|| small.then(|| factors_to_poly(nv, &computed).monic().to_json(&names))),
        conjectured_poly: small.then(|| factors_to_poly(nv, &conj).monic().to_json(&names)),
    })
}

/// `(y + x_U)` factors as a readable product.
pub fn render_factors(f: &[LinearFactor]) -> String {
    if f.is_empty() {
        return "1".into();
    }
    f.iter()
        .map(|lf| {
            let xs: Vec<String> = lf.subset.iter().map(|i| format!("x_{}", i + 1)).collect();
            let base = format!("(y+{})", xs.join("+"));
            if lf.exponent == 1 {
                base
            } else {
                format!("{base}^{}", lf.exponent)
            }
        })
        .collect::<Vec<_>>()
        .join("·")
}

/// Exponent of an integer as u32, for callers that index powers.
pub fn small_exponent(x: &BigInt) -> Option<u32> {
    x.to_u32()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::build_transition;
    use crate::instances::{example_three_uniform, random_unit_tree, single_vertex, uniform_line};
    use crate::rational::{q, qi};
    use proptest::prelude::*;

    fn x(n: usize, i: usize) -> MultiPoly {
        MultiPoly::var(n, i)
    }

    #[test]
    fn two_by_two_det() {
        let m = vec![vec![x(2, 0), x(2, 1)], vec![x(2, 1), x(2, 0)]];
        let d = bareiss_det(&m).unwrap();
        assert_eq!(d, &(&x(2, 0) * &x(2, 0)) - &(&x(2, 1) * &x(2, 1)));
    }

    #[test]
    fn gcd_of_difference_of_squares() {
        let a = &(&x(2, 0) * &x(2, 0)) - &(&x(2, 1) * &x(2, 1));
        let b = &x(2, 0) + &x(2, 1);
        assert_eq!(poly_gcd(&a, &b), b.monic());
        let c = &x(2, 0) - &x(2, 1);
        assert_eq!(poly_gcd(&b, &c), MultiPoly::one(2));
        let big = &(&a * &a) * &MultiPoly::constant(2, q(3, 7));
        assert_eq!(poly_gcd(&big, &(&b * &c)), a.monic());
    }

    #[test]
    fn single_site_cofactors() {
        // One vertex, T = 1, variables (y, x): W ∝ (x, y).
        let t = single_vertex(1, q(1, 2), q(1, 2));
        let vars = SymbolicRates::new(&t, Model::Landslide);
        let k = symbolic_rate_matrix(&t, &vars).unwrap();
        let w = adjugate_column_stationary(&k).unwrap();
        let ratio = |p: &MultiPoly| p.monic();
        assert_eq!(ratio(&w[0]), x(2, 1));
        assert_eq!(ratio(&w[1]), x(2, 0));
        let sum = &w[0] + &w[1];
        assert_eq!(sum.monic(), (&x(2, 0) + &x(2, 1)).monic());
    }

    #[test]
    fn charpoly_small_cases() {
        let one = TransitionMatrix::from_dense(&[vec![q(1, 1)]]).unwrap();
        assert_eq!(char_poly_exact(&one).unwrap(), UniPoly::new(vec![qi(1), qi(-1)]));
        let id = TransitionMatrix::from_dense(&[vec![qi(1), qi(0)], vec![qi(0), qi(1)]]).unwrap();
        assert_eq!(char_poly_exact(&id).unwrap(), UniPoly::new(vec![qi(1), qi(-2), qi(1)]));
    }

    #[test]
    fn example_three_charpoly() {
        let t = example_three_uniform();
        let m = build_transition(&t, Model::Landslide).unwrap();
        let exact = char_poly_exact(&m).unwrap();
        let roots = [(qi(0), 1), (q(1, 5), 3), (q(2, 5), 1), (q(3, 5), 2), (qi(1), 1)];
        assert_eq!(exact, UniPoly::from_roots(&roots));
        assert_eq!(char_poly_product_formula(&t).unwrap(), exact);
        assert_eq!(char_poly_bareiss(&m).unwrap(), exact);
    }

    #[test]
    fn product_formula_degree() {
        let t = uniform_line(&[2, 1, 3]);
        let p = char_poly_product_formula(&t).unwrap();
        assert_eq!(p.degree(), Some(24));
        let m = build_transition(&t, Model::Landslide).unwrap();
        assert_eq!(char_poly_exact(&m).unwrap(), p);
        assert_eq!(char_poly_line_formula(&t).unwrap(), p);
        assert!(char_poly_line_formula(&example_three_uniform()).is_err());
    }

    #[test]
    fn random_landslide_charpolys() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..4 {
            let t = random_unit_tree(&mut rng, 4, 3);
            let m = build_transition(&t, Model::Landslide).unwrap();
            assert_eq!(char_poly_exact(&m).unwrap(), char_poly_product_formula(&t).unwrap());
        }
    }

    #[test]
    fn numeric_eigenvalues_match() {
        let t = uniform_line(&[2, 1]);
        let m = build_transition(&t, Model::Landslide).unwrap();
        let ev = numeric_eigenvalues(&m);
        let mut expect: Vec<f64> = crate::monoid::subset_spectrum(&t)
            .unwrap()
            .into_iter()
            .flat_map(|(_, l, k)| std::iter::repeat(crate::rational::to_f64(&l)).take(k as usize))
            .collect();
        expect.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for ((re, im), e) in ev.iter().zip(&expect) {
            assert!((re - e).abs() < 1e-4 && im.abs() < 1e-4, "{re} {im} vs {e}");
        }
    }

    #[test]
    fn conjecture_reduces_to_unit_thresholds() {
        let c = conjectured_partition_1d(&[1, 1]);
        assert_eq!(c, BTreeMap::from([(1, 1), (2, 1)]));
        assert_eq!(conjectured_partition_1d(&[3]), BTreeMap::from([(1, 3)]));
        // k = 1 with T = (2, 1): subsets of {1, 2}.
        assert_eq!(
            conjectured_partition_1d(&[2, 1]),
            BTreeMap::from([(1, 2), (2, 1), (3, 2)])
        );
    }

    #[test]
    fn conjecture_small_cases_symbolic() {
        for th in [vec![1, 1], vec![2], vec![3], vec![2, 1]] {
            let r = verify_conjecture_1d(&th, ConjectureMethod::Symbolic).unwrap();
            assert!(r.matches, "{th:?}: {r:?}");
        }
        let r = verify_conjecture_1d(&[1, 1], ConjectureMethod::Auto).unwrap();
        assert!(r.k.is_none() && r.note.is_some());
    }

    #[test]
    fn modular_route_agrees_with_symbolic() {
        for th in [vec![1, 1], vec![2], vec![2, 1], vec![1, 2], vec![2, 2]] {
            let s = lcd_symbolic(&th).unwrap().0;
            let m = lcd_modular(&th, 9).unwrap();
            assert_eq!(s, m, "{th:?}");
        }
    }

    #[test]
    fn caps() {
        assert!(verify_conjecture_1d(&[1, 1, 1, 1, 1], ConjectureMethod::Auto).is_err());
        assert!(verify_conjecture_1d(&[4], ConjectureMethod::Auto).is_err());
    }

    fn cofactor3(m: &[Vec<MultiPoly>]) -> MultiPoly {
        let mut acc = MultiPoly::zero(m[0][0].nvars());
        for (p, sign) in [([0, 1, 2], 1), ([1, 2, 0], 1), ([2, 0, 1], 1), ([0, 2, 1], -1), ([2, 1, 0], -1), ([1, 0, 2], -1)] {
            let t = &(&m[0][p[0]] * &m[1][p[1]]) * &m[2][p[2]];
            acc = if sign == 1 { &acc + &t } else { &acc - &t };
        }
        acc
    }

    proptest! {
        #[test]
        fn bareiss_matches_cofactor_expansion(coeffs in proptest::collection::vec(-3i64..4, 27)) {
            let m: Vec<Vec<MultiPoly>> = coeffs
                .chunks(3)
                .map(|c| MultiPoly::linear(&[qi(c[0]), qi(c[1])]) + MultiPoly::constant(2, qi(c[2])))
                .collect::<Vec<_>>()
                .chunks(3)
                .map(|r| r.to_vec())
                .collect();
            prop_assert_eq!(bareiss_det(&m).unwrap(), cofactor3(&m));
        }

        #[test]
        fn gcd_divides_both(a in proptest::collection::vec(-3i64..4, 3), b in proptest::collection::vec(-3i64..4, 3), c in proptest::collection::vec(-3i64..4, 3)) {
            let lin = |v: &[i64]| MultiPoly::linear(&[qi(v[0]), qi(v[1])]) + MultiPoly::constant(2, qi(v[2]));
            let (pa, pb, pc) = (lin(&a), lin(&b), lin(&c));
            let x = &pa * &pc;
            let y = &pb * &pc;
            let g = poly_gcd(&x, &y);
            if !x.is_zero() {
                prop_assert!(x.div_exact(&g).is_some());
            }
            if !y.is_zero() {
                prop_assert!(y.div_exact(&g).is_some());
            }
            if !pc.is_zero() && !x.is_zero() && !y.is_zero() {
                prop_assert!(g.div_exact(&pc.monic()).is_some());
            }
        }
    }

    impl Add for MultiPoly {
        type Output = MultiPoly;
        fn add(self, o: MultiPoly) -> MultiPoly {
            &self + &o
        }
    }
}
