//! Transition matrices, stationary distributions and partition functions.

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use rayon::prelude::*;

use crate::arborescence::Arborescence;
use crate::configuration::StateSpace;
use crate::error::{Result, SandpileError};
use crate::linalg::{primes, solve_mod, Crt, Modulus, SparseSystem};
use crate::operators::{image_table, Generator, OpKind};
use crate::rational::{common_denominator, pow, Q};

/// Largest state space handled by the exact stationary solver.
pub const DEFAULT_EXACT_CAP: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Model {
    Trickle,
    Landslide,
}

impl Model {
    pub fn topple(self) -> OpKind {
        match self {
            Model::Trickle => OpKind::Trickle,
            Model::Landslide => OpKind::Landslide,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Model::Trickle => "trickle",
            Model::Landslide => "landslide",
        }
    }
}

/// Generators with nonzero rate and their rates: sources first, in vertex
/// order, then topples.
pub fn weighted_generators(tree: &Arborescence, model: Model) -> Vec<(Generator, Q)> {
    let n = tree.len();
    let src = (0..n)
        .filter(|&v| !tree.y(v).is_zero())
        .map(|v| (Generator::new(OpKind::Source, v), tree.y(v).clone()));
    let top = (0..n)
        .filter(|&v| !tree.x(v).is_zero())
        .map(|v| (Generator::new(model.topple(), v), tree.x(v).clone()));
    src.chain(top).collect()
}

/// Exact square matrix stored as integer numerators over one common
/// denominator, column by column. `M[i][j]` is the probability of moving
/// from state `j` to state `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionMatrix {
    pub model: Option<Model>,
    denominator: BigInt,
    /// Sorted by row; no zero entries.
    columns: Vec<Vec<(u32, BigInt)>>,
}

impl TransitionMatrix {
    pub fn from_dense(rows: &[Vec<Q>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(SandpileError::Dimension("matrix is not square".into()));
        }
        let d = common_denominator(rows.iter().flatten());
        let columns = (0..n)
            .map(|j| {
                (0..n)
                    .filter(|&i| !rows[i][j].is_zero())
                    .map(|i| {
                        let x = &rows[i][j] * Q::from_integer(d.clone());
                        (i as u32, x.to_integer())
                    })
                    .collect()
            })
            .collect();
        Ok(TransitionMatrix {
            model: None,
            denominator: d,
            columns,
        })
    }

    pub fn size(&self) -> usize {
        self.columns.len()
    }

    pub fn denominator(&self) -> &BigInt {
        &self.denominator
    }

    /// Integer numerators of column `j`.
    pub fn column(&self, j: usize) -> &[(u32, BigInt)] {
        &self.columns[j]
    }

    pub fn entry(&self, i: usize, j: usize) -> Q {
        match self.columns[j].binary_search_by_key(&(i as u32), |e| e.0) {
            Ok(k) => Q::new(self.columns[j][k].1.clone(), self.denominator.clone()),
            Err(_) => Q::zero(),
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<Q>> {
        let n = self.size();
        let mut out = vec![vec![Q::zero(); n]; n];
        for (j, col) in self.columns.iter().enumerate() {
            for (i, x) in col {
                out[*i as usize][j] = Q::new(x.clone(), self.denominator.clone());
            }
        }
        out
    }

    pub fn column_sums(&self) -> Vec<Q> {
        self.columns
            .iter()
            .map(|c| {
                let s: BigInt = c.iter().map(|e| &e.1).sum();
                Q::new(s, self.denominator.clone())
            })
            .collect()
    }

    pub fn is_column_stochastic(&self) -> bool {
        self.columns.iter().all(|c| {
            c.iter().all(|e| e.1.is_positive())
                && c.iter().map(|e| &e.1).sum::<BigInt>() == self.denominator
        })
    }

    /// `M v` on exact vectors.
    pub fn apply(&self, v: &[Q]) -> Vec<Q> {
        let mut out = vec![BigInt::zero(); self.size()];
        // Accumulate over a common denominator of v for speed.
        let d = common_denominator(v.iter());
        let w: Vec<BigInt> = v
            .iter()
            .map(|x| (x * Q::from_integer(d.clone())).to_integer())
            .collect();
        for (j, col) in self.columns.iter().enumerate() {
            if w[j].is_zero() {
                continue;
            }
            for (i, a) in col {
                out[*i as usize] += a * &w[j];
            }
        }
        let den = &self.denominator * d;
        out.into_iter().map(|x| Q::new(x, den.clone())).collect()
    }

    /// Support digraph as adjacency lists `j -> i` for `M[i][j] != 0`.
    pub fn successors(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        self.columns[j].iter().map(|e| e.0 as usize)
    }
}

/// `M = Σ_v y_v ρ(σ_v) + Σ_v x_v ρ(θ_v or τ_v)`. Rates must sum to one.
pub fn build_transition(tree: &Arborescence, model: Model) -> Result<TransitionMatrix> {
    build_transition_capped(tree, model, crate::operators::DEFAULT_TABLE_CAP)
}

pub fn build_transition_capped(tree: &Arborescence, model: Model, cap: usize) -> Result<TransitionMatrix> {
    let total = tree.total_rate();
    if total != Q::one() {
        return Err(SandpileError::Validation(vec![format!(
            "rates sum to {total} (must be 1)"
        )]));
    }
    if tree.vertices().iter().any(|v| v.x.is_negative() || v.y.is_negative()) {
        return Err(SandpileError::Validation(vec!["negative rate".into()]));
    }
    let space = StateSpace::with_cap(tree, cap)?;
    let gens = weighted_generators(tree, model);
    let d = common_denominator(gens.iter().map(|g| &g.1));
    let weights: Vec<BigInt> = gens
        .iter()
        .map(|(_, r)| (r * Q::from_integer(d.clone())).to_integer())
        .collect();
    let tables = gens
        .iter()
        .map(|(g, _)| image_table(tree, &space, *g))
        .collect::<Result<Vec<_>>>()?;
    let columns = (0..space.size())
        .into_par_iter()
        .map(|j| {
            let mut col: Vec<(u32, BigInt)> = tables
                .iter()
                .zip(&weights)
                .map(|(t, w)| (t[j], w.clone()))
                .collect();
            col.sort_by_key(|e| e.0);
            let mut merged: Vec<(u32, BigInt)> = Vec::with_capacity(col.len());
            for (i, w) in col {
                match merged.last_mut() {
                    Some(last) if last.0 == i => last.1 += w,
                    _ => merged.push((i, w)),
                }
            }
            merged
        })
        .collect();
    Ok(TransitionMatrix {
        model: Some(model),
        denominator: d,
        columns,
    })
}

fn reach(n: usize, adj: &[Vec<usize>]) -> Vec<bool> {
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen
}

/// Strongly connected and aperiodic support digraph.
pub fn is_ergodic(m: &TransitionMatrix) -> bool {
    let n = m.size();
    if n == 0 {
        return false;
    }
    let fwd: Vec<Vec<usize>> = (0..n).map(|j| m.successors(j).collect()).collect();
    let mut bwd = vec![Vec::new(); n];
    for (j, succ) in fwd.iter().enumerate() {
        for &i in succ {
            bwd[i].push(j);
        }
    }
    if !reach(n, &fwd).iter().all(|&b| b) || !reach(n, &bwd).iter().all(|&b| b) {
        return false;
    }
    // Period = gcd of level[u] + 1 - level[v] over all edges of a BFS tree labelling.
    let mut level = vec![usize::MAX; n];
    level[0] = 0;
    let mut queue = std::collections::VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        for &v in &fwd[u] {
            if level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut g: i64 = 0;
    for (u, succ) in fwd.iter().enumerate() {
        for &v in succ {
            let d = (level[u] as i64 + 1 - level[v] as i64).abs();
            g = num_integer::gcd(g, d);
        }
    }
    g == 1
}

pub fn stationary_exact(m: &TransitionMatrix) -> Result<Vec<Q>> {
    stationary_exact_capped(m, DEFAULT_EXACT_CAP)
}

/// Unique solution of `(M − I)π = 0`, `Σπ = 1`.
///
/// The integer system `D(M − I)` with its first row replaced by ones is
/// solved modulo successive primes; the CRT image is lifted to rationals and
/// accepted only once it satisfies the system exactly.
pub fn stationary_exact_capped(m: &TransitionMatrix, cap: usize) -> Result<Vec<Q>> {
    let n = m.size();
    if n > cap {
        return Err(SandpileError::CapExceeded {
            what: "exact solver state space",
            limit: cap,
            found: n,
        });
    }
    if n == 0 {
        return Err(SandpileError::Dimension("empty matrix".into()));
    }
    let d = m.denominator();
    let mut rows: Vec<Vec<(u32, BigInt)>> = vec![Vec::new(); n];
    for j in 0..n {
        let mut diag_seen = false;
        for (i, a) in m.column(j) {
            let i = *i as usize;
            let mut v = a.clone();
            if i == j {
                v -= d;
                diag_seen = true;
            }
            if i != 0 && !v.is_zero() {
                rows[i].push((j as u32, v));
            }
        }
        if !diag_seen && j != 0 {
            rows[j].push((j as u32, -d.clone()));
        }
    }
    rows[0] = (0..n as u32).map(|j| (j, BigInt::one())).collect();
    for r in rows.iter_mut() {
        r.sort_by_key(|e| e.0);
    }
    let sys = SparseSystem { n, rows };
    let mut rhs = vec![0u64; n];
    rhs[0] = 1;
    let mut crt = Crt::new(n);
    let mut singular = 0;
    let mut used = 0;
    for p in primes() {
        let md = Modulus(p);
        if md.reduce(d) == 0 {
            continue;
        }
        match solve_mod(&sys, &rhs, md) {
            None => {
                singular += 1;
                if singular >= 3 && used == 0 {
                    return Err(SandpileError::NonErgodic(
                        "stationary vector is not unique".into(),
                    ));
                }
                continue;
            }
            Some(x) => {
                crt.add(md, &x);
                used += 1;
            }
        }
        if let Some(pi) = crt.rationals() {
            if is_stationary(m, &pi) {
                return Ok(pi);
            }
        }
        if used > 100_000 {
            break;
        }
    }
    Err(SandpileError::Internal("stationary solver did not converge".into()))
}

/// Exact check of `Mπ = π` and `Σπ = 1`.
pub fn is_stationary(m: &TransitionMatrix, pi: &[Q]) -> bool {
    if pi.len() != m.size() || pi.iter().sum::<Q>() != Q::one() {
        return false;
    }
    master_equation_residual(m, pi).is_zero()
}

/// Max norm of `Mπ − π`.
pub fn master_equation_residual(m: &TransitionMatrix, dist: &[Q]) -> Q {
    m.apply(dist)
        .iter()
        .zip(dist)
        .map(|(a, b)| (a - b).abs())
        .max()
        .unwrap_or_else(Q::zero)
}

/// Per-vertex trickle factors `ρ_v(h) ∝ Y_v^h x_v^{T_v − h}`.
pub fn trickle_factors(tree: &Arborescence) -> Result<Vec<Vec<Q>>> {
    (0..tree.len())
        .map(|v| {
            let y = tree.cumulative_source_rate(v)?;
            let x = tree.x(v).clone();
            let t = tree.threshold(v);
            let terms: Vec<Q> = (0..=t).map(|h| pow(&y, h) * pow(&x, t - h)).collect();
            let z: Q = terms.iter().sum();
            if z.is_zero() {
                return Err(SandpileError::HypothesisUnmet {
                    result: "trickle product form",
                    detail: format!(
                        "vertex `{}` has zero topple rate and zero source rate above it",
                        tree.id(v)
                    ),
                });
            }
            Ok(terms.into_iter().map(|a| a / &z).collect())
        })
        .collect()
}

fn check_landslide_hypothesis(tree: &Arborescence) -> Result<()> {
    let root = tree.root();
    for v in 0..tree.len() {
        if Some(v) != root && tree.threshold(v) != 1 {
            return Err(SandpileError::HypothesisUnmet {
                result: "landslide product form",
                detail: format!(
                    "vertex `{}` has threshold {}; every vertex other than the root must have threshold 1",
                    tree.id(v),
                    tree.threshold(v)
                ),
            });
        }
    }
    Ok(())
}

/// Per-vertex landslide factors
/// `μ_v(h) = Y^h x / (Y + x)^{h+1}` for `h < T_v` and `(Y / (Y + x))^{T_v}` at `T_v`.
pub fn landslide_factors(tree: &Arborescence) -> Result<Vec<Vec<Q>>> {
    check_landslide_hypothesis(tree)?;
    (0..tree.len())
        .map(|v| {
            let y = tree.cumulative_source_rate(v)?;
            let x = tree.x(v).clone();
            let s = &y + &x;
            if s.is_zero() {
                return Err(SandpileError::HypothesisUnmet {
                    result: "landslide product form",
                    detail: format!("vertex `{}` has Y + x = 0", tree.id(v)),
                });
            }
            let t = tree.threshold(v);
            let mut out: Vec<Q> = (0..t)
                .map(|h| pow(&y, h) * &x / pow(&s, h + 1))
                .collect();
            out.push(pow(&(&y / &s), t));
            Ok(out)
        })
        .collect()
}

fn product_measure(tree: &Arborescence, factors: &[Vec<Q>], cap: usize) -> Result<Vec<Q>> {
    let space = StateSpace::with_cap(tree, cap)?;
    Ok((0..space.size())
        .into_par_iter()
        .map(|i| {
            let mut g = vec![0; tree.len()];
            space.unrank_into(i, &mut g);
            g.iter()
                .enumerate()
                .fold(Q::one(), |acc, (v, &h)| acc * &factors[v][h as usize])
        })
        .collect())
}

pub fn stationary_product_trickle(tree: &Arborescence) -> Result<Vec<Q>> {
    product_measure(tree, &trickle_factors(tree)?, crate::operators::DEFAULT_TABLE_CAP)
}

pub fn stationary_product_landslide(tree: &Arborescence) -> Result<Vec<Q>> {
    product_measure(tree, &landslide_factors(tree)?, crate::operators::DEFAULT_TABLE_CAP)
}

pub fn stationary_product(tree: &Arborescence, model: Model) -> Result<Vec<Q>> {
    match model {
        Model::Trickle => stationary_product_trickle(tree),
        Model::Landslide => stationary_product_landslide(tree),
    }
}

/// `Z_θ = Π_v Σ_{i=0}^{T_v} Y_v^i x_v^{T_v − i}`.
pub fn partition_function_trickle(tree: &Arborescence) -> Result<Q> {
    (0..tree.len()).try_fold(Q::one(), |acc, v| {
        let y = tree.cumulative_source_rate(v)?;
        let x = tree.x(v);
        let t = tree.threshold(v);
        let s: Q = (0..=t).map(|i| pow(&y, i) * pow(x, t - i)).sum();
        Ok(acc * s)
    })
}

/// `Z_τ = Π_v (Y_v + x_v)^{T_v}`.
pub fn partition_function_landslide(tree: &Arborescence) -> Result<Q> {
    check_landslide_hypothesis(tree)?;
    (0..tree.len()).try_fold(Q::one(), |acc, v| {
        let y = tree.cumulative_source_rate(v)?;
        Ok(acc * pow(&(y + tree.x(v)), tree.threshold(v)))
    })
}

pub fn partition_function(tree: &Arborescence, model: Model) -> Result<Q> {
    match model {
        Model::Trickle => partition_function_trickle(tree),
        Model::Landslide => partition_function_landslide(tree),
    }
}

/// The chain on `∇_ℓ T` whose stationary law is the other factor of the
/// product measure: the leaf's source rate moves to `s(ℓ)` and every rate is
/// divided by `total − x_ℓ`.
pub fn derived_chain(tree: &Arborescence, leaf: usize) -> Result<Arborescence> {
    let reduced = tree.delete_leaf(leaf)?;
    let scale = tree.total_rate() - tree.x(leaf);
    if scale.is_zero() {
        return Err(SandpileError::HypothesisUnmet {
            result: "stationary recursion",
            detail: "all rate sits on the deleted leaf's topple".into(),
        });
    }
    let mut x = Vec::with_capacity(reduced.len());
    let mut y = Vec::with_capacity(reduced.len());
    for v in (0..tree.len()).filter(|&v| v != leaf) {
        x.push(tree.x(v) / &scale);
        y.push(tree.y(v) / &scale);
    }
    if let Some(s) = tree.vertex(leaf).parent {
        let s = Arborescence::index_after_delete(leaf, s);
        y[s] += tree.y(leaf) / &scale;
    }
    reduced.with_rates(x, y)
}

/// The winning-streak factor `π(h) ∝ y_ℓ^h x_ℓ^{T_ℓ − h}`.
pub fn winning_streak(tree: &Arborescence, leaf: usize) -> Vec<Q> {
    let (y, x, t) = (tree.y(leaf), tree.x(leaf), tree.threshold(leaf));
    let terms: Vec<Q> = (0..=t).map(|h| pow(y, h) * pow(x, t - h)).collect();
    let z: Q = terms.iter().sum();
    terms.into_iter().map(|a| a / &z).collect()
}

/// Checks that `π × P'` is stationary for the full chain, `P'` being the
/// exact stationary law of the derived chain.
pub fn check_stationary_recursion(tree: &Arborescence, leaf: usize, model: Model) -> Result<bool> {
    if leaf >= tree.len() {
        return Err(SandpileError::UnknownVertex(format!("#{leaf}")));
    }
    if !tree.is_leaf(leaf) {
        return Err(SandpileError::NotALeaf(tree.id(leaf).to_string()));
    }
    if model == Model::Landslide && tree.threshold(leaf) != 1 {
        return Err(SandpileError::HypothesisUnmet {
            result: "stationary recursion",
            detail: format!(
                "landslide recursion needs threshold 1 at the leaf `{}`",
                tree.id(leaf)
            ),
        });
    }
    let derived = derived_chain(tree, leaf)?;
    let p_rest = if derived.is_empty() {
        vec![Q::one()]
    } else {
        stationary_exact(&build_transition(&derived, model)?)?
    };
    let pi = winning_streak(tree, leaf);
    let space = StateSpace::new(tree)?;
    let rest_space = StateSpace::new(&derived)?;
    let mut g = vec![0; tree.len()];
    let joint: Vec<Q> = (0..space.size())
        .map(|i| {
            space.unrank_into(i, &mut g);
            let mut rest = g.clone();
            let h = rest.remove(leaf);
            &pi[h as usize] * &p_rest[rest_space.rank_unchecked(&rest) as usize]
        })
        .collect();
    Ok(is_stationary(&build_transition(tree, model)?, &joint))
}
