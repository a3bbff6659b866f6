//! Distance to stationarity: exact powering, the Chernoff-type bound and its
//! certified rational upper estimate, Monte Carlo estimates, and the
//! deterministic-upset statistic of the coupling argument.

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::arborescence::{Arborescence, VertexSet};
use crate::chain::{weighted_generators, Model, TransitionMatrix};
use crate::configuration::StateSpace;
use crate::error::{Result, SandpileError};
use crate::monoid::MonoidTable;
use crate::operators::{image_table, OpKind};
use crate::rational::{common_denominator, to_f64, Q};

/// Largest state space for exact distance tables.
pub const DEFAULT_DISTANCE_CAP: usize = 1024;

/// Identifier of the trajectory generator recorded in reports.
pub const RNG_ALGORITHM: &str = "chacha8/splitmix64-counter";

/// Exact total-variation distances `‖M^k δ_j − π‖` for every initial state
/// `j` and every `k` in `0..=k_max`; `out[k][j]`.
pub fn exact_distances(m: &TransitionMatrix, pi: &[Q], k_max: usize) -> Result<Vec<Vec<Q>>> {
    exact_distances_capped(m, pi, k_max, DEFAULT_DISTANCE_CAP)
}

pub fn exact_distances_capped(m: &TransitionMatrix, pi: &[Q], k_max: usize, cap: usize) -> Result<Vec<Vec<Q>>> {
    let n = m.size();
    if n > cap {
        return Err(SandpileError::CapExceeded {
            what: "exact distance state space",
            limit: cap,
            found: n,
        });
    }
    if pi.len() != n {
        return Err(SandpileError::Dimension("distribution length".into()));
    }
    let l = common_denominator(pi.iter());
    let w: Vec<BigInt> = pi.iter().map(|p| (p * Q::from_integer(l.clone())).to_integer()).collect();
    let d = m.denominator().clone();
    // cols[j] = A^k e_j, with M^k = A^k / D^k.
    let mut cols: Vec<Vec<BigInt>> = (0..n)
        .map(|j| {
            let mut c = vec![BigInt::zero(); n];
            c[j] = BigInt::one();
            c
        })
        .collect();
    let mut dk = BigInt::one();
    let mut out = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let row: Vec<Q> = cols
            .par_iter()
            .map(|c| {
                let s: BigInt = c
                    .iter()
                    .zip(&w)
                    .map(|(x, wi)| (x * &l - wi * &dk).abs())
                    .sum();
                Q::new(s, BigInt::from(2) * &l * &dk)
            })
            .collect();
        out.push(row);
        if k == k_max {
            break;
        }
        cols = cols
            .par_iter()
            .map(|c| {
                let mut next = vec![BigInt::zero(); n];
                for (j, x) in c.iter().enumerate() {
                    if x.is_zero() {
                        continue;
                    }
                    for (i, a) in m.column(j) {
                        next[*i as usize] += a * x;
                    }
                }
                next
            })
            .collect();
        dk *= &d;
    }
    Ok(out)
}

/// `‖M^k δ_initial − π‖`.
pub fn exact_distance(m: &TransitionMatrix, pi: &[Q], initial: usize, k: usize) -> Result<Q> {
    if initial >= m.size() {
        return Err(SandpileError::InvalidConfiguration(format!("state index {initial}")));
    }
    Ok(exact_distances(m, pi, k)?.pop().expect("k + 1 rows")[initial].clone())
}

/// `p_x = min_v x_v` and `n = |V|`.
fn bound_parameters(tree: &Arborescence) -> Result<(Q, usize)> {
    let px = tree
        .min_topple_rate()
        .ok_or(SandpileError::EmptyTree("topple rates"))?;
    if !px.is_positive() {
        return Err(SandpileError::HypothesisUnmet {
            result: "convergence bound",
            detail: "every topple rate must be positive".into(),
        });
    }
    Ok((px, tree.len()))
}

/// First step at which the bound applies, `⌈(n − 1)/p_x⌉`.
pub fn bound_threshold(tree: &Arborescence) -> Result<u64> {
    let (px, n) = bound_parameters(tree)?;
    let t = Q::from_integer(BigInt::from(n as u64 - 1)) / px;
    Ok(t.ceil().to_integer().to_u64().unwrap_or(u64::MAX))
}

/// Exponent `z = (k p_x − (n − 1))² / (2 k p_x)`, or `None` below the threshold.
pub fn chernoff_exponent(tree: &Arborescence, k: u64) -> Result<Option<Q>> {
    let (px, n) = bound_parameters(tree)?;
    let kp = Q::from_integer(BigInt::from(k)) * &px;
    let excess = &kp - Q::from_integer(BigInt::from(n as u64 - 1));
    if excess.is_negative() || k == 0 {
        return Ok(None);
    }
    Ok(Some(&excess * &excess / (Q::from_integer(BigInt::from(2)) * kp)))
}

/// `exp(−z)` as a float, or `None` when the bound does not apply.
pub fn chernoff_bound(tree: &Arborescence, k: u64) -> Result<Option<f64>> {
    Ok(chernoff_exponent(tree, k)?.map(|z| (-to_f64(&z)).exp()))
}

/// Rational upper bound on `exp(−z)` for `z ≥ 0`: `1 / Σ_{i ≤ N} z^i / i!`,
/// valid because every omitted term of the series for `exp(z)` is positive.
pub fn certified_exp_neg_upper(z: &Q) -> Q {
    assert!(!z.is_negative());
    let terms = 8 + 2 * z.ceil().to_integer().to_u64().unwrap_or(0);
    let mut term = Q::one();
    let mut sum = Q::one();
    for i in 1..=terms {
        term = term * z / Q::from_integer(BigInt::from(i));
        sum += &term;
    }
    Q::one() / sum
}

/// Certified rational upper bound on the Chernoff bound at step `k`.
pub fn chernoff_upper(tree: &Arborescence, k: u64) -> Result<Option<Q>> {
    Ok(chernoff_exponent(tree, k)?.map(|z| certified_exp_neg_upper(&z)))
}

/// `2(n + c − 1)/p_x`.
pub fn mixing_time_bound(tree: &Arborescence, c: &Q) -> Result<Q> {
    let (px, n) = bound_parameters(tree)?;
    Ok(Q::from_integer(BigInt::from(2)) * (Q::from_integer(BigInt::from(n as u64)) + c - Q::one()) / px)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trajectory `i` under master seed `seed`.
pub fn trajectory_seed(seed: u64, i: u64) -> u64 {
    splitmix64(seed ^ splitmix64(i))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloReport {
    pub steps: usize,
    pub trials: u64,
    pub seed: u64,
    pub algorithm: &'static str,
    /// Visits per ranked state after `steps` steps.
    pub counts: Vec<u64>,
    pub tv: Option<f64>,
}

/// Empirical law after `k` steps from `initial`, one independently seeded
/// trajectory per trial.
pub fn monte_carlo(
    tree: &Arborescence,
    model: Model,
    initial: usize,
    k: usize,
    trials: u64,
    seed: u64,
    pi: Option<&[Q]>,
) -> Result<MonteCarloReport> {
    if trials == 0 {
        return Err(SandpileError::InvalidConfiguration("at least one trial".into()));
    }
    let space = StateSpace::new(tree)?;
    if initial >= space.size() {
        return Err(SandpileError::InvalidConfiguration(format!("state index {initial}")));
    }
    let gens = weighted_generators(tree, model);
    let d = common_denominator(gens.iter().map(|g| &g.1));
    let weights: Vec<u64> = gens
        .iter()
        .map(|(_, r)| {
            (r * Q::from_integer(d.clone()))
                .to_integer()
                .to_u64()
                .ok_or_else(|| SandpileError::Internal("rate weight exceeds 64 bits".into()))
        })
        .collect::<Result<_>>()?;
    let tables = gens
        .iter()
        .map(|(g, _)| image_table(tree, &space, *g))
        .collect::<Result<Vec<_>>>()?;
    let dist = WeightedIndex::new(&weights).map_err(|e| SandpileError::Internal(e.to_string()))?;
    let finals: Vec<u32> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(trajectory_seed(seed, i));
            let mut s = initial as u32;
            for _ in 0..k {
                s = tables[dist.sample(&mut rng)][s as usize];
            }
            s
        })
        .collect();
    let mut counts = vec![0u64; space.size()];
    for s in finals {
        counts[s as usize] += 1;
    }
    let tv = pi.map(|pi| {
        0.5 * counts
            .iter()
            .zip(pi)
            .map(|(&c, p)| (c as f64 / trials as f64 - to_f64(p)).abs())
            .sum::<f64>()
    });
    Ok(MonteCarloReport {
        steps: k,
        trials,
        seed,
        algorithm: RNG_ALGORITHM,
        counts,
        tv,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub k: u64,
    pub exact_tv: Option<String>,
    pub mc_tv: Option<f64>,
    pub chernoff: Option<f64>,
    pub applicable: bool,
}

/// Projections of every state onto every upset, for the statistic `u(m)`.
#[derive(Debug, Clone)]
pub struct UpsetOracle {
    pub upsets: Vec<VertexSet>,
    keys: Vec<Vec<u32>>,
    size: usize,
}

impl UpsetOracle {
    pub fn new(space: &StateSpace) -> Self {
        let mut upsets = space.upsets();
        upsets.sort_by_key(|u| (u.len(), u.0));
        let keys = upsets
            .iter()
            .map(|u| {
                (0..space.size())
                    .map(|i| u.iter().map(|v| space.digit(i, v) as usize * space.stride(v)).sum::<usize>() as u32)
                    .collect()
            })
            .collect();
        UpsetOracle {
            upsets,
            keys,
            size: space.size(),
        }
    }

    /// Whether `m t` depends only on `t` restricted to `upsets[u]`.
    pub fn is_deterministic(&self, m: &[u32], u: usize) -> bool {
        let mut seen = vec![u32::MAX; self.size];
        for (t, &key) in self.keys[u].iter().enumerate() {
            let slot = &mut seen[key as usize];
            if *slot == u32::MAX {
                *slot = m[t];
            } else if *slot != m[t] {
                return false;
            }
        }
        true
    }

    /// The minimum deterministic upset `U(m)`.
    pub fn minimum(&self, m: &[u32]) -> Result<VertexSet> {
        let det: Vec<VertexSet> = (0..self.upsets.len())
            .filter(|&u| self.is_deterministic(m, u))
            .map(|u| self.upsets[u])
            .collect();
        let first = *det.first().ok_or_else(|| SandpileError::Internal("V is always deterministic".into()))?;
        if det.iter().any(|u| !first.is_subset(*u)) {
            return Err(SandpileError::Internal(
                "deterministic upsets have no minimum".into(),
            ));
        }
        Ok(first)
    }
}

/// `U(m)` and `u(m) = |U(m)|` by brute force over all upsets.
pub fn deterministic_upset(space: &StateSpace, m: &[u32]) -> Result<(VertexSet, usize)> {
    if space.size() > 1 << 16 {
        return Err(SandpileError::CapExceeded {
            what: "upset brute force state space",
            limit: 1 << 16,
            found: space.size(),
        });
    }
    let u = UpsetOracle::new(space).minimum(m)?;
    Ok((u, u.len()))
}

/// Outcome of checking the deterministic-upset statistic on a monoid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UpsetClaims {
    pub elements: usize,
    pub pairs: u64,
    /// Sampled `(m, m')` with `u(mm') > u(m)`.
    pub monotone_violations: u64,
    /// `(m, v)` with `v` minimal in `U(m)` and `τ_v` a generator.
    pub minimal_pairs: u64,
    /// Those with `u(mτ_v) ≥ u(m)`.
    pub strict_violations: u64,
}

/// `u(mm′) ≤ u(m)` on `pairs` sampled pairs and `u(mτ_v) < u(m)` for every
/// element and every landslide generator at a minimal vertex of `U(m)`.
pub fn upset_claims(
    tree: &Arborescence,
    space: &StateSpace,
    m: &MonoidTable,
    pairs: u64,
    seed: u64,
) -> Result<UpsetClaims> {
    let oracle = UpsetOracle::new(space);
    let stats: Vec<VertexSet> = (0..m.len() as u32)
        .into_par_iter()
        .map(|e| oracle.minimum(m.element(e)))
        .collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut monotone_violations = 0;
    for _ in 0..pairs {
        let a = rng.gen_range(0..m.len());
        let b = rng.gen_range(0..m.len()) as u32;
        let ab = m.multiply(a as u32, b) as usize;
        if stats[ab].len() > stats[a].len() {
            monotone_violations += 1;
        }
    }
    let taus: Vec<usize> = (0..m.generators.len())
        .filter(|&g| m.generators[g].kind == OpKind::Landslide)
        .collect();
    let (mut minimal_pairs, mut strict_violations) = (0, 0);
    for (e, u) in stats.iter().enumerate() {
        for &g in &taus {
            let v = m.generators[g].vertex;
            if u.contains(v) && u.iter().all(|w| w == v || !tree.le(w, v)) {
                minimal_pairs += 1;
                if stats[m.right[e][g] as usize].len() >= u.len() {
                    strict_violations += 1;
                }
            }
        }
    }
    Ok(UpsetClaims {
        elements: m.len(),
        pairs,
        monotone_violations,
        minimal_pairs,
        strict_violations,
    })
}
