//! The state space of grain configurations, its mixed-radix ranking, and the
//! dominance (pre)orders built from the zeta-transform.
//!
//! Ranking is lexicographic in tree-file vertex order with the first vertex
//! as the most significant digit: for thresholds `T` the rank of `t` is
//! `sum_i t_i * prod_{j > i} (T_j + 1)`.

use std::fmt;
use std::str::FromStr;

use crate::arborescence::{Arborescence, VertexSet};
use crate::error::{Result, SandpileError};

/// Grain counts in vertex order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Configuration(pub Vec<u32>);

impl Configuration {
    pub fn zero(n: usize) -> Self {
        Configuration(vec![0; n])
    }

    pub fn grains(&self) -> &[u32] {
        &self.0
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(u32::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for Configuration {
    type Err = SandpileError;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim().is_empty() {
            return Ok(Configuration(Vec::new()));
        }
        s.split(',')
            .map(|p| {
                p.trim()
                    .parse::<u32>()
                    .map_err(|_| SandpileError::Parse(format!("bad grain count `{p}`")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Configuration)
    }
}

/// Index of a configuration under the mixed-radix ranking.
pub type StateIndex = u32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSpace {
    thresholds: Vec<u32>,
    strides: Vec<usize>,
    size: usize,
    above: Vec<VertexSet>,
}

impl StateSpace {
    /// Fails when the state count does not fit the addressable range.
    pub fn new(tree: &Arborescence) -> Result<Self> {
        let thresholds = tree.thresholds();
        let n = thresholds.len();
        let mut strides = vec![1usize; n];
        let mut size: usize = 1;
        for i in (0..n).rev() {
            strides[i] = size;
            size = size
                .checked_mul(thresholds[i] as usize + 1)
                .filter(|&s| s <= u32::MAX as usize)
                .ok_or(SandpileError::CapExceeded {
                    what: "state space",
                    limit: u32::MAX as usize,
                    found: usize::MAX,
                })?;
        }
        let above = (0..n).map(|v| tree.upset_of(v)).collect();
        Ok(StateSpace {
            thresholds,
            strides,
            size,
            above,
        })
    }

    /// Like [`StateSpace::new`] with an explicit cap on the number of states.
    pub fn with_cap(tree: &Arborescence, cap: usize) -> Result<Self> {
        let s = Self::new(tree)?;
        if s.size > cap {
            return Err(SandpileError::CapExceeded {
                what: "state space",
                limit: cap,
                found: s.size,
            });
        }
        Ok(s)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn vertex_count(&self) -> usize {
        self.thresholds.len()
    }

    pub fn thresholds(&self) -> &[u32] {
        &self.thresholds
    }

    pub fn stride(&self, v: usize) -> usize {
        self.strides[v]
    }

    pub fn check(&self, t: &Configuration) -> Result<()> {
        if t.0.len() != self.thresholds.len() {
            return Err(SandpileError::InvalidConfiguration(format!(
                "expected {} entries, got {}",
                self.thresholds.len(),
                t.0.len()
            )));
        }
        for (v, (&g, &cap)) in t.0.iter().zip(&self.thresholds).enumerate() {
            if g > cap {
                return Err(SandpileError::InvalidConfiguration(format!(
                    "vertex #{v} holds {g} grains, threshold is {cap}"
                )));
            }
        }
        Ok(())
    }

    pub fn rank(&self, t: &Configuration) -> Result<StateIndex> {
        self.check(t)?;
        Ok(self.rank_unchecked(&t.0))
    }

    pub fn rank_unchecked(&self, grains: &[u32]) -> StateIndex {
        grains
            .iter()
            .zip(&self.strides)
            .map(|(&g, &s)| g as usize * s)
            .sum::<usize>() as StateIndex
    }

    pub fn unrank(&self, i: usize) -> Result<Configuration> {
        if i >= self.size {
            return Err(SandpileError::InvalidConfiguration(format!(
                "index {i} out of range 0..{}",
                self.size
            )));
        }
        let mut out = vec![0; self.thresholds.len()];
        self.unrank_into(i, &mut out);
        Ok(Configuration(out))
    }

    pub fn unrank_into(&self, i: usize, out: &mut [u32]) {
        let mut rest = i;
        for (v, o) in out.iter_mut().enumerate() {
            let s = self.strides[v];
            *o = (rest / s) as u32;
            rest %= s;
        }
    }

    /// Grain count of vertex `v` in the state with index `i`.
    pub fn digit(&self, i: usize, v: usize) -> u32 {
        ((i / self.strides[v]) % (self.thresholds[v] as usize + 1)) as u32
    }

    pub fn iter(&self) -> impl Iterator<Item = Configuration> + '_ {
        (0..self.size).map(move |i| self.unrank(i).expect("in range"))
    }

    /// `zeta(t)_v = sum of t_w over w >= v`.
    pub fn zeta(&self, t: &Configuration) -> Vec<u32> {
        self.zeta_of(&t.0)
    }

    pub fn zeta_of(&self, grains: &[u32]) -> Vec<u32> {
        self.above
            .iter()
            .map(|set| set.iter().map(|w| grains[w]).sum())
            .collect()
    }

    /// True when `u` is closed upward in the vertex poset.
    pub fn is_upset(&self, u: VertexSet) -> bool {
        u.iter().all(|v| self.above[v].is_subset(u))
    }

    /// All upsets of the vertex poset (including the empty set and `V`).
    pub fn upsets(&self) -> Vec<VertexSet> {
        let n = self.vertex_count();
        assert!(n < 24, "upset enumeration is exponential");
        (0u64..1 << n)
            .map(VertexSet)
            .filter(|&s| self.is_upset(s))
            .collect()
    }

    /// `t ⊴_U t'`: zeta(t) <= zeta(t') at every vertex of the upset `U`.
    pub fn dominates(&self, t: &Configuration, t2: &Configuration, u: VertexSet) -> Result<bool> {
        self.check(t)?;
        self.check(t2)?;
        if !self.is_upset(u) {
            return Err(SandpileError::NotAnUpset(format!("{:#b}", u.0)));
        }
        let (a, b) = (self.zeta(t), self.zeta(t2));
        Ok(u.iter().all(|v| a[v] <= b[v]))
    }

    /// Dominance on precomputed zeta vectors (no checks).
    pub fn zeta_le(a: &[u32], b: &[u32], u: VertexSet) -> bool {
        u.iter().all(|v| a[v] <= b[v])
    }

    /// `t ≡_U t'`: the configurations agree on every vertex of `U`.
    pub fn equivalent_on(a: &[u32], b: &[u32], u: VertexSet) -> bool {
        u.iter().all(|v| a[v] == b[v])
    }

    pub fn all_vertices(&self) -> VertexSet {
        VertexSet::full(self.vertex_count())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{example_three_uniform, ten_vertex_tree, TEN_VERTEX_CONFIGURATION};
    use proptest::prelude::*;

    fn cfg(s: &str) -> Configuration {
        s.parse().unwrap()
    }

    #[test]
    fn sizes() {
        assert_eq!(StateSpace::new(&example_three_uniform()).unwrap().size(), 8);
        assert_eq!(StateSpace::new(&Arborescence::empty()).unwrap().size(), 1);
        assert_eq!(StateSpace::new(&ten_vertex_tree(2)).unwrap().size(), 59049);
        assert!(StateSpace::with_cap(&ten_vertex_tree(2), 1000).is_err());
    }

    #[test]
    fn lexicographic_ranks() {
        let s = StateSpace::new(&example_three_uniform()).unwrap();
        assert_eq!(s.rank(&cfg("0,0,0")).unwrap(), 0);
        assert_eq!(s.rank(&cfg("1,1,1")).unwrap(), 7);
        assert_eq!(s.rank(&cfg("0,1,1")).unwrap(), 3);
        assert!(s.rank(&cfg("2,0,0")).is_err());
        assert!(s.unrank(8).is_err());
        assert_eq!(s.unrank(6).unwrap().to_string(), "1,1,0");
    }

    #[test]
    fn zeta_values() {
        let t = ten_vertex_tree(2);
        let s = StateSpace::new(&t).unwrap();
        let c = Configuration(TEN_VERTEX_CONFIGURATION.to_vec());
        let z = s.zeta(&c);
        assert_eq!(z[t.root().unwrap()], 9);
        for v in 0..t.len() {
            if t.is_leaf(v) {
                assert_eq!(z[v], c.0[v]);
            }
        }
        assert!(s.zeta(&Configuration::zero(10)).iter().all(|&x| x == 0));
    }

    #[test]
    fn dominance_examples() {
        let s = StateSpace::new(&example_three_uniform()).unwrap();
        let all = s.all_vertices();
        let t = cfg("1,0,1");
        assert!(s.dominates(&t, &t, all).unwrap());
        assert!(s.dominates(&cfg("0,0,0"), &t, all).unwrap());
        // zeta(1,0,0) = (1,0,1), zeta(0,1,1) = (0,1,2): fails at a.
        assert_eq!(s.zeta(&cfg("1,0,0")), vec![1, 0, 1]);
        assert_eq!(s.zeta(&cfg("0,1,1")), vec![0, 1, 2]);
        assert!(!s.dominates(&cfg("1,0,0"), &cfg("0,1,1"), all).unwrap());
        // {r} alone is not an upset.
        assert!(s.dominates(&t, &t, VertexSet::singleton(2)).is_err());
        assert!(s.dominates(&t, &t, VertexSet::singleton(0)).is_ok());
    }

    #[test]
    fn upsets_of_example_three() {
        let s = StateSpace::new(&example_three_uniform()).unwrap();
        // {}, {a}, {b}, {a,b}, {a,b,r}
        assert_eq!(s.upsets().len(), 5);
    }

    #[test]
    fn full_dominance_is_a_partial_order() {
        let t = ten_vertex_tree(1);
        let s = StateSpace::new(&t).unwrap();
        let all = s.all_vertices();
        let z: Vec<Vec<u32>> = (0..s.size())
            .map(|i| s.zeta(&s.unrank(i).unwrap()))
            .collect();
        for i in (0..s.size()).step_by(7) {
            for j in (0..s.size()).step_by(5) {
                if i != j && StateSpace::zeta_le(&z[i], &z[j], all) {
                    assert!(!StateSpace::zeta_le(&z[j], &z[i], all));
                }
            }
        }
    }

    proptest! {
        #[test]
        fn rank_unrank_bijection(th in proptest::collection::vec(1u32..4, 1..6), seed in 0usize..10_000) {
            let tree = Arborescence::line(
                &th,
                crate::rational::q(1, 2),
                &vec![crate::rational::q(1, 2); th.len()],
            ).unwrap();
            let s = StateSpace::new(&tree).unwrap();
            let i = seed % s.size();
            let c = s.unrank(i).unwrap();
            prop_assert_eq!(s.rank(&c).unwrap() as usize, i);
            prop_assert_eq!(c.to_string().parse::<Configuration>().unwrap(), c.clone());
            // Equivalence on U is agreement on U.
            let u = s.all_vertices();
            prop_assert!(StateSpace::equivalent_on(&c.0, &c.0, u));
        }
    }
}
