//! Transformation monoids generated by sandpile operators, their idempotent
//! lattices, and the spectrum of the associated random walk.

use std::collections::hash_map::DefaultHasher;
use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};

use num_traits::{One, Zero};
use serde::Serialize;

use crate::arborescence::{Arborescence, VertexSet};
use crate::chain::{weighted_generators, Model};
use crate::configuration::StateSpace;
use crate::error::{Result, SandpileError};
use crate::operators::{compose, identity_table, image_table, is_constant, Generator, GeneratorSet, OpKind, Table};
use crate::rational::Q;

pub const DEFAULT_MONOID_CAP: usize = 200_000;

/// Largest monoid on which the literal `aM = bM` oracle runs.
pub const ORACLE_CAP: usize = 2000;

/// Element index inside a [`MonoidTable`]; 0 is the identity.
pub type Elem = u32;

fn hash_table(t: &[u32]) -> u64 {
    let mut h = DefaultHasher::new();
    t.hash(&mut h);
    h.finish()
}

/// All elements of a finitely generated transformation monoid, found by
/// breadth-first search over right multiplication.
#[derive(Debug, Clone)]
pub struct MonoidTable {
    pub degree: usize,
    pub generator_names: Vec<String>,
    pub generators: Vec<Generator>,
    pub generator_tables: Vec<Table>,
    arena: Vec<u32>,
    /// Shortlex-minimal word per element; the word `g_1 … g_k` denotes
    /// `g_1 ∘ … ∘ g_k`, so `g_k` acts first.
    pub words: Vec<Vec<u16>>,
    index: HashMap<u64, Vec<Elem>>,
    /// `right[e][g]` is `e · g`.
    pub right: Vec<Vec<Elem>>,
}

impl MonoidTable {
    /// Closure of `tables` under composition; fails past `cap` elements.
    pub fn generate_from_tables(names: Vec<String>, tables: Vec<Table>, degree: usize, cap: usize) -> Result<Self> {
        if tables.iter().any(|t| t.len() != degree) || names.len() != tables.len() {
            return Err(SandpileError::Dimension("generator tables disagree in size".into()));
        }
        let mut m = MonoidTable {
            degree,
            generator_names: names,
            generators: Vec::new(),
            generator_tables: tables,
            arena: Vec::new(),
            words: Vec::new(),
            index: HashMap::new(),
            right: Vec::new(),
        };
        m.insert(identity_table(degree), Vec::new());
        let mut queue = VecDeque::from([0 as Elem]);
        while let Some(e) = queue.pop_front() {
            let mut row = Vec::with_capacity(m.generator_tables.len());
            for g in 0..m.generator_tables.len() {
                let prod = compose(m.element(e), &m.generator_tables[g]);
                let idx = match m.lookup(&prod) {
                    Some(i) => i,
                    None => {
                        if m.len() >= cap {
                            return Err(SandpileError::CapExceeded {
                                what: "monoid",
                                limit: cap,
                                found: m.len(),
                            });
                        }
                        let mut w = m.words[e as usize].clone();
                        w.push(g as u16);
                        let i = m.insert(prod, w);
                        queue.push_back(i);
                        i
                    }
                };
                row.push(idx);
            }
            m.right.push(row);
        }
        Ok(m)
    }

    /// Monoid generated by a named generator set on `tree`.
    pub fn generate(tree: &Arborescence, set: GeneratorSet, cap: usize) -> Result<Self> {
        Self::generate_with(tree, &set.generators(tree), cap)
    }

    /// Monoid generated by the operators that carry positive rate in the chain.
    pub fn for_chain(tree: &Arborescence, model: Model, cap: usize) -> Result<Self> {
        let gens: Vec<Generator> = weighted_generators(tree, model).into_iter().map(|g| g.0).collect();
        Self::generate_with(tree, &gens, cap)
    }

    pub fn generate_with(tree: &Arborescence, gens: &[Generator], cap: usize) -> Result<Self> {
        let space = StateSpace::new(tree)?;
        let tables = gens
            .iter()
            .map(|&g| image_table(tree, &space, g))
            .collect::<Result<Vec<_>>>()?;
        let names = gens.iter().map(|g| g.name(tree)).collect();
        let mut m = Self::generate_from_tables(names, tables, space.size(), cap)?;
        m.generators = gens.to_vec();
        Ok(m)
    }

    fn insert(&mut self, t: Table, word: Vec<u16>) -> Elem {
        let i = self.len() as Elem;
        self.index.entry(hash_table(&t)).or_default().push(i);
        self.arena.extend_from_slice(&t);
        self.words.push(word);
        i
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn element(&self, e: Elem) -> &[u32] {
        let d = self.degree;
        &self.arena[e as usize * d..(e as usize + 1) * d]
    }

    pub fn lookup(&self, t: &[u32]) -> Option<Elem> {
        self.index
            .get(&hash_table(t))?
            .iter()
            .copied()
            .find(|&i| self.element(i) == t)
    }

    /// `a · b`, acting as `a ∘ b`.
    pub fn multiply(&self, a: Elem, b: Elem) -> Elem {
        self.lookup(&compose(self.element(a), self.element(b)))
            .expect("monoid is closed")
    }

    /// `g · e` for generator index `g`.
    pub fn left(&self, g: usize, e: Elem) -> Elem {
        self.lookup(&compose(&self.generator_tables[g], self.element(e)))
            .expect("monoid is closed")
    }

    pub fn word_label(&self, e: Elem) -> String {
        let w = &self.words[e as usize];
        if w.is_empty() {
            "ε".into()
        } else {
            w.iter()
                .map(|&g| self.generator_names[g as usize].as_str())
                .collect::<Vec<_>>()
                .join("·")
        }
    }

    pub fn is_idempotent(&self, e: Elem) -> bool {
        self.multiply(e, e) == e
    }

    pub fn idempotents(&self) -> Vec<Elem> {
        (0..self.len() as Elem).filter(|&e| self.is_idempotent(e)).collect()
    }

    pub fn is_constant(&self, e: Elem) -> bool {
        is_constant(self.element(e))
    }

    pub fn fixed_points(&self, e: Elem) -> usize {
        self.element(e)
            .iter()
            .enumerate()
            .filter(|&(i, &x)| i as u32 == x)
            .count()
    }

    pub fn omega(&self, e: Elem) -> Elem {
        self.lookup(&omega_power(self.element(e))).expect("powers stay in the monoid")
    }

    /// Membership of every element in the two-sided ideal `M x M` of each generator.
    pub fn generator_ideals(&self) -> Vec<Vec<bool>> {
        (0..self.generator_tables.len())
            .map(|x| {
                let start = self.right[0][x];
                let mut seen = vec![false; self.len()];
                seen[start as usize] = true;
                let mut stack = vec![start];
                while let Some(e) = stack.pop() {
                    for g in 0..self.generator_tables.len() {
                        for f in [self.right[e as usize][g], self.left(g, e)] {
                            if !seen[f as usize] {
                                seen[f as usize] = true;
                                stack.push(f);
                            }
                        }
                    }
                }
                seen
            })
            .collect()
    }

    /// Generator indices `x` with `e ∈ M x M`.
    pub fn content(&self, e: Elem, ideals: &[Vec<bool>]) -> Result<Vec<usize>> {
        if !self.is_idempotent(e) {
            return Err(SandpileError::NotIdempotent);
        }
        Ok((0..ideals.len()).filter(|&x| ideals[x][e as usize]).collect())
    }
}

/// The unique idempotent power of a transformation.
pub fn omega_power(t: &[u32]) -> Table {
    let mut p = t.to_vec();
    loop {
        let sq = compose(&p, &p);
        if sq == p {
            return p;
        }
        p = compose(&p, t);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RTrivialReport {
    pub r_trivial: bool,
    /// First idempotent `e` and generator `x ∈ c(e)` with `ex ≠ e`.
    pub violation: Option<(String, String)>,
    /// Outcome of the literal `aM = bM ⟹ a = b` test, when run.
    pub oracle: Option<bool>,
}

/// `ex = e` for every idempotent `e` and every `x` in its content; on small
/// monoids also the definition via principal right ideals.
pub fn is_r_trivial(m: &MonoidTable) -> RTrivialReport {
    let ideals = m.generator_ideals();
    let mut violation = None;
    'outer: for e in m.idempotents() {
        for x in m.content(e, &ideals).expect("idempotent") {
            if m.right[e as usize][x] != e {
                violation = Some((m.word_label(e), m.generator_names[x].clone()));
                break 'outer;
            }
        }
    }
    let oracle = (m.len() <= ORACLE_CAP).then(|| ideal_classes_trivial(m, false));
    RTrivialReport {
        r_trivial: violation.is_none(),
        violation,
        oracle,
    }
}

/// Literal check that distinct elements generate distinct principal right
/// ideals (or two-sided ideals when `two_sided`).
pub fn ideal_classes_trivial(m: &MonoidTable, two_sided: bool) -> bool {
    let n = m.len();
    let words = n.div_ceil(64);
    let mut reach = vec![0u64; n * words];
    for a in 0..n {
        let row = &mut reach[a * words..(a + 1) * words];
        row[a / 64] |= 1 << (a % 64);
        let mut stack = vec![a as Elem];
        while let Some(e) = stack.pop() {
            for g in 0..m.generator_tables.len() {
                let mut nexts = vec![m.right[e as usize][g]];
                if two_sided {
                    nexts.push(m.left(g, e));
                }
                for f in nexts {
                    let f = f as usize;
                    if row[f / 64] & (1 << (f % 64)) == 0 {
                        row[f / 64] |= 1 << (f % 64);
                        stack.push(f as Elem);
                    }
                }
            }
        }
    }
    let row = |a: usize| &reach[a * words..(a + 1) * words];
    (0..n).all(|a| (a + 1..n).all(|b| row(a) != row(b)))
}

/// True when the Cayley graph has no cycles apart from self-loops.
pub fn cayley_acyclic(m: &MonoidTable, two_sided: bool) -> bool {
    let n = m.len();
    let mut adj: Vec<Vec<Elem>> = vec![Vec::new(); n];
    let mut indeg = vec![0usize; n];
    for e in 0..n {
        for g in 0..m.generator_tables.len() {
            let mut nexts = vec![m.right[e][g]];
            if two_sided {
                nexts.push(m.left(g, e as Elem));
            }
            for f in nexts {
                if f as usize != e {
                    adj[e].push(f);
                    indeg[f as usize] += 1;
                }
            }
        }
    }
    let mut stack: Vec<usize> = (0..n).filter(|&e| indeg[e] == 0).collect();
    let mut seen = 0;
    while let Some(e) = stack.pop() {
        seen += 1;
        for &f in &adj[e] {
            indeg[f as usize] -= 1;
            if indeg[f as usize] == 0 {
                stack.push(f as usize);
            }
        }
    }
    seen == n
}

/// One `L`-class of idempotents.
#[derive(Debug, Clone)]
pub struct LatticeClass {
    pub representative: Elem,
    pub members: Vec<Elem>,
    pub content: Vec<usize>,
    pub fixed_points: usize,
}

#[derive(Debug, Clone)]
pub struct IdempotentLattice {
    pub classes: Vec<LatticeClass>,
    /// `le[a][b]` iff `[a] ≤ [b]`, i.e. `e_a e_b = e_a`.
    pub le: Vec<Vec<bool>>,
    pub top: usize,
    class_of: HashMap<Elem, usize>,
}

impl IdempotentLattice {
    pub fn build(m: &MonoidTable) -> Result<Self> {
        let report = is_r_trivial(m);
        if !report.r_trivial {
            let (e, x) = report.violation.unwrap_or_default();
            return Err(SandpileError::NotRTrivial(format!("{e} · {x} ≠ {e}")));
        }
        let ideals = m.generator_ideals();
        let idem = m.idempotents();
        let mut classes: Vec<LatticeClass> = Vec::new();
        let mut class_of = HashMap::new();
        for &e in &idem {
            let found = classes.iter().position(|c| {
                let f = c.representative;
                m.multiply(e, f) == e && m.multiply(f, e) == f
            });
            match found {
                Some(c) => {
                    classes[c].members.push(e);
                    class_of.insert(e, c);
                }
                None => {
                    class_of.insert(e, classes.len());
                    classes.push(LatticeClass {
                        representative: e,
                        members: vec![e],
                        content: m.content(e, &ideals)?,
                        fixed_points: m.fixed_points(e),
                    });
                }
            }
        }
        let k = classes.len();
        let le = (0..k)
            .map(|a| {
                (0..k)
                    .map(|b| {
                        let (ea, eb) = (classes[a].representative, classes[b].representative);
                        m.multiply(ea, eb) == ea
                    })
                    .collect()
            })
            .collect();
        let top = class_of[&0];
        Ok(IdempotentLattice {
            classes,
            le,
            top,
            class_of,
        })
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn class_of(&self, e: Elem) -> Option<usize> {
        self.class_of.get(&e).copied()
    }

    /// `[(ef)^ω]`.
    pub fn meet(&self, m: &MonoidTable, a: usize, b: usize) -> usize {
        let e = m.omega(m.multiply(self.classes[a].representative, self.classes[b].representative));
        self.class_of[&e]
    }

    /// Checks partial-order and lattice axioms, with the meet given by `(ef)^ω`.
    pub fn check_axioms(&self, m: &MonoidTable) -> bool {
        let k = self.len();
        let le = &self.le;
        let po = (0..k).all(|a| le[a][a])
            && (0..k).all(|a| (0..k).all(|b| a == b || !(le[a][b] && le[b][a])))
            && (0..k).all(|a| (0..k).all(|b| (0..k).all(|c| !(le[a][b] && le[b][c]) || le[a][c])));
        let top = (0..k).all(|a| le[a][self.top]);
        let meets = (0..k).all(|a| {
            (0..k).all(|b| {
                let c = self.meet(m, a, b);
                le[c][a]
                    && le[c][b]
                    && (0..k).all(|d| !(le[d][a] && le[d][b]) || le[d][c])
            })
        });
        po && top && meets
    }

    /// Multiplicities from `|eΩ| = Σ_{[f] ≤ [e]} m_[f]`.
    pub fn multiplicities(&self) -> Vec<i64> {
        let k = self.len();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by_key(|&a| (0..k).filter(|&b| self.le[b][a]).count());
        let mut mult = vec![0i64; k];
        for &a in &order {
            let below: i64 = (0..k)
                .filter(|&b| b != a && self.le[b][a])
                .map(|b| mult[b])
                .sum();
            mult[a] = self.classes[a].fixed_points as i64 - below;
        }
        mult
    }
}

/// `e_S = (Π_{v ∈ S} τ_v)^ω`, the product taken in vertex order.
pub fn e_s(tree: &Arborescence, space: &StateSpace, s: VertexSet) -> Result<Table> {
    e_s_ordered(tree, space, &s.iter().collect::<Vec<_>>())
}

pub fn e_s_ordered(tree: &Arborescence, space: &StateSpace, order: &[usize]) -> Result<Table> {
    let mut acc = identity_table(space.size());
    for &v in order {
        let t = image_table(tree, space, Generator::new(OpKind::Landslide, v))?;
        acc = compose(&acc, &t);
    }
    Ok(omega_power(&acc))
}

/// `S(e) = L(e) ∪ {v : τ_v ∈ c(e)}` with `L(e)` the union of `v↓` over
/// sources `σ_v ∈ c(e)`.
pub fn s_of_idempotent(tree: &Arborescence, m: &MonoidTable, e: Elem, ideals: &[Vec<bool>]) -> Result<VertexSet> {
    let c = m.content(e, ideals)?;
    let mut s = VertexSet::EMPTY;
    for x in c {
        let g = m.generators[x];
        match g.kind {
            OpKind::Source => s = s.union(tree.downset(g.vertex)),
            OpKind::Landslide | OpKind::Trickle => s.insert(g.vertex),
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Eigenvalue {
    pub value: String,
    pub multiplicity: i64,
}

/// Spectrum with multiplicities from the idempotent lattice of the monoid
/// generated by the chain's operators.
#[derive(Debug, Clone)]
pub struct MonoidSpectrum {
    pub lattice: IdempotentLattice,
    /// Eigenvalue and multiplicity per lattice class.
    pub per_class: Vec<(Q, i64)>,
    /// `S` for each class when every class contains exactly one `e_S`.
    pub subsets: Option<Vec<VertexSet>>,
    /// Multiplicities by Möbius inversion over subsets, when available.
    pub subset_multiplicities: Option<Vec<i64>>,
}

impl MonoidSpectrum {
    /// Eigenvalues sorted ascending, each with its multiplicity, dropping zero multiplicities.
    pub fn multiset(&self) -> Vec<(Q, i64)> {
        let mut out: Vec<(Q, i64)> = Vec::new();
        let mut items: Vec<(Q, i64)> = self.per_class.iter().filter(|p| p.1 != 0).cloned().collect();
        items.sort_by(|a, b| a.0.cmp(&b.0));
        for (v, k) in items {
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 += k,
                _ => out.push((v, k)),
            }
        }
        out
    }
}

pub fn spectrum_via_monoid(tree: &Arborescence, model: Model, cap: usize) -> Result<(MonoidTable, MonoidSpectrum)> {
    let m = MonoidTable::for_chain(tree, model, cap)?;
    let rates: Vec<Q> = weighted_generators(tree, model).into_iter().map(|g| g.1).collect();
    let spec = spectrum_of_table(tree, &m, &rates)?;
    Ok((m, spec))
}

/// `λ_[e] = Σ_{x : e x^ω = e} p_x`, multiplicities by Möbius inversion.
pub fn spectrum_of_table(tree: &Arborescence, m: &MonoidTable, rates: &[Q]) -> Result<MonoidSpectrum> {
    if rates.len() != m.generator_tables.len() {
        return Err(SandpileError::Dimension("one rate per generator expected".into()));
    }
    let lattice = IdempotentLattice::build(m)?;
    let gen_omegas: Vec<Elem> = (0..rates.len()).map(|g| m.omega(m.right[0][g])).collect();
    let mults = lattice.multiplicities();
    let per_class = lattice
        .classes
        .iter()
        .zip(&mults)
        .map(|(c, &k)| {
            let e = c.representative;
            let lam: Q = gen_omegas
                .iter()
                .zip(rates)
                .filter(|(&w, _)| m.multiply(e, w) == e)
                .fold(Q::zero(), |acc, (_, p)| acc + p);
            (lam, k)
        })
        .collect();
    let (subsets, subset_multiplicities) = match subset_correspondence(tree, m, &lattice)? {
        Some(s) => {
            let mult = subset_mobius(tree, &lattice, &s)?;
            (Some(s), Some(mult))
        }
        None => (None, None),
    };
    Ok(MonoidSpectrum {
        lattice,
        per_class,
        subsets,
        subset_multiplicities,
    })
}

/// `S` per class when the classes are exactly `[e_S]` for distinct `S ⊆ V`.
pub fn subset_correspondence(
    tree: &Arborescence,
    m: &MonoidTable,
    lattice: &IdempotentLattice,
) -> Result<Option<Vec<VertexSet>>> {
    let n = tree.len();
    if n > 20 || m.degree != StateSpace::new(tree)?.size() {
        return Ok(None);
    }
    let space = StateSpace::new(tree)?;
    let mut by_class: Vec<Option<VertexSet>> = vec![None; lattice.len()];
    for bits in 0u64..1 << n {
        let s = VertexSet(bits);
        let Some(e) = m.lookup(&e_s(tree, &space, s)?) else {
            return Ok(None);
        };
        let Some(c) = lattice.class_of(e) else {
            return Ok(None);
        };
        if by_class[c].is_some() {
            return Ok(None);
        }
        by_class[c] = Some(s);
    }
    Ok(by_class.into_iter().collect())
}

/// `m_S = Σ_{X ⊇ S} (−1)^{|X∖S|} |e_X Ω|`.
fn subset_mobius(
    tree: &Arborescence,
    lattice: &IdempotentLattice,
    subsets: &[VertexSet],
) -> Result<Vec<i64>> {
    let n = tree.len();
    let mut fixed = vec![0i64; 1 << n];
    for (c, s) in subsets.iter().enumerate() {
        fixed[s.0 as usize] = lattice.classes[c].fixed_points as i64;
    }
    Ok(subsets
        .iter()
        .map(|s| {
            let rest = VertexSet::full(n).difference(*s);
            let mut total = 0i64;
            // Enumerate subsets of the complement.
            let mut sub = rest.0;
            loop {
                let x = s.0 | sub;
                let sign = if (sub.count_ones() % 2) == 0 { 1 } else { -1 };
                total += sign * fixed[x as usize];
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & rest.0;
            }
            total
        })
        .collect())
}

/// `x_S + y_S` and `T_{S^c}` for every `S ⊆ V`.
pub fn subset_spectrum(tree: &Arborescence) -> Result<Vec<(VertexSet, Q, u64)>> {
    let n = tree.len();
    if n > 20 {
        return Err(SandpileError::CapExceeded {
            what: "vertex subsets",
            limit: 20,
            found: n,
        });
    }
    let mut out = Vec::with_capacity(1 << n);
    for bits in 0u64..1 << n {
        let s = VertexSet(bits);
        let mut lam = Q::zero();
        for v in s.iter() {
            lam += tree.x(v);
        }
        for v in 0..n {
            if !tree.y(v).is_zero() && tree.downset(v).is_subset(s) {
                lam += tree.y(v);
            }
        }
        let mult: u64 = (0..n)
            .filter(|&v| !s.contains(v))
            .map(|v| tree.threshold(v) as u64)
            .product();
        out.push((s, lam, mult));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Graphviz rendering of a Cayley graph. Constant maps get their value
/// appended to the label as `:=<state>`.
pub fn export_cayley(m: &MonoidTable, space: Option<&StateSpace>, side: Side) -> String {
    let mut out = String::new();
    let name = match side {
        Side::Left => "left_cayley",
        Side::Right => "right_cayley",
    };
    writeln!(out, "digraph {name} {{").unwrap();
    for e in 0..m.len() as Elem {
        let mut label = m.word_label(e);
        if m.is_constant(e) && m.degree > 0 {
            let v = m.element(e)[0];
            let state = match space {
                Some(s) => s.unrank(v as usize).map(|c| c.to_string()).unwrap_or_else(|_| v.to_string()),
                None => v.to_string(),
            };
            write!(label, ":={state}").unwrap();
        }
        writeln!(out, "  n{e} [label=\"{}\"];", label.replace('"', "\\\"")).unwrap();
    }
    for e in 0..m.len() as Elem {
        for g in 0..m.generator_tables.len() {
            let f = match side {
                Side::Right => m.right[e as usize][g],
                Side::Left => m.left(g, e),
            };
            writeln!(out, "  n{e} -> n{f} [label=\"{}\"];", m.generator_names[g]).unwrap();
        }
    }
    out.push_str("}\n");
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct LatticeClassJson {
    pub representative: String,
    pub subset: Option<Vec<String>>,
    pub content: Vec<String>,
    pub fixed_points: usize,
    pub eigenvalue: String,
    pub multiplicity: i64,
    pub below: Vec<usize>,
}

pub fn lattice_json(tree: &Arborescence, m: &MonoidTable, spec: &MonoidSpectrum) -> Vec<LatticeClassJson> {
    let l = &spec.lattice;
    l.classes
        .iter()
        .enumerate()
        .map(|(c, class)| LatticeClassJson {
            representative: m.word_label(class.representative),
            subset: spec
                .subsets
                .as_ref()
                .map(|s| s[c].iter().map(|v| tree.id(v).to_string()).collect()),
            content: class.content.iter().map(|&x| m.generator_names[x].clone()).collect(),
            fixed_points: class.fixed_points,
            eigenvalue: spec.per_class[c].0.to_string(),
            multiplicity: spec.per_class[c].1,
            below: (0..l.len()).filter(|&d| d != c && l.le[d][c]).collect(),
        })
        .collect()
}

/// Probability that the right random walk from `ε` has not hit a constant
/// map after `k` steps, for each `k` in `0..=steps`.
pub fn nonconstant_probabilities(m: &MonoidTable, rates: &[Q], steps: usize) -> Vec<Q> {
    let mut dist = vec![Q::zero(); m.len()];
    dist[0] = Q::one();
    let constant: Vec<bool> = (0..m.len() as Elem).map(|e| m.is_constant(e)).collect();
    let mut out = Vec::with_capacity(steps + 1);
    for step in 0..=steps {
        let p: Q = dist
            .iter()
            .zip(&constant)
            .filter(|(_, &c)| !c)
            .map(|(d, _)| d)
            .sum();
        out.push(p);
        if step == steps {
            break;
        }
        let mut next = vec![Q::zero(); m.len()];
        for (e, d) in dist.iter().enumerate() {
            if d.is_zero() {
                continue;
            }
            for (g, r) in rates.iter().enumerate() {
                next[m.right[e][g] as usize] += d * r;
            }
        }
        dist = next;
    }
    out
}
