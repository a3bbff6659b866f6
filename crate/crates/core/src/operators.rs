//! Source, trickle and landslide operators as maps on the state space,
//! their wreath-product decomposition along a leaf, and the leaf recursion.

use std::fmt;

use crate::arborescence::Arborescence;
use crate::configuration::StateSpace;
use crate::error::{Result, SandpileError};

/// Largest state space for which dense image tables are built.
pub const DEFAULT_TABLE_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpKind {
    Source,
    Trickle,
    Landslide,
}

impl OpKind {
    pub fn symbol(self) -> &'static str {
        match self {
            OpKind::Source => "σ",
            OpKind::Trickle => "θ",
            OpKind::Landslide => "τ",
        }
    }
}

/// A single operator `σ_v`, `θ_v` or `τ_v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Generator {
    pub kind: OpKind,
    pub vertex: usize,
}

impl Generator {
    pub fn new(kind: OpKind, vertex: usize) -> Self {
        Generator { kind, vertex }
    }

    pub fn name(&self, tree: &Arborescence) -> String {
        format!("{}_{}", self.kind.symbol(), tree.id(self.vertex))
    }
}

/// Named generating sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorSet {
    /// `σ_v` and `τ_v` for every vertex.
    Landslide,
    /// `σ_v` and `θ_v` for every vertex.
    Trickle,
    /// `τ_v` only.
    Topples,
    /// Leaf sources and every `τ_v`: the generators of the landslide chain.
    LandslideChain,
}

impl GeneratorSet {
    pub fn generators(self, tree: &Arborescence) -> Vec<Generator> {
        let n = tree.len();
        let sources: Vec<Generator> = match self {
            GeneratorSet::Landslide | GeneratorSet::Trickle => {
                (0..n).map(|v| Generator::new(OpKind::Source, v)).collect()
            }
            GeneratorSet::Topples => Vec::new(),
            GeneratorSet::LandslideChain => (0..n)
                .filter(|&v| tree.is_leaf(v))
                .map(|v| Generator::new(OpKind::Source, v))
                .collect(),
        };
        let topple = if self == GeneratorSet::Trickle {
            OpKind::Trickle
        } else {
            OpKind::Landslide
        };
        sources
            .into_iter()
            .chain((0..n).map(|v| Generator::new(topple, v)))
            .collect()
    }
}

fn deposit(tree: &Arborescence, path: &[usize], grains: &mut [u32]) {
    for &w in path {
        if grains[w] < tree.threshold(w) {
            grains[w] += 1;
            return;
        }
    }
}

/// `σ_v`: adds a grain at the first non-full vertex on the path from v.
pub fn source_in_place(tree: &Arborescence, v: usize, grains: &mut [u32]) {
    deposit(tree, tree.path(v), grains);
}

/// `θ_v`: moves one grain from v to the first non-full strict descendant.
pub fn trickle_in_place(tree: &Arborescence, v: usize, grains: &mut [u32]) {
    if grains[v] == 0 {
        return;
    }
    grains[v] -= 1;
    deposit(tree, &tree.path(v)[1..], grains);
}

/// `τ_v`: empties v, passing each grain down as `θ_v` would.
pub fn landslide_in_place(tree: &Arborescence, v: usize, grains: &mut [u32]) {
    let k = grains[v];
    grains[v] = 0;
    let rest = &tree.path(v)[1..];
    for _ in 0..k {
        deposit(tree, rest, grains);
    }
}

pub fn apply_in_place(tree: &Arborescence, g: Generator, grains: &mut [u32]) {
    match g.kind {
        OpKind::Source => source_in_place(tree, g.vertex, grains),
        OpKind::Trickle => trickle_in_place(tree, g.vertex, grains),
        OpKind::Landslide => landslide_in_place(tree, g.vertex, grains),
    }
}

/// Applies `g` to a grain vector, checking the vertex and the configuration.
pub fn apply(tree: &Arborescence, g: Generator, grains: &[u32]) -> Result<Vec<u32>> {
    if g.vertex >= tree.len() {
        return Err(SandpileError::UnknownVertex(format!("#{}", g.vertex)));
    }
    if grains.len() != tree.len()
        || grains
            .iter()
            .enumerate()
            .any(|(v, &t)| t > tree.threshold(v))
    {
        return Err(SandpileError::InvalidConfiguration(format!(
            "{grains:?} is not a configuration of this tree"
        )));
    }
    let mut out = grains.to_vec();
    apply_in_place(tree, g, &mut out);
    Ok(out)
}

pub fn source(tree: &Arborescence, v: usize, grains: &[u32]) -> Result<Vec<u32>> {
    apply(tree, Generator::new(OpKind::Source, v), grains)
}

pub fn trickle(tree: &Arborescence, v: usize, grains: &[u32]) -> Result<Vec<u32>> {
    apply(tree, Generator::new(OpKind::Trickle, v), grains)
}

pub fn landslide(tree: &Arborescence, v: usize, grains: &[u32]) -> Result<Vec<u32>> {
    apply(tree, Generator::new(OpKind::Landslide, v), grains)
}

/// Dense map on ranked states: `image[i]` is the rank of the image of state `i`.
pub type Table = Vec<u32>;

pub fn identity_table(size: usize) -> Table {
    (0..size as u32).collect()
}

/// `(a ∘ b)[i] = a[b[i]]`: apply `b` first.
pub fn compose(a: &[u32], b: &[u32]) -> Table {
    b.iter().map(|&j| a[j as usize]).collect()
}

pub fn is_constant(t: &[u32]) -> bool {
    t.windows(2).all(|w| w[0] == w[1])
}

pub fn power(t: &[u32], k: u32) -> Table {
    let mut acc = identity_table(t.len());
    for _ in 0..k {
        acc = compose(t, &acc);
    }
    acc
}

/// Image table of `g` with the default cap.
pub fn image_table(tree: &Arborescence, space: &StateSpace, g: Generator) -> Result<Table> {
    image_table_capped(tree, space, g, DEFAULT_TABLE_CAP)
}

pub fn image_table_capped(
    tree: &Arborescence,
    space: &StateSpace,
    g: Generator,
    cap: usize,
) -> Result<Table> {
    if space.size() > cap {
        return Err(SandpileError::CapExceeded {
            what: "image table",
            limit: cap,
            found: space.size(),
        });
    }
    if g.vertex >= tree.len() {
        return Err(SandpileError::UnknownVertex(format!("#{}", g.vertex)));
    }
    let mut buf = vec![0; tree.len()];
    Ok((0..space.size())
        .map(|i| {
            space.unrank_into(i, &mut buf);
            apply_in_place(tree, g, &mut buf);
            space.rank_unchecked(&buf)
        })
        .collect())
}

pub fn tables(tree: &Arborescence, space: &StateSpace, gens: &[Generator]) -> Result<Vec<Table>> {
    gens.iter().map(|&g| image_table(tree, space, g)).collect()
}

/// Self-map of `[0, m]` on the top coordinate of a wreath element.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TopMap(pub Vec<u32>);

/// Named forms of a top map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopShape {
    /// `ε`
    Identity,
    /// `k ↦ min(k + 1, m)`
    Alpha,
    /// `k ↦ max(k - 1, 0)`
    Beta,
    /// `k ↦ c`
    Constant(u32),
    Other,
}

impl TopMap {
    pub fn identity(m: u32) -> Self {
        TopMap((0..=m).collect())
    }

    pub fn alpha(m: u32) -> Self {
        TopMap((0..=m).map(|k| (k + 1).min(m)).collect())
    }

    pub fn beta(m: u32) -> Self {
        TopMap((0..=m).map(|k| k.saturating_sub(1)).collect())
    }

    pub fn constant(m: u32, c: u32) -> Self {
        TopMap(vec![c; m as usize + 1])
    }

    pub fn apply(&self, k: u32) -> u32 {
        self.0[k as usize]
    }

    pub fn then(&self, first: &TopMap) -> TopMap {
        TopMap(first.0.iter().map(|&k| self.0[k as usize]).collect())
    }

    /// Constants take precedence, so on `[0, 1]` `α` reads as the constant 1.
    pub fn shape(&self) -> TopShape {
        let m = (self.0.len() - 1) as u32;
        if m > 0 && is_constant(&self.0) {
            return TopShape::Constant(self.0[0]);
        }
        if *self == TopMap::identity(m) {
            TopShape::Identity
        } else if *self == TopMap::alpha(m) {
            TopShape::Alpha
        } else if *self == TopMap::beta(m) {
            TopShape::Beta
        } else if m == 0 {
            TopShape::Identity
        } else {
            TopShape::Other
        }
    }
}

impl fmt::Display for TopShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopShape::Identity => write!(f, "ε"),
            TopShape::Alpha => write!(f, "α"),
            TopShape::Beta => write!(f, "β"),
            TopShape::Constant(c) => write!(f, "const {c}"),
            TopShape::Other => write!(f, "other"),
        }
    }
}

/// Splitting of the state space along a leaf: `Ω(T) ≅ [0, T_ℓ] × Ω(∇_ℓ T)`.
#[derive(Debug, Clone)]
pub struct LeafSplit {
    pub leaf: usize,
    pub threshold: u32,
    pub reduced: Arborescence,
    pub full_space: StateSpace,
    pub reduced_space: StateSpace,
    /// `(t_ℓ, rank in reduced space)` per full rank.
    parts: Vec<(u32, u32)>,
}

impl LeafSplit {
    pub fn new(tree: &Arborescence, leaf: usize) -> Result<Self> {
        let reduced = tree.delete_leaf(leaf)?;
        let full_space = StateSpace::new(tree)?;
        let reduced_space = StateSpace::new(&reduced)?;
        let mut buf = vec![0; tree.len()];
        let parts = (0..full_space.size())
            .map(|i| {
                full_space.unrank_into(i, &mut buf);
                let k = buf[leaf];
                let rest: Vec<u32> = buf
                    .iter()
                    .enumerate()
                    .filter(|&(v, _)| v != leaf)
                    .map(|(_, &g)| g)
                    .collect();
                (k, reduced_space.rank_unchecked(&rest))
            })
            .collect();
        Ok(LeafSplit {
            leaf,
            threshold: tree.threshold(leaf),
            reduced,
            full_space,
            reduced_space,
            parts,
        })
    }

    pub fn split(&self, i: usize) -> (u32, u32) {
        self.parts[i]
    }

    pub fn join(&self, k: u32, j: u32) -> u32 {
        let mut rest = vec![0; self.reduced.len()];
        self.reduced_space.unrank_into(j as usize, &mut rest);
        let mut full = rest;
        full.insert(self.leaf, k);
        self.full_space.rank_unchecked(&full)
    }

    /// Image table of `σ_{s(ℓ)}` on the reduced space (identity when ℓ is the root).
    pub fn successor_source(&self, tree: &Arborescence) -> Table {
        match tree.vertex(self.leaf).parent {
            None => identity_table(self.reduced_space.size()),
            Some(p) => {
                let p = Arborescence::index_after_delete(self.leaf, p);
                image_table(
                    &self.reduced,
                    &self.reduced_space,
                    Generator::new(OpKind::Source, p),
                )
                .expect("reduced space is smaller")
            }
        }
    }
}

/// `γ(f_0, ..., f_m)`: acts by `(k, t) ↦ (γ(k), f_k(t))`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WreathElement {
    pub top: TopMap,
    pub branches: Vec<Table>,
}

impl WreathElement {
    pub fn identity(m: u32, reduced_size: usize) -> Self {
        WreathElement {
            top: TopMap::identity(m),
            branches: vec![identity_table(reduced_size); m as usize + 1],
        }
    }

    pub fn act(&self, k: u32, t: u32) -> (u32, u32) {
        (self.top.apply(k), self.branches[k as usize][t as usize])
    }

    /// `self · g`, acting as `self ∘ g`:
    /// `(fg)_k = f_{γ_g(k)} g_k` and `γ_{fg} = γ_f γ_g`.
    pub fn multiply(&self, g: &WreathElement) -> WreathElement {
        WreathElement {
            top: self.top.then(&g.top),
            branches: g
                .branches
                .iter()
                .enumerate()
                .map(|(k, gk)| compose(&self.branches[g.top.apply(k as u32) as usize], gk))
                .collect(),
        }
    }

    /// Reads a wreath element off a dense table, failing if the top coordinate
    /// of an image depends on more than the top coordinate of the argument.
    pub fn from_table(split: &LeafSplit, table: &[u32]) -> Result<Self> {
        let m = split.threshold as usize;
        let r = split.reduced_space.size();
        let mut top = vec![u32::MAX; m + 1];
        let mut branches = vec![vec![0u32; r]; m + 1];
        for (i, &img) in table.iter().enumerate() {
            let (k, j) = split.split(i);
            let (k2, j2) = split.split(img as usize);
            let slot = &mut top[k as usize];
            if *slot == u32::MAX {
                *slot = k2;
            } else if *slot != k2 {
                return Err(SandpileError::Internal(
                    "table is not of wreath form along this leaf".into(),
                ));
            }
            branches[k as usize][j as usize] = j2;
        }
        Ok(WreathElement {
            top: TopMap(top),
            branches,
        })
    }

    pub fn to_table(&self, split: &LeafSplit) -> Table {
        (0..split.full_space.size())
            .map(|i| {
                let (k, j) = split.split(i);
                let (k2, j2) = self.act(k, j);
                split.join(k2, j2)
            })
            .collect()
    }
}

/// Wreath decomposition of a generator along the leaf of `split`.
///
/// For the leaf itself:
/// `σ_ℓ = α(ε, …, ε, σ_s)`, `θ_ℓ = β(ε, σ_s, …, σ_s)` and
/// `τ_ℓ = 0̄(ε, σ_s, σ_s², …, σ_s^m)` with `s = s(ℓ)`. Every other
/// generator is `ε(g', …, g')` with `g'` the same operator on `∇_ℓ T`.
pub fn wreath_decompose(tree: &Arborescence, split: &LeafSplit, g: Generator) -> Result<WreathElement> {
    let m = split.threshold;
    let r = split.reduced_space.size();
    let id = identity_table(r);
    if g.vertex == split.leaf {
        let s = split.successor_source(tree);
        let (top, branches) = match g.kind {
            OpKind::Source => {
                let mut b = vec![id; m as usize];
                b.push(s);
                (TopMap::alpha(m), b)
            }
            OpKind::Trickle => {
                let mut b = vec![id];
                b.extend(std::iter::repeat(s).take(m as usize));
                (TopMap::beta(m), b)
            }
            OpKind::Landslide => {
                let mut b = vec![id];
                for _ in 0..m {
                    let next = compose(&s, b.last().expect("nonempty"));
                    b.push(next);
                }
                (TopMap::constant(m, 0), b)
            }
        };
        return Ok(WreathElement { top, branches });
    }
    if g.vertex >= tree.len() {
        return Err(SandpileError::UnknownVertex(format!("#{}", g.vertex)));
    }
    let v = Arborescence::index_after_delete(split.leaf, g.vertex);
    let inner = image_table(&split.reduced, &split.reduced_space, Generator::new(g.kind, v))?;
    Ok(WreathElement {
        top: TopMap::identity(m),
        branches: vec![inner; m as usize + 1],
    })
}

/// Right multiplication by a generator using the explicit rules
/// `f·τ_ℓ = const γ_f(0) (f_0, f_0 σ_s, …, f_0 σ_s^m)`,
/// `f·σ_ℓ = (γ_f α)(f_1, …, f_m, f_m σ_s)`,
/// `f·θ_ℓ = (γ_f β)(f_0, f_0 σ_s, …, f_{m-1} σ_s)` and
/// `f·g = γ_f(f_0 g', …, f_m g')` otherwise.
pub fn right_multiply_generator(
    tree: &Arborescence,
    split: &LeafSplit,
    f: &WreathElement,
    g: Generator,
) -> Result<WreathElement> {
    let m = split.threshold;
    if f.branches.len() != m as usize + 1
        || f.branches.iter().any(|b| b.len() != split.reduced_space.size())
    {
        return Err(SandpileError::Dimension(
            "wreath element does not match the leaf split".into(),
        ));
    }
    if g.vertex != split.leaf {
        let gd = wreath_decompose(tree, split, g)?;
        let inner = &gd.branches[0];
        return Ok(WreathElement {
            top: f.top.clone(),
            branches: f.branches.iter().map(|fk| compose(fk, inner)).collect(),
        });
    }
    let s = split.successor_source(tree);
    let fb = &f.branches;
    Ok(match g.kind {
        OpKind::Landslide => {
            let mut b = vec![fb[0].clone()];
            for _ in 0..m {
                let next = compose(b.last().expect("nonempty"), &s);
                b.push(next);
            }
            WreathElement {
                top: TopMap::constant(m, f.top.apply(0)),
                branches: b,
            }
        }
        OpKind::Source => {
            let mut b: Vec<Table> = fb[1..].to_vec();
            b.push(compose(&fb[m as usize], &s));
            WreathElement {
                top: f.top.then(&TopMap::alpha(m)),
                branches: b,
            }
        }
        OpKind::Trickle => {
            let mut b = vec![fb[0].clone()];
            for k in 1..=m as usize {
                b.push(compose(&fb[k - 1], &s));
            }
            WreathElement {
                top: f.top.then(&TopMap::beta(m)),
                branches: b,
            }
        }
    })
}

/// Evaluates generators by peeling leaves one at a time.
///
/// Level `i` holds the tree after `i` deletions together with the leaf split
/// off at that level.
#[derive(Debug, Clone)]
pub struct LeafRecursion {
    levels: Vec<(Arborescence, usize)>,
}

impl LeafRecursion {
    /// Always splits along the first leaf in vertex order.
    pub fn new(tree: &Arborescence) -> Result<Self> {
        Self::with_first_leaf(tree, tree.first_leaf()?)
    }

    /// Splits along `leaf` first, then the first leaf of each smaller tree.
    pub fn with_first_leaf(tree: &Arborescence, leaf: usize) -> Result<Self> {
        if leaf >= tree.len() {
            return Err(SandpileError::UnknownVertex(format!("#{leaf}")));
        }
        if !tree.is_leaf(leaf) {
            return Err(SandpileError::NotALeaf(tree.id(leaf).to_string()));
        }
        let mut levels = Vec::with_capacity(tree.len());
        let mut cur = tree.clone();
        let mut l = leaf;
        loop {
            let next = cur.delete_leaf(l)?;
            levels.push((cur, l));
            if next.is_empty() {
                break;
            }
            l = next.first_leaf()?;
            cur = next;
        }
        Ok(LeafRecursion { levels })
    }

    /// Applies `g` to `(t_ℓ, t)` where `t` lists the other grains in vertex order.
    pub fn apply_split(&self, g: Generator, t_leaf: u32, rest: &[u32]) -> Result<(u32, Vec<u32>)> {
        let (tree, l) = &self.levels[0];
        if g.vertex >= tree.len() {
            return Err(SandpileError::UnknownVertex(format!("#{}", g.vertex)));
        }
        if rest.len() + 1 != tree.len() || t_leaf > tree.threshold(*l) {
            return Err(SandpileError::InvalidConfiguration(
                "split configuration does not match the tree".into(),
            ));
        }
        let mut full = rest.to_vec();
        full.insert(*l, t_leaf);
        self.eval(0, Some(g), &mut full);
        let k = full.remove(*l);
        Ok((k, full))
    }

    /// Applies `g` to a full grain vector.
    pub fn apply(&self, g: Generator, grains: &[u32]) -> Result<Vec<u32>> {
        let (_, l) = &self.levels[0];
        let mut rest = grains.to_vec();
        let k = rest.remove(*l);
        let (k, mut out) = self.apply_split(g, k, &rest)?;
        out.insert(*l, k);
        Ok(out)
    }

    /// `gen = None` stands for `σ_∅`, the identity on the empty tree.
    fn eval(&self, level: usize, gen: Option<Generator>, grains: &mut Vec<u32>) {
        let Some(g) = gen else { return };
        let (tree, l) = &self.levels[level];
        let l = *l;
        let cap = tree.threshold(l);
        let mut rest: Vec<u32> = grains.clone();
        let mut tl = rest.remove(l);
        let succ = |rest: &mut Vec<u32>, times: u32| {
            let s = tree
                .vertex(l)
                .parent
                .map(|p| Generator::new(OpKind::Source, Arborescence::index_after_delete(l, p)));
            for _ in 0..times {
                self.eval(level + 1, s, rest);
            }
        };
        if g.vertex == l {
            match g.kind {
                OpKind::Source => {
                    if tl < cap {
                        tl += 1;
                    } else {
                        succ(&mut rest, 1);
                    }
                }
                OpKind::Trickle => {
                    if tl > 0 {
                        tl -= 1;
                        succ(&mut rest, 1);
                    }
                }
                OpKind::Landslide => {
                    succ(&mut rest, tl);
                    tl = 0;
                }
            }
        } else {
            let inner = Generator::new(g.kind, Arborescence::index_after_delete(l, g.vertex));
            self.eval(level + 1, Some(inner), &mut rest);
        }
        rest.insert(l, tl);
        *grains = rest;
    }
}
