//! Rooted trees with thresholds and rates.
//!
//! Edges point toward the root: every vertex except the root has exactly
//! one parent, and following parents from any vertex reaches the root. The
//! vertex poset puts the root at the bottom: `v <= w` when `v` lies on the
//! path from `w` to the root.

use std::collections::HashMap;
use std::fmt;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SandpileError};
use crate::rational::{parse_rational, Q};

/// Maximum number of vertices; vertex sets are stored as 64-bit masks.
pub const MAX_VERTICES: usize = 64;

/// A set of vertex indices as a bitmask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct VertexSet(pub u64);

impl VertexSet {
    pub const EMPTY: VertexSet = VertexSet(0);

    pub fn full(n: usize) -> Self {
        if n >= 64 {
            VertexSet(u64::MAX)
        } else {
            VertexSet((1u64 << n) - 1)
        }
    }

    pub fn singleton(v: usize) -> Self {
        VertexSet(1 << v)
    }

    pub fn contains(self, v: usize) -> bool {
        self.0 >> v & 1 == 1
    }

    pub fn insert(&mut self, v: usize) {
        self.0 |= 1 << v;
    }

    pub fn remove(&mut self, v: usize) {
        self.0 &= !(1 << v);
    }

    pub fn union(self, other: Self) -> Self {
        VertexSet(self.0 | other.0)
    }

    pub fn intersection(self, other: Self) -> Self {
        VertexSet(self.0 & other.0)
    }

    pub fn difference(self, other: Self) -> Self {
        VertexSet(self.0 & !other.0)
    }

    pub fn is_subset(self, other: Self) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let v = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(v)
            }
        })
    }
}

impl FromIterator<usize> for VertexSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut s = VertexSet::EMPTY;
        for v in iter {
            s.insert(v);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vertex {
    pub id: String,
    pub parent: Option<usize>,
    pub threshold: u32,
    /// Topple rate.
    pub x: Q,
    /// Source rate.
    pub y: Q,
}

/// How strictly rates are checked by [`Arborescence::validate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ValidationMode {
    /// All topple rates and leaf source rates positive, summing to one.
    pub strict: bool,
    /// Allow source rates on non-leaf vertices.
    pub extended_sources: bool,
}

impl ValidationMode {
    pub const STRICT: ValidationMode = ValidationMode {
        strict: true,
        extended_sources: false,
    };
    pub const RELAXED: ValidationMode = ValidationMode {
        strict: false,
        extended_sources: false,
    };
    pub const EXTENDED: ValidationMode = ValidationMode {
        strict: false,
        extended_sources: true,
    };
}

/// A structurally valid (possibly empty) arborescence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arborescence {
    vertices: Vec<Vertex>,
    index: HashMap<String, usize>,
    children: Vec<Vec<usize>>,
    root: Option<usize>,
    /// `down[v]` is the path v -> ... -> root.
    down: Vec<Vec<usize>>,
    /// `above[v]` holds every w with v on w's path to the root.
    above: Vec<VertexSet>,
}

/// Ordered path from a vertex to the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VertexPath(pub Vec<usize>);

impl VertexPath {
    pub fn as_set(&self) -> VertexSet {
        self.0.iter().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Raw vertex description, before any structural checks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VertexSpec {
    pub id: String,
    pub parent: Option<String>,
    pub threshold: u32,
    pub x: Q,
    pub y: Q,
}

impl VertexSpec {
    pub fn new(id: &str, parent: Option<&str>, threshold: u32, x: Q, y: Q) -> Self {
        VertexSpec {
            id: id.to_string(),
            parent: parent.map(str::to_string),
            threshold,
            x,
            y,
        }
    }
}

/// Reports every structural problem in a vertex list. An empty list is a
/// valid (empty) arborescence.
pub fn structural_diagnostics(specs: &[VertexSpec]) -> Vec<String> {
    let mut out = Vec::new();
    if specs.len() > MAX_VERTICES {
        out.push(format!("more than {MAX_VERTICES} vertices"));
        return out;
    }
    let mut index = HashMap::new();
    for (i, s) in specs.iter().enumerate() {
        if index.insert(s.id.as_str(), i).is_some() {
            out.push(format!("duplicate vertex id `{}`", s.id));
        }
    }
    let roots: Vec<&str> = specs
        .iter()
        .filter(|s| s.parent.is_none())
        .map(|s| s.id.as_str())
        .collect();
    if !specs.is_empty() {
        match roots.len() {
            0 => out.push("no root (every vertex has a parent)".into()),
            1 => {}
            _ => out.push(format!("multiple roots: {}", roots.join(", "))),
        }
    }
    for s in specs {
        if s.threshold == 0 {
            out.push(format!("threshold of `{}` must be at least 1", s.id));
        }
        if let Some(p) = &s.parent {
            if !index.contains_key(p.as_str()) {
                out.push(format!("parent `{p}` of `{}` is not a vertex", s.id));
            } else if p == &s.id {
                out.push(format!("`{}` is its own parent", s.id));
            }
        }
    }
    if !out.is_empty() {
        return out;
    }
    // Cycle detection: walk parents with a step budget.
    for s in specs {
        let mut cur = s;
        let mut steps = 0;
        while let Some(p) = &cur.parent {
            steps += 1;
            if steps > specs.len() {
                out.push(format!("cycle through `{}`", s.id));
                break;
            }
            cur = &specs[index[p.as_str()]];
        }
    }
    out
}

impl Arborescence {
    pub fn empty() -> Self {
        Arborescence {
            vertices: Vec::new(),
            index: HashMap::new(),
            children: Vec::new(),
            root: None,
            down: Vec::new(),
            above: Vec::new(),
        }
    }

    /// Builds a tree from raw specs; fails with every structural problem.
    pub fn new(specs: Vec<VertexSpec>) -> Result<Self> {
        let diags = structural_diagnostics(&specs);
        if !diags.is_empty() {
            return Err(SandpileError::Validation(diags));
        }
        let index: HashMap<String, usize> = specs
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.clone(), i))
            .collect();
        let vertices = specs
            .into_iter()
            .map(|s| Vertex {
                parent: s.parent.as_ref().map(|p| index[p]),
                id: s.id,
                threshold: s.threshold,
                x: s.x,
                y: s.y,
            })
            .collect();
        Ok(Self::from_vertices(vertices))
    }

    fn from_vertices(vertices: Vec<Vertex>) -> Self {
        let n = vertices.len();
        let index = vertices
            .iter()
            .enumerate()
            .map(|(i, v)| (v.id.clone(), i))
            .collect();
        let mut children = vec![Vec::new(); n];
        let mut root = None;
        for (i, v) in vertices.iter().enumerate() {
            match v.parent {
                Some(p) => children[p].push(i),
                None => root = Some(i),
            }
        }
        let down: Vec<Vec<usize>> = (0..n)
            .map(|v| {
                let mut path = vec![v];
                let mut cur = v;
                while let Some(p) = vertices[cur].parent {
                    path.push(p);
                    cur = p;
                }
                path
            })
            .collect();
        let mut above = vec![VertexSet::EMPTY; n];
        for (w, path) in down.iter().enumerate() {
            for &v in path {
                above[v].insert(w);
            }
        }
        Arborescence {
            vertices,
            index,
            children,
            root,
            down,
            above,
        }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> &Vertex {
        &self.vertices[v]
    }

    pub fn id(&self, v: usize) -> &str {
        &self.vertices[v].id
    }

    pub fn threshold(&self, v: usize) -> u32 {
        self.vertices[v].threshold
    }

    pub fn thresholds(&self) -> Vec<u32> {
        self.vertices.iter().map(|v| v.threshold).collect()
    }

    pub fn root(&self) -> Option<usize> {
        self.root
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn all(&self) -> VertexSet {
        VertexSet::full(self.len())
    }

    pub fn lookup(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| SandpileError::UnknownVertex(id.to_string()))
    }

    fn check(&self, v: usize) -> Result<()> {
        if v < self.len() {
            Ok(())
        } else {
            Err(SandpileError::UnknownVertex(format!("#{v}")))
        }
    }

    /// Path v -> s(v) -> ... -> root.
    pub fn path_to_root(&self, v: usize) -> Result<VertexPath> {
        self.check(v)?;
        Ok(VertexPath(self.down[v].clone()))
    }

    /// Borrowing variant used on hot paths.
    pub fn path(&self, v: usize) -> &[usize] {
        &self.down[v]
    }

    pub fn downset(&self, v: usize) -> VertexSet {
        self.down[v].iter().copied().collect()
    }

    /// Every w with `w >= v`, including v.
    pub fn upset_of(&self, v: usize) -> VertexSet {
        self.above[v]
    }

    /// `v <= w` in the vertex poset.
    pub fn le(&self, v: usize, w: usize) -> bool {
        self.above[v].contains(w)
    }

    pub fn successor(&self, v: usize) -> Result<Option<usize>> {
        self.check(v)?;
        Ok(self.vertices[v].parent)
    }

    pub fn is_leaf(&self, v: usize) -> bool {
        self.children[v].is_empty()
    }

    /// Vertices without children. A single-vertex tree's root is a leaf.
    pub fn leaves(&self) -> Result<VertexSet> {
        if self.is_empty() {
            return Err(SandpileError::EmptyTree("leaves"));
        }
        Ok((0..self.len()).filter(|&v| self.is_leaf(v)).collect())
    }

    pub fn first_leaf(&self) -> Result<usize> {
        (0..self.len())
            .find(|&v| self.is_leaf(v))
            .ok_or(SandpileError::EmptyTree("leaves"))
    }

    /// Leaves whose path to the root passes through v.
    pub fn sources_above(&self, v: usize) -> Result<VertexSet> {
        self.check(v)?;
        Ok(self
            .above[v]
            .iter()
            .filter(|&w| self.is_leaf(w))
            .collect())
    }

    /// Sum of source rates over all w >= v. With sources only at leaves
    /// this is the sum over the leaves above v.
    pub fn cumulative_source_rate(&self, v: usize) -> Result<Q> {
        self.check(v)?;
        Ok(self.above[v]
            .iter()
            .fold(Q::zero(), |acc, w| acc + &self.vertices[w].y))
    }

    pub fn x(&self, v: usize) -> &Q {
        &self.vertices[v].x
    }

    pub fn y(&self, v: usize) -> &Q {
        &self.vertices[v].y
    }

    pub fn total_rate(&self) -> Q {
        self.vertices
            .iter()
            .fold(Q::zero(), |acc, v| acc + &v.x + &v.y)
    }

    /// Smallest topple rate.
    pub fn min_topple_rate(&self) -> Option<Q> {
        self.vertices.iter().map(|v| v.x.clone()).min()
    }

    pub fn edge_count(&self) -> usize {
        self.vertices.iter().filter(|v| v.parent.is_some()).count()
    }

    /// Removes leaf `l`, its outgoing edge and its threshold.
    pub fn delete_leaf(&self, l: usize) -> Result<Arborescence> {
        self.check(l)?;
        if !self.is_leaf(l) {
            return Err(SandpileError::NotALeaf(self.id(l).to_string()));
        }
        let remap = |i: usize| if i > l { i - 1 } else { i };
        let vertices = self
            .vertices
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != l)
            .map(|(_, v)| Vertex {
                parent: v.parent.map(remap),
                ..v.clone()
            })
            .collect();
        Ok(Self::from_vertices(vertices))
    }

    /// Index in the leaf-deleted tree of a surviving vertex.
    pub fn index_after_delete(l: usize, v: usize) -> usize {
        debug_assert_ne!(l, v);
        if v > l {
            v - 1
        } else {
            v
        }
    }

    /// Same tree with replaced rates (`x[v]`, `y[v]` in vertex order).
    pub fn with_rates(&self, x: Vec<Q>, y: Vec<Q>) -> Result<Arborescence> {
        if x.len() != self.len() || y.len() != self.len() {
            return Err(SandpileError::Dimension(format!(
                "expected {} rates, got {} and {}",
                self.len(),
                x.len(),
                y.len()
            )));
        }
        let vertices = self
            .vertices
            .iter()
            .zip(x.into_iter().zip(y))
            .map(|(v, (x, y))| Vertex { x, y, ..v.clone() })
            .collect();
        Ok(Self::from_vertices(vertices))
    }

    pub fn with_thresholds(&self, t: &[u32]) -> Result<Arborescence> {
        if t.len() != self.len() || t.iter().any(|&t| t == 0) {
            return Err(SandpileError::Validation(vec![
                "threshold vector has wrong length or a zero entry".into(),
            ]));
        }
        let vertices = self
            .vertices
            .iter()
            .zip(t)
            .map(|(v, &threshold)| Vertex {
                threshold,
                ..v.clone()
            })
            .collect();
        Ok(Self::from_vertices(vertices))
    }

    /// Rate diagnostics (structure is valid by construction).
    pub fn validate(&self, mode: ValidationMode) -> Vec<String> {
        let mut out = Vec::new();
        for (i, v) in self.vertices.iter().enumerate() {
            if v.x.is_negative() {
                out.push(format!("negative topple rate at `{}`", v.id));
            }
            if v.y.is_negative() {
                out.push(format!("negative source rate at `{}`", v.id));
            }
            let leaf = self.is_leaf(i);
            if !leaf && !mode.extended_sources && !v.y.is_zero() {
                out.push(format!(
                    "source rate at non-leaf `{}` requires extended-source mode",
                    v.id
                ));
            }
            if mode.strict {
                if !v.x.is_positive() {
                    out.push(format!("topple rate at `{}` must be positive", v.id));
                }
                if leaf && !v.y.is_positive() {
                    out.push(format!("source rate at leaf `{}` must be positive", v.id));
                }
            }
        }
        if mode.strict && !self.is_empty() && !self.total_rate().is_one() {
            out.push(format!("rates sum to {} (must be 1)", self.total_rate()));
        }
        out
    }

    /// Builds the line `1 -> 2 -> ... -> n` with root `n`.
    pub fn line(thresholds: &[u32], y: Q, x: &[Q]) -> Result<Arborescence> {
        let n = thresholds.len();
        if x.len() != n {
            return Err(SandpileError::Dimension("one topple rate per site".into()));
        }
        let specs = (0..n)
            .map(|i| {
                let parent = (i + 1 < n).then(|| (i + 2).to_string());
                VertexSpec {
                    id: (i + 1).to_string(),
                    parent,
                    threshold: thresholds[i],
                    x: x[i].clone(),
                    y: if i == 0 { y.clone() } else { Q::zero() },
                }
            })
            .collect();
        Arborescence::new(specs)
    }

    pub fn to_specs(&self) -> Vec<VertexSpec> {
        self.vertices
            .iter()
            .map(|v| VertexSpec {
                id: v.id.clone(),
                parent: v.parent.map(|p| self.vertices[p].id.clone()),
                threshold: v.threshold,
                x: v.x.clone(),
                y: v.y.clone(),
            })
            .collect()
    }

    pub fn format_set(&self, s: VertexSet) -> String {
        let ids: Vec<&str> = s.iter().map(|v| self.id(v)).collect();
        format!("{{{}}}", ids.join(","))
    }
}

impl fmt::Display for Arborescence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.vertices {
            let parent = v.parent.map_or("-", |p| self.vertices[p].id.as_str());
            writeln!(
                f,
                "{} -> {} (T={}, x={}, y={})",
                v.id, parent, v.threshold, v.x, v.y
            )?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// JSON tree files

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum RateField {
    Int(i64),
    Text(String),
}

impl RateField {
    fn to_q(&self) -> Result<Q> {
        match self {
            RateField::Int(n) => Ok(Q::from_integer((*n).into())),
            RateField::Text(s) => parse_rational(s),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VertexRecord {
    id: String,
    parent: Option<String>,
    threshold: u32,
    x: RateField,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    y: Option<RateField>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeFile {
    vertices: Vec<VertexRecord>,
}

/// Parses a tree file into raw specs without structural checks.
pub fn parse_tree_specs(json: &str) -> Result<Vec<VertexSpec>> {
    let file: TreeFile =
        serde_json::from_str(json).map_err(|e| SandpileError::Parse(e.to_string()))?;
    file.vertices
        .into_iter()
        .map(|r| {
            Ok(VertexSpec {
                x: r.x.to_q()?,
                y: r.y.as_ref().map_or(Ok(Q::zero()), RateField::to_q)?,
                id: r.id,
                parent: r.parent,
                threshold: r.threshold,
            })
        })
        .collect()
}

pub fn parse_tree(json: &str) -> Result<Arborescence> {
    Arborescence::new(parse_tree_specs(json)?)
}

pub fn tree_to_json(tree: &Arborescence) -> String {
    let file = TreeFile {
        vertices: tree
            .to_specs()
            .into_iter()
            .map(|s| VertexRecord {
                id: s.id,
                parent: s.parent,
                threshold: s.threshold,
                x: RateField::Text(s.x.to_string()),
                y: Some(RateField::Text(s.y.to_string())),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("tree serializes")
}

/// Structural plus rate diagnostics for a raw vertex list.
pub fn validate_specs(specs: &[VertexSpec], mode: ValidationMode) -> Vec<String> {
    let diags = structural_diagnostics(specs);
    if !diags.is_empty() {
        return diags;
    }
    Arborescence::new(specs.to_vec())
        .map(|t| t.validate(mode))
        .unwrap_or_else(|e| vec![e.to_string()])
}
