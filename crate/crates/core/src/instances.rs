//! Named fixture trees and seeded random instance generators.

use num_traits::Zero;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::arborescence::{Arborescence, VertexSpec};
use crate::rational::{q, Q};

/// Two leaves `a`, `b` feeding root `r`, unit thresholds. Rates are given as
/// `(y_a, y_b, x_a, x_b, x_r)`.
pub fn example_three(rates: &[Q]) -> Arborescence {
    assert_eq!(rates.len(), 5);
    Arborescence::new(vec![
        VertexSpec::new("a", Some("r"), 1, rates[2].clone(), rates[0].clone()),
        VertexSpec::new("b", Some("r"), 1, rates[3].clone(), rates[1].clone()),
        VertexSpec::new("r", None, 1, rates[4].clone(), Q::zero()),
    ])
    .expect("fixture is well formed")
}

pub fn example_three_uniform() -> Arborescence {
    example_three(&[q(1, 5), q(1, 5), q(1, 5), q(1, 5), q(1, 5)])
}

/// The ten-vertex tree with leaves a, g, h, j, k and root r; every vertex
/// gets the given threshold and all fifteen rates are 1/15.
pub fn ten_vertex_tree(threshold: u32) -> Arborescence {
    let edges = [
        ("h", Some("d")),
        ("j", Some("d")),
        ("k", Some("f")),
        ("d", Some("b")),
        ("f", Some("b")),
        ("g", Some("c")),
        ("a", Some("r")),
        ("b", Some("r")),
        ("c", Some("r")),
        ("r", None),
    ];
    let leaves = ["a", "g", "h", "j", "k"];
    let specs = edges
        .iter()
        .map(|&(id, parent)| {
            let y = if leaves.contains(&id) {
                q(1, 15)
            } else {
                Q::zero()
            };
            VertexSpec::new(id, parent, threshold, q(1, 15), y)
        })
        .collect();
    Arborescence::new(specs).expect("fixture is well formed")
}

/// A sample configuration on the ten-vertex tree with thresholds 2, in [`ten_vertex_tree`] vertex order (h, j, k, d, f, g, a, b, c, r).
pub const TEN_VERTEX_CONFIGURATION: [u32; 10] = [0, 1, 2, 1, 0, 0, 1, 2, 1, 1];

/// The line `1 -> ... -> n` with every rate (source and topples) equal.
pub fn uniform_line(thresholds: &[u32]) -> Arborescence {
    let n = thresholds.len() as i64;
    let r = q(1, n + 1);
    Arborescence::line(thresholds, r.clone(), &vec![r; thresholds.len()])
        .expect("fixture is well formed")
}

/// Single vertex with threshold `t` and rates `x`, `y`.
pub fn single_vertex(t: u32, x: Q, y: Q) -> Arborescence {
    Arborescence::new(vec![VertexSpec::new("r", None, t, x, y)]).expect("fixture is well formed")
}

/// Random positive rates with small integer weights, normalized to sum to 1.
/// Sources go on leaves only.
pub fn random_rates<R: Rng>(tree: &Arborescence, rng: &mut R, max_weight: i64) -> Arborescence {
    let n = tree.len();
    let mut wx = Vec::with_capacity(n);
    let mut wy = Vec::with_capacity(n);
    for v in 0..n {
        wx.push(rng.gen_range(1..=max_weight));
        wy.push(if tree.is_leaf(v) {
            rng.gen_range(1..=max_weight)
        } else {
            0
        });
    }
    let total: i64 = wx.iter().sum::<i64>() + wy.iter().sum::<i64>();
    tree.with_rates(
        wx.iter().map(|&w| q(w, total)).collect(),
        wy.iter().map(|&w| q(w, total)).collect(),
    )
    .expect("same shape")
}

/// Random tree shape on `n` vertices with ids `v0..`, random vertex order,
/// random thresholds in `1..=max_threshold`, and random rates.
pub fn random_tree<R: Rng>(rng: &mut R, n: usize, max_threshold: u32) -> Arborescence {
    assert!(n >= 1);
    // Attach vertex i to a uniformly chosen earlier vertex; vertex 0 is the root.
    let mut parent: Vec<Option<usize>> = vec![None];
    for i in 1..n {
        parent.push(Some(rng.gen_range(0..i)));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let specs = order
        .iter()
        .map(|&i| {
            let id = format!("v{i}");
            let p = parent[i].map(|p| format!("v{p}"));
            VertexSpec {
                id,
                parent: p,
                threshold: rng.gen_range(1..=max_threshold),
                x: Q::zero(),
                y: Q::zero(),
            }
        })
        .collect();
    let tree = Arborescence::new(specs).expect("generated tree is well formed");
    random_rates(&tree, rng, 9)
}

/// Like [`random_tree`] but with unit thresholds off the root and a root
/// threshold in `1..=max_root`.
pub fn random_unit_tree<R: Rng>(rng: &mut R, n: usize, max_root: u32) -> Arborescence {
    let t = random_tree(rng, n, 1);
    let root = t.root().expect("nonempty");
    let mut th = vec![1; n];
    th[root] = rng.gen_range(1..=max_root);
    t.with_thresholds(&th).expect("valid thresholds")
}

pub fn state_count(tree: &Arborescence) -> usize {
    tree.vertices()
        .iter()
        .map(|v| v.threshold as usize + 1)
        .product()
}
