//! Acceptance criteria. Each criterion prints one PASS/FAIL line; the test
//! fails if any criterion fails. Run with `--nocapture` to see the lines.

use std::time::{Duration, Instant};

use num_traits::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use treepile::chain::{
    build_transition, partition_function_landslide, stationary_exact, stationary_product_landslide,
    stationary_product_trickle, Model,
};
use treepile::convergence::{bound_threshold, chernoff_upper, exact_distance, exact_distances, monte_carlo, upset_claims};
use treepile::instances::{example_three, random_tree, random_unit_tree, state_count, uniform_line};
use treepile::monoid::{is_r_trivial, spectrum_via_monoid, MonoidTable, ORACLE_CAP};
use treepile::operators::{
    apply, compose, image_table, power, right_multiply_generator, wreath_decompose, Generator, GeneratorSet,
    LeafRecursion, LeafSplit, OpKind, WreathElement,
};
use treepile::polyalg::{char_poly_exact, char_poly_product_formula, verify_conjecture_1d, ConjectureMethod, UniPoly};
use treepile::rational::{q, to_f64};
use treepile::{Arborescence, StateSpace, VertexSet, Q};

const C1_LIMIT: Duration = Duration::from_secs(1);
const C2_LIMIT: Duration = Duration::from_secs(60);
const C7_LIMIT: Duration = Duration::from_secs(120);
const C10_LIMIT: Duration = Duration::from_secs(600);
const C2_MIN_INSTANCES: usize = 30;
const C3_MIN_INSTANCES: usize = 20;
const C4_MIN_INSTANCES: usize = 20;
const C6_MIN_INSTANCES: usize = 10;
const C9_MIN_INSTANCES: usize = 10;
const C7_K_MAX: usize = 200;
const C8_PAIRS: u64 = 10_000;
const C11_STEPS: usize = 60;
const C11_TRIALS: u64 = 100_000;
const C11_SEED: u64 = 0x5A4D_2011;
const C11_TOLERANCE: f64 = 0.01;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn run(id: u32, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Verdict) -> bool {
    let start = Instant::now();
    let mut v = f();
    let took = start.elapsed();
    if let Some(l) = limit {
        if took >= l {
            v.pass = false;
            v.detail.push_str(&format!("; exceeded {l:?}"));
        }
    }
    println!(
        "{} {id:>2} {name}: {} [{took:.2?}]",
        if v.pass { "PASS" } else { "FAIL" },
        v.detail
    );
    v.pass
}

fn rates_from_weights(w: &[i64]) -> Vec<Q> {
    let total: i64 = w.iter().sum();
    w.iter().map(|&x| q(x, total)).collect()
}

/// `ζ(t)_v = Σ_{w ≥ v} t_w` with `v ≤ w` when `v` lies on the path from `w` to the root.
fn zeta(tree: &Arborescence, t: &[u32]) -> Vec<u32> {
    (0..tree.len())
        .map(|v| (0..tree.len()).filter(|&w| tree.path(w).contains(&v)).map(|w| t[w]).sum())
        .collect()
}

fn dominated(a: &[u32], b: &[u32], u: VertexSet) -> bool {
    u.iter().all(|v| a[v] <= b[v])
}

fn c1() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut bad = 0;
    for _ in 0..25 {
        let w: Vec<i64> = (0..5).map(|_| rng.gen_range(1..=60)).collect();
        let r = rates_from_weights(&w);
        let (ya, yb, xa, xb, xr) = (&r[0], &r[1], &r[2], &r[3], &r[4]);
        let t = example_three(&r);
        let pi = stationary_exact(&build_transition(&t, Model::Trickle).unwrap()).unwrap();
        let z = (xa + ya) * (xb + yb) * (ya + yb + xr);
        let s = ya + yb;
        let expected = [
            xa * xb * xr,
            xa * xb * &s,
            xa * yb * xr,
            xa * yb * &s,
            ya * xb * xr,
            ya * xb * &s,
            ya * yb * xr,
            ya * yb * &s,
        ];
        if expected.iter().zip(&pi).any(|(e, p)| e / &z != *p) {
            bad += 1;
        }
    }
    verdict(bad == 0, format!("25 rate vectors, {bad} mismatches"))
}

fn c2() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let (mut done, mut bad, mut largest) = (0, 0, 0);
    while done < C2_MIN_INSTANCES {
        let n = rng.gen_range(1..=7);
        let t = random_tree(&mut rng, n, 3);
        let size = state_count(&t);
        if size > 2048 {
            continue;
        }
        let exact = stationary_exact(&build_transition(&t, Model::Trickle).unwrap()).unwrap();
        if stationary_product_trickle(&t).unwrap() != exact {
            bad += 1;
        }
        largest = largest.max(size);
        done += 1;
    }
    verdict(bad == 0, format!("{done} trees, largest |Ω| = {largest}, {bad} mismatches"))
}

fn c3() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let (mut bad, mut not_divisible) = (0, 0);
    for i in 0..C3_MIN_INSTANCES {
        let t = random_unit_tree(&mut rng, 1 + i % 6, 4);
        let exact = stationary_exact(&build_transition(&t, Model::Landslide).unwrap()).unwrap();
        let product = stationary_product_landslide(&t).unwrap();
        if product != exact {
            bad += 1;
        }
        // With integer rates Z_τ is an integer multiple of every denominator.
        let d = Q::from_integer(treepile::rational::common_denominator(
            t.vertices().iter().flat_map(|v| [&v.x, &v.y]),
        ));
        let scaled = t
            .with_rates(
                t.vertices().iter().map(|v| &v.x * &d).collect(),
                t.vertices().iter().map(|v| &v.y * &d).collect(),
            )
            .unwrap();
        let z = partition_function_landslide(&scaled).unwrap();
        if !z.is_integer() || exact.iter().any(|p| !(p * &z).is_integer()) {
            not_divisible += 1;
        }
    }
    verdict(
        bad == 0 && not_divisible == 0,
        format!("{C3_MIN_INSTANCES} trees, {bad} mismatches, {not_divisible} divisibility failures"),
    )
}

/// `λ_S = Σ_{v∈S} x_v + Σ y_ℓ` over sources whose whole path to the root lies in `S`.
fn subset_eigenvalue(t: &Arborescence, s: VertexSet) -> Q {
    let mut l: Q = s.iter().map(|v| t.x(v).clone()).sum();
    for v in 0..t.len() {
        if t.path(v).iter().all(|&w| s.contains(w)) {
            l += t.y(v);
        }
    }
    l
}

fn c4() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let (mut done, mut bad) = (0, 0);
    while done < C4_MIN_INSTANCES {
        let n = rng.gen_range(1..=6);
        let t = random_tree(&mut rng, n, 3);
        if state_count(&t) > 128 {
            continue;
        }
        let m = build_transition(&t, Model::Landslide).unwrap();
        if char_poly_exact(&m).unwrap() != char_poly_product_formula(&t).unwrap() {
            bad += 1;
        }
        done += 1;
    }
    let (mut checked, mut mult_bad) = (0, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(124);
    while checked < 10 {
        let n = rng.gen_range(1..=4);
        let t = random_tree(&mut rng, n, 2);
        let (_, spec) = spectrum_via_monoid(&t, Model::Landslide, 200_000).unwrap();
        let Some(subsets) = spec.subsets.as_ref() else {
            mult_bad += 1;
            checked += 1;
            continue;
        };
        for (c, s) in subsets.iter().enumerate() {
            let expected: i64 = (0..t.len()).filter(|&v| !s.contains(v)).map(|v| t.threshold(v) as i64).product();
            if spec.per_class[c].1 != expected || spec.per_class[c].0 != subset_eigenvalue(&t, *s) {
                mult_bad += 1;
            }
        }
        if subsets.len() != 1 << t.len() {
            mult_bad += 1;
        }
        checked += 1;
    }
    verdict(
        bad == 0 && mult_bad == 0,
        format!("{done} charpolys ({bad} mismatches); {checked} monoid spectra ({mult_bad} multiplicity mismatches)"),
    )
}

fn c5() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let (mut done, mut failures, mut oracle_runs, mut skipped, mut largest) = (0, 0, 0, 0, 0);
    let mut trees = vec![example_three(&rates_from_weights(&[1, 1, 1, 1, 1])), uniform_line(&[1, 1, 1])];
    for _ in 0..18 {
        let n = rng.gen_range(1..=5);
        trees.push(random_tree(&mut rng, n, 2));
    }
    for t in &trees {
        let m = match MonoidTable::generate(t, GeneratorSet::Landslide, 200_000) {
            Ok(m) => m,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        let r = is_r_trivial(&m);
        if !r.r_trivial {
            failures += 1;
        }
        if m.len() <= ORACLE_CAP {
            oracle_runs += 1;
            if r.oracle != Some(true) {
                failures += 1;
            }
        }
        largest = largest.max(m.len());
        done += 1;
    }
    verdict(
        failures == 0 && done >= 10,
        format!("{done} monoids (largest {largest}, {skipped} over cap), {oracle_runs} oracle runs, {failures} failures"),
    )
}

fn c6() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let (mut done, mut bad) = (0, 0);
    while done < C6_MIN_INSTANCES {
        let n = rng.gen_range(1..=4);
        let t = random_tree(&mut rng, n, 2);
        if state_count(&t) > 64 {
            continue;
        }
        let (_, spec) = spectrum_via_monoid(&t, Model::Landslide, 200_000).unwrap();
        let roots: Vec<(Q, u64)> = spec.multiset().into_iter().map(|(v, k)| (v, k as u64)).collect();
        let mut p = UniPoly::from_roots(&roots);
        if state_count(&t) % 2 == 1 {
            p = p.scale(&-Q::one());
        }
        let m = build_transition(&t, Model::Landslide).unwrap();
        if p != char_poly_exact(&m).unwrap() {
            bad += 1;
        }
        done += 1;
    }
    verdict(bad == 0, format!("{done} instances, {bad} mismatches"))
}

fn c7() -> Verdict {
    let line = Arborescence::line(&[1, 1, 1], q(1, 4), &[q(1, 4), q(1, 4), q(1, 4)]).unwrap();
    let three = example_three(&rates_from_weights(&[1, 1, 1, 1, 1]));
    let (mut checks, mut violations) = (0u64, 0u64);
    for t in [&line, &three] {
        let m = build_transition(t, Model::Landslide).unwrap();
        let pi = stationary_exact(&m).unwrap();
        let d = exact_distances(&m, &pi, C7_K_MAX).unwrap();
        let k0 = bound_threshold(t).unwrap() as usize;
        for (k, row) in d.iter().enumerate().skip(k0) {
            let bound = chernoff_upper(t, k as u64).unwrap().expect("applicable");
            for dist in row {
                checks += 1;
                if dist > &bound {
                    violations += 1;
                }
            }
        }
    }
    verdict(violations == 0, format!("{checks} (state, k) pairs, {violations} violations"))
}

fn c8() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(28);
    let mut trees = vec![
        uniform_line(&[1, 1, 1]),
        uniform_line(&[2, 1]),
        uniform_line(&[1, 3]),
        example_three(&rates_from_weights(&[1, 1, 1, 1, 1])),
    ];
    while trees.len() < 8 {
        let n = rng.gen_range(2..=5);
        let t = random_tree(&mut rng, n, 2);
        if state_count(&t) <= 64 {
            trees.push(t);
        }
    }
    let (mut pairs, mut minimal, mut v1, mut v2) = (0, 0, 0, 0);
    for (i, t) in trees.iter().enumerate() {
        let space = StateSpace::new(t).unwrap();
        let m = MonoidTable::generate(t, GeneratorSet::LandslideChain, 200_000).unwrap();
        let c = upset_claims(t, &space, &m, C8_PAIRS, 800 + i as u64).unwrap();
        pairs += c.pairs;
        minimal += c.minimal_pairs;
        v1 += c.monotone_violations;
        v2 += c.strict_violations;
    }
    verdict(
        v1 == 0 && v2 == 0,
        format!(
            "{} monoids, {pairs} sampled pairs ({v1} violations), {minimal} minimal-vertex pairs ({v2} violations)",
            trees.len()
        ),
    )
}

fn c9() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let mut trees = vec![uniform_line(&[3, 1, 2]), uniform_line(&[3, 3, 3, 3, 3])];
    while trees.len() < C9_MIN_INSTANCES + 2 {
        let n = rng.gen_range(1..=6);
        let t = random_tree(&mut rng, n, 3);
        if state_count(&t) <= 1024 {
            trees.push(t);
        }
    }
    let mut violations = 0u64;
    let mut largest = 0;
    for t in &trees {
        let space = StateSpace::new(t).unwrap();
        let size = space.size();
        largest = largest.max(size);
        let n = t.len();
        let states: Vec<Vec<u32>> = space.iter().map(|c| c.0).collect();
        let zetas: Vec<Vec<u32>> = states.iter().map(|s| zeta(t, s)).collect();
        let all = t.all();
        let mut gens = Vec::new();
        for v in 0..n {
            let sigma = image_table(t, &space, Generator::new(OpKind::Source, v)).unwrap();
            let theta = image_table(t, &space, Generator::new(OpKind::Trickle, v)).unwrap();
            let tau = image_table(t, &space, Generator::new(OpKind::Landslide, v)).unwrap();
            if tau != power(&theta, t.threshold(v)) {
                violations += 1;
            }
            gens.push((OpKind::Source, v, sigma));
            gens.push((OpKind::Trickle, v, theta));
            gens.push((OpKind::Landslide, v, tau));
        }
        // Direct definitions against the tables.
        for (kind, v, table) in &gens {
            for (i, s) in states.iter().enumerate() {
                let direct = apply(t, Generator::new(*kind, *v), s).unwrap();
                if space.rank_unchecked(&direct) as u32 != table[i] {
                    violations += 1;
                }
            }
        }
        // σ_v σ_w = σ_w σ_v.
        let sigmas: Vec<&Vec<u32>> = gens.iter().filter(|g| g.0 == OpKind::Source).map(|g| &g.2).collect();
        for a in &sigmas {
            for b in &sigmas {
                if compose(a, b) != compose(b, a) {
                    violations += 1;
                }
            }
        }
        // Leaf decomposition and recursion agree with the tables.
        let rec = LeafRecursion::new(t).unwrap();
        let split = LeafSplit::new(t, t.first_leaf().unwrap()).unwrap();
        for (kind, v, table) in &gens {
            let g = Generator::new(*kind, *v);
            if wreath_decompose(t, &split, g).unwrap().to_table(&split) != *table {
                violations += 1;
            }
            for (i, s) in states.iter().enumerate() {
                if space.rank_unchecked(&rec.apply(g, s).unwrap()) != table[i] {
                    violations += 1;
                }
            }
        }
        // Right multiplication rules on a sample of products of generators.
        if size <= 256 {
            for (_, _, f) in gens.iter().take(6) {
                let fw = WreathElement::from_table(&split, f).unwrap();
                for (kind, v, g) in &gens {
                    let prod = right_multiply_generator(t, &split, &fw, Generator::new(*kind, *v)).unwrap();
                    if prod.to_table(&split) != compose(f, g) {
                        violations += 1;
                    }
                }
            }
        }
        // Dominance: σ increasing, τ decreasing, both monotone.
        for (kind, _, table) in &gens {
            if *kind == OpKind::Trickle {
                continue;
            }
            for i in 0..size {
                let zi = &zetas[i];
                let zg = &zetas[table[i] as usize];
                let ok = match kind {
                    OpKind::Source => dominated(zi, zg, all),
                    _ => dominated(zg, zi, all),
                };
                if !ok {
                    violations += 1;
                }
                for j in 0..size {
                    if dominated(zi, &zetas[j], all) && !dominated(zg, &zetas[table[j] as usize], all) {
                        violations += 1;
                    }
                }
            }
        }
        // Upsets: generators away from U fix t on U and every generator preserves ⊴_U.
        for u in space.upsets() {
            for (kind, v, table) in &gens {
                if *kind == OpKind::Trickle {
                    continue;
                }
                for i in 0..size {
                    let img = &states[table[i] as usize];
                    if !u.contains(*v) && u.iter().any(|w| img[w] != states[i][w]) {
                        violations += 1;
                    }
                    if size <= 256 {
                        let zg = &zetas[table[i] as usize];
                        for j in 0..size {
                            if dominated(&zetas[i], &zetas[j], u) && !dominated(zg, &zetas[table[j] as usize], u) {
                                violations += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    verdict(
        violations == 0,
        format!("{} instances (largest |Ω| = {largest}), {violations} violations", trees.len()),
    )
}

fn c10() -> Verdict {
    let mut vectors: Vec<Vec<u32>> = Vec::new();
    for n in 1..=3u32 {
        for code in 0..3u32.pow(n) {
            vectors.push((0..n).map(|i| code / 3u32.pow(i) % 3 + 1).collect());
        }
    }
    for code in 0..16u32 {
        vectors.push((0..4).map(|i| ((code >> i) & 1) + 1).collect());
    }
    let mut mismatches = Vec::new();
    let mut errors = Vec::new();
    for v in &vectors {
        match verify_conjecture_1d(v, ConjectureMethod::Auto) {
            Ok(r) if r.matches => {}
            Ok(_) => mismatches.push(format!("{v:?}")),
            Err(e) => errors.push(format!("{v:?}: {e}")),
        }
    }
    let mut detail = format!("{} threshold vectors, {} mismatches", vectors.len(), mismatches.len());
    if !mismatches.is_empty() {
        detail.push_str(&format!(" {}", mismatches.join(" ")));
    }
    if !errors.is_empty() {
        detail.push_str(&format!("; errors: {}", errors.join(", ")));
    }
    verdict(mismatches.is_empty() && errors.is_empty(), detail)
}

fn c11() -> Verdict {
    let t = example_three(&rates_from_weights(&[1, 1, 1, 1, 1]));
    let m = build_transition(&t, Model::Landslide).unwrap();
    let pi = stationary_exact(&m).unwrap();
    let exact = to_f64(&exact_distance(&m, &pi, 0, C11_STEPS).unwrap());
    let a = monte_carlo(&t, Model::Landslide, 0, C11_STEPS, C11_TRIALS, C11_SEED, Some(&pi)).unwrap();
    let b = monte_carlo(&t, Model::Landslide, 0, C11_STEPS, C11_TRIALS, C11_SEED, Some(&pi)).unwrap();
    let mc = a.tv.expect("tv requested");
    let gap = (mc - exact).abs();
    let identical = a == b && mc.to_bits() == b.tv.expect("tv requested").to_bits();
    verdict(
        gap <= C11_TOLERANCE && identical,
        format!("TV exact {exact:.3e}, Monte Carlo {mc:.4}, |Δ| = {gap:.4} (≤ {C11_TOLERANCE}), rerun identical: {identical}"),
    )
}

#[test]
fn acceptance_criteria() {
    let results = [
        run(1, "three-vertex closed form", Some(C1_LIMIT), c1),
        run(2, "trickle product form", Some(C2_LIMIT), c2),
        run(3, "landslide product form and partition function", None, c3),
        run(4, "spectrum by subsets", None, c4),
        run(5, "R-triviality of M(T)", None, c5),
        run(6, "monoid spectrum equals characteristic roots", None, c6),
        run(7, "rate of convergence bound", Some(C7_LIMIT), c7),
        run(8, "deterministic upset statistic", None, c8),
        run(9, "operator identities", None, c9),
        run(10, "one-dimensional partition function formula", Some(C10_LIMIT), c10),
        run(11, "Monte Carlo sanity", None, c11),
    ];
    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, &p)| !p).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}

