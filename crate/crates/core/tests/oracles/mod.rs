//! Reference implementations written from first definitions, shared by the
//! integration tests. Nothing here calls into the library under test.
#![allow(dead_code)]

use std::collections::BTreeSet;

use enercurate_core::model::CitationGraph;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random graph with `n` nodes, each ordered pair an edge with probability `p`.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> CitationGraph {
    let nodes: Vec<String> = (0..n).map(|i| format!("n{i:02}")).collect();
    let mut edges = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a != b && rng.random_bool(p) {
                edges.push((nodes[a].clone(), nodes[b].clone()));
            }
        }
    }
    CitationGraph::new(nodes, edges).expect("generated graph is valid")
}

/// Dense adjacency, `a[citer][cited] = 1`.
pub fn adjacency(g: &CitationGraph) -> Vec<Vec<u64>> {
    let n = g.nodes.len();
    let mut a = vec![vec![0u64; n]; n];
    for (x, y) in &g.edges {
        let i = g.nodes.iter().position(|v| v == x).unwrap();
        let j = g.nodes.iter().position(|v| v == y).unwrap();
        a[i][j] = 1;
    }
    a
}

pub fn column_sums(a: &[Vec<u64>]) -> Vec<u64> {
    let n = a.len();
    (0..n).map(|j| (0..n).map(|i| a[i][j]).sum()).collect()
}

/// `(Aᵀ A)` restricted to the node indices in `scope`, by explicit multiplication.
pub fn cocitation_product(a: &[Vec<u64>], scope: &[usize]) -> Vec<Vec<u64>> {
    let n = a.len();
    let at: Vec<Vec<u64>> = (0..n).map(|i| (0..n).map(|k| a[k][i]).collect()).collect();
    scope
        .iter()
        .map(|&i| {
            scope
                .iter()
                .map(|&j| {
                    let mut acc = 0;
                    for k in 0..n {
                        acc += at[i][k] * a[k][j];
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, x: usize) -> usize {
        if self.0[x] != x {
            let r = self.find(self.0[x]);
            self.0[x] = r;
        }
        self.0[x]
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Textbook DBSCAN on similarities with distance `1 - s` (and `d(p, p) = 0`).
///
/// Core points are joined into components when within `eps`. A border point
/// belongs to the component with the lowest first member among those holding
/// a core neighbour; everything else is noise. Clusters come out ordered by
/// their first member, members ascending.
pub fn naive_dbscan(s: &[Vec<f64>], eps: f64, min_pts: usize) -> (Vec<Vec<usize>>, Vec<usize>) {
    let n = s.len();
    let near = |i: usize, j: usize| i == j || 1.0 - s[i][j] <= eps;
    let core: Vec<bool> = (0..n)
        .map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_pts)
        .collect();
    let mut uf = UnionFind((0..n).collect());
    for i in 0..n {
        for j in 0..n {
            if core[i] && core[j] && near(i, j) {
                uf.union(i, j);
            }
        }
    }
    let mut roots: Vec<usize> = (0..n).filter(|&i| core[i]).map(|i| uf.find(i)).collect();
    roots.sort();
    roots.dedup();
    let mut clusters: Vec<Vec<usize>> = vec![Vec::new(); roots.len()];
    let mut noise = Vec::new();
    for p in 0..n {
        let home = if core[p] {
            Some(uf.find(p))
        } else {
            (0..n)
                .filter(|&q| core[q] && near(p, q))
                .map(|q| uf.find(q))
                .min()
        };
        match home {
            Some(r) => clusters[roots.binary_search(&r).unwrap()].push(p),
            None => noise.push(p),
        }
    }
    (clusters, noise)
}

pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 && nb == 0.0 {
        return 0.0;
    }
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    1.0 - dot / (na * nb)
}

/// Greedy dedup over every pair, ignoring any clustering: visit items longest
/// text first (ties by id), keep an item unless a kept one is within `eps`.
pub fn all_pairs_dedup(
    ids: &[String],
    vectors: &[Vec<f64>],
    lens: &[usize],
    eps: f64,
) -> BTreeSet<String> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| lens[b].cmp(&lens[a]).then(ids[a].cmp(&ids[b])));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if kept
            .iter()
            .all(|&k| cosine_distance(&vectors[k], &vectors[i]) > eps)
        {
            kept.push(i);
        }
    }
    kept.into_iter().map(|i| ids[i].clone()).collect()
}

/// Indices by score descending, earlier index first on ties, by repeated
/// selection of the best remaining element.
pub fn brute_force_descending(scores: &[f64]) -> Vec<usize> {
    let mut left: Vec<usize> = (0..scores.len()).collect();
    let mut out = Vec::new();
    while !left.is_empty() {
        let mut best = 0;
        for (pos, &i) in left.iter().enumerate() {
            if scores[i] > scores[left[best]] {
                best = pos;
            }
        }
        out.push(left.remove(best));
    }
    out
}

/// `-ln σ(m)` evaluated directly.
pub fn logistic_loss(m: f64) -> f64 {
    -(1.0 / (1.0 + (-m).exp())).ln()
}

/// `(w0 + a·b) x` with the sum formed entry by entry.
pub fn dense_forward(w0: &[Vec<f64>], a: &[Vec<f64>], b: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    let (n, d, r) = (w0.len(), x.len(), b.len());
    (0..n)
        .map(|i| {
            (0..d)
                .map(|j| {
                    let ab: f64 = (0..r).map(|k| a[i][k] * b[k][j]).sum();
                    (w0[i][j] + ab) * x[j]
                })
                .sum()
        })
        .collect()
}

/// Central finite-difference gradient of `f` at `w`.
pub fn central_difference(w: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    (0..w.len())
        .map(|i| {
            let mut up = w.to_vec();
            let mut down = w.to_vec();
            up[i] += h;
            down[i] -= h;
            (f(&up) - f(&down)) / (2.0 * h)
        })
        .collect()
}
