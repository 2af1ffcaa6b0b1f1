mod oracles;

use std::collections::{BTreeMap, BTreeSet};

use enercurate_core::linalg::Matrix;
use enercurate_core::litref::{
    centrality_degree, cocitation_matrix, dbscan_cluster, local_citation_counts,
    normalized_similarity, refine, select_top_per_cluster, EpsMode, RefineConfig, SimilarityMatrix,
    TopPerCluster,
};
use enercurate_core::model::CitationGraph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[allow(clippy::needless_range_loop)]
fn random_similarity(rng: &mut ChaCha8Rng, n: usize) -> SimilarityMatrix<f64> {
    let mut v = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let same = i % 3 == j % 3 && i % 7 != 6 && j % 7 != 6;
            let s = if same && rng.random_bool(0.8) {
                rng.random_range(0.5..1.0)
            } else if rng.random_bool(0.05) {
                rng.random_range(0.5..0.7)
            } else {
                rng.random_range(0.0..0.3)
            };
            v[i][j] = s;
            v[j][i] = s;
        }
    }
    SimilarityMatrix {
        ids: (0..n).map(|i| format!("p{i}")).collect(),
        values: Matrix::from_fn(n, n, |i, j| v[i][j]),
    }
}

fn rows(s: &SimilarityMatrix<f64>) -> Vec<Vec<f64>> {
    (0..s.len()).map(|i| s.values.row(i).to_vec()).collect()
}

#[test]
fn local_counts_equal_adjacency_column_sums() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let g = oracles::random_graph(&mut rng, 30, 0.15);
    let lc = local_citation_counts(&g);
    let sums = oracles::column_sums(&oracles::adjacency(&g));
    for (i, node) in g.nodes.iter().enumerate() {
        assert_eq!(lc[node], sums[i], "{node}");
    }
}

#[test]
fn cocitation_equals_matrix_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let g = oracles::random_graph(&mut rng, 25, 0.2);
    let scope_idx: Vec<usize> = (0..25).filter(|i| i % 3 != 1).collect();
    let scope: Vec<String> = scope_idx.iter().map(|&i| g.nodes[i].clone()).collect();
    let c = cocitation_matrix(&g, &scope);
    let expected = oracles::cocitation_product(&oracles::adjacency(&g), &scope_idx);
    for (i, row) in expected.iter().enumerate() {
        assert_eq!(c.counts.row(i), row.as_slice());
    }
}

#[test]
fn similarity_is_symmetric_and_bounded() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let g = oracles::random_graph(&mut rng, 20, 0.25);
        let c = cocitation_matrix(&g, &g.nodes);
        let s: SimilarityMatrix<f64> = normalized_similarity(&c);
        for i in 0..s.len() {
            for j in 0..s.len() {
                let v = s.values.get(i, j);
                assert!((0.0..=1.0).contains(&v));
                assert_eq!(v, s.values.get(j, i));
                let (cii, cjj, cij) = (c.counts.get(i, i), c.counts.get(j, j), c.counts.get(i, j));
                if cii > 0 && cjj > 0 && i != j {
                    let direct = cij as f64 / ((cii * cjj) as f64).sqrt();
                    assert!((v - direct).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn dbscan_matches_reference_on_random_instance() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let s = random_similarity(&mut rng, 20);
    let part = dbscan_cluster(&s, 0.4, 3, EpsMode::Distance);
    let (clusters, noise) = oracles::naive_dbscan(&rows(&s), 0.4, 3);
    assert!(clusters.len() >= 2);
    let sorted: Vec<Vec<usize>> = part
        .clusters
        .iter()
        .map(|c| {
            let mut c = c.clone();
            c.sort();
            c
        })
        .collect();
    assert_eq!(sorted, clusters);
    assert_eq!(part.noise, noise);
}

#[test]
fn centrality_is_restricted_row_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let s = random_similarity(&mut rng, 15);
    let cluster: Vec<usize> = (0..15).filter(|_| rng.random_bool(0.6)).collect();
    let cd = centrality_degree(&cluster, &s);
    for (k, &i) in cluster.iter().enumerate() {
        let expected: f64 = cluster.iter().map(|&j| s.values.get(i, j)).sum();
        assert!((cd[k] - expected).abs() < 1e-12);
    }
}

#[test]
fn top_per_cluster_equals_sort_and_slice() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let ids: Vec<String> = (0..40).map(|i| format!("x{i:02}")).collect();
    let centrality: BTreeMap<String, f64> = ids
        .iter()
        .map(|id| (id.clone(), f64::from(rng.random_range(0..6u8))))
        .collect();
    let lc: BTreeMap<String, u64> = ids
        .iter()
        .map(|id| (id.clone(), rng.random_range(0..4)))
        .collect();
    let clusters: Vec<Vec<String>> = ids.chunks(10).map(|c| c.to_vec()).collect();
    let m_k = [3, 1, 10, 12];
    let got = select_top_per_cluster(&clusters, &centrality, &lc, &m_k);
    let mut expected = BTreeSet::new();
    for (cluster, &m) in clusters.iter().zip(&m_k) {
        let mut keyed: Vec<(i64, i64, &String)> = cluster
            .iter()
            .map(|id| (-(centrality[id] as i64), -(lc[id] as i64), id))
            .collect();
        keyed.sort();
        expected.extend(keyed.into_iter().take(m).map(|(_, _, id)| id.clone()));
    }
    assert_eq!(got, expected);
}

fn two_blob_graph() -> CitationGraph {
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for blob in ["a", "b"] {
        let citers: Vec<String> = (0..4).map(|j| format!("{blob}-citer{j}")).collect();
        nodes.extend(citers.iter().cloned());
        for i in 0..6 {
            let paper = format!("{blob}{i}");
            nodes.push(paper.clone());
            for (j, citer) in citers.iter().enumerate() {
                if i >= 4 || j != i {
                    edges.push((citer.clone(), paper.clone()));
                }
            }
        }
    }
    CitationGraph::new(nodes, edges).unwrap()
}

#[test]
fn two_blob_refinement_composes_stage_oracles() {
    let g = two_blob_graph();
    let cfg = RefineConfig {
        percentile: 50.0,
        m_k: TopPerCluster::Uniform(2),
        ..RefineConfig::default()
    };
    let result = refine(&g, &cfg).unwrap();

    let adj = oracles::adjacency(&g);
    let lc_vec = oracles::column_sums(&adj);
    let scope: Vec<usize> = (0..g.nodes.len()).filter(|&i| lc_vec[i] >= 3).collect();
    let c = oracles::cocitation_product(&adj, &scope);
    let s: Vec<Vec<f64>> = (0..scope.len())
        .map(|i| {
            (0..scope.len())
                .map(|j| c[i][j] as f64 / ((c[i][i] * c[j][j]) as f64).sqrt())
                .collect()
        })
        .collect();
    let (clusters, noise) = oracles::naive_dbscan(&s, cfg.dbscan_epsilon, cfg.min_pts);
    assert_eq!(clusters.len(), 2);
    assert!(noise.is_empty());
    let mut expected = BTreeSet::new();
    for cluster in &clusters {
        let mut keyed: Vec<(f64, u64, &String)> = cluster
            .iter()
            .map(|&i| {
                (
                    cluster.iter().map(|&j| s[i][j]).sum::<f64>(),
                    lc_vec[scope[i]],
                    &g.nodes[scope[i]],
                )
            })
            .collect();
        keyed.sort_by(|x, y| y.0.total_cmp(&x.0).then(y.1.cmp(&x.1)).then(x.2.cmp(y.2)));
        expected.extend(keyed.into_iter().take(2).map(|(_, _, id)| id.clone()));
    }
    assert_eq!(result.v_double_prime, expected);
    assert_eq!(
        result.v_double_prime,
        ["a4", "a5", "b4", "b5"].map(String::from).into()
    );
}

#[test]
fn raising_percentile_never_grows_v_prime() {
    let mut rng = ChaCha8Rng::seed_from_u64(90);
    for _ in 0..30 {
        let n = rng.random_range(5..40);
        let g = oracles::random_graph(&mut rng, n, 0.2);
        let low = refine(
            &g,
            &RefineConfig {
                percentile: 50.0,
                ..RefineConfig::default()
            },
        )
        .unwrap();
        let high = refine(
            &g,
            &RefineConfig {
                percentile: 90.0,
                ..RefineConfig::default()
            },
        )
        .unwrap();
        assert!(high.v_prime.is_subset(&low.v_prime));
    }
}
