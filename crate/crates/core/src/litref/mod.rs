//! Two-stage literature refinement over a citation network.
//!
//! Stage one keeps papers whose local citation count reaches a nearest-rank
//! percentile. Stage two clusters the survivors by normalized co-citation
//! similarity with DBSCAN and keeps the most central papers of each cluster.

mod dbscan;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use dbscan::{dbscan_cluster, is_neighbor, neighborhoods, DbscanPartition, EpsMode};

use crate::linalg::Matrix;
use crate::model::CitationGraph;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RefineError {
    #[error("citation counts are empty")]
    EmptyInput,
    #[error("invalid refine config: {0}")]
    Config(String),
    #[error("per-cluster m_k has {given} entries but DBSCAN found {clusters} clusters")]
    MkMismatch { given: usize, clusters: usize },
}

/// Papers kept per cluster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TopPerCluster {
    Uniform(usize),
    PerCluster(Vec<usize>),
}

impl Default for TopPerCluster {
    fn default() -> Self {
        TopPerCluster::Uniform(10)
    }
}

/// Range searched for a uniform `m_k` when a target size is configured.
pub const MK_SEARCH_RANGE: std::ops::RangeInclusive<usize> = 5..=15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    pub percentile: f64,
    pub dbscan_epsilon: f64,
    pub min_pts: usize,
    pub eps_mode: EpsMode,
    pub m_k: TopPerCluster,
    /// When set, a uniform `m_k` in 5..=15 is chosen to bring |V''| closest to this.
    pub target_size: Option<usize>,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            percentile: 70.0,
            dbscan_epsilon: 0.7,
            min_pts: 5,
            eps_mode: EpsMode::Distance,
            m_k: TopPerCluster::default(),
            target_size: None,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<(), RefineError> {
        let bad = |m: String| Err(RefineError::Config(m));
        if !(self.percentile > 0.0 && self.percentile < 100.0) {
            return bad(format!(
                "percentile must be in (0, 100), got {}",
                self.percentile
            ));
        }
        if !(self.dbscan_epsilon > 0.0 && self.dbscan_epsilon <= 1.0) {
            return bad(format!(
                "dbscan epsilon must be in (0, 1], got {}",
                self.dbscan_epsilon
            ));
        }
        if self.min_pts == 0 {
            return bad("min_pts must be >= 1".into());
        }
        match &self.m_k {
            TopPerCluster::Uniform(0) => return bad("m_k must be >= 1".into()),
            TopPerCluster::PerCluster(v) if v.contains(&0) => {
                return bad("every m_k must be >= 1".into())
            }
            _ => {}
        }
        if self.target_size == Some(0) {
            return bad("target size must be positive".into());
        }
        Ok(())
    }
}

/// In-degree of every node, counting only citers inside the graph.
pub fn local_citation_counts(g: &CitationGraph) -> BTreeMap<String, u64> {
    let mut lc: BTreeMap<String, u64> = g.nodes.iter().map(|n| (n.clone(), 0)).collect();
    for (citer, cited) in &g.edges {
        if lc.contains_key(citer) {
            if let Some(c) = lc.get_mut(cited) {
                *c += 1;
            }
        }
    }
    lc
}

/// Nearest-rank percentile: the smallest value with at least `p`% of values at or below it.
pub fn nearest_rank(values: &[u64], percentile: f64) -> Option<u64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let rank = ((percentile / 100.0) * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// Nodes whose count reaches the nearest-rank percentile threshold (ties kept).
pub fn percentile_filter(
    lc: &BTreeMap<String, u64>,
    percentile: f64,
) -> Result<(u64, BTreeSet<String>), RefineError> {
    let values: Vec<u64> = lc.values().copied().collect();
    let theta = nearest_rank(&values, percentile).ok_or(RefineError::EmptyInput)?;
    Ok((
        theta,
        lc.iter()
            .filter(|(_, &v)| v >= theta)
            .map(|(k, _)| k.clone())
            .collect(),
    ))
}

/// Co-citation counts over a scope of papers, in scope order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoCitation {
    pub ids: Vec<String>,
    pub counts: Matrix<u64>,
}

/// `c_ij` = number of papers in the graph citing both `i` and `j`; `c_ii` is the
/// local citation count of `i`. Ids outside the graph get zero rows.
pub fn cocitation_matrix(g: &CitationGraph, scope: &[String]) -> CoCitation {
    let pos: BTreeMap<&str, usize> = scope
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let nodes: BTreeSet<&str> = g.nodes.iter().map(String::as_str).collect();
    let mut cited_by: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (citer, cited) in &g.edges {
        if !nodes.contains(citer.as_str()) {
            continue;
        }
        if let Some(&j) = pos.get(cited.as_str()) {
            cited_by.entry(citer.as_str()).or_default().push(j);
        }
    }
    let n = scope.len();
    let mut counts = Matrix::<u64>::zeros(n, n);
    for targets in cited_by.values() {
        for &a in targets {
            for &b in targets {
                counts.set(a, b, counts.get(a, b) + 1);
            }
        }
    }
    CoCitation {
        ids: scope.to_vec(),
        counts,
    }
}

/// Symmetric similarity over a list of ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix<T> {
    pub ids: Vec<String>,
    pub values: Matrix<T>,
}

impl<T: Real> SimilarityMatrix<T> {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Multiply every entry by `alpha`.
    pub fn scaled(&self, alpha: T) -> Self {
        Self {
            ids: self.ids.clone(),
            values: self.values.map(|v| v * alpha),
        }
    }
}

/// `s_ij = c_ij / sqrt(c_ii c_jj)`, zero when either diagonal is zero.
pub fn normalized_similarity<T: Real>(c: &CoCitation) -> SimilarityMatrix<T> {
    let n = c.ids.len();
    let diag: Vec<T> = (0..n)
        .map(|i| T::from_f64_lossy(c.counts.get(i, i) as f64))
        .collect();
    let values = Matrix::from_fn(n, n, |i, j| {
        if diag[i] == T::zero() || diag[j] == T::zero() {
            return T::zero();
        }
        if i == j {
            return T::one();
        }
        let v = T::from_f64_lossy(c.counts.get(i, j) as f64) / (diag[i] * diag[j]).sqrt();
        v.min(T::one())
    });
    SimilarityMatrix {
        ids: c.ids.clone(),
        values,
    }
}

/// Sum of similarities from each member to every member of its cluster (self included).
pub fn centrality_degree<T: Real>(cluster: &[usize], s: &SimilarityMatrix<T>) -> Vec<T> {
    cluster
        .iter()
        .map(|&i| cluster.iter().map(|&j| s.values.get(i, j)).sum())
        .collect()
}

/// Per cluster, the `m_k` members ranked by centrality desc, then local
/// citation count desc, then id asc. Returns the union.
pub fn select_top_per_cluster(
    clusters: &[Vec<String>],
    centrality: &BTreeMap<String, f64>,
    lc: &BTreeMap<String, u64>,
    m_k: &[usize],
) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for (cluster, &m) in clusters.iter().zip(m_k) {
        let mut ranked: Vec<&String> = cluster.iter().collect();
        ranked.sort_by(|a, b| {
            let ca = centrality.get(*a).copied().unwrap_or(0.0);
            let cb = centrality.get(*b).copied().unwrap_or(0.0);
            cb.total_cmp(&ca)
                .then_with(|| lc.get(*b).cmp(&lc.get(*a)))
                .then_with(|| a.cmp(b))
        });
        out.extend(ranked.into_iter().take(m).cloned());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineResult {
    pub lc: BTreeMap<String, u64>,
    pub threshold: u64,
    pub v_prime: BTreeSet<String>,
    pub clusters: Vec<BTreeSet<String>>,
    pub noise: BTreeSet<String>,
    pub centrality: BTreeMap<String, f64>,
    pub m_k: Vec<usize>,
    pub v_double_prime: BTreeSet<String>,
}

/// Full two-stage refinement.
pub fn refine(g: &CitationGraph, cfg: &RefineConfig) -> Result<RefineResult, RefineError> {
    cfg.validate()?;
    let lc = local_citation_counts(g);
    let (threshold, v_prime) = percentile_filter(&lc, cfg.percentile)?;

    // Keep graph node order for the stage-two matrices.
    let scope: Vec<String> = g
        .nodes
        .iter()
        .filter(|n| v_prime.contains(*n))
        .cloned()
        .collect();
    let c = cocitation_matrix(g, &scope);
    let s: SimilarityMatrix<f64> = normalized_similarity(&c);
    let part = dbscan_cluster(&s, cfg.dbscan_epsilon, cfg.min_pts, cfg.eps_mode);

    let mut centrality = BTreeMap::new();
    for cluster in &part.clusters {
        for (&i, cd) in cluster.iter().zip(centrality_degree(cluster, &s)) {
            centrality.insert(scope[i].clone(), cd);
        }
    }
    let clusters: Vec<Vec<String>> = part
        .clusters
        .iter()
        .map(|c| c.iter().map(|&i| scope[i].clone()).collect())
        .collect();

    let m_k: Vec<usize> = match (cfg.target_size, &cfg.m_k) {
        (Some(target), _) => {
            let best = MK_SEARCH_RANGE
                .min_by_key(|&m| {
                    let size = select_top_per_cluster(
                        &clusters,
                        &centrality,
                        &lc,
                        &vec![m; clusters.len()],
                    )
                    .len();
                    (size.abs_diff(target), m)
                })
                .expect("non-empty range");
            vec![best; clusters.len()]
        }
        (None, TopPerCluster::Uniform(m)) => vec![*m; clusters.len()],
        (None, TopPerCluster::PerCluster(v)) => {
            if v.len() != clusters.len() {
                return Err(RefineError::MkMismatch {
                    given: v.len(),
                    clusters: clusters.len(),
                });
            }
            v.clone()
        }
    };
    let v_double_prime = select_top_per_cluster(&clusters, &centrality, &lc, &m_k);
    Ok(RefineResult {
        lc,
        threshold,
        v_prime,
        clusters: clusters
            .into_iter()
            .map(|c| c.into_iter().collect())
            .collect(),
        noise: part.noise.iter().map(|&i| scope[i].clone()).collect(),
        centrality,
        m_k,
        v_double_prime,
    })
}
