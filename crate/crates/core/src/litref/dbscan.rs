use serde::{Deserialize, Serialize};

use super::SimilarityMatrix;
use crate::scalar::Real;

/// How `epsilon` is compared against a similarity `s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsMode {
    /// Neighbours satisfy `1 - s <= epsilon`.
    #[default]
    Distance,
    /// Neighbours satisfy `s >= epsilon`.
    Similarity,
}

impl std::str::FromStr for EpsMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "distance" => Ok(EpsMode::Distance),
            "similarity" => Ok(EpsMode::Similarity),
            other => Err(format!(
                "eps mode must be `distance` or `similarity`, got `{other}`"
            )),
        }
    }
}

/// Index-level DBSCAN output. Clusters are ordered by their lowest core index.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DbscanPartition {
    pub clusters: Vec<Vec<usize>>,
    pub noise: Vec<usize>,
    pub core: Vec<bool>,
}

pub fn is_neighbor<T: Real>(s: T, epsilon: T, mode: EpsMode) -> bool {
    match mode {
        EpsMode::Distance => T::one() - s <= epsilon,
        EpsMode::Similarity => s >= epsilon,
    }
}

/// Neighbour lists, excluding the point itself.
pub fn neighborhoods<T: Real>(
    s: &SimilarityMatrix<T>,
    epsilon: T,
    mode: EpsMode,
) -> Vec<Vec<usize>> {
    let n = s.len();
    (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && is_neighbor(s.values.get(i, j), epsilon, mode))
                .collect()
        })
        .collect()
}

/// DBSCAN over a precomputed similarity matrix.
///
/// A point is core when it has at least `min_pts - 1` neighbours. Clusters
/// grow from unvisited core points in index order; a border point joins the
/// first cluster that reaches it.
pub fn dbscan_cluster<T: Real>(
    s: &SimilarityMatrix<T>,
    epsilon: T,
    min_pts: usize,
    mode: EpsMode,
) -> DbscanPartition {
    let n = s.len();
    let nbrs = neighborhoods(s, epsilon, mode);
    let core: Vec<bool> = nbrs.iter().map(|nb| nb.len() + 1 >= min_pts).collect();
    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for start in 0..n {
        if label[start].is_some() || !core[start] {
            continue;
        }
        let c = clusters.len();
        let mut members = vec![start];
        label[start] = Some(c);
        let mut stack = vec![start];
        while let Some(p) = stack.pop() {
            if !core[p] {
                continue;
            }
            for &q in &nbrs[p] {
                if label[q].is_none() {
                    label[q] = Some(c);
                    members.push(q);
                    stack.push(q);
                }
            }
        }
        members.sort_unstable();
        clusters.push(members);
    }
    let noise = (0..n).filter(|&i| label[i].is_none()).collect();
    DbscanPartition {
        clusters,
        noise,
        core,
    }
}
