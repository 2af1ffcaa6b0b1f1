use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::embed::{embed_corpus, EmbedError, EmbeddingProvider, EmbeddingVector};
use super::kmeans::{kmeans, KMeansError, DEFAULT_MAX_ITERATIONS};
use crate::linalg::{normalized, squared_distance};
use crate::model::Corpus;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeepRule {
    /// Keep the longest text; ties go to the lowest id.
    #[default]
    LongestText,
    LowestId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClusterCount {
    Fixed(usize),
    #[default]
    #[serde(with = "auto_literal")]
    Auto,
}

mod auto_literal {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("auto")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s == "auto" {
            Ok(())
        } else {
            Err(serde::de::Error::custom(format!(
                "expected \"auto\" or an integer, got {s:?}"
            )))
        }
    }
}

impl ClusterCount {
    /// `auto` is `ceil(n / 1000)` clamped to `[1, 5000]`.
    pub fn resolve(self, n: usize) -> usize {
        match self {
            ClusterCount::Fixed(k) => k,
            ClusterCount::Auto => n.div_ceil(1000).clamp(1, 5000),
        }
    }
}

impl std::str::FromStr for ClusterCount {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(ClusterCount::Auto);
        }
        match s.parse::<usize>() {
            Ok(k) if k > 0 => Ok(ClusterCount::Fixed(k)),
            _ => Err(format!("expected `auto` or a positive integer, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DedupConfig {
    pub k_clusters: ClusterCount,
    /// Cosine-distance radius.
    pub epsilon: f64,
    pub keep_rule: KeepRule,
    /// After the per-cluster passes, also remove survivors within epsilon of a
    /// higher-priority survivor in a neighbouring cluster.
    pub cross_cluster: bool,
    pub max_iterations: usize,
    pub max_in_flight: usize,
}

impl Default for DedupConfig {
    fn default() -> Self {
        Self {
            k_clusters: ClusterCount::Auto,
            epsilon: 0.05,
            keep_rule: KeepRule::LongestText,
            cross_cluster: true,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            max_in_flight: 4,
        }
    }
}

impl DedupConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.epsilon > 0.0 && self.epsilon <= 2.0) {
            return Err(format!(
                "dedup epsilon must be in (0, 2], got {}",
                self.epsilon
            ));
        }
        if self.k_clusters == ClusterCount::Fixed(0) {
            return Err("dedup k must be positive".into());
        }
        if self.max_in_flight == 0 {
            return Err("dedup max_in_flight must be >= 1".into());
        }
        Ok(())
    }
}

/// A vector plus what the keep rule needs to rank it.
#[derive(Debug, Clone, Copy)]
pub struct Candidate<'a, T> {
    pub vector: &'a EmbeddingVector<T>,
    pub text_len: usize,
}

impl<T> Candidate<'_, T> {
    fn id(&self) -> &str {
        &self.vector.doc_id
    }
}

fn priority<T>(rule: KeepRule, a: &Candidate<'_, T>, b: &Candidate<'_, T>) -> Ordering {
    match rule {
        KeepRule::LongestText => b.text_len.cmp(&a.text_len).then_with(|| a.id().cmp(b.id())),
        KeepRule::LowestId => a.id().cmp(b.id()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    pub removed_id: String,
    pub kept_id: String,
    pub distance: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BallDedup {
    pub kept: Vec<String>,
    pub removed: Vec<Removal>,
}

/// Greedy epsilon-ball pass over one cluster.
///
/// Members are visited in keep-rule priority order; a member is kept unless a
/// previously kept member lies within cosine distance `epsilon`, in which case
/// it is removed and attributed to the first such kept member.
pub fn epsilon_ball_dedup<T: Real>(
    members: &[Candidate<'_, T>],
    epsilon: T,
    keep_rule: KeepRule,
) -> BallDedup {
    let mut order: Vec<usize> = (0..members.len()).collect();
    order.sort_by(|&a, &b| priority(keep_rule, &members[a], &members[b]));
    let mut kept: Vec<usize> = Vec::new();
    let mut out = BallDedup::default();
    for &i in &order {
        let shadow = kept.iter().find_map(|&k| {
            let d = members[k].vector.cosine_distance(members[i].vector);
            (d <= epsilon).then_some((k, d))
        });
        match shadow {
            Some((k, d)) => out.removed.push(Removal {
                removed_id: members[i].id().to_string(),
                kept_id: members[k].id().to_string(),
                distance: d.to_f64_lossy(),
            }),
            None => {
                kept.push(i);
                out.kept.push(members[i].id().to_string());
            }
        }
    }
    out
}

#[derive(Debug, thiserror::Error)]
pub enum DedupError {
    #[error("cannot deduplicate an empty corpus")]
    EmptyCorpus,
    #[error("invalid dedup config: {0}")]
    Config(String),
    #[error(transparent)]
    Embedding(#[from] EmbedError<f64>),
    #[error(transparent)]
    Cluster(#[from] KMeansError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DedupReport {
    pub input_documents: usize,
    pub output_documents: usize,
    pub clusters: usize,
    pub kmeans_iterations: usize,
    pub removals: Vec<Removal>,
}

/// Cluster assignment per document id.
pub fn kmeans_cluster<T: Real>(
    vectors: &[EmbeddingVector<T>],
    k: usize,
    seed: u64,
) -> Result<BTreeMap<String, usize>, KMeansError> {
    let points: Vec<Vec<T>> = vectors.iter().map(|v| normalized(&v.values)).collect();
    let fit = kmeans(&points, k, seed, DEFAULT_MAX_ITERATIONS)?;
    Ok(vectors
        .iter()
        .zip(fit.assignments)
        .map(|(v, c)| (v.doc_id.clone(), c))
        .collect())
}

/// Clusters the embeddings, runs the epsilon-ball pass inside each cluster,
/// then (optionally) a cross-cluster sweep among survivors.
pub fn deduplicate_vectors<T: Real>(
    vectors: &[EmbeddingVector<T>],
    text_lens: &[usize],
    cfg: &DedupConfig,
    seed: u64,
) -> Result<(Vec<bool>, DedupReport), DedupError> {
    cfg.validate().map_err(DedupError::Config)?;
    let n = vectors.len();
    if n == 0 {
        return Err(DedupError::EmptyCorpus);
    }
    let k = cfg.k_clusters.resolve(n);
    let points: Vec<Vec<T>> = vectors.iter().map(|v| normalized(&v.values)).collect();
    let fit = kmeans(&points, k, seed, cfg.max_iterations)?;
    let members = fit.members(k);
    let eps = T::from_f64_lossy(cfg.epsilon);
    let index: BTreeMap<&str, usize> = vectors
        .iter()
        .enumerate()
        .map(|(i, v)| (v.doc_id.as_str(), i))
        .collect();

    let passes: Vec<BallDedup> = members
        .par_iter()
        .map(|m| {
            let cands: Vec<Candidate<'_, T>> = m
                .iter()
                .map(|&i| Candidate {
                    vector: &vectors[i],
                    text_len: text_lens[i],
                })
                .collect();
            epsilon_ball_dedup(&cands, eps, cfg.keep_rule)
        })
        .collect();

    let mut keep = vec![true; n];
    let mut removals = Vec::new();
    for pass in passes {
        for r in pass.removed {
            keep[index[r.removed_id.as_str()]] = false;
            removals.push(r);
        }
    }

    if cfg.cross_cluster && k > 1 {
        removals.extend(cross_cluster_sweep(
            vectors,
            text_lens,
            &points,
            &fit.assignments,
            &fit.centroids,
            &mut keep,
            cfg,
        ));
    }

    let order: BTreeMap<&str, usize> = index;
    removals.sort_by_key(|r| order[r.removed_id.as_str()]);
    let report = DedupReport {
        input_documents: n,
        output_documents: keep.iter().filter(|&&k| k).count(),
        clusters: k,
        kmeans_iterations: fit.iterations,
        removals,
    };
    Ok((keep, report))
}

/// Survivors of different clusters can still be within epsilon of each other.
/// A point `x` in cluster A can only have such a neighbour in cluster B if its
/// distance to the A|B bisecting hyperplane is at most `sqrt(2 eps)` (the
/// Euclidean radius of the cosine ball on unit vectors), so only those
/// cluster pairs are scanned.
fn cross_cluster_sweep<T: Real>(
    vectors: &[EmbeddingVector<T>],
    text_lens: &[usize],
    points: &[Vec<T>],
    assignments: &[usize],
    centroids: &[Vec<T>],
    keep: &mut [bool],
    cfg: &DedupConfig,
) -> Vec<Removal> {
    let eps = T::from_f64_lossy(cfg.epsilon);
    let radius = (T::from_f64_lossy(2.0) * eps).sqrt() * T::from_f64_lossy(1.0 + 1e-6)
        + T::from_f64_lossy(1e-9);
    let k = centroids.len();
    let mut by_cluster: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &c) in assignments.iter().enumerate() {
        if keep[i] {
            by_cluster[c].push(i);
        }
    }
    let cand = |i: usize| Candidate {
        vector: &vectors[i],
        text_len: text_lens[i],
    };
    let mut order: Vec<usize> = (0..vectors.len()).filter(|&i| keep[i]).collect();
    order.sort_by(|&a, &b| priority(cfg.keep_rule, &cand(a), &cand(b)));
    let rank: BTreeMap<usize, usize> = order.iter().enumerate().map(|(r, &i)| (i, r)).collect();

    let centroid_gap: Vec<Vec<T>> = (0..k)
        .map(|a| {
            (0..k)
                .map(|b| squared_distance(&centroids[a], &centroids[b]).sqrt())
                .collect()
        })
        .collect();

    let mut removals = Vec::new();
    for &x in &order {
        if !keep[x] {
            continue;
        }
        let a = assignments[x];
        let dxa = squared_distance(&points[x], &centroids[a]);
        for b in (0..k).filter(|&b| b != a) {
            let gap = centroid_gap[a][b];
            if gap > T::zero() {
                let dxb = squared_distance(&points[x], &centroids[b]);
                let to_plane = (dxb - dxa) / (T::from_f64_lossy(2.0) * gap);
                if to_plane > radius {
                    continue;
                }
            }
            for &y in &by_cluster[b] {
                if !keep[y] || rank[&y] < rank[&x] {
                    continue;
                }
                let d = vectors[x].cosine_distance(&vectors[y]);
                if d <= eps {
                    keep[y] = false;
                    removals.push(Removal {
                        removed_id: vectors[y].doc_id.clone(),
                        kept_id: vectors[x].doc_id.clone(),
                        distance: d.to_f64_lossy(),
                    });
                }
            }
        }
    }
    removals
}

/// Embed, cluster and epsilon-ball deduplicate a corpus. Surviving documents
/// keep their input order.
pub fn deduplicate(
    corpus: &Corpus,
    cfg: &DedupConfig,
    provider: &dyn EmbeddingProvider,
    seed: u64,
) -> Result<(Corpus, DedupReport), DedupError> {
    cfg.validate().map_err(DedupError::Config)?;
    if corpus.is_empty() {
        return Err(DedupError::EmptyCorpus);
    }
    let vectors: Vec<EmbeddingVector<f64>> = embed_corpus(corpus, provider, cfg.max_in_flight)?;
    let lens: Vec<usize> = corpus
        .documents
        .iter()
        .map(|d| d.text.chars().count())
        .collect();
    let (keep, report) = deduplicate_vectors(&vectors, &lens, cfg, seed)?;
    let docs = corpus
        .documents
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(d, _)| d.clone())
        .collect();
    Ok((Corpus::new(docs), report))
}

/// Ids of documents that remain after removal, as a set.
pub fn surviving_ids(corpus: &Corpus) -> BTreeSet<String> {
    corpus.documents.iter().map(|d| d.id.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(id: &str, v: &[f64]) -> EmbeddingVector<f64> {
        EmbeddingVector::new(id, v.to_vec())
    }

    #[test]
    fn identical_vectors_keep_one() {
        let a = ev("a", &[1.0, 0.0]);
        let b = ev("b", &[1.0, 0.0]);
        let out = epsilon_ball_dedup(
            &[
                Candidate {
                    vector: &a,
                    text_len: 3,
                },
                Candidate {
                    vector: &b,
                    text_len: 3,
                },
            ],
            0.05,
            KeepRule::LongestText,
        );
        assert_eq!(out.kept, vec!["a"]);
        assert_eq!(out.removed[0].kept_id, "a");
    }

    #[test]
    fn distant_vectors_all_kept() {
        let vs = [
            ev("a", &[1.0, 0.0, 0.0]),
            ev("b", &[0.0, 1.0, 0.0]),
            ev("c", &[0.0, 0.0, 1.0]),
        ];
        let cands: Vec<_> = vs
            .iter()
            .map(|v| Candidate {
                vector: v,
                text_len: 1,
            })
            .collect();
        let out = epsilon_ball_dedup(&cands, 0.05, KeepRule::LowestId);
        assert_eq!(out.kept.len(), 3);
        assert!(out.removed.is_empty());
    }

    #[test]
    fn tight_ball_keeps_rule_maximum() {
        let vs: Vec<_> = (0..5)
            .map(|i| ev(&format!("m{i}"), &[1.0, 0.001 * i as f64]))
            .collect();
        let lens = [10, 40, 25, 40, 5];
        // brute-force: every pair within epsilon
        for a in &vs {
            for b in &vs {
                assert!(a.cosine_distance(b) <= 0.05);
            }
        }
        let cands: Vec<_> = vs
            .iter()
            .zip(lens)
            .map(|(v, l)| Candidate {
                vector: v,
                text_len: l,
            })
            .collect();
        let out = epsilon_ball_dedup(&cands, 0.05, KeepRule::LongestText);
        // longest text is 40, tie between m1 and m3 goes to the lower id
        assert_eq!(out.kept, vec!["m1"]);
        assert_eq!(out.removed.len(), 4);
        let out = epsilon_ball_dedup(&cands, 0.05, KeepRule::LowestId);
        assert_eq!(out.kept, vec!["m0"]);
    }

    #[test]
    fn auto_k_rule() {
        assert_eq!(ClusterCount::Auto.resolve(1), 1);
        assert_eq!(ClusterCount::Auto.resolve(1000), 1);
        assert_eq!(ClusterCount::Auto.resolve(1001), 2);
        assert_eq!(ClusterCount::Auto.resolve(10_000_000), 5000);
        assert_eq!("auto".parse::<ClusterCount>().unwrap(), ClusterCount::Auto);
        assert_eq!("7".parse::<ClusterCount>().unwrap(), ClusterCount::Fixed(7));
        assert!("0".parse::<ClusterCount>().is_err());
    }

    #[test]
    fn config_serde_and_validation() {
        let cfg: DedupConfig =
            serde_json::from_str(r#"{"k_clusters":"auto","epsilon":0.1}"#).unwrap();
        assert_eq!(cfg.k_clusters, ClusterCount::Auto);
        let cfg: DedupConfig = serde_json::from_str(r#"{"k_clusters":3}"#).unwrap();
        assert_eq!(cfg.k_clusters, ClusterCount::Fixed(3));
        assert!(DedupConfig {
            epsilon: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(DedupConfig {
            epsilon: 2.5,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(DedupConfig {
            epsilon: 2.0,
            ..Default::default()
        }
        .validate()
        .is_ok());
    }

    #[test]
    fn invalid_k_propagates() {
        let vs = [ev("a", &[1.0]), ev("b", &[2.0])];
        let cfg = DedupConfig {
            k_clusters: ClusterCount::Fixed(3),
            ..Default::default()
        };
        assert!(matches!(
            deduplicate_vectors(&vs, &[1, 1], &cfg, 0),
            Err(DedupError::Cluster(_))
        ));
    }
}
