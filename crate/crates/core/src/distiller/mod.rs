//! Semantic deduplication: embed documents, cluster them with k-means, and
//! remove documents that fall inside the same cosine epsilon-ball.

mod dedup;
mod embed;
mod kmeans;

pub use dedup::{
    deduplicate, deduplicate_vectors, epsilon_ball_dedup, kmeans_cluster, surviving_ids, BallDedup,
    Candidate, ClusterCount, DedupConfig, DedupError, DedupReport, KeepRule, Removal,
};
pub use embed::{
    embed_corpus, EmbedError, EmbeddingProvider, EmbeddingVector, FeatureHashEmbedder,
    ProviderError,
};
pub use kmeans::{kmeans, KMeansError, KMeansFit, DEFAULT_MAX_ITERATIONS};
