use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::gateway::{bounded_map, TransportError};
use crate::linalg::l2_norm;
use crate::model::Corpus;
use crate::scalar::Real;

/// A document embedding with its cached Euclidean norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector<T> {
    pub doc_id: String,
    pub values: Vec<T>,
    pub norm: T,
}

impl<T: Real> EmbeddingVector<T> {
    pub fn new(doc_id: impl Into<String>, values: Vec<T>) -> Self {
        let norm = l2_norm(&values);
        Self {
            doc_id: doc_id.into(),
            values,
            norm,
        }
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    /// Cached norm agrees with a fresh computation.
    pub fn norm_is_consistent(&self, tol: T) -> bool {
        (l2_norm(&self.values) - self.norm).abs() <= tol
    }

    pub fn cosine_distance(&self, other: &Self) -> T {
        crate::linalg::cosine_distance(&self.values, self.norm, &other.values, other.norm)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProviderError {
    #[error("embedding request failed after {attempts} attempt(s): {error}")]
    Transport {
        error: TransportError,
        attempts: u32,
    },
    #[error("provider returned {got} vectors for {expected} texts")]
    Count { expected: usize, got: usize },
    #[error("provider returned a {got}-dimensional vector, expected {expected}")]
    Dimension { expected: usize, got: usize },
}

/// Source of document embeddings.
pub trait EmbeddingProvider: Send + Sync {
    fn dimension(&self) -> usize;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, ProviderError>;

    fn batch_size(&self) -> usize {
        32
    }
}

/// Offline provider: signed feature hashing of lower-cased word tokens.
///
/// Identical texts map to identical vectors; texts sharing most of their
/// tokens map to nearby vectors.
#[derive(Debug, Clone)]
pub struct FeatureHashEmbedder {
    pub dimension: usize,
    pub seed: u64,
}

impl FeatureHashEmbedder {
    pub fn new(dimension: usize, seed: u64) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension, seed }
    }

    pub fn embed_text(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dimension];
        for token in text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
        {
            let token = token.to_lowercase();
            let mut h = Sha256::new();
            h.update(self.seed.to_le_bytes());
            h.update(token.as_bytes());
            let d = h.finalize();
            let word = u64::from_le_bytes(d[..8].try_into().expect("8 bytes"));
            let bucket = (word % self.dimension as u64) as usize;
            let sign = if d[8] & 1 == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign;
        }
        v
    }
}

impl Default for FeatureHashEmbedder {
    fn default() -> Self {
        Self::new(256, 0)
    }
}

impl EmbeddingProvider for FeatureHashEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, ProviderError> {
        Ok(texts.iter().map(|t| self.embed_text(t)).collect())
    }
}

/// Embedding failed part-way; `completed` holds the contiguous prefix that succeeded.
#[derive(Debug, thiserror::Error)]
#[error("embedding aborted after {} of {total} documents: {source}", completed.len())]
pub struct EmbedError<T> {
    pub completed: Vec<EmbeddingVector<T>>,
    pub total: usize,
    #[source]
    pub source: ProviderError,
}

/// One vector per document, in corpus order.
pub fn embed_corpus<T: Real>(
    corpus: &Corpus,
    provider: &dyn EmbeddingProvider,
    max_in_flight: usize,
) -> Result<Vec<EmbeddingVector<T>>, EmbedError<T>> {
    let dim = provider.dimension();
    let batches: Vec<&[crate::model::Document]> = corpus
        .documents
        .chunks(provider.batch_size().max(1))
        .collect();
    let results = bounded_map(&batches, max_in_flight, |_, batch| {
        let texts: Vec<&str> = batch.iter().map(|d| d.text.as_str()).collect();
        let raw = provider.embed_batch(&texts)?;
        if raw.len() != batch.len() {
            return Err(ProviderError::Count {
                expected: batch.len(),
                got: raw.len(),
            });
        }
        batch
            .iter()
            .zip(raw)
            .map(|(doc, v)| {
                if v.len() != dim {
                    return Err(ProviderError::Dimension {
                        expected: dim,
                        got: v.len(),
                    });
                }
                Ok(EmbeddingVector::new(
                    doc.id.clone(),
                    v.into_iter().map(T::from_f64_lossy).collect(),
                ))
            })
            .collect::<Result<Vec<_>, _>>()
    });
    let mut out = Vec::with_capacity(corpus.len());
    for r in results {
        match r {
            Ok(vs) => out.extend(vs),
            Err(source) => {
                return Err(EmbedError {
                    completed: out,
                    total: corpus.len(),
                    source,
                })
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Document, Source, WhitespaceTokenizer};

    fn corpus(texts: &[&str]) -> Corpus {
        Corpus::new(
            texts
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    Document::new(
                        format!("d{i}"),
                        Source::Oap,
                        "smart grid",
                        *t,
                        &WhitespaceTokenizer,
                    )
                })
                .collect(),
        )
    }

    #[test]
    fn empty_corpus_embeds_to_nothing() {
        let v: Vec<EmbeddingVector<f64>> =
            embed_corpus(&corpus(&[]), &FeatureHashEmbedder::default(), 4).unwrap();
        assert!(v.is_empty());
    }

    #[test]
    fn identical_texts_have_zero_distance() {
        let c = corpus(&[
            "battery storage arbitrage",
            "battery storage arbitrage",
            "wind curtailment",
        ]);
        let v: Vec<EmbeddingVector<f64>> =
            embed_corpus(&c, &FeatureHashEmbedder::default(), 2).unwrap();
        assert_eq!(v[0].values, v[1].values);
        assert_eq!(v[0].cosine_distance(&v[1]), 0.0);
        assert!(v[0].cosine_distance(&v[2]) > 0.5);
        assert!(v
            .iter()
            .all(|e| e.dimension() == 256 && e.norm_is_consistent(1e-9)));
    }

    #[test]
    fn deterministic_across_calls() {
        let e = FeatureHashEmbedder::new(64, 9);
        assert_eq!(
            e.embed_text("Demand response"),
            e.embed_text("Demand response")
        );
        assert_ne!(
            e.embed_text("Demand response"),
            FeatureHashEmbedder::new(64, 10).embed_text("Demand response")
        );
    }

    struct FailsAfter(usize);

    impl EmbeddingProvider for FailsAfter {
        fn dimension(&self) -> usize {
            4
        }
        fn batch_size(&self) -> usize {
            2
        }
        fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, ProviderError> {
            if texts.iter().any(|t| t.parse::<usize>().unwrap() >= self.0) {
                return Err(ProviderError::Transport {
                    error: TransportError::Timeout,
                    attempts: 5,
                });
            }
            Ok(texts.iter().map(|_| vec![1.0, 0.0, 0.0, 0.0]).collect())
        }
    }

    #[test]
    fn failure_keeps_completed_prefix() {
        let c = corpus(&["0", "1", "2", "3", "4", "5"]);
        let err = embed_corpus::<f64>(&c, &FailsAfter(4), 1).unwrap_err();
        assert_eq!(err.completed.len(), 4);
        assert_eq!(err.total, 6);
    }
}
