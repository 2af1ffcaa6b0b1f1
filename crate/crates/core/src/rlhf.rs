//! Preference data and alignment math.
//!
//! Ranked answer sets become adjacent-tier preference pairs; a [`Scorer`]
//! gives the pairwise ranking loss and ranks rejection-sampling candidates;
//! [`LoraLayer`] evaluates a frozen weight plus a low-rank update.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distiller::FeatureHashEmbedder;
use crate::gateway::{slots, AgentHandle};
use crate::linalg::{dot, Matrix, ShapeError};
use crate::model::{CandidateAnswerSet, PreferencePair, RankedAnswerSet};
use crate::scalar::{sigmoid, softplus, Real};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScorerError {
    #[error("judge agent failed: {0}")]
    Agent(String),
    #[error("unparseable judge reply: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RlhfError {
    #[error("malformed answer set `{question_id}`: {reason}")]
    MalformedSet { question_id: String, reason: String },
    #[error("loss over an empty batch")]
    EmptyBatch,
    #[error("k = {k} is invalid for a set of {available} candidates")]
    InvalidK { k: usize, available: usize },
    #[error("candidate set `{0}` has not been ranked")]
    NotRanked(String),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
}

/// Reward model `r(question, answer)`.
pub trait Scorer<T: Real>: Sync {
    fn score(&self, question: &str, answer: &str) -> Result<T, ScorerError>;
}

/// Linear reward `w · φ(q, a)`.
///
/// `φ` is a signed feature-hash of the answer tokens followed by one feature
/// holding the fraction of question tokens that reappear in the answer.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFeatureScorer<T> {
    pub weights: Vec<T>,
    pub hash_dimension: usize,
    pub seed: u64,
}

fn tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

impl<T: Real> LinearFeatureScorer<T> {
    pub fn new(weights: Vec<T>, seed: u64) -> Self {
        assert!(
            weights.len() >= 2,
            "need at least one hashed feature and the overlap feature"
        );
        let hash_dimension = weights.len() - 1;
        Self {
            weights,
            hash_dimension,
            seed,
        }
    }

    pub fn zeros(hash_dimension: usize, seed: u64) -> Self {
        Self::new(vec![T::zero(); hash_dimension + 1], seed)
    }

    pub fn feature_count(&self) -> usize {
        self.hash_dimension + 1
    }

    pub fn features(&self, question: &str, answer: &str) -> Vec<T> {
        let mut phi: Vec<T> = FeatureHashEmbedder::new(self.hash_dimension, self.seed)
            .embed_text(answer)
            .into_iter()
            .map(T::from_f64_lossy)
            .collect();
        let q = tokens(question);
        let overlap = if q.is_empty() {
            0.0
        } else {
            let a = tokens(answer);
            q.intersection(&a).count() as f64 / q.len() as f64
        };
        phi.push(T::from_f64_lossy(overlap));
        phi
    }

    pub fn score_value(&self, question: &str, answer: &str) -> T {
        dot(&self.weights, &self.features(question, answer))
    }
}

impl<T: Real> Scorer<T> for LinearFeatureScorer<T> {
    fn score(&self, question: &str, answer: &str) -> Result<T, ScorerError> {
        Ok(self.score_value(question, answer))
    }
}

/// Reward from a judge agent scoring the answer without a reference.
pub struct JudgeScorer {
    pub judge: AgentHandle,
}

impl<T: Real> Scorer<T> for JudgeScorer {
    fn score(&self, question: &str, answer: &str) -> Result<T, ScorerError> {
        let s = slots([("question", question), ("answer", answer)]);
        let reply = self
            .judge
            .dispatch_named("judge_independent", &s)
            .map_err(|e| ScorerError::Agent(e.to_string()))?;
        crate::bench::parse_judge_score(&reply.text)
            .map(T::from_f64_lossy)
            .map_err(ScorerError::Parse)
    }
}

/// Three adjacent-tier pairs per question, best tier first.
pub fn build_preference_pairs(sets: &[RankedAnswerSet]) -> Result<Vec<PreferencePair>, RlhfError> {
    let mut out = Vec::with_capacity(sets.len() * 3);
    for set in sets {
        set.validate().map_err(|reason| RlhfError::MalformedSet {
            question_id: set.question_id.clone(),
            reason,
        })?;
        for (rank, w) in set.tiered_answers.windows(2).enumerate() {
            if w[0].text == w[1].text {
                return Err(RlhfError::MalformedSet {
                    question_id: set.question_id.clone(),
                    reason: format!(
                        "tiers {:?} and {:?} have identical text",
                        w[0].tier, w[1].tier
                    ),
                });
            }
            out.push(PreferencePair {
                question_id: set.question_id.clone(),
                prompt: set.question.clone(),
                chosen: w[0].text.clone(),
                rejected: w[1].text.clone(),
                pair_rank: rank as u8 + 1,
            });
        }
    }
    Ok(out)
}

/// Score margins `r(q, chosen) - r(q, rejected)` in pair order.
pub fn margins<T: Real>(
    pairs: &[PreferencePair],
    scorer: &dyn Scorer<T>,
) -> Result<Vec<T>, ScorerError> {
    pairs
        .par_iter()
        .map(|p| Ok(scorer.score(&p.prompt, &p.chosen)? - scorer.score(&p.prompt, &p.rejected)?))
        .collect()
}

/// Mean of `-ln σ(m)` over the margins, summed in order.
pub fn loss_from_margins<T: Real>(margins: &[T]) -> Result<T, RlhfError> {
    if margins.is_empty() {
        return Err(RlhfError::EmptyBatch);
    }
    let total = margins.iter().fold(T::zero(), |acc, &m| acc + softplus(-m));
    Ok(total / T::from_usize_lossy(margins.len()))
}

/// Pairwise ranking loss averaged over all pairs.
pub fn rm_pairwise_loss<T: Real>(
    pairs: &[PreferencePair],
    scorer: &dyn Scorer<T>,
) -> Result<T, RlhfError> {
    if pairs.is_empty() {
        return Err(RlhfError::EmptyBatch);
    }
    loss_from_margins(&margins(pairs, scorer)?)
}

/// Gradient of [`rm_pairwise_loss`] with respect to the scorer weights:
/// `-(1/N) Σ σ(-m) (φ⁺ - φ⁻)`.
pub fn rm_loss_gradient<T: Real>(
    pairs: &[PreferencePair],
    scorer: &LinearFeatureScorer<T>,
) -> Result<Vec<T>, RlhfError> {
    if pairs.is_empty() {
        return Err(RlhfError::EmptyBatch);
    }
    let terms: Vec<Vec<T>> = pairs
        .par_iter()
        .map(|p| {
            let pos = scorer.features(&p.prompt, &p.chosen);
            let neg = scorer.features(&p.prompt, &p.rejected);
            let diff: Vec<T> = pos.iter().zip(&neg).map(|(&a, &b)| a - b).collect();
            let w = sigmoid(-dot(&scorer.weights, &diff));
            diff.into_iter().map(|d| w * d).collect()
        })
        .collect();
    let n = T::from_usize_lossy(pairs.len());
    let mut grad = vec![T::zero(); scorer.feature_count()];
    for t in &terms {
        for (g, &v) in grad.iter_mut().zip(t) {
            *g += v;
        }
    }
    Ok(grad.into_iter().map(|g| -g / n).collect())
}

/// Indices that sort `scores` descending, ties by original index.
pub fn descending_order(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

/// Score every candidate and reorder them best first (stable).
pub fn rank_candidates<T: Real>(
    set: &CandidateAnswerSet,
    scorer: &dyn Scorer<T>,
) -> Result<CandidateAnswerSet, ScorerError> {
    let scores: Vec<f64> = set
        .candidates
        .par_iter()
        .map(|c| scorer.score(&set.question, c).map(|s| s.to_f64_lossy()))
        .collect::<Result<_, _>>()?;
    Ok(reorder(set, &scores))
}

/// Reorder a set by precomputed scores.
pub fn reorder(set: &CandidateAnswerSet, scores: &[f64]) -> CandidateAnswerSet {
    let order = descending_order(scores);
    CandidateAnswerSet {
        question_id: set.question_id.clone(),
        question: set.question.clone(),
        candidates: order.iter().map(|&i| set.candidates[i].clone()).collect(),
        scores: Some(order.iter().map(|&i| scores[i]).collect()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldRow {
    pub question_id: String,
    pub question: String,
    pub answer: String,
    pub score: f64,
    /// 1-based position in the ranked set.
    pub rank: usize,
}

/// The top `k` answers of every ranked set.
pub fn select_gold(sets: &[CandidateAnswerSet], k: usize) -> Result<Vec<GoldRow>, RlhfError> {
    let mut out = Vec::with_capacity(sets.len() * k);
    for set in sets {
        if k == 0 || k > set.candidates.len() {
            return Err(RlhfError::InvalidK {
                k,
                available: set.candidates.len(),
            });
        }
        let scores = set
            .scores
            .as_ref()
            .ok_or_else(|| RlhfError::NotRanked(set.question_id.clone()))?;
        if scores.windows(2).any(|w| w[0] < w[1]) {
            return Err(RlhfError::NotRanked(set.question_id.clone()));
        }
        out.extend((0..k).map(|i| GoldRow {
            question_id: set.question_id.clone(),
            question: set.question.clone(),
            answer: set.candidates[i].clone(),
            score: scores[i],
            rank: i + 1,
        }));
    }
    Ok(out)
}

/// Frozen `n×d` weight with a rank-`r` update.
///
/// `b` (`r×d`) projects the input down and `a` (`n×r`) projects back up, so
/// the layer computes `h = w0·x + a·(b·x)`, i.e. the dense map `w0 + a·b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoraLayer<T> {
    pub w0: Matrix<T>,
    pub a: Matrix<T>,
    pub b: Matrix<T>,
}

impl<T: Real> LoraLayer<T> {
    pub fn new(w0: Matrix<T>, a: Matrix<T>, b: Matrix<T>) -> Result<Self, ShapeError> {
        let (n, d) = w0.shape();
        let r = b.rows();
        if r == 0 {
            return Err(ShapeError::Mismatch {
                expected: 1,
                got: 0,
            });
        }
        if b.cols() != d {
            return Err(ShapeError::Mismatch {
                expected: d,
                got: b.cols(),
            });
        }
        if a.rows() != n {
            return Err(ShapeError::Mismatch {
                expected: n,
                got: a.rows(),
            });
        }
        if a.cols() != r {
            return Err(ShapeError::Mismatch {
                expected: r,
                got: a.cols(),
            });
        }
        Ok(Self { w0, a, b })
    }

    pub fn rank(&self) -> usize {
        self.b.rows()
    }

    /// `w0 + a·b` as one matrix.
    pub fn dense(&self) -> Matrix<T> {
        let ab = self
            .a
            .matmul(&self.b)
            .expect("shapes checked at construction");
        self.w0.add(&ab).expect("shapes checked at construction")
    }
}

pub fn lora_forward<T: Real>(layer: &LoraLayer<T>, x: &[T]) -> Result<Vec<T>, ShapeError> {
    let base = layer.w0.mul_vec(x)?;
    let low = layer.a.mul_vec(&layer.b.mul_vec(x)?)?;
    Ok(base.into_iter().zip(low).map(|(h, u)| h + u).collect())
}
