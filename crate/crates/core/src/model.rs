//! Shared domain types.
//!
//! Every type here serializes to one JSON object per line (JSONL) with
//! snake_case field names. Types with invariants validate on construction
//! and on deserialization.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error("quality report is missing dimension `{0}`")]
    MissingDimension(Dimension),
    #[error("quality score for `{dim}` is {value}, outside [0, 10]")]
    ScoreOutOfRange { dim: Dimension, value: f64 },
    #[error("quality report round must be >= 1")]
    ZeroRound,
    #[error("bench item `{id}`: {reason}")]
    InvalidBenchItem { id: String, reason: String },
    #[error("instruction sample has an empty `{0}` field")]
    EmptyField(&'static str),
    #[error("unknown {kind} `{value}`")]
    UnknownVariant { kind: &'static str, value: String },
    #[error("candidate set `{0}` has scores misaligned with candidates")]
    MisalignedScores(String),
}

/// Provenance bucket of a corpus document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Source {
    /// Open-access papers.
    #[serde(rename = "OAP")]
    Oap,
    /// Open-access authoritative journal papers.
    #[serde(rename = "OAJP")]
    Oajp,
    /// Standards and policy documents.
    #[serde(rename = "SP")]
    Sp,
    /// Domain monographs, textbooks and academic courseware.
    #[serde(rename = "DMT_AC")]
    DmtAc,
    /// Industry and energy-agency data.
    #[serde(rename = "IEAD")]
    Iead,
    #[serde(rename = "synthetic")]
    Synthetic,
}

impl Source {
    pub const ALL: [Source; 6] = [
        Source::Oap,
        Source::Oajp,
        Source::Sp,
        Source::DmtAc,
        Source::Iead,
        Source::Synthetic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Source::Oap => "OAP",
            Source::Oajp => "OAJP",
            Source::Sp => "SP",
            Source::DmtAc => "DMT_AC",
            Source::Iead => "IEAD",
            Source::Synthetic => "synthetic",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Source::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| ModelError::UnknownVariant {
                kind: "source",
                value: s.to_string(),
            })
    }
}

/// The canonical sub-field names. Subdomains are an open set; these are the shipped defaults.
pub const CANONICAL_SUBDOMAINS: [&str; 14] = [
    "clean energy",
    "cogeneration",
    "combined cooling, heating and power",
    "distributed energy",
    "energy hub",
    "energy management system",
    "energy optimization",
    "energy storage",
    "energy transition",
    "integrated energy",
    "load forecasting",
    "smart energy",
    "smart grid",
    "virtual power plant",
];

pub fn is_canonical_subdomain(name: &str) -> bool {
    CANONICAL_SUBDOMAINS
        .iter()
        .any(|c| c.eq_ignore_ascii_case(name.trim()))
}

/// Counts tokens for corpus statistics.
pub trait Tokenizer: Send + Sync {
    fn count(&self, text: &str) -> usize;
}

/// Default tokenizer: whitespace-separated words.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub source: Source,
    pub subdomain: String,
    pub text: String,
    pub token_count: u64,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

impl Document {
    pub fn new(
        id: impl Into<String>,
        source: Source,
        subdomain: impl Into<String>,
        text: impl Into<String>,
        tokenizer: &dyn Tokenizer,
    ) -> Self {
        let text = text.into();
        let token_count = tokenizer.count(&text) as u64;
        Self {
            id: id.into(),
            source,
            subdomain: subdomain.into(),
            text,
            token_count,
            meta: BTreeMap::new(),
        }
    }

    pub fn recount_tokens(&mut self, tokenizer: &dyn Tokenizer) {
        self.token_count = tokenizer.count(&self.text) as u64;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceStats {
    pub documents: u64,
    pub tokens: u64,
}

/// Per-source document and token totals.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub per_source: BTreeMap<Source, SourceStats>,
    pub total_documents: u64,
    pub total_tokens: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub stats: CorpusStats,
}

impl Corpus {
    pub fn new(documents: Vec<Document>) -> Self {
        recompute_stats(Corpus {
            documents,
            stats: CorpusStats::default(),
        })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Ids that occur more than once, in first-seen order.
    pub fn duplicate_ids(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut dups = Vec::new();
        for d in &self.documents {
            if !seen.insert(d.id.as_str()) && !dups.contains(&d.id) {
                dups.push(d.id.clone());
            }
        }
        dups
    }
}

/// Rebuild `stats` from the document list.
pub fn recompute_stats(mut corpus: Corpus) -> Corpus {
    let mut stats = CorpusStats::default();
    for doc in &corpus.documents {
        let entry = stats.per_source.entry(doc.source).or_default();
        entry.documents += 1;
        entry.tokens += doc.token_count;
        stats.total_documents += 1;
        stats.total_tokens += doc.token_count;
    }
    corpus.stats = stats;
    corpus
}

/// Directed citation structure: `(citer, cited)` edges over a node list.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationGraph {
    pub nodes: Vec<String>,
    pub edges: Vec<(String, String)>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("duplicate node `{0}`")]
    DuplicateNode(String),
    #[error("self-citation on `{0}`")]
    SelfEdge(String),
    #[error("duplicate edge {0} -> {1}")]
    DuplicateEdge(String, String),
    #[error("edge endpoint `{0}` is not a node")]
    UnknownNode(String),
}

impl CitationGraph {
    /// Validating constructor.
    pub fn new(nodes: Vec<String>, edges: Vec<(String, String)>) -> Result<Self, GraphError> {
        let g = Self { nodes, edges };
        g.validate()?;
        Ok(g)
    }

    /// Build from edges, dropping self-citations and duplicates and adding any
    /// endpoint missing from `nodes` (appended in first-seen order).
    pub fn from_edges_lenient(
        mut nodes: Vec<String>,
        edges: impl IntoIterator<Item = (String, String)>,
    ) -> Self {
        let mut known: BTreeSet<String> = BTreeSet::new();
        nodes.retain(|n| known.insert(n.clone()));
        let mut seen = BTreeSet::new();
        let mut kept = Vec::new();
        for (a, b) in edges {
            if a == b || !seen.insert((a.clone(), b.clone())) {
                continue;
            }
            for n in [&a, &b] {
                if known.insert(n.clone()) {
                    nodes.push(n.clone());
                }
            }
            kept.push((a, b));
        }
        Self { nodes, edges: kept }
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        let mut known = BTreeSet::new();
        for n in &self.nodes {
            if !known.insert(n.as_str()) {
                return Err(GraphError::DuplicateNode(n.clone()));
            }
        }
        let mut seen = BTreeSet::new();
        for (a, b) in &self.edges {
            if a == b {
                return Err(GraphError::SelfEdge(a.clone()));
            }
            for n in [a, b] {
                if !known.contains(n.as_str()) {
                    return Err(GraphError::UnknownNode(n.clone()));
                }
            }
            if !seen.insert((a.as_str(), b.as_str())) {
                return Err(GraphError::DuplicateEdge(a.clone(), b.clone()));
            }
        }
        Ok(())
    }

    pub fn index_of(&self) -> BTreeMap<&str, usize> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect()
    }
}

/// The eleven instruction task types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Task {
    FV,
    Res,
    NER,
    Sum,
    WS,
    QA,
    TC,
    Exp,
    ESM,
    SC,
    MC,
}

impl Task {
    pub const ALL: [Task; 11] = [
        Task::FV,
        Task::Res,
        Task::NER,
        Task::Sum,
        Task::WS,
        Task::QA,
        Task::TC,
        Task::Exp,
        Task::ESM,
        Task::SC,
        Task::MC,
    ];
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Seed,
    AgentGenerated,
    Optimized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInstructionSample")]
pub struct InstructionSample {
    pub instruction: String,
    #[serde(default)]
    pub input: String,
    pub output: String,
    pub task: Task,
    pub subdomain: String,
    pub provenance: Provenance,
}

#[derive(Deserialize)]
struct RawInstructionSample {
    instruction: String,
    #[serde(default)]
    input: String,
    output: String,
    task: Task,
    subdomain: String,
    provenance: Provenance,
}

impl TryFrom<RawInstructionSample> for InstructionSample {
    type Error = ModelError;

    fn try_from(r: RawInstructionSample) -> Result<Self, Self::Error> {
        InstructionSample::new(
            r.instruction,
            r.input,
            r.output,
            r.task,
            r.subdomain,
            r.provenance,
        )
    }
}

impl InstructionSample {
    pub fn new(
        instruction: impl Into<String>,
        input: impl Into<String>,
        output: impl Into<String>,
        task: Task,
        subdomain: impl Into<String>,
        provenance: Provenance,
    ) -> Result<Self, ModelError> {
        let s = Self {
            instruction: instruction.into(),
            input: input.into(),
            output: output.into(),
            task,
            subdomain: subdomain.into(),
            provenance,
        };
        if s.instruction.trim().is_empty() {
            return Err(ModelError::EmptyField("instruction"));
        }
        if s.output.trim().is_empty() {
            return Err(ModelError::EmptyField("output"));
        }
        Ok(s)
    }
}

/// Quality dimensions scored by the checker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Accuracy,
    Completeness,
    Relevance,
    Usefulness,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [
        Dimension::Accuracy,
        Dimension::Completeness,
        Dimension::Relevance,
        Dimension::Usefulness,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Accuracy => "accuracy",
            Dimension::Completeness => "completeness",
            Dimension::Relevance => "relevance",
            Dimension::Usefulness => "usefulness",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        Dimension::ALL
            .into_iter()
            .find(|d| d.as_str() == s || (s == "usability" && *d == Dimension::Usefulness))
            .ok_or(ModelError::UnknownVariant {
                kind: "dimension",
                value: s,
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawQualityReport")]
pub struct QualityReport {
    pub scores: BTreeMap<Dimension, f64>,
    pub reasons: BTreeMap<Dimension, String>,
    pub round: u32,
}

#[derive(Deserialize)]
struct RawQualityReport {
    scores: BTreeMap<Dimension, f64>,
    #[serde(default)]
    reasons: BTreeMap<Dimension, String>,
    round: u32,
}

impl TryFrom<RawQualityReport> for QualityReport {
    type Error = ModelError;

    fn try_from(r: RawQualityReport) -> Result<Self, Self::Error> {
        QualityReport::new(r.scores, r.reasons, r.round)
    }
}

impl QualityReport {
    pub fn new(
        scores: BTreeMap<Dimension, f64>,
        reasons: BTreeMap<Dimension, String>,
        round: u32,
    ) -> Result<Self, ModelError> {
        for dim in Dimension::ALL {
            match scores.get(&dim) {
                None => return Err(ModelError::MissingDimension(dim)),
                Some(&v) if !(0.0..=10.0).contains(&v) => {
                    return Err(ModelError::ScoreOutOfRange { dim, value: v })
                }
                Some(_) => {}
            }
        }
        if round == 0 {
            return Err(ModelError::ZeroRound);
        }
        Ok(Self {
            scores,
            reasons,
            round,
        })
    }

    /// Convenience constructor from scores in `Dimension::ALL` order.
    pub fn from_array(scores: [f64; 4], round: u32) -> Result<Self, ModelError> {
        let map = Dimension::ALL.into_iter().zip(scores).collect();
        Self::new(map, BTreeMap::new(), round)
    }

    pub fn score(&self, dim: Dimension) -> f64 {
        self.scores[&dim]
    }

    pub fn mean(&self) -> f64 {
        self.scores.values().sum::<f64>() / self.scores.len() as f64
    }
}

/// Answer tiers, best first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tier {
    Expert,
    WriteLikeHuman,
    StrongModel,
    WeakModel,
}

impl Tier {
    pub const ORDER: [Tier; 4] = [
        Tier::Expert,
        Tier::WriteLikeHuman,
        Tier::StrongModel,
        Tier::WeakModel,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TieredAnswer {
    pub tier: Tier,
    pub text: String,
}

/// A question with four answers ordered best to worst.
///
/// Deserialization is lenient; `validate` checks the tier layout so that
/// builders can report malformed sets as errors instead of parse failures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedAnswerSet {
    pub question_id: String,
    pub question: String,
    pub tiered_answers: Vec<TieredAnswer>,
}

impl RankedAnswerSet {
    pub fn validate(&self) -> Result<(), String> {
        if self.tiered_answers.len() != Tier::ORDER.len() {
            return Err(format!(
                "expected 4 tiered answers, found {}",
                self.tiered_answers.len()
            ));
        }
        for (ans, want) in self.tiered_answers.iter().zip(Tier::ORDER) {
            if ans.tier != want {
                return Err(format!("expected tier {want:?}, found {:?}", ans.tier));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub question_id: String,
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
    pub pair_rank: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCandidateAnswerSet")]
pub struct CandidateAnswerSet {
    pub question_id: String,
    pub question: String,
    pub candidates: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
}

#[derive(Deserialize)]
struct RawCandidateAnswerSet {
    question_id: String,
    question: String,
    candidates: Vec<String>,
    #[serde(default)]
    scores: Option<Vec<f64>>,
}

impl TryFrom<RawCandidateAnswerSet> for CandidateAnswerSet {
    type Error = ModelError;

    fn try_from(r: RawCandidateAnswerSet) -> Result<Self, Self::Error> {
        if let Some(s) = &r.scores {
            if s.len() != r.candidates.len() {
                return Err(ModelError::MisalignedScores(r.question_id));
            }
        }
        Ok(Self {
            question_id: r.question_id,
            question: r.question,
            candidates: r.candidates,
            scores: r.scores,
        })
    }
}

/// Default number of candidates generated per question.
pub const DEFAULT_CANDIDATES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BenchKind {
    SingleChoice,
    MultipleChoice,
    FactCheck,
    QA,
    Explanation,
    ESM,
}

impl BenchKind {
    pub fn is_choice(self) -> bool {
        matches!(self, BenchKind::SingleChoice | BenchKind::MultipleChoice)
    }

    pub fn is_objective(self) -> bool {
        matches!(
            self,
            BenchKind::SingleChoice | BenchKind::MultipleChoice | BenchKind::FactCheck
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchOption {
    pub label: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gold {
    Labels(BTreeSet<String>),
    Reference(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawBenchItem")]
pub struct BenchItem {
    pub id: String,
    pub kind: BenchKind,
    pub stem: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<BenchOption>>,
    pub gold: Gold,
}

#[derive(Deserialize)]
struct RawBenchItem {
    id: String,
    kind: BenchKind,
    stem: String,
    #[serde(default)]
    options: Option<Vec<BenchOption>>,
    gold: Gold,
}

impl TryFrom<RawBenchItem> for BenchItem {
    type Error = ModelError;

    fn try_from(r: RawBenchItem) -> Result<Self, Self::Error> {
        BenchItem::new(r.id, r.kind, r.stem, r.options, r.gold)
    }
}

impl BenchItem {
    pub fn new(
        id: impl Into<String>,
        kind: BenchKind,
        stem: impl Into<String>,
        options: Option<Vec<BenchOption>>,
        gold: Gold,
    ) -> Result<Self, ModelError> {
        let item = Self {
            id: id.into(),
            kind,
            stem: stem.into(),
            options,
            gold,
        };
        item.validate()?;
        Ok(item)
    }

    fn invalid(&self, reason: impl Into<String>) -> ModelError {
        ModelError::InvalidBenchItem {
            id: self.id.clone(),
            reason: reason.into(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.kind.is_choice() {
            let options = self.options.as_deref().unwrap_or_default();
            if options.len() < 2 {
                return Err(self.invalid("choice items need at least two options"));
            }
            let labels: BTreeSet<&str> = options.iter().map(|o| o.label.as_str()).collect();
            if labels.len() != options.len() {
                return Err(self.invalid("option labels must be unique"));
            }
            let Gold::Labels(gold) = &self.gold else {
                return Err(self.invalid("choice items need a gold label set"));
            };
            if gold.is_empty() {
                return Err(self.invalid("gold label set is empty"));
            }
            if let Some(bad) = gold.iter().find(|g| !labels.contains(g.as_str())) {
                return Err(self.invalid(format!("gold label `{bad}` is not an option label")));
            }
            if self.kind == BenchKind::SingleChoice && gold.len() != 1 {
                return Err(self.invalid("single-choice items have exactly one gold label"));
            }
        } else if self.kind == BenchKind::FactCheck {
            match &self.gold {
                Gold::Labels(g)
                    if g.len() == 1 && parse_truth(g.iter().next().unwrap()).is_some() => {}
                Gold::Reference(s) if parse_truth(s).is_some() => {}
                _ => return Err(self.invalid("fact-check gold must be a single true/false label")),
            }
        }
        Ok(())
    }

    pub fn option_labels(&self) -> BTreeSet<&str> {
        self.options
            .iter()
            .flatten()
            .map(|o| o.label.as_str())
            .collect()
    }

    pub fn gold_labels(&self) -> Option<&BTreeSet<String>> {
        match &self.gold {
            Gold::Labels(l) => Some(l),
            Gold::Reference(_) => None,
        }
    }

    pub fn gold_truth(&self) -> Option<bool> {
        match &self.gold {
            Gold::Labels(l) if l.len() == 1 => parse_truth(l.iter().next()?),
            Gold::Reference(s) => parse_truth(s),
            _ => None,
        }
    }

    pub fn reference_answer(&self) -> Option<&str> {
        match &self.gold {
            Gold::Reference(s) => Some(s),
            Gold::Labels(_) => None,
        }
    }
}

/// Parse a boolean fact-check label.
pub fn parse_truth(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "t" | "yes" | "correct" | "1" => Some(true),
        "false" | "f" | "no" | "incorrect" | "0" => Some(false),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, source: Source, tokens: u64) -> Document {
        Document {
            id: id.into(),
            source,
            subdomain: "energy storage".into(),
            text: String::new(),
            token_count: tokens,
            meta: BTreeMap::new(),
        }
    }

    #[test]
    fn empty_corpus_stats_are_zero() {
        let c = Corpus::new(vec![]);
        assert_eq!(c.stats.total_documents, 0);
        assert_eq!(c.stats.total_tokens, 0);
        assert!(c.stats.per_source.is_empty());
    }

    #[test]
    fn two_oap_docs_sum() {
        let c = Corpus::new(vec![doc("a", Source::Oap, 3), doc("b", Source::Oap, 4)]);
        let oap = c.stats.per_source[&Source::Oap];
        assert_eq!(
            oap,
            SourceStats {
                documents: 2,
                tokens: 7
            }
        );
    }

    #[test]
    fn mixed_fixture_matches_recount() {
        let sources = [
            Source::Oap,
            Source::Sp,
            Source::Iead,
            Source::Oap,
            Source::DmtAc,
        ];
        let docs: Vec<_> = (0..10)
            .map(|i| {
                doc(
                    &format!("d{i}"),
                    sources[i % sources.len()],
                    (i as u64 * 7) % 11,
                )
            })
            .collect();
        let c = Corpus::new(docs.clone());
        for s in Source::ALL {
            let n = docs.iter().filter(|d| d.source == s).count() as u64;
            let t: u64 = docs
                .iter()
                .filter(|d| d.source == s)
                .map(|d| d.token_count)
                .sum();
            let got = c.stats.per_source.get(&s).copied().unwrap_or_default();
            assert_eq!(
                got,
                SourceStats {
                    documents: n,
                    tokens: t
                }
            );
        }
        assert_eq!(
            c.stats.total_tokens,
            docs.iter().map(|d| d.token_count).sum::<u64>()
        );
    }

    #[test]
    fn quality_report_rejects_bad_scores() {
        assert!(QualityReport::from_array([7.0, 8.0, 9.0, 10.0], 1).is_ok());
        assert!(matches!(
            QualityReport::from_array([7.0, 8.0, 9.0, 10.5], 1),
            Err(ModelError::ScoreOutOfRange { .. })
        ));
        let mut partial = BTreeMap::new();
        partial.insert(Dimension::Accuracy, 5.0);
        assert!(matches!(
            QualityReport::new(partial, BTreeMap::new(), 1),
            Err(ModelError::MissingDimension(Dimension::Completeness))
        ));
        let json = r#"{"scores":{"accuracy":1,"completeness":2,"relevance":3},"round":1}"#;
        assert!(serde_json::from_str::<QualityReport>(json).is_err());
    }

    #[test]
    fn bench_item_rejects_unknown_gold_label() {
        let opts = vec![
            BenchOption {
                label: "A".into(),
                text: "x".into(),
            },
            BenchOption {
                label: "B".into(),
                text: "y".into(),
            },
        ];
        let gold = Gold::Labels(["C".to_string()].into());
        assert!(
            BenchItem::new("q", BenchKind::SingleChoice, "?", Some(opts.clone()), gold).is_err()
        );
        let gold = Gold::Labels(["B".to_string()].into());
        assert!(BenchItem::new("q", BenchKind::SingleChoice, "?", Some(opts), gold).is_ok());
        let one = vec![BenchOption {
            label: "A".into(),
            text: "x".into(),
        }];
        let gold = Gold::Labels(["A".to_string()].into());
        assert!(BenchItem::new("q", BenchKind::MultipleChoice, "?", Some(one), gold).is_err());
    }

    #[test]
    fn source_and_task_wire_names() {
        assert_eq!(serde_json::to_string(&Source::DmtAc).unwrap(), "\"DMT_AC\"");
        assert_eq!(
            serde_json::to_string(&Source::Synthetic).unwrap(),
            "\"synthetic\""
        );
        assert_eq!(
            serde_json::to_string(&Provenance::AgentGenerated).unwrap(),
            "\"agent_generated\""
        );
        assert_eq!("oajp".parse::<Source>().unwrap(), Source::Oajp);
    }

    #[test]
    fn graph_validation() {
        let n = |s: &str| s.to_string();
        assert!(CitationGraph::new(vec![n("a"), n("b")], vec![(n("a"), n("b"))]).is_ok());
        assert_eq!(
            CitationGraph::new(vec![n("a")], vec![(n("a"), n("a"))]),
            Err(GraphError::SelfEdge(n("a")))
        );
        assert_eq!(
            CitationGraph::new(vec![n("a")], vec![(n("a"), n("z"))]),
            Err(GraphError::UnknownNode(n("z")))
        );
        let g = CitationGraph::from_edges_lenient(
            vec![n("a")],
            vec![(n("a"), n("b")), (n("a"), n("b")), (n("c"), n("c"))],
        );
        assert_eq!(g.nodes, vec![n("a"), n("b")]);
        assert_eq!(g.edges.len(), 1);
        assert!(g.validate().is_ok());
    }
}
