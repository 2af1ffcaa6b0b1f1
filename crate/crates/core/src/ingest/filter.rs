//! Rule-based removal of private, harmful and garbled documents.

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use super::DropReason;
use crate::model::Document;

pub const EMAIL_PATTERN: &str = r"[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}";
pub const PHONE_PATTERN: &str =
    r"(?:\+\d{1,3}[ -]?)?(?:\(\d{2,4}\)[ -]?|\b\d{2,4}[ -])\d{3,4}[ -]\d{4}\b|\b1[3-9]\d{9}\b";
pub const ID_PATTERN: &str = r"\b\d{3}-\d{2}-\d{4}\b|\b\d{17}[\dXx]\b";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterPolicy {
    /// Regexes whose matches count as personal information.
    pub pii_patterns: Vec<String>,
    /// Drop when the total PII match count exceeds this.
    pub pii_threshold: usize,
    /// Terms matched case-insensitively on word boundaries.
    pub blocklist: Vec<String>,
    pub min_printable: f64,
    pub min_alnum: f64,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        Self {
            pii_patterns: vec![
                EMAIL_PATTERN.into(),
                PHONE_PATTERN.into(),
                ID_PATTERN.into(),
            ],
            pii_threshold: 3,
            blocklist: Vec::new(),
            min_printable: 0.90,
            min_alnum: 0.40,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("invalid pattern `{pattern}`: {source}")]
    Pattern {
        pattern: String,
        source: regex::Error,
    },
    #[error("{0} must be in [0, 1]")]
    Ratio(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "decision", content = "reason")]
pub enum FilterDecision {
    Keep,
    Drop(DropReason),
}

/// A policy with its patterns compiled.
#[derive(Debug, Clone)]
pub struct ContentFilter {
    pii: Vec<Regex>,
    blocklist: Option<Regex>,
    policy: FilterPolicy,
}

impl FilterPolicy {
    pub fn compile(&self) -> Result<ContentFilter, PolicyError> {
        for (name, v) in [
            ("min_printable", self.min_printable),
            ("min_alnum", self.min_alnum),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(PolicyError::Ratio(name));
            }
        }
        let pii = self
            .pii_patterns
            .iter()
            .map(|p| {
                Regex::new(p).map_err(|source| PolicyError::Pattern {
                    pattern: p.clone(),
                    source,
                })
            })
            .collect::<Result<_, _>>()?;
        let terms: Vec<String> = self
            .blocklist
            .iter()
            .filter(|t| !t.trim().is_empty())
            .map(|t| regex::escape(t.trim()))
            .collect();
        let blocklist = if terms.is_empty() {
            None
        } else {
            let pattern = format!(r"\b(?:{})\b", terms.join("|"));
            Some(
                RegexBuilder::new(&pattern)
                    .case_insensitive(true)
                    .build()
                    .map_err(|source| PolicyError::Pattern { pattern, source })?,
            )
        };
        Ok(ContentFilter {
            pii,
            blocklist,
            policy: self.clone(),
        })
    }
}

/// Share of characters that are printable (not control characters other
/// than whitespace, and not the replacement character).
pub fn printable_ratio(text: &str) -> f64 {
    let total = text.chars().count();
    if total == 0 {
        return 0.0;
    }
    let printable = text
        .chars()
        .filter(|&c| c != '\u{FFFD}' && (!c.is_control() || c.is_whitespace()))
        .count();
    printable as f64 / total as f64
}

/// Share of non-whitespace characters that are alphanumeric.
pub fn alnum_ratio(text: &str) -> f64 {
    let visible: Vec<char> = text.chars().filter(|c| !c.is_whitespace()).collect();
    if visible.is_empty() {
        return 0.0;
    }
    visible.iter().filter(|c| c.is_alphanumeric()).count() as f64 / visible.len() as f64
}

impl ContentFilter {
    pub fn pii_count(&self, text: &str) -> usize {
        self.pii.iter().map(|r| r.find_iter(text).count()).sum()
    }

    pub fn check(&self, text: &str) -> FilterDecision {
        if self.pii_count(text) > self.policy.pii_threshold {
            return FilterDecision::Drop(DropReason::Pii);
        }
        if self.blocklist.as_ref().is_some_and(|b| b.is_match(text)) {
            return FilterDecision::Drop(DropReason::Harmful);
        }
        if printable_ratio(text) < self.policy.min_printable
            || alnum_ratio(text) < self.policy.min_alnum
        {
            return FilterDecision::Drop(DropReason::Garbled);
        }
        FilterDecision::Keep
    }
}

pub fn filter_content(
    doc: &Document,
    policy: &FilterPolicy,
) -> Result<FilterDecision, PolicyError> {
    Ok(policy.compile()?.check(&doc.text))
}
