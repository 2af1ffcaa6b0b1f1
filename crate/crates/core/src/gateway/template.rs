use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub type Slots = BTreeMap<String, String>;

/// Build a slot map from `(name, value)` pairs.
pub fn slots<K: Into<String>, V: Into<String>>(pairs: impl IntoIterator<Item = (K, V)>) -> Slots {
    pairs
        .into_iter()
        .map(|(k, v)| (k.into(), v.into()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("template `{template}` slot `{slot}` was not filled")]
    MissingSlot { template: String, slot: String },
    #[error("template `{template}`: unbalanced brace at byte {at}")]
    Unbalanced { template: String, at: usize },
    #[error("no template named `{0}` on this handle")]
    UnknownTemplate(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Slot(String),
}

/// A system + user prompt pair with `{slot}` placeholders.
///
/// Template files put the system prompt first, then a line containing only
/// `---`, then the user prompt. `{{` and `}}` are literal braces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub name: String,
    pub system: String,
    pub user: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub system: String,
    pub user: String,
}

impl PromptTemplate {
    pub fn new(
        name: impl Into<String>,
        system: impl Into<String>,
        user: impl Into<String>,
    ) -> Result<Self, TemplateError> {
        let t = Self {
            name: name.into(),
            system: system.into(),
            user: user.into(),
        };
        t.pieces(&t.system)?;
        t.pieces(&t.user)?;
        Ok(t)
    }

    pub fn parse(name: impl Into<String>, file_text: &str) -> Result<Self, TemplateError> {
        let mut system = String::new();
        let mut user = String::new();
        let mut in_user = false;
        for line in file_text.lines() {
            if !in_user && line.trim_end() == "---" {
                in_user = true;
                continue;
            }
            let buf = if in_user { &mut user } else { &mut system };
            buf.push_str(line);
            buf.push('\n');
        }
        if !in_user {
            // No separator: the whole file is the user prompt.
            std::mem::swap(&mut system, &mut user);
        }
        Self::new(
            name,
            system.trim_end().to_string(),
            user.trim_end().to_string(),
        )
    }

    fn pieces(&self, text: &str) -> Result<Vec<Piece>, TemplateError> {
        let mut out = Vec::new();
        let mut lit = String::new();
        let bytes = text.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            match bytes[i] {
                b'{' if bytes.get(i + 1) == Some(&b'{') => {
                    lit.push('{');
                    i += 2;
                }
                b'}' if bytes.get(i + 1) == Some(&b'}') => {
                    lit.push('}');
                    i += 2;
                }
                b'{' => {
                    let end = text[i + 1..].find('}').ok_or(TemplateError::Unbalanced {
                        template: self.name.clone(),
                        at: i,
                    })?;
                    let name = &text[i + 1..i + 1 + end];
                    if name.is_empty()
                        || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
                    {
                        return Err(TemplateError::Unbalanced {
                            template: self.name.clone(),
                            at: i,
                        });
                    }
                    if !lit.is_empty() {
                        out.push(Piece::Text(std::mem::take(&mut lit)));
                    }
                    out.push(Piece::Slot(name.to_string()));
                    i += end + 2;
                }
                b'}' => {
                    return Err(TemplateError::Unbalanced {
                        template: self.name.clone(),
                        at: i,
                    })
                }
                _ => {
                    let ch = text[i..].chars().next().expect("in bounds");
                    lit.push(ch);
                    i += ch.len_utf8();
                }
            }
        }
        if !lit.is_empty() {
            out.push(Piece::Text(lit));
        }
        Ok(out)
    }

    /// Names of every slot referenced by the template.
    pub fn slot_names(&self) -> BTreeSet<String> {
        [&self.system, &self.user]
            .into_iter()
            .flat_map(|t| self.pieces(t).unwrap_or_default())
            .filter_map(|p| match p {
                Piece::Slot(s) => Some(s),
                Piece::Text(_) => None,
            })
            .collect()
    }

    fn render_one(&self, text: &str, slots: &Slots) -> Result<String, TemplateError> {
        let mut out = String::with_capacity(text.len());
        for piece in self.pieces(text)? {
            match piece {
                Piece::Text(t) => out.push_str(&t),
                Piece::Slot(name) => match slots.get(&name) {
                    Some(v) => out.push_str(v),
                    None => {
                        return Err(TemplateError::MissingSlot {
                            template: self.name.clone(),
                            slot: name,
                        })
                    }
                },
            }
        }
        Ok(out)
    }

    /// Fill every slot. An unfilled slot is an error; extra slots are ignored.
    pub fn render(&self, slots: &Slots) -> Result<RenderedPrompt, TemplateError> {
        Ok(RenderedPrompt {
            system: self.render_one(&self.system, slots)?,
            user: self.render_one(&self.user, slots)?,
        })
    }
}

/// Prompt templates shipped with the crate.
pub mod builtin {
    use super::PromptTemplate;

    pub const PARSING: &str = include_str!("../../templates/parsing.txt");
    pub const EXPERT: &str = include_str!("../../templates/expert.txt");
    pub const CHECK: &str = include_str!("../../templates/check.txt");
    pub const OPTIMIZE: &str = include_str!("../../templates/optimize.txt");
    pub const WRITE_LIKE_HUMAN: &str = include_str!("../../templates/write_like_human.txt");
    pub const JUDGE_REFERENCE: &str = include_str!("../../templates/judge_reference.txt");
    pub const JUDGE_INDEPENDENT: &str = include_str!("../../templates/judge_independent.txt");

    pub fn load(name: &str, text: &str) -> PromptTemplate {
        PromptTemplate::parse(name, text).expect("builtin templates are well formed")
    }
}
