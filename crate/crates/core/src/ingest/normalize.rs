//! Structural normalization of extracted markdown.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::{Captures, Regex};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Pii,
    Harmful,
    Garbled,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizationReport {
    pub images_reduced: u64,
    pub tables_converted: u64,
    pub formulas_converted: u64,
    pub citations_annotated: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropped_reason: Option<DropReason>,
}

impl NormalizationReport {
    pub fn is_zero(&self) -> bool {
        self.images_reduced == 0
            && self.tables_converted == 0
            && self.formulas_converted == 0
            && self.citations_annotated == 0
    }

    fn absorb(&mut self, other: &NormalizationReport) {
        self.images_reduced += other.images_reduced;
        self.tables_converted += other.tables_converted;
        self.formulas_converted += other.formulas_converted;
        self.citations_annotated += other.citations_annotated;
    }
}

/// Where a citation marker points.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BibEntry {
    pub key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page: Option<String>,
}

/// Citation markers (`"3"`, `"smith2020"`) to bibliography entries.
pub type Bibliography = BTreeMap<String, BibEntry>;

static IMAGE_MD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"!\[([^\]\n]*)\](?:\([^)\n]*\)|\[[^\]\n]*\))[ \t]*").unwrap());
static IMAGE_HTML: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)<img\b[^>]*>[ \t]*").unwrap());
static ALT_ATTR: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"(?i)\balt\s*=\s*"([^"]*)""#).unwrap());
static CAPTION_CUE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^\s*(fig\.|figure|image|photo|caption)\b").unwrap());
static HTML_TABLE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?is)<table\b[^>]*>.*?</table\s*>").unwrap());
static HTML_ROW: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?is)<tr\b[^>]*>(.*?)</tr\s*>").unwrap());
static HTML_CELL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?is)<t([hd])\b[^>]*>(.*?)</t[hd]\s*>").unwrap());
static HTML_TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)<[^>]*>").unwrap());
static MATH_INLINE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)\\\((.+?)\\\)").unwrap());
static MATH_DISPLAY: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)\\\[(.+?)\\\]").unwrap());
static MATH_ENV: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?s)\\begin\{(equation\*?|align\*?)\}(.*?)\\end\{(equation\*?|align\*?)\}")
        .unwrap()
});
static CITE_NUMERIC: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\[(\d{1,4}(?:\s*[,\u{2013}-]\s*\d{1,4})*)\]").unwrap());
static CITE_LATEX: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\\cite[pt]?\{([^}\n]*)\}").unwrap());
static PROTECTED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?s)\$\$.*?\$\$|\$[^$\n]+\$|`[^`\n]*`").unwrap());

const MAX_PASSES: usize = 8;
const MAX_RANGE: u32 = 50;

pub fn normalize_markdown(raw: &str) -> (String, NormalizationReport) {
    normalize_markdown_with(raw, None)
}

/// Rewrite `raw` into the normalized form:
///
/// * image links and `<img>` tags are removed, keeping only the caption text,
/// * HTML tables and tab-separated blocks become pipe tables,
/// * `\( \)`, `\[ \]` and equation environments become `$` / `$$` math,
/// * numeric and `\cite{}` citation markers become `[ref: key]`, with
///   `, p. N` when the bibliography gives a page.
///
/// Fenced code blocks are left untouched. The rules are reapplied until the
/// text stops changing, so the output is a fixed point.
pub fn normalize_markdown_with(
    raw: &str,
    bibliography: Option<&Bibliography>,
) -> (String, NormalizationReport) {
    let mut report = NormalizationReport::default();
    let mut text = raw.to_string();
    for _ in 0..MAX_PASSES {
        let (next, pass) = one_pass(&text, bibliography);
        if next == text {
            break;
        }
        report.absorb(&pass);
        text = next;
    }
    (text, report)
}

fn one_pass(text: &str, bib: Option<&Bibliography>) -> (String, NormalizationReport) {
    let mut report = NormalizationReport::default();
    let mut out = String::with_capacity(text.len());
    for (is_code, segment) in split_fences(text) {
        if is_code {
            out.push_str(segment);
            continue;
        }
        let s = reduce_images(segment, &mut report);
        let s = convert_html_tables(&s, &mut report);
        let s = convert_math(&s, &mut report);
        let s = convert_tab_tables(&s, &mut report);
        let s = annotate_citations(&s, bib, &mut report);
        out.push_str(&s);
    }
    (out, report)
}

/// Alternating prose and fenced-code segments, in order.
fn split_fences(text: &str) -> Vec<(bool, &str)> {
    let mut parts = Vec::new();
    let mut start = 0;
    let mut in_code = false;
    let mut pos = 0;
    for line in text.split_inclusive('\n') {
        if line.trim_start().starts_with("```") {
            if in_code {
                parts.push((true, &text[start..pos + line.len()]));
                start = pos + line.len();
            } else {
                parts.push((false, &text[start..pos]));
                start = pos;
            }
            in_code = !in_code;
        }
        pos += line.len();
    }
    parts.push((in_code, &text[start..]));
    parts.retain(|(_, s)| !s.is_empty());
    parts
}

fn reduce_images(text: &str, report: &mut NormalizationReport) -> String {
    if !IMAGE_MD.is_match(text) && !IMAGE_HTML.is_match(text) {
        return text.to_string();
    }
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    let mut out = String::with_capacity(text.len());
    for (i, line) in lines.iter().enumerate() {
        let mut alts = Vec::new();
        let mut count = 0;
        let stripped = IMAGE_MD.replace_all(line, |c: &Captures| {
            count += 1;
            alts.push(c[1].trim().to_string());
            ""
        });
        let stripped = IMAGE_HTML
            .replace_all(&stripped, |c: &Captures| {
                count += 1;
                alts.push(
                    ALT_ATTR
                        .captures(&c[0])
                        .map(|a| a[1].trim().to_string())
                        .unwrap_or_default(),
                );
                ""
            })
            .into_owned();
        if count == 0 {
            out.push_str(line);
            continue;
        }
        report.images_reduced += count;
        let newline = if line.ends_with('\n') { "\n" } else { "" };
        if !stripped.trim().is_empty() {
            out.push_str(stripped.trim_end());
            out.push_str(newline);
            continue;
        }
        let next_is_caption = lines[i + 1..]
            .iter()
            .find(|l| !l.trim().is_empty())
            .is_some_and(|l| CAPTION_CUE.is_match(l));
        let alt: Vec<String> = alts.into_iter().filter(|a| !a.is_empty()).collect();
        if !next_is_caption && !alt.is_empty() {
            out.push_str(&alt.join(" "));
            out.push_str(newline);
        }
    }
    out
}

fn clean_cell(html: &str) -> String {
    let text = HTML_TAG.replace_all(html, " ");
    let text = text
        .replace("&nbsp;", " ")
        .replace("&amp;", "&")
        .replace("&lt;", "<")
        .replace("&gt;", ">");
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .replace('|', "\\|")
}

fn pipe_table(rows: &[Vec<String>]) -> String {
    let width = rows.iter().map(Vec::len).max().unwrap_or(0).max(1);
    let line = |cells: &[String]| {
        let mut padded: Vec<&str> = cells.iter().map(String::as_str).collect();
        padded.resize(width, "");
        format!("| {} |", padded.join(" | "))
    };
    let mut out = vec![line(&rows[0]), format!("|{}", " --- |".repeat(width))];
    out.extend(rows[1..].iter().map(|r| line(r)));
    out.join("\n")
}

fn convert_html_tables(text: &str, report: &mut NormalizationReport) -> String {
    HTML_TABLE
        .replace_all(text, |c: &Captures| {
            let rows: Vec<Vec<String>> = HTML_ROW
                .captures_iter(&c[0])
                .map(|r| {
                    HTML_CELL
                        .captures_iter(&r[1])
                        .map(|cell| clean_cell(&cell[2]))
                        .collect::<Vec<_>>()
                })
                .filter(|r| !r.is_empty())
                .collect();
            if rows.is_empty() {
                return clean_cell(&c[0]);
            }
            report.tables_converted += 1;
            format!("\n{}\n", pipe_table(&rows))
        })
        .into_owned()
}

fn convert_math(text: &str, report: &mut NormalizationReport) -> String {
    let s = MATH_ENV.replace_all(text, |c: &Captures| {
        report.formulas_converted += 1;
        format!("$$\n{}\n$$", c[2].trim())
    });
    let s = MATH_DISPLAY.replace_all(&s, |c: &Captures| {
        report.formulas_converted += 1;
        format!("$${}$$", &c[1])
    });
    let s = MATH_INLINE.replace_all(&s, |c: &Captures| {
        report.formulas_converted += 1;
        format!("${}$", &c[1])
    });
    s.into_owned()
}

/// Runs of two or more lines that split on tabs into the same number (≥ 2) of cells.
fn convert_tab_tables(text: &str, report: &mut NormalizationReport) -> String {
    if !text.contains('\t') {
        return text.to_string();
    }
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    let cells = |l: &str| -> usize {
        let l = l.trim_end_matches(['\n', '\r']);
        if l.contains('\t') && !l.trim().is_empty() {
            l.split('\t').count()
        } else {
            0
        }
    };
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < lines.len() {
        let w = cells(lines[i]);
        let mut j = i;
        while w >= 2 && j < lines.len() && cells(lines[j]) == w {
            j += 1;
        }
        if j - i >= 2 {
            let rows: Vec<Vec<String>> = lines[i..j]
                .iter()
                .map(|l| {
                    l.trim_end_matches(['\n', '\r'])
                        .split('\t')
                        .map(|c| c.trim().replace('|', "\\|"))
                        .collect()
                })
                .collect();
            out.push_str(&pipe_table(&rows));
            if lines[j - 1].ends_with('\n') {
                out.push('\n');
            }
            report.tables_converted += 1;
            i = j;
        } else {
            out.push_str(lines[i]);
            i += 1;
        }
    }
    out
}

fn ref_for(marker: &str, bib: Option<&Bibliography>) -> String {
    match bib.and_then(|b| b.get(marker)) {
        Some(BibEntry { key, page: Some(p) }) => format!("[ref: {key}, p. {p}]"),
        Some(BibEntry { key, page: None }) => format!("[ref: {key}]"),
        None => format!("[ref: {marker}]"),
    }
}

fn expand_numeric(list: &str) -> Option<Vec<String>> {
    let mut out = Vec::new();
    for part in list.split(',') {
        let part = part.trim();
        if let Some((a, b)) = part.split_once(['-', '\u{2013}']) {
            let (a, b): (u32, u32) = (a.trim().parse().ok()?, b.trim().parse().ok()?);
            if b < a || b - a > MAX_RANGE {
                return None;
            }
            out.extend((a..=b).map(|n| n.to_string()));
        } else {
            out.push(part.parse::<u32>().ok()?.to_string());
        }
    }
    Some(out)
}

fn annotate_span(
    text: &str,
    bib: Option<&Bibliography>,
    report: &mut NormalizationReport,
) -> String {
    let s = CITE_LATEX.replace_all(text, |c: &Captures| {
        let keys: Vec<&str> = c[1]
            .split(',')
            .map(str::trim)
            .filter(|k| !k.is_empty())
            .collect();
        if keys.is_empty() {
            return c[0].to_string();
        }
        report.citations_annotated += keys.len() as u64;
        keys.iter()
            .map(|k| ref_for(k, bib))
            .collect::<Vec<_>>()
            .join(" ")
    });
    let mut out = String::with_capacity(s.len());
    let mut last = 0;
    for c in CITE_NUMERIC.captures_iter(&s) {
        let m = c.get(0).unwrap();
        let before = s[..m.start()].chars().next_back();
        let after = s[m.end()..].chars().next();
        let is_link = matches!(after, Some('(') | Some(':') | Some('['))
            || matches!(before, Some(']') | Some('!') | Some('\\'));
        let Some(markers) = expand_numeric(&c[1]).filter(|_| !is_link) else {
            continue;
        };
        out.push_str(&s[last..m.start()]);
        out.push_str(
            &markers
                .iter()
                .map(|k| ref_for(k, bib))
                .collect::<Vec<_>>()
                .join(" "),
        );
        report.citations_annotated += markers.len() as u64;
        last = m.end();
    }
    out.push_str(&s[last..]);
    out
}

/// Citation rewriting outside math and inline code.
fn annotate_citations(
    text: &str,
    bib: Option<&Bibliography>,
    report: &mut NormalizationReport,
) -> String {
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for m in PROTECTED.find_iter(text) {
        out.push_str(&annotate_span(&text[last..m.start()], bib, report));
        out.push_str(m.as_str());
        last = m.end();
    }
    out.push_str(&annotate_span(&text[last..], bib, report));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inline_image_keeps_caption() {
        let (out, r) = normalize_markdown("text ![fig](x.png) Figure 1: A grid.");
        assert_eq!(out, "text Figure 1: A grid.");
        assert_eq!(r.images_reduced, 1);
    }

    #[test]
    fn plain_text_is_identity() {
        let raw = "Grid frequency is held near 50 Hz.\n\nOperators dispatch reserves.\n";
        let (out, r) = normalize_markdown(raw);
        assert_eq!(out, raw);
        assert!(r.is_zero());
    }

    #[test]
    fn standalone_image_uses_alt_unless_caption_follows() {
        let (out, _) =
            normalize_markdown("![Wind farm layout](data:image/png;base64,AAAA)\nNext paragraph.");
        assert_eq!(out, "Wind farm layout\nNext paragraph.");
        let (out, _) = normalize_markdown("<img src=\"a.png\" alt=\"x\">\nFigure 2: Load curve.");
        assert_eq!(out, "Figure 2: Load curve.");
    }

    #[test]
    fn html_table_to_pipe() {
        let (out, r) = normalize_markdown(
            "<table><tr><th>Unit</th><th>MW</th></tr><tr><td>G1</td><td>50</td></tr></table>",
        );
        assert_eq!(out.trim(), "| Unit | MW |\n| --- | --- |\n| G1 | 50 |");
        assert_eq!(r.tables_converted, 1);
    }

    #[test]
    fn tab_block_to_pipe() {
        let (out, r) = normalize_markdown("Year\tGWh\n2020\t10\n2021\t12\nafter");
        assert_eq!(
            out,
            "| Year | GWh |\n| --- | --- |\n| 2020 | 10 |\n| 2021 | 12 |\nafter"
        );
        assert_eq!(r.tables_converted, 1);
    }

    #[test]
    fn math_delimiters() {
        let (out, r) = normalize_markdown("Power \\(P = VI\\) and \\[E = \\int P\\,dt\\] and\n\\begin{equation}x^2\\end{equation}");
        assert_eq!(
            out,
            "Power $P = VI$ and $$E = \\int P\\,dt$$ and\n$$\nx^2\n$$"
        );
        assert_eq!(r.formulas_converted, 3);
    }

    #[test]
    fn citations() {
        let mut bib = Bibliography::new();
        bib.insert(
            "1".into(),
            BibEntry {
                key: "li2021".into(),
                page: Some("12".into()),
            },
        );
        let (out, r) = normalize_markdown_with(
            "As shown [1, 3-4] and \\cite{wang}. Range $[0, 1]$ and [link](u).",
            Some(&bib),
        );
        assert_eq!(out, "As shown [ref: li2021, p. 12] [ref: 3] [ref: 4] and [ref: wang]. Range $[0, 1]$ and [link](u).");
        assert_eq!(r.citations_annotated, 4);
    }

    #[test]
    fn code_fences_untouched() {
        let raw = "```\na\tb\nc\td\n![x](y)\n```\n";
        assert_eq!(normalize_markdown(raw).0, raw);
    }
}
