//! Few-shot prompt templates and generation post-processing.
//!
//! A template file has four sections separated by lines consisting of
//! exactly `---`:
//!
//! 1. header, emitted once
//! 2. per-example block, emitted once per in-context example
//! 3. target block, emitted once for the document being queried
//! 4. stop sequence
//!
//! The header and per-example block are line-oriented: each of their lines
//! is emitted followed by `\n` (an empty section emits nothing). The target
//! block is emitted without a trailing newline so the prompt ends exactly at
//! the cue after which the model writes its query.
//!
//! Placeholders: `{i}` (1-based example number), `{document}`,
//! `{good_query}` and `{bad_query}`. Substitution is a single left-to-right
//! pass, so placeholder-like text inside documents is never expanded.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Document;

pub const DEFAULT_TEMPLATE: &str = include_str!("../templates/gbq.txt");
pub const DEFAULT_FEW_SHOT: &str = include_str!("../templates/msmarco_3shot.jsonl");
pub const DEFAULT_MAX_DOC_CHARS: usize = 1024;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("template must have 4 sections separated by `---` lines, found {0}")]
    SectionCount(usize),
    #[error("template stop sequence is empty")]
    EmptyStop,
    #[error("template target block must end with literal text, not a placeholder")]
    TargetEndsWithPlaceholder,
    #[error("template target block may not reference `{{{0}}}`")]
    TargetPlaceholder(&'static str),
    #[error("at least one few-shot example is required")]
    NoExamples,
    #[error("max document length must be at least 1 character")]
    ZeroMaxChars,
    #[error("example {0} has no bad query but the template uses {{bad_query}}")]
    MissingBadQuery(usize),
    #[error("few-shot line {line}: {reason}")]
    FewShot { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    #[serde(rename = "doc")]
    pub document: String,
    pub good_query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bad_query: Option<String>,
}

/// Parses few-shot JSONL (`doc`, `good_query`, optional `bad_query`).
pub fn parse_few_shot(text: &str) -> Result<Vec<FewShotExample>, PromptError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ex: FewShotExample = serde_json::from_str(line).map_err(|e| PromptError::FewShot {
            line: i + 1,
            reason: e.to_string(),
        })?;
        if ex.document.trim().is_empty() || ex.good_query.trim().is_empty() {
            return Err(PromptError::FewShot {
                line: i + 1,
                reason: "`doc` and `good_query` must be non-empty".into(),
            });
        }
        out.push(ex);
    }
    Ok(out)
}

pub fn load_few_shot(path: impl AsRef<Path>) -> Result<Vec<FewShotExample>, PromptError> {
    parse_few_shot(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: String,
    pub header: String,
    pub example_block: String,
    pub target_block: String,
    pub stop: String,
}

const SEPARATOR: &str = "---";

impl PromptTemplate {
    /// The bundled gbq-style template.
    pub fn gbq() -> Self {
        Self::parse("gbq", DEFAULT_TEMPLATE).expect("bundled template is valid")
    }

    pub fn parse(name: &str, text: &str) -> Result<Self, PromptError> {
        let mut sections: Vec<Vec<&str>> = vec![Vec::new()];
        for line in text.lines() {
            if line == SEPARATOR {
                sections.push(Vec::new());
            } else {
                sections.last_mut().expect("non-empty").push(line);
            }
        }
        if sections.len() != 4 {
            return Err(PromptError::SectionCount(sections.len()));
        }
        let line_block = |lines: &[&str]| lines.iter().map(|l| format!("{l}\n")).collect::<String>();
        Self::new(
            name,
            line_block(&sections[0]),
            line_block(&sections[1]),
            sections[2].join("\n"),
            sections[3].join("\n"),
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PromptError> {
        let path = path.as_ref();
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::parse(&name, &std::fs::read_to_string(path)?)
    }

    pub fn new(
        name: impl Into<String>,
        header: impl Into<String>,
        example_block: impl Into<String>,
        target_block: impl Into<String>,
        stop: impl Into<String>,
    ) -> Result<Self, PromptError> {
        let t = Self {
            name: name.into(),
            header: header.into(),
            example_block: example_block.into(),
            target_block: target_block.into(),
            stop: stop.into(),
        };
        if t.stop.is_empty() {
            return Err(PromptError::EmptyStop);
        }
        for p in [Placeholder::GoodQuery, Placeholder::BadQuery] {
            if t.target_block.contains(p.token()) {
                return Err(PromptError::TargetPlaceholder(p.name()));
            }
        }
        if t.target_block.is_empty() || Placeholder::ALL.iter().any(|p| t.target_block.ends_with(p.token())) {
            return Err(PromptError::TargetEndsWithPlaceholder);
        }
        Ok(t)
    }

    fn uses_bad_query(&self) -> bool {
        self.header.contains(Placeholder::BadQuery.token())
            || self.example_block.contains(Placeholder::BadQuery.token())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Placeholder {
    Index,
    Document,
    GoodQuery,
    BadQuery,
}

impl Placeholder {
    const ALL: [Placeholder; 4] = [
        Placeholder::Index,
        Placeholder::Document,
        Placeholder::GoodQuery,
        Placeholder::BadQuery,
    ];

    fn name(self) -> &'static str {
        match self {
            Placeholder::Index => "i",
            Placeholder::Document => "document",
            Placeholder::GoodQuery => "good_query",
            Placeholder::BadQuery => "bad_query",
        }
    }

    fn token(self) -> &'static str {
        match self {
            Placeholder::Index => "{i}",
            Placeholder::Document => "{document}",
            Placeholder::GoodQuery => "{good_query}",
            Placeholder::BadQuery => "{bad_query}",
        }
    }
}

struct Fill<'a> {
    index: usize,
    document: &'a str,
    good_query: &'a str,
    bad_query: &'a str,
}

fn fill(block: &str, values: &Fill<'_>, out: &mut String) {
    let mut rest = block;
    while let Some(pos) = rest.find('{') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        match Placeholder::ALL.iter().find(|p| tail.starts_with(p.token())) {
            Some(p) => {
                match p {
                    Placeholder::Index => out.push_str(&values.index.to_string()),
                    Placeholder::Document => out.push_str(values.document),
                    Placeholder::GoodQuery => out.push_str(values.good_query),
                    Placeholder::BadQuery => out.push_str(values.bad_query),
                }
                rest = &tail[p.token().len()..];
            }
            None => {
                out.push('{');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
}

/// Shortens `text` to at most `max_chars` characters, cutting at the last
/// whitespace inside the limit when there is one.
pub fn truncate_at_whitespace(text: &str, max_chars: usize) -> &str {
    let Some((cut, next)) = text.char_indices().nth(max_chars) else {
        return text;
    };
    let prefix = &text[..cut];
    if next.is_whitespace() {
        return prefix.trim_end();
    }
    match prefix.rfind(char::is_whitespace) {
        Some(ws) if !prefix[..ws].trim_end().is_empty() => prefix[..ws].trim_end(),
        _ => prefix,
    }
}

/// Renders header, one block per example (numbered from 1), then the target
/// block numbered `examples.len() + 1`. Documents are the flat text of
/// `target` and each example's `doc`, truncated to `max_doc_chars`.
pub fn render_prompt(
    template: &PromptTemplate,
    examples: &[FewShotExample],
    target: &Document,
    max_doc_chars: usize,
) -> Result<String, PromptError> {
    if examples.is_empty() {
        return Err(PromptError::NoExamples);
    }
    if max_doc_chars == 0 {
        return Err(PromptError::ZeroMaxChars);
    }
    let needs_bad = template.uses_bad_query();
    let mut out = String::new();
    let header = Fill {
        index: 0,
        document: "",
        good_query: "",
        bad_query: "",
    };
    fill(&template.header, &header, &mut out);
    for (i, ex) in examples.iter().enumerate() {
        let bad = match (&ex.bad_query, needs_bad) {
            (Some(b), _) => b.as_str(),
            (None, false) => "",
            (None, true) => return Err(PromptError::MissingBadQuery(i + 1)),
        };
        let values = Fill {
            index: i + 1,
            document: truncate_at_whitespace(&ex.document, max_doc_chars),
            good_query: &ex.good_query,
            bad_query: bad,
        };
        fill(&template.example_block, &values, &mut out);
    }
    let flat = target.flat_text();
    let values = Fill {
        index: examples.len() + 1,
        document: truncate_at_whitespace(&flat, max_doc_chars),
        good_query: "",
        bad_query: "",
    };
    fill(&template.target_block, &values, &mut out);
    Ok(out)
}

/// Cuts `raw` at the first stop sequence or newline, whichever comes first,
/// and trims it. `None` means the generation was degenerate (empty).
pub fn parse_generation(raw: &str, stop: &str) -> Option<String> {
    let mut end = raw.find('\n').unwrap_or(raw.len());
    if !stop.is_empty() {
        if let Some(pos) = raw.find(stop) {
            end = end.min(pos);
        }
    }
    let query = raw[..end].trim();
    (!query.is_empty()).then(|| query.to_string())
}
