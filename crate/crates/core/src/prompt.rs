//! Prompt assembly at three granularities.
//!
//! A fine-grained prompt has four labelled blocks, in order: task
//! description, uncompilable code, error message and Solidity knowledge.
//! Coarse-grained drops the knowledge block and general also drops the
//! error message.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compiler::Diagnostic;
use crate::knowledge::KnowledgeEntry;
use crate::patch::{DIVIDER, REPLACE_MARKER, SEARCH_MARKER};
use crate::retriever::clean_text;
use crate::slicer::{CodeSlice, Snippet};

pub const DEFAULT_BUDGET: usize = 24_000;
pub const DEFAULT_TEMPLATE: &str = include_str!("../templates/task_description.v1.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Granularity {
    General,
    CoarseGrained,
    FineGrained,
}

impl FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "general" => Ok(Granularity::General),
            "coarse" | "coarse-grained" | "coarsegrained" => Ok(Granularity::CoarseGrained),
            "fine" | "fine-grained" | "finegrained" => Ok(Granularity::FineGrained),
            other => Err(format!(
                "unknown granularity `{other}` (expected general, coarse or fine)"
            )),
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Granularity::General => "general",
            Granularity::CoarseGrained => "coarse",
            Granularity::FineGrained => "fine",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockLabel {
    TaskDescription,
    UncompilableCode,
    ErrorMessage,
    SolidityKnowledge,
}

impl BlockLabel {
    pub fn title(self) -> &'static str {
        match self {
            BlockLabel::TaskDescription => "Task description",
            BlockLabel::UncompilableCode => "Uncompilable code",
            BlockLabel::ErrorMessage => "Error message",
            BlockLabel::SolidityKnowledge => "Solidity knowledge",
        }
    }

    pub fn header(self) -> String {
        format!("[{}]", self.title())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub label: BlockLabel,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub granularity: Granularity,
    pub blocks: Vec<Block>,
    /// Description of the previous failed attempt, rendered after the blocks.
    pub feedback: Option<String>,
    /// Truncation notes.
    pub notes: Vec<String>,
    pub rendered: String,
    snippets: Vec<Snippet>,
    error_line: Option<u32>,
    knowledge: Vec<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("{granularity} prompt needs {what}")]
    MissingBlockInput {
        granularity: Granularity,
        what: &'static str,
    },
    #[error("budget of {budget} characters is smaller than the task description ({needed})")]
    BudgetTooSmall { budget: usize, needed: usize },
    #[error("task template must contain each of {{search_marker}}, {{divider}} and {{replace_marker}} exactly once")]
    BadTemplate,
    #[error("cannot read template {path}: {reason}")]
    TemplateIo { path: String, reason: String },
}

/// Task-description template with `{source_version}`, `{target_version}`,
/// `{search_marker}`, `{divider}` and `{replace_marker}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template(String);

impl Default for Template {
    fn default() -> Self {
        Template(DEFAULT_TEMPLATE.to_string())
    }
}

impl Template {
    pub fn new(text: impl Into<String>) -> Result<Self, PromptError> {
        let text = text.into();
        for p in ["{search_marker}", "{divider}", "{replace_marker}"] {
            if text.matches(p).count() != 1 {
                return Err(PromptError::BadTemplate);
            }
        }
        Ok(Template(text))
    }

    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let text = fs::read_to_string(path).map_err(|e| PromptError::TemplateIo {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::new(text)
    }

    pub fn render(&self, source: Option<&str>, target: &str) -> String {
        let source = source.map_or_else(|| "an older Solidity version".to_string(), |s| format!("Solidity {s}"));
        self.0
            .replace("{source_version}", &source)
            .replace("{target_version}", target)
            .replace("{search_marker}", SEARCH_MARKER)
            .replace("{divider}", DIVIDER)
            .replace("{replace_marker}", REPLACE_MARKER)
            .trim_end()
            .to_string()
    }
}

/// Snippets with right-aligned `N | ` gutters, `...` between gaps.
pub fn render_code(snippets: &[Snippet]) -> String {
    let width = snippets
        .iter()
        .map(|s| s.span.end_line.to_string().len())
        .max()
        .unwrap_or(1);
    let mut out = String::from("```solidity\n");
    let mut prev_end: Option<u32> = None;
    for s in snippets {
        if prev_end.is_some_and(|e| s.span.start_line > e + 1) {
            out.push_str(&format!("{:>width$} | ...\n", ""));
        }
        for (i, line) in s.text.split('\n').enumerate() {
            let n = s.span.start_line + i as u32;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                out.push_str(&format!("{n:>width$} |\n"));
            } else {
                out.push_str(&format!("{n:>width$} | {line}\n"));
            }
        }
        prev_end = Some(s.span.end_line);
    }
    out.push_str("```");
    out
}

/// Message without location decoration, plus position and flagged line.
pub fn render_error(diag: &Diagnostic) -> String {
    let mut out = clean_text(&diag.message);
    if let Some(loc) = &diag.location {
        out.push_str(&format!("\nLocation: line {}, column {}", loc.line, loc.column));
    }
    let excerpt = diag.source_excerpt.trim();
    if !excerpt.is_empty() {
        out.push_str(&format!("\nFlagged code: {excerpt}"));
    }
    out
}

fn render_knowledge(items: &[String]) -> String {
    items
        .iter()
        .enumerate()
        .map(|(i, t)| format!("{}. {t}", i + 1))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn build_prompt(
    granularity: Granularity,
    slice: &CodeSlice,
    diag: Option<&Diagnostic>,
    knowledge: Option<&[KnowledgeEntry]>,
    versions: (Option<&str>, &str),
    template: &Template,
) -> Result<Prompt, PromptError> {
    let diag = match (granularity, diag) {
        (Granularity::General, _) => None,
        (_, Some(d)) => Some(d),
        (g, None) => {
            return Err(PromptError::MissingBlockInput {
                granularity: g,
                what: "a diagnostic",
            })
        }
    };
    let knowledge: Vec<String> = match (granularity, knowledge) {
        (Granularity::FineGrained, Some(k)) if !k.is_empty() => k.iter().map(KnowledgeEntry::render_marked).collect(),
        (Granularity::FineGrained, _) => {
            return Err(PromptError::MissingBlockInput {
                granularity,
                what: "at least one knowledge entry",
            })
        }
        _ => Vec::new(),
    };
    let mut blocks = vec![Block {
        label: BlockLabel::TaskDescription,
        text: template.render(versions.0, versions.1),
    }];
    blocks.push(Block {
        label: BlockLabel::UncompilableCode,
        text: render_code(&slice.snippets),
    });
    if let Some(d) = diag {
        blocks.push(Block {
            label: BlockLabel::ErrorMessage,
            text: render_error(d),
        });
    }
    if !knowledge.is_empty() {
        blocks.push(Block {
            label: BlockLabel::SolidityKnowledge,
            text: render_knowledge(&knowledge),
        });
    }
    let mut p = Prompt {
        granularity,
        blocks,
        feedback: None,
        notes: Vec::new(),
        rendered: String::new(),
        snippets: slice.snippets.clone(),
        error_line: slice.error_line,
        knowledge,
    };
    p.render();
    Ok(p)
}

impl Prompt {
    fn render(&mut self) {
        let mut parts: Vec<String> = self
            .blocks
            .iter()
            .map(|b| format!("{}\n{}", b.label.header(), b.text))
            .collect();
        if let Some(f) = &self.feedback {
            parts.push(format!("[Previous attempt failed: {f}]"));
        }
        for n in &self.notes {
            parts.push(format!("(Note: {n})"));
        }
        self.rendered = parts.join("\n\n");
        self.rendered.push('\n');
    }

    pub fn with_feedback(mut self, feedback: Option<String>) -> Self {
        self.feedback = feedback;
        self.render();
        self
    }

    pub fn block(&self, label: BlockLabel) -> Option<&Block> {
        self.blocks.iter().find(|b| b.label == label)
    }

    pub fn char_len(&self) -> usize {
        self.rendered.chars().count()
    }

    pub fn snippets(&self) -> &[Snippet] {
        &self.snippets
    }

    fn set_block(&mut self, label: BlockLabel, text: String) {
        if let Some(b) = self.blocks.iter_mut().find(|b| b.label == label) {
            b.text = text;
        }
    }

    fn farthest_droppable(&self) -> Option<usize> {
        let line = self.error_line?;
        self.snippets
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.span.contains_line(line))
            .max_by_key(|(i, s)| {
                let d = if s.span.end_line < line {
                    line - s.span.end_line
                } else {
                    s.span.start_line.saturating_sub(line)
                };
                (d, *i)
            })
            .map(|(i, _)| i)
    }

    /// Drops code snippets farthest from the error line, then knowledge
    /// entries after the first, until the prompt fits in `max_chars`.
    pub fn truncate_to_budget(mut self, max_chars: usize) -> Result<Prompt, PromptError> {
        let needed = self
            .block(BlockLabel::TaskDescription)
            .map_or(0, |b| b.text.chars().count());
        if max_chars < needed {
            return Err(PromptError::BudgetTooSmall {
                budget: max_chars,
                needed,
            });
        }
        let mut dropped_snippets = 0;
        let mut dropped_knowledge = 0;
        loop {
            let mut trial = self.clone();
            trial.notes = notes(dropped_snippets, dropped_knowledge);
            trial.render();
            if trial.char_len() <= max_chars {
                return Ok(trial);
            }
            if let Some(i) = self.farthest_droppable() {
                self.snippets.remove(i);
                dropped_snippets += 1;
                let code = render_code(&self.snippets);
                self.set_block(BlockLabel::UncompilableCode, code);
            } else if self.knowledge.len() > 1 {
                self.knowledge.pop();
                dropped_knowledge += 1;
                let k = render_knowledge(&self.knowledge);
                self.set_block(BlockLabel::SolidityKnowledge, k);
            } else {
                log::warn!(
                    "prompt still exceeds budget ({} > {max_chars} characters) after truncation",
                    trial.char_len()
                );
                return Ok(trial);
            }
        }
    }
}

fn notes(snippets: usize, knowledge: usize) -> Vec<String> {
    let mut out = Vec::new();
    if snippets > 0 {
        out.push(format!(
            "{snippets} code snippet(s) far from the error were omitted to fit the prompt budget"
        ));
    }
    if knowledge > 0 {
        out.push(format!(
            "{knowledge} knowledge entr(y/ies) were omitted to fit the prompt budget"
        ));
    }
    out
}
