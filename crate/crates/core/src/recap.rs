//! Recap refinement, tagging and recap-augmented corpus records.

use std::collections::BTreeMap;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::document::TokenizedDocument;
use crate::error::{Error, ProviderError, Result};
use crate::provider::{GenerationRequest, LanguageModel};
use crate::retrieval::SegmentSelection;
use crate::text;

pub const RECAP_OPEN: &str = "<re>";
pub const RECAP_CLOSE: &str = "</re>";

/// Upper bound on sentences in a refined recap.
pub const MAX_RECAP_SENTENCES: usize = 6;

const SEGMENT_SLOT: &str = "{segment}";
const RECAPS_SLOT: &str = "{recaps}";

/// Prompt templates. Shipped defaults live in `templates/`; a directory with
/// `refine.txt`, `compact.txt` and an optional `VERSION` file overrides them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplates {
    pub version: String,
    /// Must contain `{segment}`.
    pub refine: String,
    /// Must contain `{recaps}`.
    pub compact: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            version: "v1".into(),
            refine: include_str!("../templates/refine.txt").into(),
            compact: include_str!("../templates/compact.txt").into(),
        }
    }
}

impl PromptTemplates {
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let defaults = Self::default();
        let read = |name: &str| -> Result<Option<String>> {
            let path = dir.join(name);
            if path.exists() {
                Ok(Some(std::fs::read_to_string(path)?))
            } else {
                Ok(None)
            }
        };
        let templates = Self {
            version: read("VERSION")?.map_or(defaults.version, |v| v.trim().to_string()),
            refine: read("refine.txt")?.unwrap_or(defaults.refine),
            compact: read("compact.txt")?.unwrap_or(defaults.compact),
        };
        templates.validate()?;
        Ok(templates)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.refine.contains(SEGMENT_SLOT) {
            return Err(Error::InvalidConfig(format!(
                "refine template lacks {SEGMENT_SLOT}"
            )));
        }
        if !self.compact.contains(RECAPS_SLOT) {
            return Err(Error::InvalidConfig(format!(
                "compact template lacks {RECAPS_SLOT}"
            )));
        }
        Ok(())
    }

    pub fn refine_prompt(&self, segment: &str) -> String {
        self.refine.replace(SEGMENT_SLOT, segment)
    }

    pub fn compact_prompt(&self, recaps: &str) -> String {
        self.compact.replace(RECAPS_SLOT, recaps)
    }
}

/// Remove every tag literal.
pub fn sanitize(s: &str) -> String {
    s.replace(RECAP_OPEN, "").replace(RECAP_CLOSE, "")
}

pub fn wrap_recap(refined: &str) -> String {
    format!("{RECAP_OPEN}{refined}{RECAP_CLOSE}")
}

/// Inverse of [`wrap_recap`].
pub fn unwrap_recap(wrapped: &str) -> Option<&str> {
    wrapped.strip_prefix(RECAP_OPEN)?.strip_suffix(RECAP_CLOSE)
}

/// True when tags strictly alternate open/close, starting with an open and
/// ending closed.
pub fn tags_balanced(s: &str) -> bool {
    let mut open = false;
    let mut rest = s;
    loop {
        let next_open = rest.find(RECAP_OPEN);
        let next_close = rest.find(RECAP_CLOSE);
        let (is_open, at, len) = match (next_open, next_close) {
            (None, None) => return !open,
            (Some(o), Some(c)) if o < c => (true, o, RECAP_OPEN.len()),
            (Some(o), None) => (true, o, RECAP_OPEN.len()),
            (_, Some(c)) => (false, c, RECAP_CLOSE.len()),
        };
        if is_open == open {
            return false;
        }
        open = is_open;
        rest = &rest[at + len..];
    }
}

/// Remove every `<re>...</re>` block together with the newline that follows
/// it.
pub fn strip_recaps(augmented: &str) -> String {
    let mut out = String::with_capacity(augmented.len());
    let mut rest = augmented;
    while let Some(open) = rest.find(RECAP_OPEN) {
        let Some(close) = rest[open..].find(RECAP_CLOSE) else {
            break;
        };
        out.push_str(&rest[..open]);
        let mut after = &rest[open + close + RECAP_CLOSE.len()..];
        if let Some(stripped) = after.strip_prefix('\n') {
            after = stripped;
        }
        rest = after;
    }
    out.push_str(rest);
    out
}

/// Rephrase and condense a segment into recap text of at most six sentences.
///
/// If the model produces nothing usable, the first six sentences of the
/// segment are used verbatim.
pub fn refine_segment(
    provider: &dyn LanguageModel,
    templates: &PromptTemplates,
    segment_text: &str,
    max_new_tokens: usize,
) -> Result<String> {
    if segment_text.trim().is_empty() {
        return Err(Error::InvalidConfig(
            "cannot refine an empty segment".into(),
        ));
    }
    let request = GenerationRequest::new(templates.refine_prompt(segment_text), max_new_tokens)
        .with_stop(RECAP_CLOSE);
    let generated = match provider.generate(&request) {
        Ok(text) => Some(text),
        Err(ProviderError::GenerationEmpty) => None,
        Err(e) => return Err(e.into()),
    };
    let refined = generated
        .map(|g| sanitize(&g))
        .map(|g| text::truncate_sentences(&g, MAX_RECAP_SENTENCES).to_string())
        .filter(|g| !g.trim().is_empty());
    Ok(match refined {
        Some(r) => r,
        None => {
            warn!("refinement produced no text; falling back to the segment's leading sentences");
            text::truncate_sentences(&sanitize(segment_text), MAX_RECAP_SENTENCES).to_string()
        }
    })
}

/// A refined recap bound to the sentence it will precede.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecapEntry {
    pub source: SegmentSelection,
    pub refined_text: String,
    /// Start of the sentence containing the key token.
    pub insertion_position: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecapRecord {
    pub insertion_position: usize,
    pub segment_start: usize,
    pub segment_end: usize,
    pub refined_text: String,
}

/// One line of the recap-augmented corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub doc_id: String,
    pub original_text: String,
    pub recaps: Vec<RecapRecord>,
    pub augmented_text: String,
}

impl CorpusRecord {
    pub fn passthrough(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        Self {
            doc_id: doc_id.into(),
            augmented_text: text.clone(),
            original_text: text,
            recaps: Vec::new(),
        }
    }
}

/// Reduce selections to at most one per insertion sentence, keeping the one
/// whose key token has the larger gap (earlier key on ties). Output is
/// ordered by insertion position.
pub fn merge_by_sentence(
    doc: &TokenizedDocument,
    selections: Vec<SegmentSelection>,
) -> Vec<(usize, SegmentSelection)> {
    let mut by_sentence: BTreeMap<usize, SegmentSelection> = BTreeMap::new();
    for sel in selections {
        let at = doc.sentence_start_of(sel.key.position);
        match by_sentence.get(&at) {
            Some(existing) if !prefer(&sel, existing) => {}
            _ => {
                by_sentence.insert(at, sel);
            }
        }
    }
    by_sentence.into_iter().collect()
}

fn prefer(candidate: &SegmentSelection, incumbent: &SegmentSelection) -> bool {
    candidate.key.log_gap > incumbent.key.log_gap
        || (candidate.key.log_gap == incumbent.key.log_gap
            && candidate.key.position < incumbent.key.position)
}

fn content_offset(doc: &TokenizedDocument, position: usize) -> usize {
    let span = &doc.spans[position];
    doc.text[span.clone()]
        .char_indices()
        .find(|(_, c)| !c.is_whitespace())
        .map_or(span.start, |(i, _)| span.start + i)
}

/// Insert tagged recaps before their sentences.
///
/// Each recap becomes `<re>text</re>\n` placed at the start of its sentence.
/// When two entries share a position, the one whose key token has the larger
/// gap is kept.
pub fn build_training_sequence(
    doc: &TokenizedDocument,
    recaps: Vec<RecapEntry>,
) -> Result<CorpusRecord> {
    if doc.text.contains(RECAP_OPEN) || doc.text.contains(RECAP_CLOSE) {
        return Err(Error::TagLiteralInInput);
    }
    let mut by_position: BTreeMap<usize, RecapEntry> = BTreeMap::new();
    for entry in recaps {
        if entry.refined_text.trim().is_empty() {
            return Err(Error::InvalidConfig("recap text must be non-empty".into()));
        }
        if entry.insertion_position >= doc.len()
            || !doc.sentence_starts.contains(&entry.insertion_position)
        {
            return Err(Error::InvalidConfig(format!(
                "insertion position {} is not a sentence start",
                entry.insertion_position
            )));
        }
        match by_position.get(&entry.insertion_position) {
            Some(existing) if existing.refined_text == entry.refined_text => {}
            Some(existing) => {
                warn!(
                    "overlapping recaps at position {} in {}; keeping the larger gap",
                    entry.insertion_position, doc.id
                );
                if prefer(&entry.source, &existing.source) {
                    by_position.insert(entry.insertion_position, entry);
                }
            }
            None => {
                by_position.insert(entry.insertion_position, entry);
            }
        }
    }

    let mut augmented = String::with_capacity(doc.text.len());
    let mut cursor = 0;
    let mut records = Vec::with_capacity(by_position.len());
    for (position, entry) in by_position {
        let refined = sanitize(&entry.refined_text);
        let at = content_offset(doc, position);
        augmented.push_str(&doc.text[cursor..at]);
        augmented.push_str(&wrap_recap(&refined));
        augmented.push('\n');
        cursor = at;
        records.push(RecapRecord {
            insertion_position: position,
            segment_start: entry.source.best.start,
            segment_end: entry.source.best.end,
            refined_text: refined,
        });
    }
    augmented.push_str(&doc.text[cursor..]);
    Ok(CorpusRecord {
        doc_id: doc.id.clone(),
        original_text: doc.text.clone(),
        recaps: records,
        augmented_text: augmented,
    })
}
