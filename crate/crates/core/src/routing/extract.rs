//! Maximal-munch extraction of class-valid tokens from noisy text.
//!
//! Every extractor returns the longest substring that satisfies the class
//! (alphabet, length bounds, structural rule), earliest start on ties. Byte
//! `0` is reserved as the mask byte: masked regions never join a token, so a
//! span found in a masked copy indexes the original text unchanged.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::token_class::TokenClass;

pub const MASK: u8 = 0;
const FENCE: &str = "```";

/// Which parsing track produced a token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Track {
    TagContent,
    RegexFallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedToken {
    pub value: String,
    pub class: TokenClass,
    /// Byte offsets into the source text.
    pub span: Range<usize>,
    pub track: Track,
}

/// Longest valid run of `class` in `search_text`, or `None` when nothing
/// qualifies. `FreeText` takes the whole trimmed text.
pub fn extract_maximal_token(search_text: &str, class: TokenClass) -> Option<ExtractedToken> {
    extract_with(search_text, class, class.min_len(), Track::RegexFallback)
}

pub fn extract_with(
    search_text: &str,
    class: TokenClass,
    min_len: usize,
    track: Track,
) -> Option<ExtractedToken> {
    let span = longest_valid_span(search_text, class, min_len)?;
    Some(ExtractedToken {
        value: search_text[span.clone()].to_string(),
        class,
        span,
        track,
    })
}

pub fn longest_valid_span(text: &str, class: TokenClass, min_len: usize) -> Option<Range<usize>> {
    let min_len = min_len.max(1);
    match class {
        TokenClass::Smiles => longest_balanced_run(text.as_bytes(), class, min_len),
        TokenClass::AminoAcidSeq | TokenClass::ToolName => {
            longest_plain_run(text.as_bytes(), class, min_len)
        }
        TokenClass::PdbId => first_pdb_id(text.as_bytes()),
        TokenClass::CodeBlock => longest_fenced_block(text),
        TokenClass::FreeText => longest_unmasked_segment(text),
    }
}

fn longest_plain_run(bytes: &[u8], class: TokenClass, min_len: usize) -> Option<Range<usize>> {
    let cap = class.max_len().unwrap_or(usize::MAX);
    let mut best: Option<Range<usize>> = None;
    let mut i = 0;
    while i < bytes.len() {
        if !class.allows_byte(bytes[i]) {
            i += 1;
            continue;
        }
        let start = i;
        while i < bytes.len() && class.allows_byte(bytes[i]) {
            i += 1;
        }
        let len = (i - start).min(cap);
        if len >= min_len && best.as_ref().is_none_or(|b| len > b.len()) {
            best = Some(start..start + len);
        }
    }
    best
}

/// Longest substring whose characters are in the alphabet and whose round
/// and square brackets nest properly. Single pass: the stack holds unmatched
/// openers and barrier positions; the longest valid substring ending at `i`
/// starts right after the stack top.
fn longest_balanced_run(bytes: &[u8], class: TokenClass, min_len: usize) -> Option<Range<usize>> {
    // (position, opener byte or 0 for a barrier); position is offset by one
    // so the virtual barrier before the text sits at 0.
    let mut stack: Vec<(usize, u8)> = vec![(0, 0)];
    let mut best = 0..0;
    for (i, &b) in bytes.iter().enumerate() {
        let pos = i + 1;
        if !class.allows_byte(b) {
            stack.clear();
            stack.push((pos, 0));
            continue;
        }
        match b {
            b'(' | b'[' => {
                stack.push((pos, b));
                continue;
            }
            b')' | b']' => {
                let want = if b == b')' { b'(' } else { b'[' };
                if stack.last().map(|&(_, open)| open) == Some(want) {
                    stack.pop();
                } else {
                    stack.clear();
                    stack.push((pos, 0));
                    continue;
                }
            }
            _ => {}
        }
        let start = stack.last().map_or(0, |&(p, _)| p);
        if pos - start > best.len() {
            best = start..pos;
        }
    }
    (best.len() >= min_len).then_some(best)
}

fn first_pdb_id(bytes: &[u8]) -> Option<Range<usize>> {
    bytes.windows(4).position(|w| {
        w[0].is_ascii_digit() && w[1..].iter().all(|b| b.is_ascii_alphanumeric())
    })
    .map(|start| start..start + 4)
}

/// Content of the longest fenced block. Fences pair up in order; a trailing
/// unpaired fence runs to the end of the text. The info string on the opening
/// fence line is not part of the content.
fn longest_fenced_block(text: &str) -> Option<Range<usize>> {
    let fences: Vec<usize> = text.match_indices(FENCE).map(|(i, _)| i).collect();
    let mut best: Option<Range<usize>> = None;
    for pair in fences.chunks(2) {
        let open = pair[0] + FENCE.len();
        let close = pair.get(1).copied().unwrap_or(text.len());
        let body = &text[open..close];
        let mut start = open;
        if let Some(nl) = body.find('\n') {
            let info = &body[..nl];
            if info.chars().all(|c| c.is_ascii_alphanumeric() || "+-_. \t\r".contains(c)) {
                start = open + nl + 1;
            }
        }
        let mut end = close;
        if let Some(m) = text[start..end].find(MASK as char) {
            end = start + m;
        }
        let span = trim_code(text, start..end);
        if !span.is_empty() && best.as_ref().is_none_or(|b| span.len() > b.len()) {
            best = Some(span);
        }
    }
    best
}

/// Strip leading blank lines and trailing whitespace while keeping the first
/// line's indentation.
pub fn trim_code(text: &str, span: Range<usize>) -> Range<usize> {
    let slice = &text[span.clone()];
    let trimmed_end = slice.trim_end();
    let mut start = 0;
    for line in trimmed_end.split_inclusive('\n') {
        if line.trim().is_empty() && line.ends_with('\n') {
            start += line.len();
        } else {
            break;
        }
    }
    if start >= trimmed_end.len() {
        return span.start..span.start;
    }
    span.start + start..span.start + trimmed_end.len()
}

fn longest_unmasked_segment(text: &str) -> Option<Range<usize>> {
    let mut best: Option<Range<usize>> = None;
    let mut offset = 0;
    for segment in text.split(MASK as char) {
        let lead = segment.len() - segment.trim_start().len();
        let trimmed = segment.trim();
        if !trimmed.is_empty() && best.as_ref().is_none_or(|b| trimmed.len() > b.len()) {
            let start = offset + lead;
            best = Some(start..start + trimmed.len());
        }
        offset += segment.len() + 1;
    }
    best
}
