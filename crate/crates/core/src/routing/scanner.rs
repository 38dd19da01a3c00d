//! Tolerant scanner for the protocol's tag vocabulary.
//!
//! Only the protocol tag names are recognised; everything else, including
//! stray markup, quotes and newlines, is opaque content. A closed region
//! swallows every tag inside it (nested same-name tags resolve to the
//! outermost span). An unclosed region runs to the next protocol opening tag
//! or to the end of the text.

use std::ops::Range;

use regex::Regex;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TagKind {
    Open,
    Close,
}

/// One protocol tag occurrence, e.g. `<target kind="smiles">` or `</TARGET>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagToken {
    pub name: String,
    pub kind: TagKind,
    pub span: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagRegion {
    pub name: String,
    pub open: Range<usize>,
    pub content: Range<usize>,
    pub closed: bool,
}

#[derive(Debug, Clone, Default)]
pub struct TagScan {
    pub tokens: Vec<TagToken>,
    pub regions: Vec<TagRegion>,
}

impl TagScan {
    /// First top-level region with the given tag name.
    pub fn region(&self, name: &str) -> Option<&TagRegion> {
        self.regions.iter().find(|r| r.name == name)
    }

    pub fn has_unclosed(&self) -> bool {
        self.regions.iter().any(|r| !r.closed)
    }
}

/// Builds a tag regex for a fixed vocabulary of lowercase tag names.
pub fn tag_pattern(names: &[&str]) -> Regex {
    let alternation = names
        .iter()
        .map(|n| regex::escape(n))
        .collect::<Vec<_>>()
        .join("|");
    Regex::new(&format!(r"(?i)<\s*(/)?\s*({alternation})\b[^<>]*>")).expect("tag pattern")
}

pub fn scan_tags(raw: &str, pattern: &Regex) -> TagScan {
    let tokens: Vec<TagToken> = pattern
        .captures_iter(raw)
        .map(|caps| {
            let whole = caps.get(0).expect("match");
            TagToken {
                name: caps[2].to_ascii_lowercase(),
                kind: if caps.get(1).is_some() { TagKind::Close } else { TagKind::Open },
                span: whole.range(),
            }
        })
        .collect();

    let mut regions = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let tok = &tokens[i];
        if tok.kind == TagKind::Close {
            i += 1;
            continue;
        }
        match matching_close(&tokens, i) {
            Some(close) => {
                regions.push(TagRegion {
                    name: tok.name.clone(),
                    open: tok.span.clone(),
                    content: tok.span.end..tokens[close].span.start,
                    closed: true,
                });
                i = close + 1;
            }
            None => {
                let next_open = tokens[i + 1..]
                    .iter()
                    .position(|t| t.kind == TagKind::Open)
                    .map(|p| i + 1 + p);
                // A stray closing tag of another name may sit before the next
                // opening tag; it ends the content as well.
                let end = tokens.get(i + 1).map_or(raw.len(), |t| t.span.start);
                regions.push(TagRegion {
                    name: tok.name.clone(),
                    open: tok.span.clone(),
                    content: tok.span.end..end,
                    closed: false,
                });
                i = next_open.unwrap_or(tokens.len());
            }
        }
    }
    TagScan { tokens, regions }
}

fn matching_close(tokens: &[TagToken], open_idx: usize) -> Option<usize> {
    let name = &tokens[open_idx].name;
    let mut depth = 0usize;
    for (j, t) in tokens.iter().enumerate().skip(open_idx + 1) {
        if &t.name != name {
            continue;
        }
        match t.kind {
            TagKind::Open => depth += 1,
            TagKind::Close if depth == 0 => return Some(j),
            TagKind::Close => depth -= 1,
        }
    }
    None
}
