use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::extract::{self, longest_valid_span, ExtractedToken, Track, MASK};
use super::scanner::{scan_tags, tag_pattern, TagRegion, TagScan};
use super::token_class::TokenClass;

pub const THOUGHT_TAG: &str = "thought";
pub const ACTION_TAG: &str = "action";
pub const TARGET_SLOT: &str = "target";
pub const LIGAND_SLOT: &str = "ligand";
pub const NAME_SLOT: &str = "name";

static ANGLE_REGION: Lazy<Regex> = Lazy::new(|| Regex::new(r"<[^<>\n]{0,256}>").expect("angle regex"));

/// What the model asked the runtime to do.
///
/// `Skill` carries the upper-case keyword of a registered skill script.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", from = "String")]
pub enum ActionKind {
    Chat,
    TwoDMolecule,
    FoldProtein,
    FetchStructure,
    Docking,
    RunCode,
    CreateTool,
    RagAnswer,
    Skill(String),
}

impl ActionKind {
    pub const BUILTINS: [ActionKind; 8] = [
        ActionKind::Chat,
        ActionKind::TwoDMolecule,
        ActionKind::FoldProtein,
        ActionKind::FetchStructure,
        ActionKind::Docking,
        ActionKind::RunCode,
        ActionKind::CreateTool,
        ActionKind::RagAnswer,
    ];

    pub fn keyword(&self) -> &str {
        match self {
            ActionKind::Chat => "CHAT",
            ActionKind::TwoDMolecule => "2D_MOLECULE",
            ActionKind::FoldProtein => "FOLD_PROTEIN",
            ActionKind::FetchStructure => "FETCH_STRUCTURE",
            ActionKind::Docking => "DOCKING",
            ActionKind::RunCode => "RUN_CODE",
            ActionKind::CreateTool => "CREATE_TOOL",
            ActionKind::RagAnswer => "RAG_ANSWER",
            ActionKind::Skill(keyword) => keyword,
        }
    }

    pub fn from_builtin_keyword(word: &str) -> Option<ActionKind> {
        ActionKind::BUILTINS
            .into_iter()
            .find(|kind| kind.keyword().eq_ignore_ascii_case(word))
    }

    /// Required parameter slots of the builtin kinds.
    pub fn builtin_slots(&self) -> Vec<SlotSpec> {
        let slot = SlotSpec::new;
        match self {
            ActionKind::Chat | ActionKind::Skill(_) => vec![],
            ActionKind::TwoDMolecule => vec![slot(TARGET_SLOT, TokenClass::Smiles)],
            ActionKind::FoldProtein => vec![slot(TARGET_SLOT, TokenClass::AminoAcidSeq)],
            ActionKind::FetchStructure => vec![slot(TARGET_SLOT, TokenClass::PdbId)],
            ActionKind::Docking => vec![
                slot(TARGET_SLOT, TokenClass::PdbId),
                slot(LIGAND_SLOT, TokenClass::Smiles),
            ],
            ActionKind::RunCode => vec![slot(TARGET_SLOT, TokenClass::CodeBlock)],
            ActionKind::CreateTool => vec![
                slot(NAME_SLOT, TokenClass::ToolName),
                slot(TARGET_SLOT, TokenClass::CodeBlock),
            ],
            ActionKind::RagAnswer => vec![slot(TARGET_SLOT, TokenClass::FreeText)],
        }
    }
}

impl From<ActionKind> for String {
    fn from(kind: ActionKind) -> Self {
        kind.keyword().to_string()
    }
}

impl From<String> for ActionKind {
    fn from(word: String) -> Self {
        ActionKind::from_builtin_keyword(&word).unwrap_or_else(|| ActionKind::Skill(word.to_ascii_uppercase()))
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSpec {
    pub name: String,
    pub class: TokenClass,
}

impl SlotSpec {
    pub fn new(name: &str, class: TokenClass) -> Self {
        Self { name: name.to_string(), class }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseTrack {
    TagsWellFormed,
    RegexFallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureCategory {
    ConversationalNoiseUnrecovered,
    UnescapedQuoteUnrecovered,
    MultilinePayloadUnrecovered,
    MissingEndTagUnrecovered,
    NoActionKeyword,
}

impl FailureCategory {
    pub const ALL: [FailureCategory; 5] = [
        FailureCategory::ConversationalNoiseUnrecovered,
        FailureCategory::UnescapedQuoteUnrecovered,
        FailureCategory::MultilinePayloadUnrecovered,
        FailureCategory::MissingEndTagUnrecovered,
        FailureCategory::NoActionKeyword,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FailureCategory::ConversationalNoiseUnrecovered => "conversational_noise_unrecovered",
            FailureCategory::UnescapedQuoteUnrecovered => "unescaped_quote_unrecovered",
            FailureCategory::MultilinePayloadUnrecovered => "multiline_payload_unrecovered",
            FailureCategory::MissingEndTagUnrecovered => "missing_end_tag_unrecovered",
            FailureCategory::NoActionKeyword => "no_action_keyword",
        }
    }
}

impl fmt::Display for FailureCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{category}: {diagnostic}")]
pub struct ParseFailure {
    pub category: FailureCategory,
    pub diagnostic: String,
    /// The action that was detected before slot filling failed, if any.
    pub attempted: Option<ActionKind>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DowngradeReason {
    pub attempted: Option<ActionKind>,
    pub category: FailureCategory,
    pub diagnostic: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectiveEnvelope {
    pub raw_text: String,
    pub thought: String,
    pub action: ActionKind,
    pub params: BTreeMap<String, ExtractedToken>,
    pub parse_track: ParseTrack,
    pub downgrade: Option<DowngradeReason>,
}

impl DirectiveEnvelope {
    pub fn param(&self, slot: &str) -> Option<&str> {
        self.params.get(slot).map(|t| t.value.as_str())
    }

    /// CHAT envelope standing in for a directive whose slots could not be
    /// filled.
    pub fn downgraded(raw_text: &str, failure: &ParseFailure) -> Self {
        Self {
            raw_text: raw_text.to_string(),
            thought: String::new(),
            action: ActionKind::Chat,
            params: BTreeMap::new(),
            parse_track: ParseTrack::RegexFallback,
            downgrade: Some(DowngradeReason {
                attempted: failure.attempted.clone(),
                category: failure.category,
                diagnostic: failure.diagnostic.clone(),
            }),
        }
    }
}

/// The directive vocabulary: action keywords, their slots and the tag names
/// the scanner recognises. Builtins are always present; skills extend it.
#[derive(Debug, Clone)]
pub struct Grammar {
    entries: Vec<(ActionKind, Vec<SlotSpec>)>,
    tag_names: Vec<String>,
    tag_pattern: Regex,
}

static BUILTIN_GRAMMAR: Lazy<Grammar> = Lazy::new(|| Grammar::with_skills(std::iter::empty()));

impl Grammar {
    pub fn builtin() -> &'static Grammar {
        &BUILTIN_GRAMMAR
    }

    /// Builtins plus one entry per `(keyword, slots)` skill. Skill keywords
    /// that collide with an existing keyword are ignored.
    pub fn with_skills(skills: impl IntoIterator<Item = (String, Vec<SlotSpec>)>) -> Grammar {
        let mut entries: Vec<(ActionKind, Vec<SlotSpec>)> = ActionKind::BUILTINS
            .into_iter()
            .map(|kind| {
                let slots = kind.builtin_slots();
                (kind, slots)
            })
            .collect();
        for (keyword, slots) in skills {
            let keyword = keyword.to_ascii_uppercase();
            if entries.iter().any(|(k, _)| k.keyword() == keyword) {
                continue;
            }
            entries.push((ActionKind::Skill(keyword), slots));
        }
        let mut tag_names: Vec<String> = vec![THOUGHT_TAG.into(), ACTION_TAG.into()];
        for (_, slots) in &entries {
            for slot in slots {
                if !tag_names.contains(&slot.name) {
                    tag_names.push(slot.name.clone());
                }
            }
        }
        let names: Vec<&str> = tag_names.iter().map(String::as_str).collect();
        let tag_pattern = tag_pattern(&names);
        Grammar { entries, tag_names, tag_pattern }
    }

    pub fn actions(&self) -> impl Iterator<Item = &ActionKind> {
        self.entries.iter().map(|(k, _)| k)
    }

    pub fn tag_names(&self) -> &[String] {
        &self.tag_names
    }

    pub fn slots(&self, action: &ActionKind) -> &[SlotSpec] {
        self.entries
            .iter()
            .find(|(k, _)| k == action)
            .map(|(_, s)| s.as_slice())
            .unwrap_or(&[])
    }

    fn keyword(&self, word: &str) -> Option<&ActionKind> {
        self.entries
            .iter()
            .map(|(k, _)| k)
            .find(|k| k.keyword().eq_ignore_ascii_case(word))
    }

    /// Keyword tokens in `text`: maximal `[A-Za-z0-9_]` words matching a
    /// keyword case-insensitively, in order of appearance.
    fn keyword_hits<'a>(&'a self, text: &'a str) -> impl Iterator<Item = (Range<usize>, &'a ActionKind)> + 'a {
        words(text).filter_map(move |range| self.keyword(&text[range.clone()]).map(|k| (range, k)))
    }

    pub fn detect_action(&self, raw: &str) -> ActionKind {
        let scan = scan_tags(raw, &self.tag_pattern);
        self.detect_in_scan(raw, &scan).unwrap_or(ActionKind::Chat)
    }

    fn detect_in_scan(&self, raw: &str, scan: &TagScan) -> Option<ActionKind> {
        if let Some(region) = scan.region(ACTION_TAG) {
            let content = &raw[region.content.clone()];
            if let Some((_, kind)) = self.keyword_hits(content).next() {
                return Some(kind.clone());
            }
        }
        self.keyword_hits(raw).next().map(|(_, k)| k.clone())
    }

    pub fn parse(&self, raw: &str) -> Result<DirectiveEnvelope, ParseFailure> {
        let scan = scan_tags(raw, &self.tag_pattern);
        let thought = scan
            .region(THOUGHT_TAG)
            .map(|r| raw[r.content.clone()].trim().to_string())
            .unwrap_or_default();

        let action = match self.detect_in_scan(raw, &scan) {
            Some(kind) => kind,
            None => {
                if let Some(region) = scan.region(ACTION_TAG) {
                    let content = raw[region.content.clone()].trim();
                    if !content.is_empty() {
                        return Err(ParseFailure {
                            category: FailureCategory::NoActionKeyword,
                            diagnostic: format!("action tag names no known keyword: {}", preview(content)),
                            attempted: None,
                        });
                    }
                }
                ActionKind::Chat
            }
        };

        let action_clean = scan.region(ACTION_TAG).is_some_and(|r| r.closed);
        let mut params = BTreeMap::new();
        let mut all_tagged = true;
        for slot in self.slots(&action) {
            let token = self.fill_slot(raw, &scan, slot).ok_or_else(|| ParseFailure {
                category: classify_failure(raw, &scan, &slot.name),
                diagnostic: format!("no {} value recoverable for slot `{}`", slot.class, slot.name),
                attempted: Some(action.clone()),
            })?;
            all_tagged &= token.track == Track::TagContent;
            params.insert(slot.name.clone(), token);
        }

        let parse_track = if all_tagged && (action == ActionKind::Chat || action_clean) {
            ParseTrack::TagsWellFormed
        } else {
            ParseTrack::RegexFallback
        };
        Ok(DirectiveEnvelope {
            raw_text: raw.to_string(),
            thought,
            action,
            params,
            parse_track,
            downgrade: None,
        })
    }

    fn fill_slot(&self, raw: &str, scan: &TagScan, slot: &SlotSpec) -> Option<ExtractedToken> {
        let region = scan.region(&slot.name);
        if let Some(region) = region.filter(|r| r.closed) {
            if let Some(token) = extract_in_region(raw, region, slot.class, Track::TagContent) {
                return Some(token);
            }
        }

        let masked = self.mask(raw, scan, slot.class, &[]);
        if let Some(region) = region {
            let token = if slot.class.has_alphabet() {
                let sub = &masked[region.content.clone()];
                longest_valid_span(sub, slot.class, slot.class.tag_min_len())
                    .map(|s| s.start + region.content.start..s.end + region.content.start)
                    .map(|span| token_at(raw, span, slot.class, Track::RegexFallback))
            } else {
                extract_in_region(raw, region, slot.class, Track::RegexFallback)
            };
            if token.is_some() {
                return token;
            }
        }

        // Whole-text search. Reasoning and other parameters' regions cannot
        // donate a value to this slot.
        let excluded: Vec<Range<usize>> = scan
            .regions
            .iter()
            .filter(|r| r.name != slot.name)
            .map(|r| r.content.clone())
            .collect();
        let masked = self.mask(raw, scan, slot.class, &excluded);
        longest_valid_span(&masked, slot.class, slot.class.min_len())
            .map(|span| token_at(raw, span, slot.class, Track::RegexFallback))
    }

    /// Copy of `raw` with protocol vocabulary replaced by the mask byte.
    fn mask(&self, raw: &str, scan: &TagScan, class: TokenClass, excluded: &[Range<usize>]) -> String {
        let mut bytes = raw.as_bytes().to_vec();
        let mut blank = |range: Range<usize>| bytes[range].fill(MASK);
        for token in &scan.tokens {
            blank(token.span.clone());
        }
        for range in excluded {
            blank(range.clone());
        }
        if class != TokenClass::CodeBlock {
            for (range, _) in self.keyword_hits(raw) {
                blank(range);
            }
        }
        if class.has_alphabet() {
            for m in ANGLE_REGION.find_iter(raw) {
                blank(m.range());
            }
        }
        // Masked ranges are whole characters, so the copy stays UTF-8.
        String::from_utf8(bytes).expect("masking preserves UTF-8")
    }
}

fn token_at(raw: &str, span: Range<usize>, class: TokenClass, track: Track) -> ExtractedToken {
    ExtractedToken {
        value: raw[span.clone()].to_string(),
        class,
        span,
        track,
    }
}

fn extract_in_region(raw: &str, region: &TagRegion, class: TokenClass, track: Track) -> Option<ExtractedToken> {
    let base = region.content.start;
    let content = &raw[region.content.clone()];
    let local = match class {
        TokenClass::CodeBlock if content.contains("```") => {
            longest_valid_span(content, TokenClass::CodeBlock, 1)
        }
        TokenClass::CodeBlock => {
            let span = extract::trim_code(content, 0..content.len());
            (!span.is_empty()).then_some(span)
        }
        TokenClass::FreeText => {
            let lead = content.len() - content.trim_start().len();
            let len = content.trim().len();
            (len > 0).then_some(lead..lead + len)
        }
        _ => longest_valid_span(content, class, class.tag_min_len()),
    }?;
    Some(token_at(raw, base + local.start..base + local.end, class, track))
}

fn classify_failure(raw: &str, scan: &TagScan, slot: &str) -> FailureCategory {
    if scan.has_unclosed() {
        return FailureCategory::MissingEndTagUnrecovered;
    }
    let region_text = scan.region(slot).map(|r| &raw[r.content.clone()]).unwrap_or(raw);
    if region_text.contains('"') {
        FailureCategory::UnescapedQuoteUnrecovered
    } else if region_text.trim().contains('\n') {
        FailureCategory::MultilinePayloadUnrecovered
    } else {
        FailureCategory::ConversationalNoiseUnrecovered
    }
}

/// Maximal runs of `[A-Za-z0-9_]`.
fn words(text: &str) -> impl Iterator<Item = Range<usize>> + '_ {
    let bytes = text.as_bytes();
    let is_word = |b: u8| b.is_ascii_alphanumeric() || b == b'_';
    let mut i = 0;
    std::iter::from_fn(move || {
        while i < bytes.len() && !is_word(bytes[i]) {
            i += 1;
        }
        if i >= bytes.len() {
            return None;
        }
        let start = i;
        while i < bytes.len() && is_word(bytes[i]) {
            i += 1;
        }
        Some(start..i)
    })
}

fn preview(text: &str) -> String {
    let mut out: String = text.chars().take(60).collect();
    if out.len() < text.len() {
        out.push('…');
    }
    out
}

/// Detects the action using the builtin keyword set.
pub fn detect_action(raw: &str) -> ActionKind {
    Grammar::builtin().detect_action(raw)
}

/// Parses with the builtin grammar.
pub fn parse_directive(raw: &str) -> Result<DirectiveEnvelope, ParseFailure> {
    Grammar::builtin().parse(raw)
}

/// Byte-level entry point; invalid UTF-8 is replaced before parsing.
pub fn parse_directive_bytes(raw: &[u8]) -> Result<DirectiveEnvelope, ParseFailure> {
    parse_directive(&String::from_utf8_lossy(raw))
}
