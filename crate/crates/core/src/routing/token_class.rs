use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Character class a directive parameter must belong to.
///
/// Alphabet classes (`Smiles`, `AminoAcidSeq`, `PdbId`, `ToolName`) are
/// matched as contiguous runs of ASCII characters; `CodeBlock` and `FreeText`
/// are delimited by structure rather than by alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TokenClass {
    Smiles,
    AminoAcidSeq,
    PdbId,
    ToolName,
    CodeBlock,
    FreeText,
}

pub const SMILES_PUNCTUATION: &str = "@+-=#$%/\\.:()[]";
pub const AMINO_ACIDS: &str = "ACDEFGHIKLMNPQRSTVWY";

impl TokenClass {
    pub const ALL: [TokenClass; 6] = [
        TokenClass::Smiles,
        TokenClass::AminoAcidSeq,
        TokenClass::PdbId,
        TokenClass::ToolName,
        TokenClass::CodeBlock,
        TokenClass::FreeText,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TokenClass::Smiles => "SMILES",
            TokenClass::AminoAcidSeq => "AMINO_ACID_SEQ",
            TokenClass::PdbId => "PDB_ID",
            TokenClass::ToolName => "TOOL_NAME",
            TokenClass::CodeBlock => "CODE_BLOCK",
            TokenClass::FreeText => "FREE_TEXT",
        }
    }

    /// Whether the class is defined by a per-character alphabet.
    pub fn has_alphabet(self) -> bool {
        !matches!(self, TokenClass::CodeBlock | TokenClass::FreeText)
    }

    /// Per-character membership test. Structural classes accept every character.
    pub fn allows(self, c: char) -> bool {
        match self {
            TokenClass::Smiles => c.is_ascii_alphanumeric() || SMILES_PUNCTUATION.contains(c),
            TokenClass::AminoAcidSeq => AMINO_ACIDS.contains(c),
            TokenClass::PdbId => c.is_ascii_alphanumeric(),
            TokenClass::ToolName => c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_',
            TokenClass::CodeBlock | TokenClass::FreeText => true,
        }
    }

    pub fn allows_byte(self, b: u8) -> bool {
        b.is_ascii() && self.allows(b as char)
    }

    pub fn min_len(self) -> usize {
        match self {
            TokenClass::Smiles => 3,
            TokenClass::AminoAcidSeq => 10,
            TokenClass::PdbId => 4,
            TokenClass::ToolName => 3,
            TokenClass::CodeBlock | TokenClass::FreeText => 1,
        }
    }

    /// Minimum length used inside an explicit parameter tag, where the
    /// surrounding context already scopes the match.
    pub fn tag_min_len(self) -> usize {
        match self {
            TokenClass::AminoAcidSeq => 3,
            other => other.min_len(),
        }
    }

    pub fn max_len(self) -> Option<usize> {
        match self {
            TokenClass::PdbId => Some(4),
            TokenClass::ToolName => Some(64),
            _ => None,
        }
    }

    /// Full validity check of a candidate value: alphabet, length bounds and
    /// the class's structural rule.
    pub fn is_valid(self, value: &str) -> bool {
        self.is_valid_with_min(value, self.min_len())
    }

    pub fn is_valid_with_min(self, value: &str, min_len: usize) -> bool {
        let len = value.len();
        if len < min_len.max(1) || self.max_len().is_some_and(|max| len > max) {
            return false;
        }
        if !value.chars().all(|c| self.allows(c)) {
            return false;
        }
        match self {
            TokenClass::Smiles => brackets_balanced(value),
            TokenClass::PdbId => value.as_bytes()[0].is_ascii_digit(),
            _ => true,
        }
    }
}

/// Round and square brackets properly nested.
pub fn brackets_balanced(value: &str) -> bool {
    let mut stack = Vec::new();
    for c in value.chars() {
        match c {
            '(' | '[' => stack.push(c),
            ')' if stack.pop() != Some('(') => return false,
            ']' if stack.pop() != Some('[') => return false,
            _ => {}
        }
    }
    stack.is_empty()
}

impl fmt::Display for TokenClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("unknown token class `{0}`")]
pub struct UnknownTokenClass(pub String);

impl FromStr for TokenClass {
    type Err = UnknownTokenClass;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TokenClass::ALL
            .into_iter()
            .find(|class| class.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownTokenClass(s.to_string()))
    }
}
