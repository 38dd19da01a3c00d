//! Directive routing: tolerant tag scanning first, maximal-munch regex
//! extraction second. Every input, including binary garbage, yields either a
//! [`DirectiveEnvelope`] or a classified [`ParseFailure`].

mod directive;
pub mod extract;
pub mod scanner;
pub mod token_class;

pub use directive::{
    detect_action, parse_directive, parse_directive_bytes, ActionKind, DirectiveEnvelope,
    DowngradeReason, FailureCategory, Grammar, ParseFailure, ParseTrack, SlotSpec, ACTION_TAG, LIGAND_SLOT,
    NAME_SLOT, TARGET_SLOT, THOUGHT_TAG,
};
pub use extract::{extract_maximal_token, ExtractedToken, Track};
pub use token_class::TokenClass;
