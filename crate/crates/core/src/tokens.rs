//! Provider-independent token estimate shared by intake and prompt budgeting.

/// Estimated token count of `text`: one token per four characters, rounded up.
pub fn estimate(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

/// Longest prefix of `text` whose estimate stays within `tokens`, cut on a
/// character boundary.
pub fn truncate_to(text: &str, tokens: usize) -> &str {
    let max_chars = tokens.saturating_mul(4);
    match text.char_indices().nth(max_chars) {
        Some((idx, _)) => &text[..idx],
        None => text,
    }
}
