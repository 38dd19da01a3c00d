use std::ops::Range;

use once_cell::sync::Lazy;

/// Worker-side interception module, embedded verbatim into every header.
pub const SHIM_SOURCE: &str = include_str!("shim/shim.py");

static HEADER: Lazy<String> = Lazy::new(|| {
    // A JSON string literal is also a valid Python string literal.
    let source = serde_json::to_string(SHIM_SOURCE).expect("shim source encodes");
    format!(
        "import sys as _bloclaw_shim\n\
         if \"_bloclaw_shim\" in _bloclaw_shim.modules:\n    \
         _bloclaw_shim = _bloclaw_shim.modules[\"_bloclaw_shim\"]\n\
         else:\n    \
         _bloclaw_shim.modules[\"_bloclaw_shim\"] = _bloclaw_shim = __import__(\"types\").ModuleType(\"_bloclaw_shim\")\n    \
         exec(compile({source}, \"<bloclaw-shim>\", \"exec\"), _bloclaw_shim.__dict__)\n\
         _bloclaw_shim.install(globals())\n"
    )
});

const FOOTER: &str = "\n_bloclaw_shim.finish(globals())\n";

/// Interception header: selects a non-interactive backend, installs the
/// display overrides and the write/network guards.
pub fn header() -> &'static str {
    &HEADER
}

/// Harvest footer: runs the probe request (if any) and sweeps the namespace.
/// The header also registers the same routine at exit, so a script that
/// raises or calls `sys.exit` is still swept.
pub fn footer() -> &'static str {
    FOOTER
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstrumentedScript {
    pub full_text: String,
    /// Byte range of the untouched user code inside `full_text`.
    pub user_span: Range<usize>,
}

impl InstrumentedScript {
    pub fn user_code(&self) -> &str {
        &self.full_text[self.user_span.clone()]
    }
}

pub fn build_instrumented_script(user_code: &str) -> InstrumentedScript {
    let header = header();
    let mut full_text = String::with_capacity(header.len() + user_code.len() + FOOTER.len());
    full_text.push_str(header);
    let start = full_text.len();
    full_text.push_str(user_code);
    let end = full_text.len();
    full_text.push_str(FOOTER);
    InstrumentedScript { full_text, user_span: start..end }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_precedes_user_code() {
        let code = "import matplotlib.pyplot as plt\nplt.plot([1, 2])\nplt.show()";
        let script = build_instrumented_script(code);
        assert_eq!(script.user_code(), code);
        assert!(script.full_text[..script.user_span.start].contains("_bloclaw_shim.install"));
        assert!(script.full_text[script.user_span.end..].contains("_bloclaw_shim.finish"));
    }

    #[test]
    fn triple_quoted_code_is_embedded_byte_exact() {
        let code = "doc = \"\"\"line one\n  line \"two\"\n\"\"\"\nprint(doc)\n";
        let script = build_instrumented_script(code);
        assert_eq!(script.user_code(), code);
        assert!(script.full_text.starts_with(header()));
        assert!(script.full_text.ends_with(footer()));
    }

    #[test]
    fn empty_user_code() {
        let script = build_instrumented_script("");
        assert!(script.user_span.is_empty());
        assert_eq!(script.full_text, format!("{}{}", header(), footer()));
    }
}
