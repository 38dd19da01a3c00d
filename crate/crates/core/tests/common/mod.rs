#![allow(dead_code)]

use std::ops::Range;

use bloclaw_core::routing::TokenClass;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const SMILES_PUNCT: &[u8] = b"@+-=#$%/\\.:()[]";

/// Per-character membership, written out independently of the library.
fn in_alphabet(class: TokenClass, b: u8) -> bool {
    match class {
        TokenClass::Smiles => b.is_ascii_alphanumeric() || SMILES_PUNCT.contains(&b),
        TokenClass::AminoAcidSeq => b"ACDEFGHIKLMNPQRSTVWY".contains(&b),
        TokenClass::PdbId => b.is_ascii_alphanumeric(),
        TokenClass::ToolName => b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_',
        _ => unreachable!(),
    }
}

fn balanced(bytes: &[u8]) -> bool {
    let mut stack = Vec::new();
    for &b in bytes {
        match b {
            b'(' | b'[' => stack.push(b),
            b')' => {
                if stack.pop() != Some(b'(') {
                    return false;
                }
            }
            b']' => {
                if stack.pop() != Some(b'[') {
                    return false;
                }
            }
            _ => {}
        }
    }
    stack.is_empty()
}

fn alphabet_valid(class: TokenClass, s: &[u8]) -> bool {
    let (min, max) = match class {
        TokenClass::Smiles => (3, usize::MAX),
        TokenClass::AminoAcidSeq => (10, usize::MAX),
        TokenClass::PdbId => (4, 4),
        TokenClass::ToolName => (3, 64),
        _ => unreachable!(),
    };
    if s.len() < min || s.len() > max || !s.iter().all(|&b| in_alphabet(class, b)) {
        return false;
    }
    match class {
        TokenClass::Smiles => balanced(s),
        TokenClass::PdbId => s[0].is_ascii_digit(),
        _ => true,
    }
}

/// Longest valid substring, earliest start on ties, by enumerating every
/// `(start, end)` pair. The inner loop stops at the first out-of-alphabet
/// byte since no longer substring from that start can be valid.
pub fn oracle(text: &str, class: TokenClass) -> Option<Range<usize>> {
    match class {
        TokenClass::FreeText => return free_text_oracle(text),
        TokenClass::CodeBlock => return code_block_oracle(text),
        _ => {}
    }
    let bytes = text.as_bytes();
    let mut best: Option<Range<usize>> = None;
    for i in 0..bytes.len() {
        for j in i + 1..=bytes.len() {
            if !in_alphabet(class, bytes[j - 1]) {
                break;
            }
            if alphabet_valid(class, &bytes[i..j]) && best.as_ref().is_none_or(|b| j - i > b.len()) {
                best = Some(i..j);
            }
        }
    }
    best
}

/// Longest substring free of NUL that neither starts nor ends with
/// whitespace, over all char-boundary pairs.
fn free_text_oracle(text: &str) -> Option<Range<usize>> {
    let bounds: Vec<usize> = text.char_indices().map(|(i, _)| i).chain([text.len()]).collect();
    let mut best: Option<Range<usize>> = None;
    for (a, &i) in bounds.iter().enumerate() {
        for &j in &bounds[a + 1..] {
            let s = &text[i..j];
            if s.ends_with('\0') {
                break;
            }
            let first = s.chars().next().unwrap();
            let last = s.chars().next_back().unwrap();
            if first.is_whitespace() || last.is_whitespace() {
                continue;
            }
            if best.as_ref().is_none_or(|b| j - i > b.len()) {
                best = Some(i..j);
            }
        }
    }
    best
}

/// Fences are found left to right without overlap and pair in order; an
/// unpaired last fence runs to the end. Content skips an info-string line,
/// stops at NUL, drops leading blank lines and trailing whitespace.
fn code_block_oracle(text: &str) -> Option<Range<usize>> {
    let bytes = text.as_bytes();
    let mut fences = Vec::new();
    let mut i = 0;
    while i + 3 <= bytes.len() {
        if &bytes[i..i + 3] == b"```" {
            fences.push(i);
            i += 3;
        } else {
            i += 1;
        }
    }
    let mut best: Option<Range<usize>> = None;
    let mut k = 0;
    while k < fences.len() {
        let open = fences[k] + 3;
        let close = if k + 1 < fences.len() { fences[k + 1] } else { text.len() };
        k += 2;
        let mut start = open;
        if let Some(nl) = text[open..close].find('\n') {
            let info = &text[open..open + nl];
            if info.bytes().all(|b| b.is_ascii_alphanumeric() || b"+-_. \t\r".contains(&b)) {
                start = open + nl + 1;
            }
        }
        let mut end = close;
        if let Some(z) = text[start..end].find('\0') {
            end = start + z;
        }
        while end > start {
            let c = text[..end].chars().next_back().unwrap();
            if !c.is_whitespace() {
                break;
            }
            end -= c.len_utf8();
        }
        loop {
            let rest = &text[start..end];
            match rest.find('\n') {
                Some(nl) if rest[..nl].trim().is_empty() => start += nl + 1,
                _ => break,
            }
        }
        if end > start && best.as_ref().is_none_or(|b| end - start > b.len()) {
            best = Some(start..end);
        }
    }
    best
}

/// A random string of at most `max_len` bytes, biased toward the class's
/// alphabet so long candidate runs actually occur.
pub fn random_text(rng: &mut ChaCha8Rng, class: TokenClass, max_len: usize) -> String {
    let pools: &[&[&str]] = &[
        &["C", "c", "O", "N", "1", "2", "(", ")", "[", "]", "=", "#", "@", "+", "-", "\\", "/", "."],
        &["A", "K", "L", "M", "Q", "W", "Y", "B", "X", "Z"],
        &["1", "4", "a", "Z", "c", "r", "n"],
        &["a", "z", "_", "0", "9", "Q"],
        &["```", "```python\n", "\n", "  ", "x = 1", "\t", "print()", "\r\n"],
        &[" ", "\n", "\t", "word", ".", "é", "中", "\u{a0}"],
        &[" ", "\0", "<", ">", "\"", "'", "{", "}", "é", "\n"],
    ];
    let own = match class {
        TokenClass::Smiles => 0,
        TokenClass::AminoAcidSeq => 1,
        TokenClass::PdbId => 2,
        TokenClass::ToolName => 3,
        TokenClass::CodeBlock => 4,
        TokenClass::FreeText => 5,
    };
    let target = if rng.gen_bool(0.1) { max_len } else { rng.gen_range(0..=max_len.min(256)) };
    let bias = rng.gen_range(0.5..0.99);
    let mut out = String::new();
    loop {
        let pool = if rng.gen_bool(bias) { pools[own] } else { pools[rng.gen_range(0..pools.len())] };
        let piece = pool[rng.gen_range(0..pool.len())];
        if out.len() + piece.len() > target {
            break;
        }
        out.push_str(piece);
    }
    out
}

pub const NOISE_FRAGMENTS: &[&str] = &[
    "<thought>", "</thought>", "<action>", "</action>", "<target>", "</target>", "<ligand>", "</ligand>",
    "<name>", "</name>", "RUN_CODE", "2D_MOLECULE", "FOLD_PROTEIN", "DOCKING", "CHAT", "```", "```python\n",
    "\"", "{", "}", "\0", "\u{fffd}", "CC(=O)O", "1CRN", "MKTAYIAKQR", "< action >", "</ target>", "<<>>",
];

/// Random bytes, tag soup or a mutated well-formed directive.
pub fn fuzz_input(rng: &mut ChaCha8Rng) -> Vec<u8> {
    match rng.gen_range(0..3) {
        0 => {
            let len = rng.gen_range(0..512);
            (0..len).map(|_| rng.gen()).collect()
        }
        1 => {
            let mut out = Vec::new();
            for _ in 0..rng.gen_range(0..40) {
                let piece = NOISE_FRAGMENTS[rng.gen_range(0..NOISE_FRAGMENTS.len())];
                out.extend_from_slice(piece.as_bytes());
                if rng.gen_bool(0.3) {
                    out.push(rng.gen());
                }
            }
            out
        }
        _ => {
            let base = b"<thought>dock it</thought><action>DOCKING</action><target>1CRN</target><ligand>CC(=O)Oc1ccccc1C(=O)O</ligand>";
            let mut out = base.to_vec();
            for _ in 0..rng.gen_range(1..12) {
                if out.is_empty() {
                    break;
                }
                let at = rng.gen_range(0..out.len());
                match rng.gen_range(0..3) {
                    0 => {
                        out.remove(at);
                    }
                    1 => out.insert(at, rng.gen()),
                    _ => {
                        let piece = NOISE_FRAGMENTS[rng.gen_range(0..NOISE_FRAGMENTS.len())];
                        out.splice(at..at, piece.bytes());
                    }
                }
            }
            out
        }
    }
}

/// Graphics-free scripts whose stdout must pass through untouched.
pub const PLAIN_SCRIPTS: [&str; 10] = [
    "print('hello')\n",
    "for i in range(5):\n    print(i, i * i)\n",
    "import sys\nsys.stdout.write('no newline')\n",
    "print('unicode: \u{e9}\u{4e2d}\u{1f9ea}')\n",
    "print('a', end='')\nprint('b', end='\\n\\n')\nprint()\n",
    "import json\nprint(json.dumps({'k': [1, 2, 3]}, indent=2))\n",
    "print('tab\\tseparated\\tvalues')\nprint('\\r carriage')\n",
    "x = sum(range(10 ** 5))\nprint(f'{x:,}')\n",
    "import sys\nprint('to stderr', file=sys.stderr)\nprint('to stdout')\n",
    "print('\\n'.join(str(i) for i in range(2000)))\n",
];

/// Stdout of `code` run by a bare interpreter, no instrumentation.
pub fn plain_stdout(code: &str, dir: &std::path::Path) -> Vec<u8> {
    let path = dir.join("plain.py");
    std::fs::write(&path, code).unwrap();
    let output = std::process::Command::new("python3")
        .arg("-B")
        .arg(&path)
        .current_dir(dir)
        .env("PYTHONIOENCODING", "utf-8")
        .output()
        .expect("python3 runs");
    output.stdout
}

pub fn gateway_fixtures() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/gateway")
}

/// ATOM/HETATM records counted straight from a fixture file.
pub fn fixture_atom_records(file: &str) -> usize {
    std::fs::read_to_string(gateway_fixtures().join(file))
        .unwrap()
        .lines()
        .filter(|l| l.starts_with("ATOM  ") || l.starts_with("HETATM"))
        .count()
}

pub const FOLD_35: &str = "MKTAYIAKQRQISFVKSHFSRQLEERLGLIEVQAP";

pub struct Harness {
    pub service: std::sync::Arc<bloclaw_core::session::SessionService>,
    pub provider: std::sync::Arc<bloclaw_core::session::ReplayProvider>,
    pub root: tempfile::TempDir,
}

/// A session service wired to the replay provider, the real worker, the
/// gateway fixtures and a fresh skills directory.
pub fn harness<S: Into<String>>(responses: impl IntoIterator<Item = S>, follow_up: bool) -> Harness {
    use bloclaw_core::gateway::{FixtureTransport, GatewayConfig, ScienceGateway};
    use bloclaw_core::intake::{IntakeConfig, IntakeEngine};
    use bloclaw_core::registry::Registry;
    use bloclaw_core::sandbox::{Sandbox, Supervisor};
    use bloclaw_core::session::{ArtifactStore, ReplayProvider, Services, SessionConfig, SessionService};
    use std::sync::Arc;

    let root = tempfile::tempdir().unwrap();
    let provider = Arc::new(ReplayProvider::new(responses));
    let sandbox: Arc<dyn Sandbox> = Arc::new(Supervisor::default());
    let transport = Arc::new(FixtureTransport::load(gateway_fixtures()).unwrap());
    let services = Services {
        provider: provider.clone(),
        registry: Arc::new(Registry::open(root.path().join("skills")).unwrap()),
        sandbox: sandbox.clone(),
        gateway: ScienceGateway::new(GatewayConfig { backoff_ms: 1, ..GatewayConfig::default() }, transport),
        intake: IntakeEngine::new(IntakeConfig::default(), sandbox),
        store: Arc::new(ArtifactStore::new()),
    };
    let config = SessionConfig { workspace_root: root.path().join("sessions"), follow_up, ..SessionConfig::default() };
    Harness { service: Arc::new(SessionService::new(config, services)), provider, root }
}

pub fn event_types(events: &[bloclaw_core::session::ServerEvent]) -> Vec<&'static str> {
    events.iter().map(|e| e.type_name()).collect()
}

pub fn replay_fixture() -> bloclaw_core::session::ReplayScript {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/replay/session.json");
    bloclaw_core::session::ReplayScript::load(&path).unwrap()
}

/// Runs the replay fixture under `root` and returns the event log, one JSON
/// document per line. `root` is wiped first so reruns see identical paths.
pub async fn replay_log(root: &std::path::Path) -> String {
    use bloclaw_core::gateway::{FixtureTransport, GatewayConfig, ScienceGateway};
    use bloclaw_core::intake::{IntakeConfig, IntakeEngine};
    use bloclaw_core::registry::Registry;
    use bloclaw_core::sandbox::{Sandbox, Supervisor};
    use bloclaw_core::session::{ArtifactStore, Services, SessionConfig, SessionService};
    use std::sync::Arc;

    let _ = std::fs::remove_dir_all(root);
    std::fs::create_dir_all(root).unwrap();
    let script = replay_fixture();
    let sandbox: Arc<dyn Sandbox> = Arc::new(Supervisor::default());
    let services = Services {
        provider: Arc::new(script.provider()),
        registry: Arc::new(Registry::open(root.join("skills")).unwrap()),
        sandbox: sandbox.clone(),
        gateway: ScienceGateway::new(
            GatewayConfig { backoff_ms: 1, ..GatewayConfig::default() },
            Arc::new(FixtureTransport::load(gateway_fixtures()).unwrap()),
        ),
        intake: IntakeEngine::new(IntakeConfig::default(), sandbox),
        store: Arc::new(ArtifactStore::new()),
    };
    let config = SessionConfig { workspace_root: root.join("sessions"), ..SessionConfig::default() };
    let service = SessionService::new(config, services);
    let events = service.replay("replay", &script).await.unwrap();
    events.iter().map(|e| e.to_json() + "\n").collect()
}
