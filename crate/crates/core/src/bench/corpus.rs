use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::routing::{ActionKind, LIGAND_SLOT, NAME_SLOT, TARGET_SLOT};

/// Bumped whenever templates or mutations change, so reports from
/// different corpora are never compared.
pub const CORPUS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    ConversationalText,
    UnescapedQuotes,
    MultilineCodeStrings,
    MissingEndTags,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 4] = [
        NoiseKind::ConversationalText,
        NoiseKind::UnescapedQuotes,
        NoiseKind::MultilineCodeStrings,
        NoiseKind::MissingEndTags,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NoiseKind::ConversationalText => "conversational_text",
            NoiseKind::UnescapedQuotes => "unescaped_quotes",
            NoiseKind::MultilineCodeStrings => "multiline_code_strings",
            NoiseKind::MissingEndTags => "missing_end_tags",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The directive both renderings encode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub action: ActionKind,
    pub thought: String,
    /// Slot name to exact expected payload.
    pub params: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoisySample {
    pub index: usize,
    pub noise: NoiseKind,
    pub truth: GroundTruth,
    pub tagged: String,
    pub json: String,
    /// Byte range of the mutated payload inside each rendering.
    pub tagged_payload: Range<usize>,
    pub json_payload: Range<usize>,
}

/// Sample `i` carries `kinds[i % kinds.len()]`. Every sample draws from its
/// own ChaCha stream, so a sample depends only on `(seed, index)`.
pub fn generate_noisy_corpus(n: usize, kinds: &[NoiseKind], seed: u64) -> Vec<NoisySample> {
    if kinds.is_empty() {
        return Vec::new();
    }
    (0..n)
        .map(|index| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(index as u64);
            let noise = kinds[index % kinds.len()];
            generate_sample(index, noise, &mut rng)
        })
        .collect()
}

const SMILES: &[(&str, &str)] = &[
    ("aspirin", "CC(=O)Oc1ccccc1C(=O)O"),
    ("caffeine", "CN1C=NC2=C1C(=O)N(C(=O)N2C)C"),
    ("ibuprofen", "CC(C)Cc1ccc(cc1)C(C)C(=O)O"),
    ("paracetamol", "CC(=O)Nc1ccc(O)cc1"),
    ("penicillin G", "CC1(C)SC2C(NC(=O)Cc3ccccc3)C(=O)N2C1C(=O)O"),
    ("nicotine", "CN1CCCC1c1cccnc1"),
    ("dopamine", "NCCc1ccc(O)c(O)c1"),
    ("serotonin", "NCCc1c[nH]c2ccc(O)cc12"),
    ("imatinib", "Cc1ccc(NC(=O)c2ccc(CN3CCN(C)CC3)cc2)cc1Nc1nccc(-c2cccnc2)n1"),
    ("metformin", "CN(C)C(=N)NC(=N)N"),
    ("naproxen", "COc1ccc2cc(C(C)C(=O)O)ccc2c1"),
    ("diazepam", "CN1C(=O)CN=C(c2ccccc2)c2cc(Cl)ccc21"),
    ("remdesivir core", "Nc1ncnn2c(C3OC(CO)C(O)C3O)ccc12"),
    ("glucose", "OC[C@H]1OC(O)[C@H](O)[C@@H](O)[C@@H]1O"),
    ("lidocaine", "CCN(CC)CC(=O)Nc1c(C)cccc1C"),
    ("sildenafil", "CCCc1nn(C)c2c1nc([nH]c2=O)-c1cc(ccc1OCC)S(=O)(=O)N1CCN(C)CC1"),
];

const PDB_IDS: &[&str] = &[
    "1CRN", "4HHB", "6LU7", "1UBQ", "7BV2", "2RH1", "3HTB", "1HSG", "5R82", "6VXX", "1AKE", "3PBL", "2HYY",
    "1M17", "4DJH", "6M0J",
];

const PROTEINS: &[&str] = &[
    "MQIFVKTLTGKTITLEVEPSDTIENVKAKIQDKEGIPPDQQRLIFAGKQLEDGRTLSDYNIQKESTLHLVLRLRGG",
    "GIVEQCCTSICSLYQLENYCN",
    "FVNQHLCGSHLVEALYLVCGERGFFYTPKT",
    "MKTAYIAKQRQISFVKSHFSRQLEERLGLIEVQAPILSRVGDGTQDNLSGAEKAVQVKVKALPDAQ",
    "MVLSPADKTNVKAAWGKVGAHAGEYGAEALERMFLSFPTTKTYFPHF",
    "TTCCPSIVARSNFNVCRLPGTPEAICATYTGCIIIPGATCPGDYAN",
];

const FILLER_HEAD: &[&str] = &[
    "Sure! Here is what I will do.",
    "Of course, happy to help with that.",
    "Great question. Let me work through it.",
    "Okay, I understand the request now.",
    "Alright, here is my plan for this one:",
];

const FILLER_MID: &[&str] = &[
    "Now for the next part.",
    "With that settled, moving on.",
    "Here is the relevant field:",
    "As promised, see below.",
    "Just to be explicit:",
];

const FILLER_TAIL: &[&str] = &[
    "Hope this helps!",
    "Let me know if you need more.",
    "Feel free to ask follow-up questions.",
    "Tell me if anything looks off.",
];

const TOOL_NAMES: &[&str] = &[
    "gc_content", "molecular_weight", "hydrophobicity_profile", "codon_usage", "reverse_complement",
    "isoelectric_point", "melting_temperature", "kmer_counts",
];

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T]) -> &'a T {
    items.choose(rng).expect("non-empty template list")
}

fn one_line_code(rng: &mut ChaCha8Rng) -> String {
    let k = rng.gen_range(5..500);
    match rng.gen_range(0..4) {
        0 => format!("print(sum(range({k})))"),
        1 => format!("import math; print(math.sqrt({k}))"),
        2 => format!("print(sorted([x % 7 for x in range({k})])[:5])"),
        _ => format!("print(len(str(2 ** {k})))"),
    }
}

fn quoted_code(rng: &mut ChaCha8Rng) -> String {
    let k = rng.gen_range(5..500);
    match rng.gen_range(0..3) {
        0 => format!("print(\"total:\", sum(range({k})))"),
        1 => format!("seq = \"ACGT\" * {k}; print(\"GC\", seq.count(\"G\") + seq.count(\"C\"))"),
        _ => format!("print(\"{{}} items\".format({k}))"),
    }
}

fn multiline_code(rng: &mut ChaCha8Rng) -> String {
    let k = rng.gen_range(10..200);
    let a = rng.gen_range(1..9);
    match rng.gen_range(0..5) {
        0 => format!(
            "import numpy as np\nxs = np.linspace(0, {k}, 50)\nys = np.sin(xs) * {a}\nprint(\"max\", ys.max())"
        ),
        1 => format!(
            "import matplotlib.pyplot as plt\nfig, ax = plt.subplots()\nax.plot(range({k}), [i * {a} for i in range({k})])\nax.set_title(\"growth\")\nplt.show()"
        ),
        2 => format!(
            "def gc(seq):\n    return (seq.count('G') + seq.count('C')) / len(seq)\n\nprint(gc('ATGC' * {k}))"
        ),
        3 => format!(
            "import pandas as pd\ndf = pd.DataFrame({{\"x\": range({k}), \"y\": range({k})}})\ndf[\"z\"] = df.x * {a}\nprint(df.describe())"
        ),
        _ => format!(
            "total = 0\nfor i in range({k}):\n    if i % {a} == 0:\n        total += i\nprint(total)"
        ),
    }
}

fn random_protein(rng: &mut ChaCha8Rng) -> String {
    if rng.gen_bool(0.5) {
        return pick(rng, PROTEINS).to_string();
    }
    const AA: &[u8] = b"ACDEFGHIKLMNPQRSTVWY";
    let len = rng.gen_range(30..160);
    (0..len).map(|_| *pick(rng, AA) as char).collect()
}

fn base_truth(rng: &mut ChaCha8Rng) -> GroundTruth {
    let action = pick(rng, &ActionKind::BUILTINS).clone();
    let mut params = BTreeMap::new();
    let thought = match &action {
        ActionKind::Chat => {
            let line = *pick(rng, &["The user is greeting me, so I reply in prose.", "No tool is needed for a thank-you note.", "This is a conceptual question I can answer directly."]);
            line.to_string()
        }
        ActionKind::TwoDMolecule => {
            let (name, smiles) = *pick(rng, SMILES);
            params.insert(TARGET_SLOT.into(), smiles.into());
            format!("The user wants to see the structure of {name}.")
        }
        ActionKind::FoldProtein => {
            params.insert(TARGET_SLOT.into(), random_protein(rng));
            "A predicted structure for this sequence will answer the question.".into()
        }
        ActionKind::FetchStructure => {
            let id = *pick(rng, PDB_IDS);
            params.insert(TARGET_SLOT.into(), id.into());
            "The experimental structure from the archive is what the user asked for.".into()
        }
        ActionKind::Docking => {
            let id = *pick(rng, PDB_IDS);
            let (name, smiles) = *pick(rng, SMILES);
            params.insert(TARGET_SLOT.into(), id.into());
            params.insert(LIGAND_SLOT.into(), smiles.into());
            format!("Place {name} next to the receptor to inspect the pocket.")
        }
        ActionKind::RunCode => {
            params.insert(TARGET_SLOT.into(), one_line_code(rng));
            "A quick computation settles this.".into()
        }
        ActionKind::CreateTool => {
            params.insert(NAME_SLOT.into(), pick(rng, TOOL_NAMES).to_string());
            params.insert(TARGET_SLOT.into(), one_line_code(rng));
            "This calculation will recur, so it deserves a reusable tool.".into()
        }
        ActionKind::RagAnswer => {
            let k = rng.gen_range(2..40);
            params.insert(
                TARGET_SLOT.into(),
                format!("The mounted paper reports {k} conditions and concludes the effect is dose dependent."),
            );
            "The answer is in the mounted document.".into()
        }
        ActionKind::Skill(_) => unreachable!("builtins only"),
    };
    GroundTruth { action, thought, params }
}

/// The field the mutations target: `target` when present, else the thought.
fn payload_field(truth: &GroundTruth) -> &'static str {
    if truth.params.contains_key(TARGET_SLOT) {
        TARGET_SLOT
    } else {
        "thought"
    }
}

fn field_order(truth: &GroundTruth) -> Vec<(String, String)> {
    let mut fields = vec![
        ("thought".to_string(), truth.thought.clone()),
        ("action".to_string(), truth.action.keyword().to_string()),
    ];
    for slot in [NAME_SLOT, TARGET_SLOT, LIGAND_SLOT] {
        if let Some(value) = truth.params.get(slot) {
            fields.push((slot.to_string(), value.clone()));
        }
    }
    fields
}

/// How each rendering spells one field's value.
struct FieldText {
    tagged: String,
    json_value: String,
}

fn json_string(value: &str, raw_quotes: bool, raw_newlines: bool) -> String {
    let mut out = String::from("\"");
    for c in value.chars() {
        match c {
            '"' if raw_quotes => out.push('"'),
            '\n' if raw_newlines => out.push('\n'),
            _ => {
                let escaped = serde_json::to_string(&c.to_string()).expect("char serializes");
                out.push_str(&escaped[1..escaped.len() - 1]);
            }
        }
    }
    out.push('"');
    out
}

fn generate_sample(index: usize, noise: NoiseKind, rng: &mut ChaCha8Rng) -> NoisySample {
    let mut truth = base_truth(rng);
    let mut payload_tagged: Option<String> = None;
    let mut payload_json: Option<String> = None;

    match noise {
        NoiseKind::UnescapedQuotes => {
            let field = payload_field(&truth);
            if field == "thought" {
                truth.thought = format!("The user said \"{}\" so I answer in prose.", pick(rng, &["thanks", "hello", "explain it"]));
            } else {
                let value = truth.params[TARGET_SLOT].clone();
                match truth.action {
                    ActionKind::RunCode | ActionKind::CreateTool => {
                        truth.params.insert(TARGET_SLOT.into(), quoted_code(rng));
                    }
                    ActionKind::RagAnswer => {
                        let phrase = pick(rng, &["dose dependent", "statistically robust", "preliminary"]);
                        truth.params.insert(
                            TARGET_SLOT.into(),
                            format!("The authors call the effect \"{phrase}\" in the abstract."),
                        );
                    }
                    _ => {
                        // Alphabet payloads: the model wraps the value in quotes.
                        let wrapped = format!("\"{value}\"");
                        payload_tagged = Some(wrapped.clone());
                        payload_json = Some(format!("\"{wrapped}\""));
                    }
                }
            }
        }
        NoiseKind::MultilineCodeStrings => {
            let name = pick(rng, TOOL_NAMES).to_string();
            let code = multiline_code(rng);
            let fenced = rng.gen_bool(0.5);
            truth.params.clear();
            if rng.gen_bool(0.5) {
                truth.action = ActionKind::RunCode;
                truth.thought = "A short script computes this and shows the result.".into();
            } else {
                truth.action = ActionKind::CreateTool;
                truth.thought = "Saving this analysis as a tool makes it reusable.".into();
                truth.params.insert(NAME_SLOT.into(), name);
            }
            truth.params.insert(TARGET_SLOT.into(), code.clone());
            if fenced {
                let block = format!("\n```python\n{code}\n```\n");
                payload_json = Some(json_string(&block, false, true));
                payload_tagged = Some(block);
            }
        }
        NoiseKind::ConversationalText | NoiseKind::MissingEndTags => {}
    }

    let payload = payload_field(&truth);
    let fields: Vec<(String, FieldText)> = field_order(&truth)
        .into_iter()
        .map(|(name, value)| {
            let is_payload = name == payload;
            let raw_quotes = is_payload && noise == NoiseKind::UnescapedQuotes;
            let raw_newlines = is_payload && noise == NoiseKind::MultilineCodeStrings;
            let tagged = if is_payload { payload_tagged.clone() } else { None }.unwrap_or_else(|| value.clone());
            let json_value = if is_payload { payload_json.clone() } else { None }
                .unwrap_or_else(|| json_string(&value, raw_quotes, raw_newlines));
            (name, FieldText { tagged, json_value })
        })
        .collect();

    let conversational = noise == NoiseKind::ConversationalText;
    let head = conversational.then(|| format!("{}\n", pick(rng, FILLER_HEAD)));
    let tail = conversational.then(|| format!("\n{}", pick(rng, FILLER_TAIL)));
    let mids: Vec<String> = (0..fields.len())
        .map(|_| if conversational { format!("\n{}\n", pick(rng, FILLER_MID)) } else { "\n".to_string() })
        .collect();
    let drop_end: Vec<bool> = if noise == NoiseKind::MissingEndTags {
        let mut drops: Vec<bool> = (0..fields.len()).map(|_| rng.gen_bool(0.5)).collect();
        if !drops.iter().any(|d| *d) {
            let i = rng.gen_range(0..drops.len());
            drops[i] = true;
        }
        drops
    } else {
        vec![false; fields.len()]
    };

    let mut tagged = head.clone().unwrap_or_default();
    let mut tagged_payload = 0..0;
    for (i, (name, text)) in fields.iter().enumerate() {
        if i > 0 {
            tagged.push_str(&mids[i]);
        }
        tagged.push_str(&format!("<{name}>"));
        let start = tagged.len();
        tagged.push_str(&text.tagged);
        if name == payload {
            tagged_payload = start..tagged.len();
        }
        if !drop_end[i] {
            tagged.push_str(&format!("</{name}>"));
        }
    }
    tagged.push_str(&tail.clone().unwrap_or_default());

    let mut json = head.unwrap_or_default();
    json.push('{');
    let mut json_payload = 0..0;
    for (i, (name, text)) in fields.iter().enumerate() {
        if i > 0 {
            json.push(',');
            json.push_str(if conversational { &mids[i] } else { " " });
        }
        json.push_str(&format!("\"{name}\": "));
        let start = json.len();
        json.push_str(&text.json_value);
        if name == payload {
            json_payload = start..json.len();
        }
    }
    if noise != NoiseKind::MissingEndTags {
        json.push('}');
    }
    json.push_str(&tail.unwrap_or_default());

    NoisySample { index, noise, truth, tagged, json, tagged_payload, json_payload }
}
