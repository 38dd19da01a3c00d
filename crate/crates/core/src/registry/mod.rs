//! Catalog of actions and model-authored skills.
//!
//! Skills live as single files `skills/<name>` whose head is a manifest
//! comment block (see [`manifest`]). The catalog is an immutable snapshot;
//! readers never block, writers serialize and swap a new snapshot in.

pub mod manifest;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use arc_swap::ArcSwap;
use chrono::{DateTime, Utc};
use once_cell::sync::Lazy;
use regex::Regex;
use tracing::warn;

use crate::routing::{ActionKind, Grammar, SlotSpec, TokenClass};
use crate::tokens;

pub use manifest::{ExecutionKind, ManifestError, SkillScript, ToolManifest, MANIFEST_CLOSE, MANIFEST_OPEN};

/// Environment variable through which a skill receives its slot values as a
/// JSON object.
pub const SKILL_ARGS_ENV: &str = "BLOCLAW_ARGS";

static NAME_PATTERN: Lazy<Regex> = Lazy::new(|| Regex::new(r"^[a-z0-9_]{1,64}$").expect("name regex"));
static SLOT_PATTERN: Lazy<Regex> = Lazy::new(|| Regex::new(r"^[a-z][a-z0-9_]{0,31}$").expect("slot regex"));

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("skill name {0:?} contains a path separator or `..`")]
    PathTraversal(String),
    #[error("skill name {0:?} does not match [a-z0-9_]{{1,64}}")]
    InvalidName(String),
    #[error("skill name {name:?} collides with {existing}")]
    Collision { name: String, existing: String },
    #[error("skill body is empty")]
    EmptyBody,
    #[error("invalid slot {0:?}")]
    InvalidSlot(String),
    #[error("registry i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// A skill as proposed by the model, before it becomes a manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkillDraft {
    pub name: String,
    pub description: String,
    pub slots: Vec<SlotSpec>,
    pub body: String,
}

impl SkillDraft {
    pub fn new(name: impl Into<String>, description: impl Into<String>, body: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
            slots: Vec::new(),
            body: body.into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Catalog {
    pub tools: Vec<ToolManifest>,
    /// One line per skill file that was skipped while loading.
    pub warnings: Vec<String>,
}

impl Catalog {
    pub fn get(&self, name: &str) -> Option<&ToolManifest> {
        self.tools.iter().find(|t| t.name == name)
    }

    pub fn by_keyword(&self, keyword: &str) -> Option<&ToolManifest> {
        self.tools.iter().find(|t| t.action_keyword.eq_ignore_ascii_case(keyword))
    }

    pub fn skills(&self) -> impl Iterator<Item = &ToolManifest> {
        self.tools.iter().filter(|t| t.execution_kind == ExecutionKind::WorkerScript)
    }

    /// Routing grammar with every skill keyword registered.
    pub fn grammar(&self) -> Grammar {
        Grammar::with_skills(self.skills().map(|t| (t.action_keyword.clone(), t.slots.clone())))
    }
}

fn builtin_description(kind: &ActionKind) -> &'static str {
    match kind {
        ActionKind::Chat => "reply in plain prose without calling a tool",
        ActionKind::TwoDMolecule => "render a 2D depiction of a small molecule given as SMILES",
        ActionKind::FoldProtein => "predict a 3D structure for an amino-acid sequence and show it in the viewport",
        ActionKind::FetchStructure => "download an experimental structure by its 4-character archive ID",
        ActionKind::Docking => "show a receptor (archive ID) and a ligand (SMILES) together in one 3D scene",
        ActionKind::RunCode => "run Python in the sandbox; figures are captured even if never saved",
        ActionKind::CreateTool => {
            "persist a new Python skill under <name>; the thought becomes its description and it reads its parameters as a JSON object from the BLOCLAW_ARGS environment variable"
        }
        ActionKind::RagAnswer => "answer from the uploaded files in the context",
        ActionKind::Skill(_) => "",
    }
}

fn builtin_manifests() -> Vec<ToolManifest> {
    ActionKind::BUILTINS
        .iter()
        .map(|kind| ToolManifest {
            name: kind.keyword().to_ascii_lowercase(),
            description: builtin_description(kind).to_string(),
            action_keyword: kind.keyword().to_string(),
            slots: kind.builtin_slots(),
            execution_kind: ExecutionKind::BuiltinGateway,
            script_path: None,
            version: 1,
            created_at: DateTime::<Utc>::UNIX_EPOCH,
        })
        .collect()
}

/// Builtins followed by every valid skill in `skills_dir`, sorted by name.
/// The directory is created when absent. Bad files are skipped with a
/// warning; only a failure to create or list the directory is an error.
pub fn load_catalog(skills_dir: &Path) -> std::io::Result<Catalog> {
    std::fs::create_dir_all(skills_dir)?;
    let mut tools = builtin_manifests();
    let mut warnings = Vec::new();

    let mut entries: Vec<(String, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(skills_dir)? {
        let entry = entry?;
        let file_name = entry.file_name().to_string_lossy().into_owned();
        // Dotfiles include in-flight temp files of an interrupted persist.
        if file_name.starts_with('.') || !entry.file_type()?.is_file() {
            continue;
        }
        entries.push((file_name, entry.path()));
    }
    entries.sort();

    for (file_name, path) in entries {
        match load_skill(&file_name, &path, &tools) {
            Ok(manifest) => tools.push(manifest),
            Err(reason) => {
                warn!(file = %path.display(), %reason, "skipping skill file");
                warnings.push(format!("{file_name}: {reason}"));
            }
        }
    }
    Ok(Catalog { tools, warnings })
}

fn load_skill(file_name: &str, path: &Path, known: &[ToolManifest]) -> Result<ToolManifest, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let skill = SkillScript::parse(&text).map_err(|e| e.to_string())?;
    let mut manifest = skill.manifest;
    if manifest.name != file_name {
        return Err(format!("manifest name {:?} does not match the file name", manifest.name));
    }
    check_name(&manifest.name).map_err(|e| e.to_string())?;
    if manifest.action_keyword != manifest.name.to_ascii_uppercase() {
        return Err(format!("action keyword {:?} does not match the name", manifest.action_keyword));
    }
    if manifest.execution_kind != ExecutionKind::WorkerScript {
        return Err("skill files must have execution_kind worker_script".into());
    }
    check_slots(&manifest.slots).map_err(|e| e.to_string())?;
    if let Some(existing) = collision(&manifest.name, known) {
        return Err(format!("collides with {existing}"));
    }
    manifest.script_path = Some(path.to_path_buf());
    Ok(manifest)
}

fn check_name(name: &str) -> Result<(), RegistryError> {
    if name.contains(['/', '\\']) || name.contains("..") {
        return Err(RegistryError::PathTraversal(name.to_string()));
    }
    if !NAME_PATTERN.is_match(name) {
        return Err(RegistryError::InvalidName(name.to_string()));
    }
    Ok(())
}

fn check_slots(slots: &[SlotSpec]) -> Result<(), RegistryError> {
    for (i, slot) in slots.iter().enumerate() {
        let reserved = slot.name == "thought" || slot.name == "action";
        let duplicate = slots[..i].iter().any(|s| s.name == slot.name);
        if reserved || duplicate || !SLOT_PATTERN.is_match(&slot.name) {
            return Err(RegistryError::InvalidSlot(slot.name.clone()));
        }
    }
    Ok(())
}

/// A builtin whose keyword equals the name or prefixes it before `_`
/// (so `2d_molecule_dup` is taken), or a skill of the same name.
fn collision(name: &str, tools: &[ToolManifest]) -> Option<String> {
    let upper = name.to_ascii_uppercase();
    for kind in ActionKind::BUILTINS {
        let keyword = kind.keyword();
        let shadows = upper == keyword
            || upper.strip_prefix(keyword).is_some_and(|rest| rest.starts_with('_'));
        if shadows {
            return Some(format!("builtin action {keyword}"));
        }
    }
    tools
        .iter()
        .find(|t| t.execution_kind == ExecutionKind::WorkerScript && t.name == name)
        .map(|t| format!("existing skill {} v{}", t.name, t.version))
}

/// Directive grammar and one line per tool, within `budget` estimated tokens.
/// Descriptions shrink first; keywords and slot specs are never dropped, so
/// an impossibly small budget still yields the full keyword section.
pub fn compose_capability_prompt(catalog: &Catalog, budget: usize) -> String {
    let budget = budget.max(1);
    let render = |descriptions: &[String]| {
        let mut out = String::from(GRAMMAR_TEXT);
        for (tool, description) in catalog.tools.iter().zip(descriptions) {
            let slots = if tool.slots.is_empty() {
                "-".to_string()
            } else {
                tool.slots
                    .iter()
                    .map(|s| format!("{}:{}", s.name, s.class))
                    .collect::<Vec<_>>()
                    .join(", ")
            };
            let origin = match tool.execution_kind {
                ExecutionKind::WorkerScript => format!(" [skill {}]", tool.name),
                ExecutionKind::BuiltinGateway => String::new(),
            };
            out.push_str(&format!("- {}{origin} | {} | {}\n", tool.action_keyword, slots, description));
        }
        out
    };

    let full: Vec<String> = catalog.tools.iter().map(|t| t.description.clone()).collect();
    let text = render(&full);
    if tokens::estimate(&text) <= budget {
        return text;
    }
    let skeleton = render(&vec![String::new(); full.len()]);
    let spare = (budget * 4).saturating_sub(skeleton.chars().count());
    let share = spare / full.len().max(1);
    let truncated: Vec<String> = full.iter().map(|d| shorten(d, share)).collect();
    render(&truncated)
}

fn shorten(text: &str, max_chars: usize) -> String {
    if text.chars().count() <= max_chars {
        return text.to_string();
    }
    if max_chars < 2 {
        return String::new();
    }
    let mut out: String = text.chars().take(max_chars - 1).collect();
    out.push('…');
    out
}

const GRAMMAR_TEXT: &str = "\
To use a tool, answer with tagged fields:
<thought>your reasoning, shown to the user</thought>
<action>one keyword from the list below</action>
<target>the primary parameter</target>
Further parameters use their slot name as the tag, for example <ligand>...</ligand>.
Tag content is taken verbatim: quotes, backslashes and newlines need no escaping.
Code goes inside <target> as plain text or a fenced block.
Answer without tags for an ordinary reply.
Actions (keyword | slots | description):
";

/// Live registry over a skills directory.
pub struct Registry {
    skills_dir: PathBuf,
    snapshot: ArcSwap<Catalog>,
    writer: Mutex<()>,
}

impl std::fmt::Debug for Registry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Registry").field("skills_dir", &self.skills_dir).finish_non_exhaustive()
    }
}

impl Registry {
    pub fn open(skills_dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let skills_dir = skills_dir.into();
        let catalog = load_catalog(&skills_dir)?;
        Ok(Self {
            skills_dir,
            snapshot: ArcSwap::from_pointee(catalog),
            writer: Mutex::new(()),
        })
    }

    pub fn skills_dir(&self) -> &Path {
        &self.skills_dir
    }

    pub fn snapshot(&self) -> Arc<Catalog> {
        self.snapshot.load_full()
    }

    /// Re-reads the directory and swaps the snapshot.
    pub fn reload(&self) -> std::io::Result<Arc<Catalog>> {
        let _guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let catalog = Arc::new(load_catalog(&self.skills_dir)?);
        self.snapshot.store(catalog.clone());
        Ok(catalog)
    }

    pub fn capability_prompt(&self, budget: usize) -> String {
        compose_capability_prompt(&self.snapshot(), budget)
    }

    pub fn persist_skill(&self, draft: SkillDraft, overwrite: bool) -> Result<ToolManifest, RegistryError> {
        self.persist_skill_with_hook(draft, overwrite, |_| Ok(()))
    }

    /// [`Registry::persist_skill`] with a hook that runs after the temp file is
    /// written and before it is renamed into place. A hook error aborts the
    /// persist, which is how tests inject a crash at that point.
    #[doc(hidden)]
    pub fn persist_skill_with_hook(
        &self,
        draft: SkillDraft,
        overwrite: bool,
        before_rename: impl FnOnce(&Path) -> std::io::Result<()>,
    ) -> Result<ToolManifest, RegistryError> {
        check_name(&draft.name)?;
        if draft.body.trim().is_empty() {
            return Err(RegistryError::EmptyBody);
        }
        let slots = if draft.slots.is_empty() {
            vec![SlotSpec::new("target", TokenClass::FreeText)]
        } else {
            draft.slots
        };
        check_slots(&slots)?;

        let _guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let current = self.snapshot.load_full();
        let previous = current.skills().find(|t| t.name == draft.name).cloned();
        match (&previous, collision(&draft.name, &current.tools)) {
            (Some(_), Some(_)) if overwrite => {}
            (_, Some(existing)) => return Err(RegistryError::Collision { name: draft.name, existing }),
            (_, None) => {}
        }

        std::fs::create_dir_all(&self.skills_dir)?;
        let path = self.skills_dir.join(&draft.name);
        let manifest = ToolManifest {
            name: draft.name.clone(),
            description: draft.description,
            action_keyword: draft.name.to_ascii_uppercase(),
            slots,
            execution_kind: ExecutionKind::WorkerScript,
            script_path: Some(path.clone()),
            version: previous.as_ref().map_or(1, |p| p.version + 1),
            created_at: previous.as_ref().map_or_else(Utc::now, |p| p.created_at),
        };
        let text = SkillScript { manifest: manifest.clone(), body: draft.body }.render();

        let mut temp = tempfile::Builder::new().prefix(".skill-").tempfile_in(&self.skills_dir)?;
        temp.write_all(text.as_bytes())?;
        temp.as_file().sync_all()?;
        before_rename(temp.path())?;
        temp.persist(&path).map_err(|e| RegistryError::Io(e.error))?;

        let mut next = (*current).clone();
        next.tools.retain(|t| t.name != manifest.name);
        let insert_at = next
            .tools
            .iter()
            .position(|t| t.execution_kind == ExecutionKind::WorkerScript && t.name > manifest.name)
            .unwrap_or(next.tools.len());
        next.tools.insert(insert_at, manifest.clone());
        self.snapshot.store(Arc::new(next));
        Ok(manifest)
    }

    /// Worker source of a skill, front-matter included (it is all comments).
    pub fn skill_source(&self, name: &str) -> std::io::Result<String> {
        let catalog = self.snapshot();
        let path = catalog
            .skills()
            .find(|t| t.name == name)
            .and_then(|t| t.script_path.clone())
            .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::NotFound, format!("no skill {name}")))?;
        std::fs::read_to_string(path)
    }
}
