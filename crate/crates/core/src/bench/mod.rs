//! Deterministic stress suites: routing under noise, figure capture in the
//! sandbox and intake latency.
//!
//! Rate columns depend only on the seed and [`CORPUS_VERSION`]; latency and
//! runtime columns are measurements.

pub mod baseline;
pub mod corpus;
pub mod samples;
pub mod scripts;

use std::fmt::{self, Write as _};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use futures::StreamExt;
use serde::{Deserialize, Serialize};

use crate::intake::{self, IntakeConfig, IntakeEngine};
use crate::routing::Grammar;
use crate::sandbox::{Sandbox, SandboxConfig, Supervisor};
pub use baseline::{parse_strict_json, BaselineDirective};
pub use corpus::{generate_noisy_corpus, GroundTruth, NoiseKind, NoisySample, CORPUS_VERSION};
pub use scripts::{behavior_corpus, BehaviorScript, ScriptBehavior};

pub const BASELINE_NOTE: &str = "baseline: strict standard-grammar JSON parse of a single object, no repair \
heuristics; the repair behavior of framework JSON modes is unknown and not modelled";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Routing,
    Sandbox,
    Intake,
}

impl Suite {
    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Routing => "routing",
            Suite::Sandbox => "sandbox",
            Suite::Intake => "intake",
        }
    }

    /// Default `n`: corpus size, scripts per row, probe repeats.
    pub fn default_n(self) -> usize {
        match self {
            Suite::Routing => 1000,
            Suite::Sandbox => 20,
            Suite::Intake => 5,
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "routing" => Ok(Suite::Routing),
            "sandbox" => Ok(Suite::Sandbox),
            "intake" => Ok(Suite::Intake),
            other => Err(format!("unknown suite `{other}` (routing, sandbox, intake)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteStatus {
    Completed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub category: String,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_failure_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bloclaw_failure_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub success_rate: Option<f64>,
    /// Mean probe latency.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_latency_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub token_estimate: Option<usize>,
    /// Up to a handful of failing sample descriptions.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<String>,
}

impl BenchRow {
    fn new(category: impl Into<String>, n: usize) -> Self {
        Self {
            category: category.into(),
            n,
            baseline_failure_rate: None,
            bloclaw_failure_rate: None,
            success_rate: None,
            latency_ms: None,
            max_latency_ms: None,
            token_estimate: None,
            failures: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub suite: Suite,
    pub status: SuiteStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skip_reason: Option<String>,
    pub corpus_version: u32,
    pub seed: u64,
    pub n: usize,
    pub runtime_ms: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn row(&self, category: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.category == category)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Fixed-width table for terminals.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "suite: {}  seed: {}  n: {}  corpus: v{}  runtime: {} ms",
            self.suite, self.seed, self.n, self.corpus_version, self.runtime_ms
        );
        for note in &self.notes {
            let _ = writeln!(out, "note: {note}");
        }
        if self.status == SuiteStatus::Skipped {
            let _ = writeln!(out, "SKIPPED: {}", self.skip_reason.as_deref().unwrap_or("dependency missing"));
            return out;
        }
        let pct = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{:.1}%", v * 100.0));
        let ms = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.1}"));
        let _ = writeln!(
            out,
            "{:<24} {:>6} {:>10} {:>10} {:>9} {:>10} {:>10} {:>8}",
            "category", "n", "baseline", "bloclaw", "success", "mean ms", "max ms", "tokens"
        );
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{:<24} {:>6} {:>10} {:>10} {:>9} {:>10} {:>10} {:>8}",
                row.category,
                row.n,
                pct(row.baseline_failure_rate),
                pct(row.bloclaw_failure_rate),
                pct(row.success_rate),
                ms(row.latency_ms),
                ms(row.max_latency_ms),
                row.token_estimate.map_or("-".to_string(), |t| t.to_string()),
            );
        }
        out
    }

    fn skipped(suite: Suite, config: &BenchConfig, reason: String, started: Instant) -> Self {
        Self {
            suite,
            status: SuiteStatus::Skipped,
            skip_reason: Some(reason),
            corpus_version: CORPUS_VERSION,
            seed: config.seed,
            n: config.n,
            runtime_ms: started.elapsed().as_millis() as u64,
            notes: Vec::new(),
            rows: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub n: usize,
    pub seed: u64,
    pub sandbox: SandboxConfig,
    pub intake: IntakeConfig,
    /// Scratch space for workspaces and sample files; a temp dir when unset.
    pub work_dir: Option<PathBuf>,
    pub concurrency: usize,
}

impl BenchConfig {
    pub fn new(suite: Suite, seed: u64) -> Self {
        Self {
            n: suite.default_n(),
            seed,
            sandbox: SandboxConfig::default(),
            intake: IntakeConfig::default(),
            work_dir: None,
            concurrency: std::thread::available_parallelism().map_or(2, |n| n.get().clamp(2, 8)),
        }
    }
}

pub const MAX_LOGGED_FAILURES: usize = 5;

pub async fn run_bench(suite: Suite, config: &BenchConfig) -> BenchReport {
    match suite {
        Suite::Routing => run_routing(config),
        Suite::Sandbox => run_sandbox(config).await,
        Suite::Intake => run_intake(config).await,
    }
}

/// Why the tagged rendering did not recover the ground truth, if it did not.
pub fn check_bloclaw(sample: &NoisySample) -> Result<(), String> {
    let parsed = catch_unwind(AssertUnwindSafe(|| Grammar::builtin().parse(&sample.tagged)))
        .map_err(|_| "parser panicked".to_string())?;
    let envelope = parsed.map_err(|f| format!("parse failure: {}", f.category.as_str()))?;
    if envelope.action != sample.truth.action {
        return Err(format!("action {} != {}", envelope.action, sample.truth.action));
    }
    for (slot, want) in &sample.truth.params {
        match envelope.param(slot) {
            Some(got) if got == want => {}
            got => return Err(format!("slot {slot}: {got:?} != {want:?}")),
        }
    }
    Ok(())
}

pub fn check_baseline(sample: &NoisySample) -> Result<(), String> {
    let parsed = parse_strict_json(&sample.json)?;
    if parsed.action != sample.truth.action {
        return Err(format!("action {} != {}", parsed.action, sample.truth.action));
    }
    for (slot, want) in &sample.truth.params {
        if parsed.params.get(slot) != Some(want) {
            return Err(format!("slot {slot} mismatch"));
        }
    }
    Ok(())
}

fn rate(failures: usize, n: usize) -> f64 {
    if n == 0 { 0.0 } else { failures as f64 / n as f64 }
}

pub fn run_routing(config: &BenchConfig) -> BenchReport {
    let started = Instant::now();
    let corpus = generate_noisy_corpus(config.n, &NoiseKind::ALL, config.seed);
    let mut rows = Vec::new();
    for kind in NoiseKind::ALL {
        let samples: Vec<&NoisySample> = corpus.iter().filter(|s| s.noise == kind).collect();
        let mut row = BenchRow::new(kind.as_str(), samples.len());
        let mut ours = 0;
        let mut theirs = 0;
        for sample in &samples {
            if let Err(reason) = check_bloclaw(sample) {
                ours += 1;
                if row.failures.len() < MAX_LOGGED_FAILURES {
                    row.failures.push(format!("#{}: {reason}", sample.index));
                }
            }
            if check_baseline(sample).is_err() {
                theirs += 1;
            }
        }
        row.bloclaw_failure_rate = Some(rate(ours, samples.len()));
        row.baseline_failure_rate = Some(rate(theirs, samples.len()));
        rows.push(row);
    }
    let mean = |f: fn(&BenchRow) -> Option<f64>| {
        let values: Vec<f64> = rows.iter().filter_map(f).collect();
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    };
    let mut average = BenchRow::new("average", corpus.len());
    average.baseline_failure_rate = mean(|r| r.baseline_failure_rate);
    average.bloclaw_failure_rate = mean(|r| r.bloclaw_failure_rate);
    rows.push(average);
    BenchReport {
        suite: Suite::Routing,
        status: SuiteStatus::Completed,
        skip_reason: None,
        corpus_version: CORPUS_VERSION,
        seed: config.seed,
        n: config.n,
        runtime_ms: started.elapsed().as_millis() as u64,
        notes: vec![BASELINE_NOTE.to_string()],
        rows,
    }
}

fn scratch(config: &BenchConfig) -> std::io::Result<tempfile::TempDir> {
    match &config.work_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            tempfile::Builder::new().prefix("bench-").tempdir_in(dir)
        }
        None => tempfile::Builder::new().prefix("bloclaw-bench-").tempdir(),
    }
}

pub async fn run_sandbox(config: &BenchConfig) -> BenchReport {
    let started = Instant::now();
    let supervisor = Arc::new(Supervisor::new(config.sandbox.clone()));
    if !supervisor.worker_available().await {
        let reason = format!("worker interpreter {} unavailable", config.sandbox.python.display());
        return BenchReport::skipped(Suite::Sandbox, config, reason, started);
    }
    let root = match scratch(config) {
        Ok(dir) => dir,
        Err(e) => return BenchReport::skipped(Suite::Sandbox, config, format!("scratch dir: {e}"), started),
    };
    let corpus = behavior_corpus(config.n, config.seed);
    let mut outcomes: Vec<(usize, Result<(), String>)> = futures::stream::iter(corpus.iter().enumerate())
        .map(|(i, script)| {
            let supervisor = supervisor.clone();
            let workspace = root.path().join(format!("{}-{}", script.behavior.as_str(), script.index));
            async move {
                if let Err(e) = std::fs::create_dir_all(&workspace) {
                    return (i, Err(format!("workspace: {e}")));
                }
                let req = supervisor.request(script.code.clone(), &workspace);
                let outcome = match supervisor.execute(req).await {
                    Ok(report) if report.artifacts.iter().any(|a| a.kind == script.behavior.expected_kind()) => Ok(()),
                    Ok(report) => Err(format!(
                        "no {} artifact (status {:?}{})",
                        script.behavior.expected_kind().as_str(),
                        report.status,
                        report.stderr().map(|e| format!(": {}", e.lines().last().unwrap_or(""))).unwrap_or_default()
                    )),
                    Err(e) => Err(e.to_string()),
                };
                (i, outcome)
            }
        })
        .buffer_unordered(config.concurrency.max(1))
        .collect()
        .await;
    outcomes.sort_by_key(|(i, _)| *i);

    let rows = ScriptBehavior::ALL
        .into_iter()
        .map(|behavior| {
            let mut row = BenchRow::new(behavior.as_str(), 0);
            let mut ok = 0;
            for (i, outcome) in &outcomes {
                let script = &corpus[*i];
                if script.behavior != behavior {
                    continue;
                }
                row.n += 1;
                match outcome {
                    Ok(()) => ok += 1,
                    Err(reason) if row.failures.len() < MAX_LOGGED_FAILURES => {
                        row.failures.push(format!("#{}: {reason}", script.index))
                    }
                    Err(_) => {}
                }
            }
            row.success_rate = Some(if row.n == 0 { 0.0 } else { ok as f64 / row.n as f64 });
            row
        })
        .collect();
    BenchReport {
        suite: Suite::Sandbox,
        status: SuiteStatus::Completed,
        skip_reason: None,
        corpus_version: CORPUS_VERSION,
        seed: config.seed,
        n: config.n,
        runtime_ms: started.elapsed().as_millis() as u64,
        notes: Vec::new(),
        rows,
    }
}

pub const CSV_ROWS: usize = 10_000;
pub const PDB_LINES: usize = 100_000;
pub const PDF_PAGES: usize = 8;

pub async fn run_intake(config: &BenchConfig) -> BenchReport {
    let started = Instant::now();
    let supervisor = Supervisor::new(config.sandbox.clone());
    if !supervisor.worker_available().await {
        let reason = format!("worker interpreter {} unavailable (needed for the PDF probe)", config.sandbox.python.display());
        return BenchReport::skipped(Suite::Intake, config, reason, started);
    }
    let root = match scratch(config) {
        Ok(dir) => dir,
        Err(e) => return BenchReport::skipped(Suite::Intake, config, format!("scratch dir: {e}"), started),
    };
    let engine = IntakeEngine::new(config.intake, Arc::new(supervisor));
    let samples: [(&str, &str, Vec<u8>); 3] = [
        ("csv_10k_rows", "expression.csv", samples::csv_sample(CSV_ROWS, config.seed)),
        ("pdb_100k_lines", "assembly.pdb", samples::pdb_sample(PDB_LINES, config.seed)),
        ("pdf_text_heavy", "paper.pdf", samples::pdf_sample(PDF_PAGES, config.seed)),
    ];
    let repeats = config.n.max(1);
    let mut rows = Vec::new();
    for (category, name, bytes) in samples {
        let mut row = BenchRow::new(category, repeats);
        let mounted = match intake::mount_bytes(root.path(), name, &bytes) {
            Ok(m) => m,
            Err(e) => {
                row.success_rate = Some(0.0);
                row.failures.push(format!("mount: {e}"));
                rows.push(row);
                continue;
            }
        };
        let mut latencies = Vec::new();
        let mut tokens = 0;
        for attempt in 0..repeats {
            match engine.classify_and_probe(&mounted).await {
                Ok(digest) => {
                    latencies.push(digest.probe_latency_ms);
                    tokens = tokens.max(digest.token_estimate);
                }
                Err(e) if row.failures.len() < MAX_LOGGED_FAILURES => row.failures.push(format!("#{attempt}: {e}")),
                Err(_) => {}
            }
        }
        row.success_rate = Some(latencies.len() as f64 / repeats as f64);
        if !latencies.is_empty() {
            row.latency_ms = Some(latencies.iter().sum::<f64>() / latencies.len() as f64);
            row.max_latency_ms = latencies.iter().copied().reduce(f64::max);
            row.token_estimate = Some(tokens);
        }
        rows.push(row);
    }
    BenchReport {
        suite: Suite::Intake,
        status: SuiteStatus::Completed,
        skip_reason: None,
        corpus_version: CORPUS_VERSION,
        seed: config.seed,
        n: config.n,
        runtime_ms: started.elapsed().as_millis() as u64,
        notes: vec![format!(
            "samples: {CSV_ROWS}-row CSV, {PDB_LINES}-line PDB, {PDF_PAGES}-page PDF; n = probe repeats per sample"
        )],
        rows,
    }
}
