//! Every primary acceptance criterion, one PASS/FAIL line each.

mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use bloclaw_core::bench::{run_bench, BenchConfig, NoiseKind, ScriptBehavior, Suite, SuiteStatus};
use bloclaw_core::gateway::{CountingTransport, ErrorCategory, FixtureTransport, GatewayConfig, ScienceGateway};
use bloclaw_core::registry::SkillScript;
use bloclaw_core::routing::{extract_maximal_token, parse_directive_bytes, FailureCategory, TokenClass};
use bloclaw_core::sandbox::{ExecutionRequest, ExecutionStatus, Sandbox, Supervisor};
use bloclaw_core::session::{check_log_grammar, ServerEvent};

const SEED: u64 = 2026;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok { Ok(()) } else { Err(msg.into()) }
}

fn within(started: Instant, limit: Duration) -> Result<(), String> {
    let took = started.elapsed();
    ensure(took < limit, format!("took {took:.1?}, limit {limit:?}"))
}

fn routing_bench() -> Outcome {
    let started = Instant::now();
    let report = bloclaw_core::bench::run_routing(&BenchConfig { n: 1000, ..BenchConfig::new(Suite::Routing, SEED) });
    within(started, Duration::from_secs(60))?;
    let limits = [
        (NoiseKind::ConversationalText, 0.01),
        (NoiseKind::UnescapedQuotes, 0.02),
        (NoiseKind::MultilineCodeStrings, 0.03),
        (NoiseKind::MissingEndTags, 0.08),
    ];
    let mut detail = Vec::new();
    for (kind, limit) in limits {
        let row = report.row(kind.as_str()).ok_or(format!("no row {kind}"))?;
        let ours = row.bloclaw_failure_rate.unwrap_or(1.0);
        let theirs = row.baseline_failure_rate.unwrap_or(0.0);
        ensure(ours <= limit, format!("{kind}: bloclaw {ours:.3} > {limit}"))?;
        ensure(theirs >= 0.10, format!("{kind}: baseline {theirs:.3} < 0.10"))?;
        ensure(theirs > ours, format!("{kind}: baseline not worse"))?;
        detail.push(format!("{kind} {:.1}%/{:.1}%", ours * 100.0, theirs * 100.0));
    }
    Ok(format!("{} in {} ms", detail.join(", "), report.runtime_ms))
}

fn oracle_equivalence() -> Outcome {
    let started = Instant::now();
    let mut rng = common::rng(SEED);
    for class in TokenClass::ALL {
        for case in 0..10_000 {
            let text = common::random_text(&mut rng, class, 2048);
            let got = extract_maximal_token(&text, class).map(|t| t.span);
            let want = common::oracle(&text, class);
            ensure(got == want, format!("{class} case {case}: {got:?} != {want:?} on {text:?}"))?;
        }
    }
    within(started, Duration::from_secs(300))?;
    Ok(format!("60000 strings in {:.1?}", started.elapsed()))
}

fn totality_fuzz() -> Outcome {
    let mut rng = common::rng(SEED);
    let mut failures = 0;
    for case in 0..100_000 {
        let input = common::fuzz_input(&mut rng);
        let parsed = std::panic::catch_unwind(|| parse_directive_bytes(&input))
            .map_err(|_| format!("case {case} panicked on {input:?}"))?;
        if let Err(failure) = parsed {
            failures += 1;
            ensure(FailureCategory::ALL.contains(&failure.category), format!("case {case}: unknown category"))?;
            ensure(!failure.diagnostic.is_empty(), format!("case {case}: empty diagnostic"))?;
        }
    }
    Ok(format!("100000 inputs, {failures} classified failures, 0 crashes"))
}

async fn sandbox_bench() -> Outcome {
    let started = Instant::now();
    let report = run_bench(Suite::Sandbox, &BenchConfig::new(Suite::Sandbox, SEED)).await;
    ensure(report.status == SuiteStatus::Completed, format!("skipped: {:?}", report.skip_reason))?;
    within(started, Duration::from_secs(300))?;
    let mut detail = Vec::new();
    for (behavior, floor) in [
        (ScriptBehavior::DisplayCall, 1.0),
        (ScriptBehavior::ForgottenSave, 1.0),
        (ScriptBehavior::InteractiveFigure, 0.95),
    ] {
        let row = report.row(behavior.as_str()).ok_or("missing row")?;
        let rate = row.success_rate.unwrap_or(0.0);
        ensure(row.n >= 20, format!("{behavior:?}: only {} scripts", row.n))?;
        ensure(rate >= floor, format!("{}: {rate:.3} < {floor} {:?}", behavior.as_str(), row.failures))?;
        detail.push(format!("{} {:.1}%", behavior.as_str(), rate * 100.0));
    }
    Ok(format!("{} in {} ms", detail.join(", "), report.runtime_ms))
}

async fn stdout_transparency() -> Outcome {
    let supervisor = Supervisor::default();
    for (i, code) in common::PLAIN_SCRIPTS.iter().enumerate() {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let report = supervisor.execute(ExecutionRequest::new(*code, dir.path())).await.map_err(|e| e.to_string())?;
        ensure(report.status == ExecutionStatus::Ok, format!("script {i}: {:?}", report.status))?;
        ensure(
            report.stdout().into_bytes() == common::plain_stdout(code, dir.path()),
            format!("script {i}: stdout differs"),
        )?;
    }
    Ok(format!("{} scripts byte-identical", common::PLAIN_SCRIPTS.len()))
}

async fn intake_bench() -> Outcome {
    let report = run_bench(Suite::Intake, &BenchConfig::new(Suite::Intake, SEED)).await;
    ensure(report.status == SuiteStatus::Completed, format!("skipped: {:?}", report.skip_reason))?;
    let row = |name: &str| report.row(name).ok_or(format!("missing row {name}"));
    let csv = row("csv_10k_rows")?;
    let pdb = row("pdb_100k_lines")?;
    let pdf = row("pdf_text_heavy")?;
    for r in [csv, pdb, pdf] {
        ensure(r.success_rate == Some(1.0), format!("{}: success {:?} {:?}", r.category, r.success_rate, r.failures))?;
    }
    let csv_ms = csv.max_latency_ms.unwrap_or(f64::INFINITY);
    let pdb_ms = pdb.max_latency_ms.unwrap_or(f64::INFINITY);
    let pdf_tokens = pdf.token_estimate.unwrap_or(usize::MAX);
    ensure(csv_ms < 500.0, format!("csv {csv_ms:.1} ms"))?;
    ensure(pdb_ms < 200.0, format!("pdb {pdb_ms:.1} ms"))?;
    ensure(pdf_tokens <= 2500, format!("pdf {pdf_tokens} tokens"))?;
    Ok(format!("csv max {csv_ms:.1} ms, pdb max {pdb_ms:.1} ms, pdf {pdf_tokens} tokens"))
}

async fn self_evolution() -> Outcome {
    let h = common::harness(
        [
            "<thought>Computes molecular weight from a formula.</thought>\n<action>CREATE_TOOL</action>\n<name>formula_weight</name>\n<target>\nimport json, os\nprint(json.loads(os.environ['BLOCLAW_ARGS']).get('target', ''))\n</target>",
            "Saved.",
        ],
        true,
    );
    let session = h.service.create_session().map_err(|e| e.to_string())?;
    let events = h.service.handle_user_message(&session.id, "build a formula weight tool").await.map_err(|e| e.to_string())?;
    check_log_grammar(&events)?;
    let manifest = h.service.services().registry.snapshot().get("formula_weight").cloned().ok_or("skill not in catalog")?;
    let path = manifest.script_path.ok_or("no script path")?;
    ensure(path.starts_with(h.root.path().join("skills")), "skill stored outside the skills dir")?;
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let parsed = SkillScript::parse(&text).map_err(|e| format!("front-matter: {e}"))?;
    ensure(parsed.manifest.action_keyword == "FORMULA_WEIGHT", "wrong keyword")?;
    ensure(parsed.manifest.version == 1, "wrong version")?;
    let prompt = h.service.system_prompt(&session.id).await.map_err(|e| e.to_string())?;
    ensure(prompt.contains("FORMULA_WEIGHT"), "keyword absent from next system prompt")?;
    Ok("skill persisted, keyword in next prompt".into())
}

async fn replay_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path().join("run");
    let first = common::replay_log(&root).await;
    let second = common::replay_log(&root).await;
    ensure(first == second, "event logs differ between runs")?;
    let events: Vec<ServerEvent> = first.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let turns = check_log_grammar(&events)?;
    ensure(turns == common::replay_fixture().turns.len(), format!("{turns} turns checked"))?;
    Ok(format!("{} events over {turns} turns, {} bytes identical", events.len(), first.len()))
}

async fn gateway_validation() -> Outcome {
    let transport = Arc::new(CountingTransport::new(
        FixtureTransport::load(common::gateway_fixtures()).map_err(|e| e.to_string())?,
    ));
    let gateway = ScienceGateway::new(GatewayConfig { backoff_ms: 1, ..GatewayConfig::default() }, transport.clone());
    for seq in ["", "MKTAYIAKQB", "MKT1"] {
        let err = gateway.fold_sequence(seq).await.err().ok_or(format!("{seq:?} accepted"))?;
        ensure(err.category() == ErrorCategory::Validation, format!("{seq:?}: {err}"))?;
    }
    for id in ["XXXXX", "ABCD", ""] {
        let err = gateway.fetch_structure(id).await.err().ok_or(format!("{id:?} accepted"))?;
        ensure(err.category() == ErrorCategory::Validation, format!("{id:?}: {err}"))?;
    }
    ensure(transport.calls() == 0, format!("{} network calls on invalid input", transport.calls()))?;
    let folded = gateway.fold_sequence(common::FOLD_35).await.map_err(|e| e.to_string())?;
    let fetched = gateway.fetch_structure("1CRN").await.map_err(|e| e.to_string())?;
    ensure(folded.atom_count == common::fixture_atom_records("fold_35.pdb"), "fold atom_count")?;
    ensure(fetched.atom_count == common::fixture_atom_records("1crn.pdb"), "fetch atom_count")?;
    Ok(format!("0 calls on invalid input; atoms {} / {}", folded.atom_count, fetched.atom_count))
}

async fn primary_criteria() -> Vec<&'static str> {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    results.push(("routing bench", routing_bench()));
    results.push(("maximal-extraction oracle equivalence", oracle_equivalence()));
    results.push(("totality fuzz", totality_fuzz()));
    results.push(("sandbox bench", sandbox_bench().await));
    results.push(("stdout transparency", stdout_transparency().await));
    results.push(("intake bench", intake_bench().await));
    results.push(("self-evolution round-trip", self_evolution().await));
    results.push(("end-to-end replay", replay_determinism().await));
    results.push(("gateway validation", gateway_validation().await));

    let mut failed = Vec::new();
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(reason) => {
                println!("FAIL {name}: {reason}");
                failed.push(*name);
            }
        }
    }
    failed
}

fn main() {
    // libtest-style filters such as `cargo test routing` name other targets' tests.
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return;
    }
    let runtime = tokio::runtime::Runtime::new().expect("runtime");
    let failed = runtime.block_on(primary_criteria());
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
