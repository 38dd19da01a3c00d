mod common;

use std::time::Duration;

use bloclaw_core::sandbox::{
    build_instrumented_script, harvest_artifacts, ArtifactKind, ArtifactOrigin, ExecutionRequest, ExecutionStatus,
    ProbeCall, Sandbox, SandboxConfig, Supervisor, SENTINEL,
};

fn supervisor() -> Supervisor {
    Supervisor::new(SandboxConfig::default())
}

async fn run(code: &str) -> (tempfile::TempDir, bloclaw_core::sandbox::ExecutionReport) {
    let dir = tempfile::tempdir().unwrap();
    let report = supervisor().execute(ExecutionRequest::new(code, dir.path())).await.unwrap();
    (dir, report)
}

fn is_png(bytes: &[u8]) -> bool {
    bytes.starts_with(b"\x89PNG\r\n\x1a\n")
}

#[tokio::test]
async fn display_call_is_captured() {
    let (_dir, report) = run("import matplotlib.pyplot as plt\nplt.plot([1, 2, 3])\nplt.show()\n").await;
    assert_eq!(report.status, ExecutionStatus::Ok);
    let raster = report.first_of(ArtifactKind::RasterImageB64).expect("raster");
    assert_eq!(raster.origin, ArtifactOrigin::InterceptedShow);
    assert!(is_png(&raster.decode_raster().unwrap()));
    assert_eq!(report.figures().count(), 1);
}

#[tokio::test]
async fn forgotten_figure_is_swept() {
    let (_dir, report) = run("import matplotlib.pyplot as plt\nfig, ax = plt.subplots()\nax.plot([3, 1, 2])\n").await;
    assert_eq!(report.status, ExecutionStatus::Ok);
    let raster = report.first_of(ArtifactKind::RasterImageB64).expect("raster");
    assert_eq!(raster.origin, ArtifactOrigin::NamespaceSweep);
    assert!(is_png(&raster.decode_raster().unwrap()));
}

#[tokio::test]
async fn interactive_figure_is_self_contained() {
    let (_dir, report) = run("import plotly.express as px\nfig = px.scatter(x=[1, 2], y=[3, 4])\n").await;
    let html = report.first_of(ArtifactKind::InteractiveHtml).expect("html");
    assert!(html.payload.contains("<html"));
    assert!(!html.payload.contains("<script src=\"http"), "external script reference");
}

#[tokio::test]
async fn timeout_kills_within_slack() {
    let dir = tempfile::tempdir().unwrap();
    let req = ExecutionRequest::new("while True:\n    pass\n", dir.path()).with_timeout(Duration::from_secs(2));
    let report = supervisor().execute(req).await.unwrap();
    assert_eq!(report.status, ExecutionStatus::Timeout);
    assert!((2000..=4000).contains(&report.duration_ms), "{} ms", report.duration_ms);
}

#[tokio::test]
async fn writes_outside_workspace_fail() {
    let outer = tempfile::tempdir().unwrap();
    let workspace = outer.path().join("ws");
    std::fs::create_dir(&workspace).unwrap();
    let code = "try:\n    open('../escape.txt', 'w').write('x')\n    print('wrote')\nexcept Exception as e:\n    print('blocked', type(e).__name__)\nopen('inside.txt', 'w').write('ok')\n";
    let report = supervisor().execute(ExecutionRequest::new(code, &workspace)).await.unwrap();
    assert!(report.stdout().starts_with("blocked"), "{}", report.stdout());
    assert!(!outer.path().join("escape.txt").exists());
    assert!(workspace.join("inside.txt").exists());
}

#[tokio::test]
async fn network_is_off_by_default() {
    let code = "import socket\ntry:\n    socket.create_connection(('127.0.0.1', 9), timeout=1)\n    print('connected')\nexcept Exception as e:\n    print('blocked', type(e).__name__)\n";
    let (_dir, report) = run(code).await;
    assert!(report.stdout().starts_with("blocked PermissionError"), "{}", report.stdout());
}

#[tokio::test]
async fn hard_crash_keeps_partial_artifacts() {
    let code = "import os, sys\nimport matplotlib.pyplot as plt\nplt.plot([1, 2])\nplt.show()\nsys.stdout.write('@@BLOCLAW_ARTIFACT@@ {\"seq\": 9, \"ki')\nsys.stdout.flush()\nos.abort()\n";
    let (_dir, report) = run(code).await;
    assert_eq!(report.status, ExecutionStatus::Error);
    assert!(report.first_of(ArtifactKind::RasterImageB64).is_some());
    assert!(report.first_of(ArtifactKind::ErrorRecord).is_some());
}

#[tokio::test]
async fn exceptions_are_errors_and_still_swept() {
    let (_dir, report) = run("import matplotlib.pyplot as plt\nplt.plot([1])\nraise ValueError('boom')\n").await;
    assert_eq!(report.status, ExecutionStatus::Error);
    assert!(report.stderr().unwrap().contains("ValueError: boom"));
    assert!(report.first_of(ArtifactKind::RasterImageB64).is_some());
}

#[tokio::test]
async fn empty_code_runs_cleanly() {
    let (_dir, report) = run("").await;
    assert_eq!(report.status, ExecutionStatus::Ok);
    assert_eq!(report.figures().count(), 0);
}

#[tokio::test]
async fn stdout_is_transparent() {
    for code in common::PLAIN_SCRIPTS {
        let (dir, report) = run(code).await;
        assert_eq!(report.status, ExecutionStatus::Ok, "{code}");
        assert_eq!(report.stdout().into_bytes(), common::plain_stdout(code, dir.path()), "{code}");
    }
}

#[tokio::test]
async fn code_that_embeds_the_header_twice_still_runs() {
    let inner = build_instrumented_script("import matplotlib.pyplot as plt\nplt.plot([1])\nplt.show()\n");
    let (_dir, report) = run(&inner.full_text).await;
    assert_eq!(report.status, ExecutionStatus::Ok, "{:?}", report.stderr());
    assert!(report.figures().count() >= 1);
}

#[tokio::test]
async fn invalid_requests_are_rejected() {
    let err = supervisor().execute(ExecutionRequest::new("print(1)", "/nonexistent/ws")).await.unwrap_err();
    assert!(err.to_string().contains("does not exist"));
    let dir = tempfile::tempdir().unwrap();
    let req = ExecutionRequest::new("print(1)", dir.path()).with_timeout(Duration::ZERO);
    assert!(supervisor().execute(req).await.is_err());
}

#[tokio::test]
async fn missing_interpreter_is_worker_unavailable() {
    let dir = tempfile::tempdir().unwrap();
    let sup = Supervisor::new(SandboxConfig { python: "/nonexistent/python".into(), ..SandboxConfig::default() });
    let err = sup.execute(ExecutionRequest::new("print(1)", dir.path())).await.unwrap_err();
    assert!(err.to_string().contains("could not be started"));
}

#[test]
fn harvest_preserves_interleaving() {
    let stream = format!(
        "before\n{SENTINEL} {{\"seq\":1,\"kind\":\"text\",\"origin\":\"probe\",\"payload\":\"a\"}}\nmiddle\n{SENTINEL} {{\"seq\":2,\"kind\":\"text\",\"origin\":\"probe\",\"payload\":\"b\"}}\n"
    );
    let kinds: Vec<ArtifactKind> = harvest_artifacts(stream.as_bytes()).iter().map(|a| a.kind).collect();
    assert_eq!(kinds, [ArtifactKind::Stdout, ArtifactKind::Text, ArtifactKind::Stdout, ArtifactKind::Text]);
    assert!(harvest_artifacts(b"").is_empty());
}

async fn probe(name: &str, args: serde_json::Value, dir: &std::path::Path) -> bloclaw_core::sandbox::ExecutionReport {
    supervisor().run_probe(ProbeCall::new(name, args), dir).await.unwrap()
}

#[tokio::test]
async fn depict_probe_yields_png() {
    let dir = tempfile::tempdir().unwrap();
    let report = probe("depict_2d", serde_json::json!({ "smiles": "CC(=O)Oc1ccccc1C(=O)O" }), dir.path()).await;
    assert_eq!(report.status, ExecutionStatus::Ok);
    let figures: Vec<_> = report.figures().collect();
    assert_eq!(figures.len(), 1);
    assert_eq!(figures[0].origin, ArtifactOrigin::Probe);
    assert!(is_png(&figures[0].decode_raster().unwrap()));
}

#[tokio::test]
async fn bad_probe_input_is_an_error_record_not_a_crash() {
    let dir = tempfile::tempdir().unwrap();
    for (name, args, needle) in [
        ("depict_2d", serde_json::json!({ "smiles": "C((" }), "parse failure"),
        ("no_such_probe", serde_json::json!({}), "unknown probe"),
    ] {
        let report = probe(name, args, dir.path()).await;
        assert_eq!(report.status, ExecutionStatus::Ok, "{name}");
        let record = report.first_of(ArtifactKind::ErrorRecord).expect("error record");
        assert!(record.payload.contains(needle), "{}", record.payload);
        assert_eq!(report.figures().count(), 0);
    }
}

#[tokio::test]
async fn table_probe_previews_header_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("big.csv");
    std::fs::write(&path, bloclaw_core::bench::samples::csv_sample(10_000, 1)).unwrap();
    let report = probe("table_probe", serde_json::json!({ "path": path }), dir.path()).await;
    let text = &report.first_of(ArtifactKind::Text).expect("text record").payload;
    assert!(text.contains("rows: 10000"));
    let preview: Vec<&str> = text.lines().skip_while(|l| !l.starts_with("sample_id,")).collect();
    assert_eq!(preview[0], "sample_id,gene,tissue,expression,collected,replicate");
    assert!(preview.len() - 1 <= 20);
}

#[tokio::test]
async fn print_only_script_has_no_records() {
    let (_dir, report) = run("print('just text')\n").await;
    assert_eq!(report.status, ExecutionStatus::Ok);
    assert!(report.artifacts.iter().all(|a| a.origin == ArtifactOrigin::Stream));
}
