mod common;

use bloclaw_core::gateway::StructureSource;
use bloclaw_core::routing::ActionKind;
use bloclaw_core::sandbox::ArtifactKind;
use bloclaw_core::session::{check_log_grammar, check_turn_grammar, Role, ServerEvent};
use common::{event_types, harness};

fn without_deltas(types: &[&'static str]) -> Vec<&'static str> {
    types.iter().copied().filter(|t| *t != "token_delta").collect()
}

#[tokio::test]
async fn two_d_molecule_turn() {
    let h = harness(
        ["<thought>Draw aspirin.</thought><action>2D_MOLECULE</action><target>CC(=O)Oc1ccccc1C(=O)O</target>", "Here is aspirin."],
        true,
    );
    let s = h.service.create_session().unwrap();
    let events = h.service.handle_user_message(&s.id, "show me aspirin").await.unwrap();
    check_turn_grammar(&events).unwrap();
    assert_eq!(
        without_deltas(&event_types(&events)),
        ["directive_parsed", "artifact_ready", "viewport_update", "turn_done"]
    );
    let ServerEvent::ArtifactReady { artifact_id, kind, .. } = &events[events.len() - 3] else { panic!() };
    assert_eq!(*kind, ArtifactKind::RasterImageB64);
    let served = h.service.services().store.serve(artifact_id).unwrap();
    assert_eq!(served.content_type, "image/png");
    assert!(served.body.starts_with(b"\x89PNG"));
    assert_eq!(events.last().unwrap(), &ServerEvent::TurnDone { reply: "Here is aspirin.".into() });
}

#[tokio::test]
async fn untagged_prose_is_chat() {
    let h = harness(["Hello! I can draw molecules and fold proteins for you."], true);
    let s = h.service.create_session().unwrap();
    let events = h.service.handle_user_message(&s.id, "hi").await.unwrap();
    check_turn_grammar(&events).unwrap();
    let types = event_types(&events);
    assert_eq!(types.last(), Some(&"turn_done"));
    assert!(types[..types.len() - 1].iter().all(|t| *t == "token_delta"));
    let streamed: String = events
        .iter()
        .filter_map(|e| match e {
            ServerEvent::TokenDelta { text } => Some(text.as_str()),
            _ => None,
        })
        .collect();
    assert_eq!(streamed, "Hello! I can draw molecules and fold proteins for you.");
    assert_eq!(h.provider.remaining(), 0);
}

fn run_code(code: &str) -> String {
    format!("<thought>Plot it.</thought><action>RUN_CODE</action><target>{code}</target>")
}

fn execution_count(events: &[ServerEvent]) -> usize {
    // Each execution in these scripts yields either a traceback or one figure.
    events
        .iter()
        .filter(|e| {
            matches!(e, ServerEvent::ArtifactReady { kind: ArtifactKind::Stderr | ArtifactKind::RasterImageB64, .. })
        })
        .count()
}

#[tokio::test]
async fn run_code_retries_after_a_traceback() {
    let h = harness(
        [
            run_code("import matplotlib.pyplot as plt\nplt.plot(undefined_name)"),
            run_code("import matplotlib.pyplot as plt\nplt.plot([1, 2, 3])"),
            "Plotted.".to_string(),
        ],
        true,
    );
    let s = h.service.create_session().unwrap();
    let events = h.service.handle_user_message(&s.id, "plot 1 2 3").await.unwrap();
    check_turn_grammar(&events).unwrap();
    assert_eq!(execution_count(&events), 2);
    assert!(!event_types(&events).contains(&"turn_error"));
    let figures: Vec<_> = events
        .iter()
        .filter(|e| matches!(e, ServerEvent::ArtifactReady { kind: ArtifactKind::RasterImageB64, .. }))
        .collect();
    assert_eq!(figures.len(), 1);
    let history = s.history().await;
    assert!(history.iter().any(|m| m.role == Role::Observation && m.text.contains("NameError")));
    assert_eq!(h.provider.remaining(), 0);
}

#[tokio::test]
async fn third_failure_is_a_turn_error() {
    let broken = run_code("raise RuntimeError('still broken')");
    let h = harness([broken.clone(), broken.clone(), broken], true);
    let s = h.service.create_session().unwrap();
    let events = h.service.handle_user_message(&s.id, "run").await.unwrap();
    check_turn_grammar(&events).unwrap();
    assert_eq!(execution_count(&events), 3);
    assert!(matches!(&events[events.len() - 2], ServerEvent::TurnError { category, .. } if category == "execution_failed"));
    assert_eq!(h.provider.remaining(), 0);
}

const SKILL: &str = "<thought>Counts residues in a sequence.</thought>\n<action>CREATE_TOOL</action>\n<name>residue_counter</name>\n<target>\nimport json, os\nargs = json.loads(os.environ.get('BLOCLAW_ARGS', '{}'))\nprint(len(args.get('target', '')))\n</target>";

#[tokio::test]
async fn created_tool_is_callable_next_turn() {
    let h = harness(
        [
            SKILL.to_string(),
            "Saved the residue counter.".to_string(),
            "<thought>Use it.</thought><action>RESIDUE_COUNTER</action><target>MKTAYIAKQR</target>".to_string(),
            "Ten residues.".to_string(),
        ],
        true,
    );
    let s = h.service.create_session().unwrap();
    let before = h.service.system_prompt(&s.id).await.unwrap();
    assert!(!before.contains("RESIDUE_COUNTER"));

    let first = h.service.handle_user_message(&s.id, "make a residue counter").await.unwrap();
    check_turn_grammar(&first).unwrap();
    assert!(s.history().await.iter().any(|m| m.text.contains("Skill residue_counter v1 saved")));
    let after = h.service.system_prompt(&s.id).await.unwrap();
    assert!(after.contains("RESIDUE_COUNTER"));
    assert!(after.contains("residue_counter"));

    let second = h.service.handle_user_message(&s.id, "count MKTAYIAKQR").await.unwrap();
    check_turn_grammar(&second).unwrap();
    let parsed = second.iter().find_map(|e| match e {
        ServerEvent::DirectiveParsed { action, .. } => Some(action.clone()),
        _ => None,
    });
    assert_eq!(parsed, Some(ActionKind::Skill("RESIDUE_COUNTER".into())));
    let observation = s.history().await.into_iter().rev().find(|m| m.role == Role::Observation).unwrap();
    assert!(observation.text.contains("stdout:\n10"), "{}", observation.text);
    assert!(h.provider.system_prompts()[2].contains("RESIDUE_COUNTER"));
}

#[tokio::test]
async fn parse_failure_falls_back_to_chat() {
    let h = harness(["<thought>hmm</thought><action>TELEPORT</action><target>moon</target>"], true);
    let s = h.service.create_session().unwrap();
    let events = h.service.handle_user_message(&s.id, "go").await.unwrap();
    check_turn_grammar(&events).unwrap();
    let types = event_types(&events);
    assert!(types.contains(&"turn_error"));
    assert!(!types.contains(&"directive_parsed"));
    let ServerEvent::TurnDone { reply } = events.last().unwrap() else { panic!() };
    assert!(reply.contains("TELEPORT"));
}

#[tokio::test]
async fn exhausted_provider_reports_unreachable() {
    let h = harness(Vec::<String>::new(), true);
    let s = h.service.create_session().unwrap();
    let events = h.service.handle_user_message(&s.id, "hello").await.unwrap();
    assert_eq!(event_types(&events), ["turn_error", "turn_done"]);
    assert!(matches!(&events[0], ServerEvent::TurnError { category, .. } if category == "provider_unreachable"));
}

#[tokio::test]
async fn docking_emits_two_layer_scene() {
    let h = harness(
        ["<thought>Dock.</thought><action>DOCKING</action><target>1CRN</target><ligand>CC(=O)Oc1ccccc1C(=O)O</ligand>"],
        false,
    );
    let s = h.service.create_session().unwrap();
    let events = h.service.handle_user_message(&s.id, "dock aspirin into crambin").await.unwrap();
    check_turn_grammar(&events).unwrap();
    let scene = events
        .iter()
        .find_map(|e| match e {
            ServerEvent::ViewportUpdate { scene: Some(scene), .. } => Some(scene.clone()),
            _ => None,
        })
        .unwrap();
    let sources: Vec<_> = scene.layers.iter().map(|l| l.payload.source).collect();
    assert_eq!(sources, [StructureSource::Archive, StructureSource::LigandEmbedded]);
    let ServerEvent::TurnDone { reply } = events.last().unwrap() else { panic!() };
    assert!(reply.contains("2 layers"));
}

#[tokio::test]
async fn missing_entry_is_an_observation_not_an_error() {
    let h = harness(["<action>FETCH_STRUCTURE</action><target>9ZZZ</target>", "No such entry."], true);
    let s = h.service.create_session().unwrap();
    let events = h.service.handle_user_message(&s.id, "fetch 9ZZZ").await.unwrap();
    check_turn_grammar(&events).unwrap();
    assert!(!event_types(&events).contains(&"turn_error"));
    assert!(s.history().await.iter().any(|m| m.role == Role::Observation && m.text.contains("9ZZZ")));
}

#[tokio::test]
async fn concurrent_turns_are_linearizable() {
    let replies: Vec<String> = (0..8).map(|i| format!("reply {i}")).collect();
    let h = harness(replies, false);
    let s = h.service.create_session().unwrap();
    let mut tasks = Vec::new();
    for i in 0..8 {
        let service = h.service.clone();
        let id = s.id.clone();
        tasks.push(tokio::spawn(async move { service.handle_user_message(&id, &format!("message {i}")).await.unwrap() }));
    }
    for task in tasks {
        task.await.unwrap();
    }
    let history = s.history().await;
    assert_eq!(history.len(), 16);
    let mut seen = std::collections::BTreeSet::new();
    for (k, pair) in history.chunks(2).enumerate() {
        assert_eq!(pair[0].role, Role::User);
        assert_eq!(pair[1].role, Role::Assistant);
        // Replies are consumed in order, so the k-th turn got the k-th reply.
        assert_eq!(pair[1].text, format!("reply {k}"));
        assert!(seen.insert(pair[0].text.clone()));
    }
    assert_eq!(seen.len(), 8);
    assert_eq!(check_log_grammar(&s.event_log()), Ok(8));
}

#[tokio::test]
async fn turns_are_isolated_across_sessions() {
    let h = harness(["one", "two"], false);
    let a = h.service.create_session().unwrap();
    let b = h.service.create_session().unwrap();
    h.service.handle_user_message(&a.id, "a").await.unwrap();
    h.service.handle_user_message(&b.id, "b").await.unwrap();
    assert_eq!(a.history().await.len(), 2);
    assert_eq!(b.history().await[1].text, "two");
    assert!(h.service.handle_user_message("missing", "x").await.is_err());
}

#[tokio::test]
async fn mounted_file_reaches_the_prompt() {
    let h = harness(Vec::<String>::new(), false);
    let s = h.service.create_session().unwrap();
    let csv = b"gene,expression\nTP53,4.5\nEGFR,9.1\n";
    let (file, digest) = h.service.mount_file(&s.id, "expr.csv", csv).await.unwrap();
    assert!(file.path.starts_with(&s.workspace_dir));
    let prompt = h.service.system_prompt(&s.id).await.unwrap();
    assert!(prompt.contains(&digest.digest_text));
    assert!(h.service.mount_file(&s.id, "empty.csv", b"").await.is_err());
    assert_eq!(s.mounted_files().await.len(), 1);
}

#[tokio::test]
async fn replay_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("run");
    let first = common::replay_log(&root).await;
    let second = common::replay_log(&root).await;
    assert_eq!(first, second);

    let events: Vec<ServerEvent> = first.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let turns = common::replay_fixture().turns.len();
    assert_eq!(check_log_grammar(&events), Ok(turns));
    let types = event_types(&events);
    for expected in ["token_delta", "directive_parsed", "artifact_ready", "viewport_update", "turn_error", "turn_done"] {
        assert!(types.contains(&expected), "{expected} missing");
    }
}

