use bloclaw_core::bench::{
    behavior_corpus, check_baseline, check_bloclaw, generate_noisy_corpus, parse_strict_json, run_bench, BenchConfig,
    NoiseKind, ScriptBehavior, Suite, SuiteStatus,
};
use bloclaw_core::routing::ActionKind;
use bloclaw_core::sandbox::SandboxConfig;
use proptest::prelude::*;

#[test]
fn corpus_is_deterministic() {
    let a = generate_noisy_corpus(100, &[NoiseKind::ConversationalText], 7);
    let b = generate_noisy_corpus(100, &[NoiseKind::ConversationalText], 7);
    assert_eq!(a, b);
    assert_ne!(a, generate_noisy_corpus(100, &[NoiseKind::ConversationalText], 8));
}

#[test]
fn empty_corpus() {
    assert!(generate_noisy_corpus(0, &NoiseKind::ALL, 1).is_empty());
}

fn raw_quote_in(text: &str) -> bool {
    let bytes = text.as_bytes();
    (0..bytes.len()).any(|i| bytes[i] == b'"' && (i == 0 || bytes[i - 1] != b'\\'))
}

#[test]
fn unescaped_quotes_reach_both_payloads() {
    for sample in generate_noisy_corpus(200, &[NoiseKind::UnescapedQuotes], 3) {
        let tagged = &sample.tagged[sample.tagged_payload.clone()];
        let json = &sample.json[sample.json_payload.clone()];
        assert!(tagged.contains('"'), "#{}: {tagged}", sample.index);
        assert!(raw_quote_in(json), "#{}: {json}", sample.index);
    }
}

#[test]
fn noise_kinds_cycle() {
    let corpus = generate_noisy_corpus(40, &NoiseKind::ALL, 11);
    for sample in &corpus {
        assert_eq!(sample.noise, NoiseKind::ALL[sample.index % 4]);
    }
}

#[test]
fn every_action_is_templated() {
    let corpus = generate_noisy_corpus(1000, &NoiseKind::ALL, 5);
    for kind in ActionKind::BUILTINS {
        assert!(corpus.iter().any(|s| s.truth.action == kind), "{kind} never drawn");
    }
}

#[test]
fn clean_json_is_accepted_by_baseline() {
    let clean = r#"{"thought": "x", "action": "FOLD_PROTEIN", "target": "MKTAYIAKQRQISF"}"#;
    assert_eq!(parse_strict_json(clean).unwrap().action, ActionKind::FoldProtein);
    assert!(parse_strict_json(r#"{"thought": "x", "action": "fold_protein"}"#).is_err());
}

#[test]
fn routing_report_shape() {
    let mut config = BenchConfig::new(Suite::Routing, 9);
    config.n = 200;
    let report = futures::executor::block_on(run_bench(Suite::Routing, &config));
    assert_eq!(report.status, SuiteStatus::Completed);
    assert_eq!(report.rows.len(), 5);
    let per_kind: usize = report.rows[..4].iter().map(|r| r.n).sum();
    assert_eq!(per_kind, 200);
    assert_eq!(report.row("average").unwrap().n, 200);
    for row in &report.rows {
        for rate in [row.baseline_failure_rate, row.bloclaw_failure_rate].into_iter().flatten() {
            assert!((0.0..=1.0).contains(&rate));
        }
    }
    let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
    assert_eq!(json["suite"], "routing");
    assert!(report.to_table().contains("conversational_text"));
}

#[test]
fn routing_rates_are_reproducible() {
    let mut config = BenchConfig::new(Suite::Routing, 21);
    config.n = 120;
    let strip = |mut r: bloclaw_core::bench::BenchReport| {
        r.runtime_ms = 0;
        r
    };
    let a = strip(futures::executor::block_on(run_bench(Suite::Routing, &config)));
    let b = strip(futures::executor::block_on(run_bench(Suite::Routing, &config)));
    assert_eq!(a, b);
}

#[tokio::test]
async fn missing_worker_skips_instead_of_passing() {
    for suite in [Suite::Sandbox, Suite::Intake] {
        let mut config = BenchConfig::new(suite, 1);
        config.n = 1;
        config.sandbox = SandboxConfig { python: "/nonexistent/python3".into(), ..SandboxConfig::default() };
        config.intake = Default::default();
        let report = run_bench(suite, &config).await;
        assert_eq!(report.status, SuiteStatus::Skipped, "{suite}");
        assert!(report.rows.is_empty());
        assert!(report.to_table().contains("SKIPPED"));
    }
}

#[test]
fn behavior_corpus_covers_rows() {
    let corpus = behavior_corpus(20, 4);
    assert_eq!(corpus.len(), 60);
    for behavior in ScriptBehavior::ALL {
        assert_eq!(corpus.iter().filter(|s| s.behavior == behavior).count(), 20);
    }
    assert_eq!(corpus, behavior_corpus(20, 4));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn checks_never_panic(seed in any::<u64>(), n in 0usize..40) {
        for sample in generate_noisy_corpus(n, &NoiseKind::ALL, seed) {
            let _ = check_bloclaw(&sample);
            let _ = check_baseline(&sample);
            prop_assert!(sample.tagged_payload.end <= sample.tagged.len());
            prop_assert!(sample.json_payload.end <= sample.json.len());
        }
    }
}
