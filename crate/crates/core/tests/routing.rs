mod common;

use bloclaw_core::routing::{
    extract_maximal_token, parse_directive, parse_directive_bytes, ActionKind, Grammar, ParseTrack, SlotSpec,
    TokenClass,
};
use proptest::prelude::*;

fn class_strategy() -> impl Strategy<Value = TokenClass> {
    prop::sample::select(TokenClass::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn parse_is_total(bytes in prop::collection::vec(any::<u8>(), 0..600)) {
        match parse_directive_bytes(&bytes) {
            Ok(env) => {
                for (slot, token) in &env.params {
                    prop_assert_eq!(&env.raw_text[token.span.clone()], token.value.as_str(), "slot {}", slot);
                }
            }
            Err(failure) => prop_assert!(!failure.diagnostic.is_empty()),
        }
    }

    #[test]
    fn fuzzed_directives_never_panic(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let input = common::fuzz_input(&mut rng);
        let first = parse_directive_bytes(&input);
        prop_assert_eq!(first, parse_directive_bytes(&input));
    }

    #[test]
    fn extraction_matches_oracle(seed in any::<u64>(), class in class_strategy()) {
        let mut rng = common::rng(seed);
        let text = common::random_text(&mut rng, class, 400);
        let got = extract_maximal_token(&text, class).map(|t| t.span);
        prop_assert_eq!(got, common::oracle(&text, class), "text {:?}", text);
    }

    #[test]
    fn extracted_tokens_are_valid_and_faithful(text in ".{0,300}", class in class_strategy()) {
        if let Some(token) = extract_maximal_token(&text, class) {
            prop_assert_eq!(&text[token.span.clone()], token.value.as_str());
            prop_assert!(class.is_valid(&token.value), "{:?}", token.value);
        }
    }

    #[test]
    fn embedded_smiles_survives_prose(prefix in "[ a-z,.!?]{0,40}", suffix in "([ ,!?][ a-z.,!?]{0,40})?") {
        let smiles = "CC(C)Cc1ccc(cc1)C(C)C(=O)O";
        let raw = format!("{prefix} <action>2D_MOLECULE</action> here: {smiles}{suffix}");
        let env = parse_directive(&raw).unwrap();
        prop_assert_eq!(&env.action, &ActionKind::TwoDMolecule);
        prop_assert_eq!(env.param("target"), Some(smiles));
    }
}

#[test]
fn well_formed_tags_take_the_tag_track() {
    let raw = "<thought>show it</thought><action>FETCH_STRUCTURE</action><target>4hhb</target>";
    let env = parse_directive(raw).unwrap();
    assert_eq!(env.parse_track, ParseTrack::TagsWellFormed);
    assert_eq!(env.thought, "show it");
    assert_eq!(env.param("target"), Some("4hhb"));
}

#[test]
fn missing_end_tag_falls_back() {
    let raw = "<thought>fold this<action>FOLD_PROTEIN<target>MKTAYIAKQRQISFVKSHFSRQLEERLGLIEVQ";
    let env = parse_directive(raw).unwrap();
    assert_eq!(env.parse_track, ParseTrack::RegexFallback);
    assert_eq!(env.param("target"), Some("MKTAYIAKQRQISFVKSHFSRQLEERLGLIEVQ"));
}

#[test]
fn no_keyword_is_a_classified_failure() {
    let failure = parse_directive("<action>DANCE</action>").unwrap_err();
    assert_eq!(failure.category.as_str(), "no_action_keyword");
}

#[test]
fn skill_keywords_route_with_their_slots() {
    let grammar = Grammar::with_skills([("GC_CONTENT".to_string(), vec![SlotSpec::new("target", TokenClass::FreeText)])]);
    let env = grammar.parse("<action>GC_CONTENT</action><target>ATGCGC</target>").unwrap();
    assert_eq!(env.action, ActionKind::Skill("GC_CONTENT".into()));
    assert_eq!(env.param("target"), Some("ATGCGC"));
}

#[test]
fn quoted_payload_is_unwrapped() {
    let env = parse_directive("<action>2D_MOLECULE</action><target>\"CCO\"</target>").unwrap();
    assert_eq!(env.param("target"), Some("CCO"));
}
