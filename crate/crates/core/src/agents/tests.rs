use super::*;
use crate::gateway::mock::MockProvider;
use crate::gateway::scripted::ScriptedProvider;
use crate::gateway::{Gateway, GatewayConfig, Provider, RetryPolicy};
use proptest::prelude::*;
use std::time::Duration;

fn gateway_with(provider: Box<dyn Provider>) -> Gateway {
    let mut gateway = Gateway::new(
        provider,
        GatewayConfig {
            retry: RetryPolicy {
                budget: 2,
                base_backoff: Duration::ZERO,
            },
            concurrency_limit: 2,
        },
    );
    install_defaults(&mut gateway);
    gateway
}

fn doc(id: &str, title: &str, description: &str) -> Document {
    Document {
        id: id.into(),
        title: title.into(),
        description_raw: description.into(),
        description_clean: None,
        category: Some("business".into()),
    }
}

fn bbc_seeds() -> SeedSet {
    SeedSet::new(
        ["Business", "Entertainment", "Politics", "Sport", "Tech"]
            .map(String::from)
            .to_vec(),
    )
    .unwrap()
}

#[test]
fn seed_set_rejects_empty_and_case_fold_duplicates() {
    assert!(matches!(
        SeedSet::new(vec!["  ".into()]),
        Err(AgentError::EmptySeeds)
    ));
    assert!(matches!(
        SeedSet::new(vec!["Sport".into(), "sport".into()]),
        Err(AgentError::DuplicateSeed(_))
    ));
}

#[test]
fn seed_matching_is_case_fold_and_trimmed() {
    let seeds = bbc_seeds();
    assert_eq!(seeds.matches(" business "), Some("Business"));
    assert_eq!(seeds.matches("TECH"), Some("Tech"));
    assert_eq!(seeds.matches("Finance"), None);
}

#[test]
fn identify_seeded_assigns_business_to_time_warner_article() {
    let gateway = gateway_with(Box::new(MockProvider::default()));
    let article = doc(
        "b001",
        "Ad sales boost Time Warner profit",
        "Quarterly profits at the US media giant jumped as its business units reported stronger business conditions, with regulators reviewing the accounts.",
    );
    let outcome =
        identify_topics(&gateway, &article, Mode::Seeded, Some(&bbc_seeds()), &[]).unwrap();
    let IdentifyOutcome::Assigned(assignment) = outcome else {
        panic!("expected assignment");
    };
    assert_eq!(assignment.doc_id, "b001");
    assert_eq!(assignment.topics.len(), 1);
    assert_eq!(assignment.topics[0].name, "Business");
    assert!(!assignment.topics[0].explanation.is_empty());
}

#[test]
fn identify_generative_produces_named_topic_with_explanation() {
    let gateway = gateway_with(Box::new(MockProvider::default()));
    let article = doc(
        "s001",
        "Claxton hunting first major medal",
        "The British hurdler is confident ahead of the European Indoors.",
    );
    let outcome = identify_topics(&gateway, &article, Mode::Generative, None, &[]).unwrap();
    let IdentifyOutcome::Assigned(assignment) = outcome else {
        panic!("expected assignment");
    };
    assert_eq!(assignment.topics[0].name, "Claxton");
    assert!(assignment.topics[0].explanation.contains("Claxton"));
}

#[test]
fn identify_requires_seeds_in_seeded_mode() {
    let gateway = gateway_with(Box::new(MockProvider::default()));
    let article = doc("x", "t", "d");
    assert!(matches!(
        identify_topics(&gateway, &article, Mode::Seeded, None, &[]),
        Err(AgentError::MissingSeeds)
    ));
}

#[test]
fn identify_surfaces_malformed_reply_errors() {
    let provider = ScriptedProvider::new().with_default_chat("no structure here");
    let gateway = gateway_with(Box::new(provider));
    let outcome = identify_topics(
        &gateway,
        &doc("a", "t", "d"),
        Mode::Seeded,
        Some(&bbc_seeds()),
        &[],
    )
    .unwrap();
    match outcome {
        IdentifyOutcome::Malformed(errors) => assert!(!errors.is_empty()),
        other => panic!("expected Malformed, got {other:?}"),
    }
}

#[test]
fn identify_rejects_doc_id_mismatch() {
    let provider = ScriptedProvider::new().with_default_chat(
        "{\"doc_id\": \"other\", \"topics\": [{\"name\": \"Business\", \"explanation\": \"x\"}]}",
    );
    let gateway = gateway_with(Box::new(provider));
    let outcome = identify_topics(
        &gateway,
        &doc("a", "t", "d"),
        Mode::Seeded,
        Some(&bbc_seeds()),
        &[],
    )
    .unwrap();
    match outcome {
        IdentifyOutcome::Malformed(errors) => {
            assert!(errors[0].contains("does not match"));
        }
        other => panic!("expected Malformed, got {other:?}"),
    }
}

fn assignment(doc_id: &str, topics: &[(&str, &str)]) -> TopicAssignment {
    TopicAssignment {
        doc_id: doc_id.into(),
        topics: topics
            .iter()
            .map(|(name, explanation)| Topic {
                name: name.to_string(),
                explanation: explanation.to_string(),
            })
            .collect(),
    }
}

#[test]
fn structural_review_accepts_seeded_label() {
    let verdict = structural_review_topics(
        &assignment("d", &[("Business", "about profits")]),
        Mode::Seeded,
        Some(&bbc_seeds()),
    );
    assert!(verdict.ok);
    assert!(verdict.errors.is_empty());
}

#[test]
fn structural_review_flags_label_outside_seed_set() {
    let verdict = structural_review_topics(
        &assignment("d", &[("Finance", "about profits")]),
        Mode::Seeded,
        Some(&bbc_seeds()),
    );
    assert!(!verdict.ok);
    assert_eq!(verdict.errors.len(), 1);
    assert_eq!(verdict.errors[0].message, "label not in seed set: Finance");
}

#[test]
fn structural_review_flags_duplicates_and_empty_explanations() {
    let verdict = structural_review_topics(
        &assignment("d", &[("Sport", ""), ("Sport", "x")]),
        Mode::Generative,
        None,
    );
    assert!(!verdict.ok);
    let messages = verdict.messages();
    assert!(messages.contains(&"empty explanation for topic: Sport".to_string()));
    assert!(messages.contains(&"duplicate topic name: Sport".to_string()));
    assert_eq!(messages.len(), 2);
}

#[test]
fn structural_review_flags_multi_label_in_seeded_mode() {
    let verdict = structural_review_topics(
        &assignment("d", &[("Business", "a"), ("Sport", "b")]),
        Mode::Seeded,
        Some(&bbc_seeds()),
    );
    assert!(verdict
        .messages()
        .iter()
        .any(|m| m.contains("exactly one label")));
}

#[test]
fn review_topics_llm_pass_can_only_add_errors() {
    let flagging = ScriptedProvider::new().with_default_chat(
        "{\"ok\": false, \"errors\": [{\"doc_id\": \"d\", \"message\": \"explanation is circular\"}]}",
    );
    let gateway = gateway_with(Box::new(flagging));
    let clean = assignment("d", &[("Business", "about profits")]);
    let verdict = review_topics(Some(&gateway), &clean, Mode::Seeded, Some(&bbc_seeds())).unwrap();
    assert!(!verdict.ok);
    assert_eq!(verdict.errors.len(), 1);
    assert!(verdict.errors[0].message.starts_with("relevance:"));

    // A structurally broken assignment never reaches the LLM.
    let broken = assignment("d", &[("Finance", "x")]);
    let verdict = review_topics(Some(&gateway), &broken, Mode::Seeded, Some(&bbc_seeds())).unwrap();
    assert_eq!(verdict.errors.len(), 1);
    assert_eq!(verdict.errors[0].message, "label not in seed set: Finance");
}

#[test]
fn malformed_relevance_reply_adds_nothing() {
    let gibberish = ScriptedProvider::new().with_default_chat("not a review");
    let gateway = gateway_with(Box::new(gibberish));
    let clean = assignment("d", &[("Business", "about profits")]);
    let verdict = review_topics(Some(&gateway), &clean, Mode::Seeded, Some(&bbc_seeds())).unwrap();
    assert!(verdict.ok);
}

fn group(name: &str, description: &str, members: &[&str]) -> TopicGroup {
    TopicGroup {
        name: name.into(),
        description: description.into(),
        members: members.iter().map(|m| m.to_string()).collect(),
    }
}

#[test]
fn review_groups_accepts_full_coverage() {
    let topics: Vec<String> = ["A", "B", "C", "D", "E", "F"].map(String::from).to_vec();
    let groups = vec![
        group("G1", "first", &["A", "B", "C"]),
        group("G2", "second", &["D", "E", "F"]),
    ];
    assert!(review_groups(&groups, &topics).ok);
}

#[test]
fn review_groups_flags_missing_and_unknown() {
    let topics: Vec<String> = ["Elections", "Taxation"].map(String::from).to_vec();
    let groups = vec![group("G", "d", &["Taxation", "Ghost"])];
    let messages = review_groups(&groups, &topics).messages();
    assert!(messages.contains(&"missing topic: Elections".to_string()));
    assert!(messages.contains(&"unknown member: Ghost".to_string()));
}

#[test]
fn review_groups_flags_empty_fields_and_duplicate_members() {
    let topics: Vec<String> = vec!["A".into()];
    let groups = vec![group("", "", &["A", "A"])];
    let messages = review_groups(&groups, &topics).messages();
    assert!(messages.iter().any(|m| m == "empty group name"));
    assert!(messages
        .iter()
        .any(|m| m.starts_with("empty group description")));
    assert!(messages
        .iter()
        .any(|m| m.starts_with("duplicate member: A")));
}

#[test]
fn grouping_covers_single_topic() {
    let gateway = gateway_with(Box::new(MockProvider::default()));
    let topics = vec![Topic {
        name: "Taxation".into(),
        explanation: "fiscal policy".into(),
    }];
    let outcome = group_topics(&gateway, &topics, None, &[]).unwrap();
    let GroupOutcome::Grouped(groups) = outcome else {
        panic!("expected groups");
    };
    assert_eq!(groups.len(), 1);
    assert_eq!(groups[0].members, vec!["Taxation"]);
    assert!(!groups[0].description.is_empty());
    assert!(review_groups(&groups, &["Taxation".to_string()]).ok);
}

#[test]
fn prior_hierarchy_group_names_seed_the_grouping_prompt() {
    let provider = ScriptedProvider::new().with_chat_rule(|call| {
        let prior = call.request.variables.get("prior_hierarchy").unwrap();
        assert!(prior.contains("All Topics") && prior.contains("Old Group"));
        Some(Ok(
            r#"{"groups": [{"name": "G", "description": "d", "members": ["Taxation"]}]}"#.into(),
        ))
    });
    let gateway = gateway_with(Box::new(provider));
    let prior = crate::hierarchy::TopicHierarchy {
        roots: vec![crate::hierarchy::HierarchyNode {
            name: "All Topics".into(),
            description: "root".into(),
            children: vec![crate::hierarchy::HierarchyNode::new("Old Group", "prior")],
            leaf_topics: Vec::new(),
        }],
        max_depth: 6,
    };
    let topics = vec![Topic {
        name: "Taxation".into(),
        explanation: "fiscal".into(),
    }];
    let outcome = group_topics(&gateway, &topics, Some(&prior), &[]).unwrap();
    assert!(matches!(outcome, GroupOutcome::Grouped(_)));
}

#[test]
fn grouping_requires_topics() {
    let gateway = gateway_with(Box::new(MockProvider::default()));
    assert!(matches!(
        group_topics(&gateway, &[], None, &[]),
        Err(AgentError::NoTopics)
    ));
}

#[test]
fn build_hierarchy_minimal_case_puts_groups_at_level_one() {
    let reply = r#"{"nodes": [
        {"name": "G1", "description": "a", "parent": null, "leaves": ["t1"]},
        {"name": "G2", "description": "b", "parent": null, "leaves": ["t2"]},
        {"name": "G3", "description": "c", "parent": null, "leaves": ["t3"]},
        {"name": "G4", "description": "d", "parent": null, "leaves": ["t4"]}
    ]}"#;
    let gateway = gateway_with(Box::new(ScriptedProvider::new().with_default_chat(reply)));
    let groups = vec![
        group("G1", "a", &["t1"]),
        group("G2", "b", &["t2"]),
        group("G3", "c", &["t3"]),
        group("G4", "d", &["t4"]),
    ];
    let (hierarchy, attempts) = build_hierarchy(&gateway, &groups, None, 6, 3).unwrap();
    assert_eq!(attempts, 1);
    assert_eq!(hierarchy.roots.len(), 4);
    assert!(hierarchy.roots.iter().all(|r| r.children.is_empty()));
    let mut leaves = crate::hierarchy::leaf_topics(&hierarchy);
    leaves.sort();
    assert_eq!(leaves, vec!["t1", "t2", "t3", "t4"]);
}

#[test]
fn build_hierarchy_repairs_after_feedback() {
    // First attempt drops a required leaf; the retry, which carries the
    // violation in prior_errors, emits the full tree.
    let provider = ScriptedProvider::new().with_chat_rule(|call| {
        let prior = call.request.variables.get("prior_errors").unwrap();
        if prior == "[]" {
            Some(Ok(r#"{"nodes": [
                {"name": "Root", "description": "", "parent": null, "leaves": ["t1"]}
            ]}"#
            .to_string()))
        } else {
            assert!(prior.contains("missing leaf topic: t2"));
            Some(Ok(r#"{"nodes": [
                {"name": "Root", "description": "", "parent": null, "leaves": ["t1", "t2"]}
            ]}"#
            .to_string()))
        }
    });
    let gateway = gateway_with(Box::new(provider));
    let groups = vec![group("Root", "d", &["t1", "t2"])];
    let (hierarchy, attempts) = build_hierarchy(&gateway, &groups, None, 6, 3).unwrap();
    assert_eq!(attempts, 2);
    assert_eq!(crate::hierarchy::leaf_topics(&hierarchy).len(), 2);
}

#[test]
fn build_hierarchy_gives_up_within_budget() {
    let provider = ScriptedProvider::new().with_default_chat(
        r#"{"nodes": [{"name": "Root", "description": "", "parent": "Root", "leaves": []}]}"#,
    );
    let gateway = gateway_with(Box::new(provider));
    let groups = vec![group("G", "d", &["t1"])];
    match build_hierarchy(&gateway, &groups, None, 6, 2) {
        Err(AgentError::StructuralViolation {
            attempts,
            violations,
        }) => {
            assert_eq!(attempts, 3);
            assert!(violations.iter().any(|v| v.contains("cycle")));
        }
        other => panic!("expected StructuralViolation, got {other:?}"),
    }
}

#[test]
fn mock_full_hierarchy_is_valid_over_groups() {
    let gateway = gateway_with(Box::new(MockProvider::default()));
    let groups = vec![
        group("Alpha", "first letters", &["apple", "ant"]),
        group("Beta", "second letters", &["bee"]),
    ];
    let (hierarchy, _) = build_hierarchy(&gateway, &groups, None, 6, 1).unwrap();
    assert!(crate::hierarchy::validate(&hierarchy).is_empty());
    let mut leaves = crate::hierarchy::leaf_topics(&hierarchy);
    leaves.sort();
    assert_eq!(leaves, vec!["ant", "apple", "bee"]);
}

proptest! {
    // Seeded closure: passing review in seeded mode implies every topic
    // name case-folds into the seed set.
    #[test]
    fn seeded_closure_property(
        seed_labels in proptest::collection::btree_set("[a-e]{1,3}", 1..5),
        topic_names in proptest::collection::vec("[a-f]{1,3}", 1..4),
    ) {
        let seeds = SeedSet::new(seed_labels.into_iter().collect()).unwrap();
        let topics: Vec<(String, String)> = topic_names
            .iter()
            .map(|n| (n.clone(), "why".to_string()))
            .collect();
        let assignment = TopicAssignment {
            doc_id: "d".into(),
            topics: topics
                .iter()
                .map(|(n, e)| Topic { name: n.clone(), explanation: e.clone() })
                .collect(),
        };
        let verdict = structural_review_topics(&assignment, Mode::Seeded, Some(&seeds));
        if verdict.ok {
            for topic in &assignment.topics {
                prop_assert!(seeds.matches(&topic.name).is_some());
            }
        }
    }

    // Review soundness: the full review is never ok when the pure
    // structural validator finds violations.
    #[test]
    fn review_never_suppresses_structural_errors(
        names in proptest::collection::vec("[a-c]{1,2}", 1..4),
        empty_explanation in any::<bool>(),
    ) {
        let assignment = TopicAssignment {
            doc_id: "d".into(),
            topics: names
                .iter()
                .map(|n| Topic {
                    name: n.clone(),
                    explanation: if empty_explanation { String::new() } else { "e".into() },
                })
                .collect(),
        };
        let structural = structural_review_topics(&assignment, Mode::Generative, None);
        let approving = ScriptedProvider::new().with_default_chat("{\"ok\": true, \"errors\": []}");
        let gateway = gateway_with(Box::new(approving));
        let full = review_topics(Some(&gateway), &assignment, Mode::Generative, None).unwrap();
        if !structural.ok {
            prop_assert!(!full.ok);
        }
        prop_assert_eq!(full.ok, full.errors.is_empty());
    }
}
