//! Seven-layer validation pipeline.
//!
//! One pipeline, two subject adapters: generated artifacts (test plans
//! and cases) and assembled context bundles. Layers always run in the
//! fixed order and the report always carries exactly seven entries.
//! Performance is advisory unless the budget marks it mandatory; the
//! other six layers gate `overall`.
//!
//! Node references embedded in artifact text use an `@node-id` convention
//! so the business-logic layer can resolve them against the graph.

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::knowledge_graph::{KnowledgeGraph, NodeType};
use crate::orchestration::{TestCase, TestPlan};
use crate::retrieval::{ContextBundle, ItemOrigin};
use crate::traceability::{LinkType, TraceStore};

pub const LAYER_COUNT: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValidationLayer {
    Syntax,
    Semantic,
    BusinessLogic,
    Traceability,
    Compliance,
    Performance,
    Integration,
}

impl ValidationLayer {
    pub const ALL: [ValidationLayer; LAYER_COUNT] = [
        ValidationLayer::Syntax,
        ValidationLayer::Semantic,
        ValidationLayer::BusinessLogic,
        ValidationLayer::Traceability,
        ValidationLayer::Compliance,
        ValidationLayer::Performance,
        ValidationLayer::Integration,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerResult {
    pub layer: ValidationLayer,
    pub passed: bool,
    pub findings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub subject_id: String,
    pub entries: Vec<LayerResult>,
    pub overall: bool,
}

impl ValidationReport {
    pub fn layer(&self, layer: ValidationLayer) -> &LayerResult {
        self.entries.iter().find(|e| e.layer == layer).expect("all layers present")
    }
}

/// Performance-layer inputs; advisory unless `performance_mandatory`.
#[derive(Debug, Clone)]
pub struct ValidationBudget {
    pub elapsed_ms: u64,
    pub perf_budget_ms: u64,
    pub max_artifact_bytes: usize,
    pub performance_mandatory: bool,
}

impl Default for ValidationBudget {
    fn default() -> Self {
        ValidationBudget {
            elapsed_ms: 0,
            perf_budget_ms: 5_000,
            max_artifact_bytes: 262_144,
            performance_mandatory: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ValidationError {
    #[error("artifact is neither a test plan nor a test case: {0}")]
    UnparsableArtifact(String),
}

#[derive(Debug, Clone)]
pub enum Artifact {
    Plan(TestPlan),
    Case(TestCase),
}

impl Artifact {
    pub fn parse(json: &str) -> Result<Artifact, ValidationError> {
        if let Ok(case) = serde_json::from_str::<TestCase>(json) {
            return Ok(Artifact::Case(case));
        }
        if let Ok(plan) = serde_json::from_str::<TestPlan>(json) {
            return Ok(Artifact::Plan(plan));
        }
        let detail = serde_json::from_str::<serde_json::Value>(json)
            .map(|_| "valid JSON but unrecognized shape".to_string())
            .unwrap_or_else(|e| e.to_string());
        Err(ValidationError::UnparsableArtifact(detail))
    }

    pub fn id(&self) -> &str {
        match self {
            Artifact::Plan(p) => &p.id,
            Artifact::Case(c) => &c.id,
        }
    }
}

struct LayerOutcome {
    passed: bool,
    findings: Vec<String>,
}

impl LayerOutcome {
    fn pass() -> Self {
        LayerOutcome { passed: true, findings: Vec::new() }
    }
    fn not_applicable() -> Self {
        LayerOutcome { passed: true, findings: vec!["not applicable".to_string()] }
    }
    fn from_findings(findings: Vec<String>) -> Self {
        LayerOutcome { passed: findings.is_empty(), findings }
    }
}

fn finish(subject_id: &str, outcomes: [LayerOutcome; LAYER_COUNT], budget: &ValidationBudget) -> ValidationReport {
    let entries: Vec<LayerResult> = ValidationLayer::ALL
        .iter()
        .zip(outcomes)
        .map(|(layer, o)| LayerResult {
            layer: *layer,
            passed: o.passed,
            findings: o.findings,
        })
        .collect();
    let overall = entries.iter().all(|e| {
        e.passed || (e.layer == ValidationLayer::Performance && !budget.performance_mandatory)
    });
    ValidationReport {
        subject_id: subject_id.to_string(),
        entries,
        overall,
    }
}

/// `@node-id` tokens in free text; trailing punctuation is stripped.
fn node_refs(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|w| w.strip_prefix('@'))
        .map(|w| w.trim_end_matches(['.', ',', ';', ':', ')']).to_string())
        .filter(|w| !w.is_empty())
        .collect()
}

fn case_texts(case: &TestCase) -> Vec<&str> {
    let mut texts = vec![case.title.as_str()];
    texts.extend(case.preconditions.iter().map(String::as_str));
    for s in &case.steps {
        texts.push(&s.action);
        texts.push(&s.expected);
    }
    texts
}

fn syntax_case(case: &TestCase) -> LayerOutcome {
    let mut findings = Vec::new();
    if case.id.is_empty() {
        findings.push("field `id` is empty".to_string());
    }
    if case.title.is_empty() {
        findings.push("field `title` is empty".to_string());
    }
    if case.steps.is_empty() {
        findings.push("field `steps` is empty".to_string());
    }
    for (i, s) in case.steps.iter().enumerate() {
        if s.action.is_empty() || s.expected.is_empty() {
            findings.push(format!("field `steps[{i}]` has an empty action or expected result"));
        }
    }
    if !(1..=4).contains(&case.priority) {
        findings.push(format!("field `priority` {} outside 1..=4", case.priority));
    }
    LayerOutcome::from_findings(findings)
}

fn semantic_case(case: &TestCase) -> LayerOutcome {
    let mut findings = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (i, s) in case.steps.iter().enumerate() {
        if !seen.insert((s.action.as_str(), s.expected.as_str())) {
            findings.push(format!("duplicate step at index {i}: {}", s.action));
        }
        // `precondition N` references must resolve to a listed precondition.
        for w in s.action.split_whitespace().collect::<Vec<_>>().windows(2) {
            if w[0].eq_ignore_ascii_case("precondition") {
                if let Ok(n) = w[1].trim_end_matches([',', '.', ';']).parse::<usize>() {
                    if n == 0 || n > case.preconditions.len() {
                        findings.push(format!(
                            "step {i} references precondition {n} but only {} are defined",
                            case.preconditions.len()
                        ));
                    }
                }
            }
        }
    }
    LayerOutcome::from_findings(findings)
}

fn business_logic_case(case: &TestCase, graph: &KnowledgeGraph) -> LayerOutcome {
    let mut findings = Vec::new();
    for text in case_texts(case) {
        for id in node_refs(text) {
            match graph.node(&id) {
                None => findings.push(format!("referenced node `{id}` does not exist")),
                Some(n)
                    if !matches!(
                        n.node_type,
                        NodeType::BusinessProcess | NodeType::Component
                    ) =>
                {
                    findings.push(format!(
                        "referenced node `{id}` is not a business process or component"
                    ));
                }
                Some(_) => {}
            }
        }
    }
    LayerOutcome::from_findings(findings)
}

fn traceability_case(case: &TestCase, graph: &KnowledgeGraph, store: &TraceStore) -> LayerOutcome {
    let mut findings = Vec::new();
    if case.requirement_refs.is_empty() {
        findings.push("no requirement references".to_string());
    }
    for req in &case.requirement_refs {
        match graph.node(req) {
            None => findings.push(format!("requirement `{req}` does not exist")),
            Some(n) if n.node_type != NodeType::Requirement => {
                findings.push(format!("`{req}` is not a requirement node"));
            }
            Some(_) => {
                let linked = store
                    .forward(req)
                    .iter()
                    .any(|l| l.link_type == LinkType::ReqToCase && l.dst == case.id);
                if !linked {
                    findings.push(format!("no trace link from `{req}` to `{}`", case.id));
                }
            }
        }
    }
    LayerOutcome::from_findings(findings)
}

fn compliance_case(case: &TestCase, graph: &KnowledgeGraph) -> LayerOutcome {
    let mut findings = Vec::new();
    for req in &case.requirement_refs {
        if graph.node(req).is_none() {
            continue; // traceability already reports it
        }
        let mut regulations: Vec<String> = Vec::new();
        for e in graph.out_edges(req) {
            if graph.node(&e.dst).is_some_and(|n| n.node_type == NodeType::Regulation) {
                regulations.push(e.dst.clone());
            }
        }
        for e in graph.in_edges(req) {
            if graph.node(&e.src).is_some_and(|n| n.node_type == NodeType::Regulation) {
                regulations.push(e.src.clone());
            }
        }
        for reg in regulations {
            if !case.compliance_tags.contains(&reg) {
                findings.push(format!(
                    "requirement `{req}` is regulated by `{reg}` but the case carries no `{reg}` tag"
                ));
            }
        }
    }
    LayerOutcome::from_findings(findings)
}

fn performance_layer(serialized_len: usize, budget: &ValidationBudget) -> LayerOutcome {
    let mut findings = Vec::new();
    if budget.elapsed_ms > budget.perf_budget_ms {
        findings.push(format!(
            "generation took {}ms, budget is {}ms",
            budget.elapsed_ms, budget.perf_budget_ms
        ));
    }
    if serialized_len > budget.max_artifact_bytes {
        findings.push(format!(
            "artifact is {serialized_len} bytes, limit is {}",
            budget.max_artifact_bytes
        ));
    }
    LayerOutcome::from_findings(findings)
}

fn integration_case(case: &TestCase, graph: &KnowledgeGraph) -> LayerOutcome {
    let mut findings = Vec::new();
    for id in &case.integration_refs {
        match graph.node(id) {
            None => findings.push(format!("interface `{id}` does not exist")),
            Some(n) if n.node_type != NodeType::Interface => {
                findings.push(format!("`{id}` is not an interface node"));
            }
            Some(_) => {}
        }
    }
    LayerOutcome::from_findings(findings)
}

fn validate_case(
    case: &TestCase,
    graph: &KnowledgeGraph,
    store: &TraceStore,
    budget: &ValidationBudget,
) -> ValidationReport {
    let serialized = serde_json::to_string(case).map(|s| s.len()).unwrap_or(0);
    finish(
        &case.id,
        [
            syntax_case(case),
            semantic_case(case),
            business_logic_case(case, graph),
            traceability_case(case, graph, store),
            compliance_case(case, graph),
            performance_layer(serialized, budget),
            integration_case(case, graph),
        ],
        budget,
    )
}

fn validate_plan(
    plan: &TestPlan,
    graph: &KnowledgeGraph,
    store: &TraceStore,
    budget: &ValidationBudget,
) -> ValidationReport {
    let mut syntax = Vec::new();
    if plan.id.is_empty() {
        syntax.push("field `id` is empty".to_string());
    }
    if plan.objectives.is_empty() {
        syntax.push("field `objectives` is empty".to_string());
    }

    let mut semantic = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for o in &plan.objectives {
        if !seen.insert((o.requirement_id.as_str(), o.text.as_str())) {
            semantic.push(format!("duplicate objective for `{}`", o.requirement_id));
        }
    }

    let mut traceability = Vec::new();
    for o in &plan.objectives {
        if graph.node(&o.requirement_id).is_none() {
            traceability.push(format!("requirement `{}` does not exist", o.requirement_id));
        }
    }
    for link_id in &plan.trace_links {
        if store.get(link_id).is_none() {
            traceability.push(format!("trace link `{link_id}` is not in the store"));
        }
    }
    for case_id in &plan.cases {
        if graph.node(case_id).is_none() {
            traceability.push(format!("case `{case_id}` is not in the graph"));
        }
    }

    let serialized = serde_json::to_string(plan).map(|s| s.len()).unwrap_or(0);
    finish(
        &plan.id,
        [
            LayerOutcome::from_findings(syntax),
            LayerOutcome::from_findings(semantic),
            LayerOutcome::not_applicable(),
            LayerOutcome::from_findings(traceability),
            LayerOutcome::not_applicable(),
            performance_layer(serialized, budget),
            LayerOutcome::not_applicable(),
        ],
        budget,
    )
}

pub fn validate_artifact(
    artifact: &Artifact,
    graph: &KnowledgeGraph,
    store: &TraceStore,
    budget: &ValidationBudget,
) -> ValidationReport {
    match artifact {
        Artifact::Case(case) => validate_case(case, graph, store, budget),
        Artifact::Plan(plan) => validate_plan(plan, graph, store, budget),
    }
}

/// Bundle adapter: shape, conflict state, and provenance integrity map to
/// the first, second, and fourth layers; the rest pass as inapplicable.
pub fn validate_context(bundle: &ContextBundle, corpus: &Corpus) -> ValidationReport {
    let mut syntax = Vec::new();
    if bundle.query.trim().is_empty() {
        syntax.push("field `query` is empty".to_string());
    }
    for (i, item) in bundle.items.iter().enumerate() {
        if item.chunk_id.is_empty() {
            syntax.push(format!("item {i} has an empty chunk id"));
        }
        if !item.score.is_finite() {
            syntax.push(format!("item {i} has a non-finite score"));
        }
    }

    // Escalations are intentional: reported, never failing.
    let mut semantic = Vec::new();
    for esc in &bundle.escalations {
        semantic.push(format!("escalated conflict on `{}` retained for review", esc.key));
    }
    let semantic = LayerOutcome { passed: true, findings: semantic };

    let mut traceability = Vec::new();
    for item in &bundle.items {
        if corpus.get(&item.chunk_id).is_none() {
            traceability.push(format!("chunk `{}` is not in the corpus", item.chunk_id));
        }
        if let ItemOrigin::GraphExpansion { seed_chunk_id, path_edge_types, hops } = &item.origin {
            if corpus.get(seed_chunk_id).is_none() {
                traceability.push(format!("seed chunk `{seed_chunk_id}` is not in the corpus"));
            }
            if *hops == 0 || path_edge_types.len() != *hops {
                traceability.push(format!(
                    "chunk `{}` has an inconsistent expansion path",
                    item.chunk_id
                ));
            }
        }
    }

    let budget = ValidationBudget::default();
    finish(
        &format!("context:{}", bundle.query),
        [
            LayerOutcome::from_findings(syntax),
            semantic,
            LayerOutcome::not_applicable(),
            LayerOutcome::from_findings(traceability),
            LayerOutcome::not_applicable(),
            LayerOutcome::pass(),
            LayerOutcome::not_applicable(),
        ],
        &budget,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge_graph::{node, EdgeType};
    use crate::orchestration::TestStep;
    use crate::retrieval::{ContextItem, Provenance, StageMode};

    fn graph_fixture() -> (KnowledgeGraph, TraceStore) {
        let mut g = KnowledgeGraph::new();
        g.add_node(node("R-1", NodeType::Requirement, "order entry")).unwrap();
        g.add_node(node("BP-1", NodeType::BusinessProcess, "approval")).unwrap();
        g.add_node(node("IF-1", NodeType::Interface, "vendor api")).unwrap();
        g.add_node(node("REG-1", NodeType::Regulation, "sox")).unwrap();
        g.add_node(node("TC-1", NodeType::TestCase, "case one")).unwrap();
        g.add_edge("R-1", "BP-1", EdgeType::Requires).unwrap();
        g.add_edge("R-1", "REG-1", EdgeType::Requires).unwrap();
        let mut store = TraceStore::new();
        store.link(&g, "R-1", "TC-1", LinkType::ReqToCase, 10).unwrap();
        (g, store)
    }

    fn clean_case() -> TestCase {
        TestCase {
            id: "TC-1".into(),
            title: "order entry happy path".into(),
            preconditions: vec!["vendor exists".into()],
            steps: vec![
                TestStep {
                    action: "create order via @BP-1 using precondition 1".into(),
                    expected: "order saved".into(),
                },
                TestStep { action: "release order".into(), expected: "status released".into() },
            ],
            priority: 2,
            requirement_refs: vec!["R-1".into()],
            integration_refs: vec!["IF-1".into()],
            compliance_tags: vec!["REG-1".into()],
        }
    }

    fn report_for(case: &TestCase) -> ValidationReport {
        let (g, store) = graph_fixture();
        validate_artifact(&Artifact::Case(case.clone()), &g, &store, &ValidationBudget::default())
    }

    fn assert_only_fails(report: &ValidationReport, failing: ValidationLayer) {
        for entry in &report.entries {
            if entry.layer == failing {
                assert!(!entry.passed, "{:?} should fail", entry.layer);
                assert!(!entry.findings.is_empty());
            } else {
                assert!(entry.passed, "{:?} should pass: {:?}", entry.layer, entry.findings);
            }
        }
        assert!(!report.overall || failing == ValidationLayer::Performance);
    }

    #[test]
    fn clean_case_passes_all_layers() {
        let report = report_for(&clean_case());
        assert_eq!(report.entries.len(), LAYER_COUNT);
        assert!(report.entries.iter().all(|e| e.passed), "{report:?}");
        assert!(report.overall);
        // Fixed layer order.
        let order: Vec<ValidationLayer> = report.entries.iter().map(|e| e.layer).collect();
        assert_eq!(order, ValidationLayer::ALL.to_vec());
    }

    #[test]
    fn empty_steps_fail_syntax_naming_the_field() {
        let mut case = clean_case();
        case.steps.clear();
        let report = report_for(&case);
        let syntax = report.layer(ValidationLayer::Syntax);
        assert!(!syntax.passed);
        assert!(syntax.findings.iter().any(|f| f.contains("`steps`")), "{syntax:?}");
        assert!(!report.overall);
    }

    #[test]
    fn duplicate_step_fails_only_semantic() {
        let mut case = clean_case();
        case.steps.push(case.steps[1].clone());
        assert_only_fails(&report_for(&case), ValidationLayer::Semantic);
    }

    #[test]
    fn dangling_precondition_reference_fails_semantic() {
        let mut case = clean_case();
        case.preconditions.clear();
        assert_only_fails(&report_for(&case), ValidationLayer::Semantic);
    }

    #[test]
    fn unknown_business_node_fails_only_business_logic() {
        let mut case = clean_case();
        case.steps[1].action = "post against @BP-missing".into();
        assert_only_fails(&report_for(&case), ValidationLayer::BusinessLogic);
    }

    #[test]
    fn missing_trace_link_fails_only_traceability() {
        let mut case = clean_case();
        case.id = "TC-unlinked".into();
        assert_only_fails(&report_for(&case), ValidationLayer::Traceability);
    }

    #[test]
    fn missing_compliance_tag_fails_only_compliance() {
        let mut case = clean_case();
        case.compliance_tags.clear();
        assert_only_fails(&report_for(&case), ValidationLayer::Compliance);
    }

    #[test]
    fn oversized_artifact_fails_performance_but_stays_advisory() {
        let mut case = clean_case();
        case.title = "x".repeat(4096);
        let (g, store) = graph_fixture();
        let budget = ValidationBudget { max_artifact_bytes: 1024, ..Default::default() };
        let report = validate_artifact(&Artifact::Case(case.clone()), &g, &store, &budget);
        assert_only_fails(&report, ValidationLayer::Performance);
        assert!(report.overall, "advisory by default");
        let strict = ValidationBudget {
            max_artifact_bytes: 1024,
            performance_mandatory: true,
            ..Default::default()
        };
        let report = validate_artifact(&Artifact::Case(case), &g, &store, &strict);
        assert!(!report.overall);
    }

    #[test]
    fn nonexistent_interface_fails_only_integration() {
        let mut case = clean_case();
        case.integration_refs = vec!["IF-missing".into()];
        assert_only_fails(&report_for(&case), ValidationLayer::Integration);
    }

    #[test]
    fn validation_is_pure() {
        let case = clean_case();
        assert_eq!(report_for(&case), report_for(&case));
    }

    #[test]
    fn unparsable_artifact_is_rejected() {
        assert!(matches!(
            Artifact::parse("{\"whatever\": 3}").unwrap_err(),
            ValidationError::UnparsableArtifact(_)
        ));
        assert!(Artifact::parse("not json").is_err());
        let json = serde_json::to_string(&clean_case()).unwrap();
        assert!(matches!(Artifact::parse(&json).unwrap(), Artifact::Case(_)));
    }

    fn clean_bundle() -> (ContextBundle, Corpus) {
        use crate::corpus::{ingest, RawRecord};
        let corpus = ingest(&[RawRecord {
            doc_id: "d1".into(),
            kind: "SapDoc".into(),
            title: "d1".into(),
            text: "alpha beta gamma".into(),
            source: "unit".into(),
            timestamp: 5,
            credibility: None,
        }])
        .unwrap();
        let bundle = ContextBundle {
            query: "alpha".into(),
            mode: StageMode::HybridRag,
            items: vec![ContextItem {
                chunk_id: "d1#000".into(),
                score: 0.4,
                origin: ItemOrigin::VectorHit,
                provenance: Provenance { source: "unit".into(), timestamp: 5, credibility: 0.85 },
            }],
            conflicts_resolved: Vec::new(),
            escalations: Vec::new(),
            token_budget: 2000,
        };
        (bundle, corpus)
    }

    #[test]
    fn clean_bundle_passes_with_not_applicable_findings() {
        let (bundle, corpus) = clean_bundle();
        let report = validate_context(&bundle, &corpus);
        assert!(report.overall);
        assert_eq!(report.entries.len(), LAYER_COUNT);
        assert_eq!(
            report.layer(ValidationLayer::BusinessLogic).findings,
            vec!["not applicable"]
        );
    }

    #[test]
    fn dangling_chunk_fails_bundle_traceability() {
        let (mut bundle, corpus) = clean_bundle();
        bundle.items[0].chunk_id = "ghost#000".into();
        let report = validate_context(&bundle, &corpus);
        let trace = report.layer(ValidationLayer::Traceability);
        assert!(!trace.passed);
        assert!(!report.overall);
    }

    #[test]
    fn escalation_reported_as_passing_semantic_finding() {
        use crate::retrieval::EscalationRecord;
        let (mut bundle, corpus) = clean_bundle();
        bundle.escalations.push(EscalationRecord {
            key: "vendor.limit".into(),
            candidates: Vec::new(),
            reason: "no strategy applied".into(),
        });
        let report = validate_context(&bundle, &corpus);
        let semantic = report.layer(ValidationLayer::Semantic);
        assert!(semantic.passed);
        assert_eq!(semantic.findings.len(), 1);
        assert!(report.overall);
    }
}
