//! Multi-agent orchestration over a pluggable generator.
//!
//! The planner executes a fixed step sequence — hybrid retrieval, scope
//! analysis, objective extraction, strategy generation, plan synthesis —
//! and five specialized agents refine the result: legacy-intent analysis,
//! functional change mapping, integration-point discovery, test-case
//! generation, and compliance validation. With the bundled stub generator
//! the whole pipeline is deterministic and offline.

mod generator;
mod prompt;

pub use generator::{Generator, StubGenerator};
pub use prompt::{build_prompt, PromptError, PromptStack, TaskProfile, LAYER_NAMES};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, SourceKind};
use crate::knowledge_graph::{EdgeType, GraphNode, KnowledgeGraph, NodeType};
use crate::retrieval::{retrieve, ContextBundle, RetrievalError, RetrievalParams, StageMode};
use crate::traceability::{LinkType, TraceError, TraceStore};
use crate::vector_index::VectorIndex;

pub const COMPLEXITY_HEAVY_THRESHOLD: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequirementSet(pub Vec<String>);

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BusinessLogicRef(pub Vec<String>);

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HistoricalCorpus(pub Vec<String>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub requirement_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestPlan {
    pub id: String,
    pub scope: Vec<String>,
    pub objectives: Vec<Objective>,
    pub strategy: Vec<String>,
    pub cases: Vec<String>,
    pub trace_links: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestStep {
    pub action: String,
    pub expected: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub id: String,
    pub title: String,
    pub preconditions: Vec<String>,
    pub steps: Vec<TestStep>,
    pub priority: u8,
    pub requirement_refs: Vec<String>,
    pub integration_refs: Vec<String>,
    pub compliance_tags: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GeneratorTier {
    Light,
    Heavy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusinessIntent {
    pub chunk_id: String,
    pub intent: String,
    pub referenced_nodes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalChange {
    pub requirement_id: String,
    pub old_components: Vec<String>,
    pub new_components: Vec<String>,
    pub unmapped: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComplianceReport {
    /// Regulated requirements no tagged case covers.
    pub untagged_requirements: Vec<String>,
    /// case id -> tags applied
    pub tagged_cases: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, thiserror::Error)]
pub enum OrchestrationError {
    #[error("requirement set is empty")]
    EmptyRequirements,
    #[error("historical corpus is empty")]
    EmptyHistory,
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("generator produced unparsable output after retry: {raw}")]
    GeneratorFailure { raw: String },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// Read-only engine state the agents operate over.
pub struct EngineRefs<'a> {
    pub corpus: &'a Corpus,
    pub index: &'a VectorIndex,
    pub graph: &'a KnowledgeGraph,
    pub params: RetrievalParams,
}

fn fnv(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// One intent per legacy-test chunk: the sentence after a `PURPOSE:`
/// marker when present, otherwise the first sentence.
pub fn agent_legacy_analysis(
    history: &HistoricalCorpus,
    corpus: &Corpus,
    graph: &KnowledgeGraph,
) -> Result<Vec<BusinessIntent>, OrchestrationError> {
    if history.0.is_empty() {
        return Err(OrchestrationError::EmptyHistory);
    }
    let mut intents = Vec::new();
    for chunk_id in &history.0 {
        let chunk = corpus
            .get(chunk_id)
            .ok_or_else(|| OrchestrationError::UnknownNode(chunk_id.clone()))?;
        let intent = match chunk.text.split_once("PURPOSE:") {
            Some((_, rest)) => rest
                .split(['.', '\n'])
                .next()
                .unwrap_or(rest)
                .trim()
                .to_string(),
            None => chunk
                .text
                .split(['.', '\n'])
                .next()
                .unwrap_or(&chunk.text)
                .trim()
                .to_string(),
        };
        let mut referenced_nodes: Vec<String> = graph
            .nodes()
            .filter(|n| n.chunk_refs.contains(chunk_id))
            .map(|n| n.id.clone())
            .collect();
        referenced_nodes.sort();
        intents.push(BusinessIntent {
            chunk_id: chunk_id.clone(),
            intent,
            referenced_nodes,
        });
    }
    Ok(intents)
}

/// Maps each requirement to the components it reaches over
/// Requires/ImplementedBy edges, paired with their MapsTo targets.
pub fn agent_change_mapping(
    requirements: &RequirementSet,
    graph: &KnowledgeGraph,
) -> Result<Vec<FunctionalChange>, OrchestrationError> {
    if requirements.0.is_empty() {
        return Err(OrchestrationError::EmptyRequirements);
    }
    let mut changes = Vec::new();
    for req in &requirements.0 {
        graph
            .node(req)
            .ok_or_else(|| OrchestrationError::UnknownNode(req.clone()))?;
        let mut old: BTreeSet<String> = BTreeSet::new();
        for e in graph.out_edges(req) {
            if matches!(e.edge_type, EdgeType::Requires | EdgeType::ImplementedBy) {
                old.insert(e.dst.clone());
            }
        }
        let mut new: BTreeSet<String> = BTreeSet::new();
        for component in &old {
            for target in graph.map_old_to_new(component).unwrap_or_default() {
                new.insert(target);
            }
        }
        changes.push(FunctionalChange {
            requirement_id: req.clone(),
            unmapped: !old.is_empty() && new.is_empty(),
            old_components: old.into_iter().collect(),
            new_components: new.into_iter().collect(),
        });
    }
    Ok(changes)
}

/// Interface nodes within two hops of any business-logic node over
/// InterfacesWith/DependsOn edges, either direction, ascending id.
pub fn agent_integration_points(logic: &BusinessLogicRef, graph: &KnowledgeGraph) -> Vec<String> {
    let types = [EdgeType::InterfacesWith, EdgeType::DependsOn];
    let mut found: BTreeSet<String> = BTreeSet::new();
    for start in &logic.0 {
        if graph.node(start).is_none() {
            continue;
        }
        let mut frontier = vec![start.clone()];
        let mut seen: BTreeSet<String> = [start.clone()].into();
        for _ in 0..2 {
            let mut next = Vec::new();
            for node in &frontier {
                let mut neighbors = Vec::new();
                for e in graph.out_edges(node) {
                    if types.contains(&e.edge_type) {
                        neighbors.push(e.dst.clone());
                    }
                }
                for e in graph.in_edges(node) {
                    if types.contains(&e.edge_type) {
                        neighbors.push(e.src.clone());
                    }
                }
                for nb in neighbors {
                    if seen.insert(nb.clone()) {
                        if graph.node(&nb).is_some_and(|n| n.node_type == NodeType::Interface) {
                            found.insert(nb.clone());
                        }
                        next.push(nb);
                    }
                }
            }
            frontier = next;
        }
    }
    found.into_iter().collect()
}

/// Complexity-based routing: graph dependency count within two hops plus
/// a tenth of the context size; at or above 5 the heavy tier is used.
pub fn route_complexity(
    target_node: Option<&str>,
    context_items: usize,
    graph: &KnowledgeGraph,
) -> GeneratorTier {
    let deps = target_node
        .and_then(|id| graph.node(id).map(|_| id))
        .map(|id| {
            let mut seen: BTreeSet<String> = [id.to_string()].into();
            let mut frontier = vec![id.to_string()];
            for _ in 0..2 {
                let mut next = Vec::new();
                for node in &frontier {
                    for e in graph.out_edges(node) {
                        if seen.insert(e.dst.clone()) {
                            next.push(e.dst.clone());
                        }
                    }
                    for e in graph.in_edges(node) {
                        if seen.insert(e.src.clone()) {
                            next.push(e.src.clone());
                        }
                    }
                }
                frontier = next;
            }
            seen.len() - 1
        })
        .unwrap_or(0);
    let score = deps as f64 + context_items as f64 / 10.0;
    if score >= COMPLEXITY_HEAVY_THRESHOLD {
        GeneratorTier::Heavy
    } else {
        GeneratorTier::Light
    }
}

/// Execution record naming the planner steps in the order they ran.
pub type ExecutionTrace = Vec<&'static str>;

#[derive(Debug)]
pub struct PlannerOutput {
    pub plan: TestPlan,
    pub context: ContextBundle,
    pub trace: ExecutionTrace,
}

fn requirement_label(graph: &KnowledgeGraph, id: &str) -> String {
    graph
        .node(id)
        .map(|n| n.label.clone())
        .unwrap_or_else(|| id.to_string())
}

/// The planner: retrieval -> scope -> objectives -> strategy -> synthesis,
/// in that order, recorded in the execution trace.
pub fn generate_test_plan(
    requirements: &RequirementSet,
    logic: &BusinessLogicRef,
    history: &HistoricalCorpus,
    refs: &EngineRefs<'_>,
) -> Result<PlannerOutput, OrchestrationError> {
    if requirements.0.is_empty() {
        return Err(OrchestrationError::EmptyRequirements);
    }
    for id in requirements.0.iter().chain(&logic.0) {
        refs.graph
            .node(id)
            .ok_or_else(|| OrchestrationError::UnknownNode(id.clone()))?;
    }
    let mut trace: ExecutionTrace = Vec::new();

    // hybrid retrieval over the combined requirement and logic wording
    trace.push("hybrid_retrieval");
    let mut query_parts: Vec<String> = requirements
        .0
        .iter()
        .map(|r| requirement_label(refs.graph, r))
        .collect();
    query_parts.extend(logic.0.iter().map(|b| requirement_label(refs.graph, b)));
    let query = query_parts.join(" ");
    let context = retrieve(
        &query,
        StageMode::Agentic,
        refs.corpus,
        Some(refs.index),
        refs.graph,
        &refs.params,
    )?;

    trace.push("analyze_testing_scope");
    let scope = analyze_testing_scope(&context, requirements, logic, refs);

    trace.push("extract_objectives");
    let objectives = extract_objectives(requirements, history, refs)?;

    trace.push("generate_strategy");
    let strategy = generate_strategy(&objectives, history);

    trace.push("synthesize_plan");
    let id_basis = requirements.0.join("|");
    let plan = TestPlan {
        id: format!("plan-{:08x}", fnv(&id_basis)),
        scope,
        objectives,
        strategy,
        cases: Vec::new(),
        trace_links: Vec::new(),
    };
    Ok(PlannerOutput { plan, context, trace })
}

fn analyze_testing_scope(
    context: &ContextBundle,
    requirements: &RequirementSet,
    logic: &BusinessLogicRef,
    refs: &EngineRefs<'_>,
) -> Vec<String> {
    let mut kinds: BTreeMap<String, usize> = BTreeMap::new();
    for item in &context.items {
        if let Some(chunk) = refs.corpus.get(&item.chunk_id) {
            *kinds.entry(chunk.kind.to_string()).or_default() += 1;
        }
    }
    let kind_summary = if kinds.is_empty() {
        "no supporting corpus material retrieved".to_string()
    } else {
        kinds
            .iter()
            .map(|(k, n)| format!("{k} x{n}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let mut sections = vec![
        format!("Requirements in scope: {}", requirements.0.join(", ")),
        format!("Supporting material: {kind_summary}"),
    ];
    if !logic.0.is_empty() {
        sections.push(format!("Business logic under test: {}", logic.0.join(", ")));
    }
    let interfaces = agent_integration_points(logic, refs.graph);
    if !interfaces.is_empty() {
        sections.push(format!("Integration surface: {}", interfaces.join(", ")));
    }
    sections
}

/// One objective per requirement; requirements with Covers edges to
/// legacy-test material cite each covered intent.
fn extract_objectives(
    requirements: &RequirementSet,
    history: &HistoricalCorpus,
    refs: &EngineRefs<'_>,
) -> Result<Vec<Objective>, OrchestrationError> {
    let intents = if history.0.is_empty() {
        Vec::new()
    } else {
        agent_legacy_analysis(history, refs.corpus, refs.graph)?
    };
    let mut objectives = Vec::new();
    for req in &requirements.0 {
        let label = requirement_label(refs.graph, req);
        let mut covered_chunks: BTreeSet<String> = BTreeSet::new();
        for e in refs.graph.out_edges(req) {
            if e.edge_type == EdgeType::Covers {
                if let Some(n) = refs.graph.node(&e.dst) {
                    covered_chunks.extend(n.chunk_refs.iter().cloned());
                }
            }
        }
        for e in refs.graph.in_edges(req) {
            if e.edge_type == EdgeType::Covers {
                if let Some(n) = refs.graph.node(&e.src) {
                    covered_chunks.extend(n.chunk_refs.iter().cloned());
                }
            }
        }
        let cited: Vec<&str> = intents
            .iter()
            .filter(|i| covered_chunks.contains(&i.chunk_id))
            .map(|i| i.intent.as_str())
            .collect();
        let text = if cited.is_empty() {
            format!("Verify {label}")
        } else {
            format!("Verify {label}, preserving legacy intent: {}", cited.join("; "))
        };
        objectives.push(Objective {
            requirement_id: req.clone(),
            text,
        });
    }
    Ok(objectives)
}

fn generate_strategy(objectives: &[Objective], history: &HistoricalCorpus) -> Vec<String> {
    vec![
        format!(
            "Risk-based ordering across {} objective(s); integration paths before unit variations",
            objectives.len()
        ),
        format!(
            "Regression baseline drawn from {} historical artifact(s)",
            history.0.len()
        ),
        "Every case traces to its requirement; compliance tags added where regulations apply"
            .to_string(),
    ]
}

fn parse_generator_output(raw: &str, case_id: &str, requirement_id: &str) -> Option<TestCase> {
    let mut title = None;
    let mut priority = None;
    let mut preconditions = Vec::new();
    let mut steps = Vec::new();
    let mut ended = false;
    for line in raw.lines() {
        let line = line.trim();
        if let Some(t) = line.strip_prefix("CASE: ") {
            title = Some(t.to_string());
        } else if let Some(p) = line.strip_prefix("PRIORITY: ") {
            priority = p.parse::<u8>().ok().filter(|p| (1..=4).contains(p));
        } else if let Some(p) = line.strip_prefix("PRECONDITION: ") {
            preconditions.push(p.to_string());
        } else if let Some(s) = line.strip_prefix("STEP: ") {
            let (action, expected) = s.split_once(" => ")?;
            steps.push(TestStep {
                action: action.trim().to_string(),
                expected: expected.trim().to_string(),
            });
        } else if line == "END" {
            ended = true;
        } else if !line.is_empty() {
            return None;
        }
    }
    if !ended || steps.is_empty() {
        return None;
    }
    Some(TestCase {
        id: case_id.to_string(),
        title: title?,
        preconditions,
        steps,
        priority: priority?,
        requirement_refs: vec![requirement_id.to_string()],
        integration_refs: Vec::new(),
        compliance_tags: Vec::new(),
    })
}

/// Generates one case per objective through the prompt stack and the
/// routed generator. Malformed output is retried once, then reported with
/// the raw text attached.
pub fn agent_test_cases(
    plan: &TestPlan,
    context: &ContextBundle,
    generator: &dyn Generator,
    refs: &EngineRefs<'_>,
    history: &HistoricalCorpus,
    logic: &BusinessLogicRef,
) -> Result<Vec<(TestCase, GeneratorTier)>, OrchestrationError> {
    let legacy_intents: Vec<String> = if history.0.is_empty() {
        Vec::new()
    } else {
        agent_legacy_analysis(history, refs.corpus, refs.graph)?
            .into_iter()
            .map(|i| i.intent)
            .collect()
    };
    let interface_refs = agent_integration_points(logic, refs.graph);

    let mut cases = Vec::new();
    for (idx, objective) in plan.objectives.iter().enumerate() {
        let req = &objective.requirement_id;
        let label = requirement_label(refs.graph, req);
        // Steps come from adjacent business processes; expected results
        // from Validates-edge targets.
        let mut process_labels = Vec::new();
        let mut expected_results = Vec::new();
        let mut neighbors: Vec<&crate::knowledge_graph::GraphEdge> = refs.graph.out_edges(req);
        neighbors.extend(refs.graph.in_edges(req));
        neighbors.sort_by(|a, b| (a.src.as_str(), a.dst.as_str()).cmp(&(b.src.as_str(), b.dst.as_str())));
        for e in neighbors {
            let other = if e.src == *req { &e.dst } else { &e.src };
            let Some(node) = refs.graph.node(other) else { continue };
            if node.node_type == NodeType::BusinessProcess {
                if !process_labels.contains(&node.label) {
                    process_labels.push(node.label.clone());
                }
            }
            if e.edge_type == EdgeType::Validates && !expected_results.contains(&node.label) {
                expected_results.push(node.label.clone());
            }
        }
        let profile = TaskProfile {
            task_name: "test_case".to_string(),
            requirement_id: req.clone(),
            requirement_label: label,
            objective: objective.text.clone(),
            process_labels,
            expected_results,
            interface_refs: interface_refs.clone(),
            legacy_intents: legacy_intents.clone(),
            compliance_notes: Vec::new(),
        };
        let prompt = build_prompt("test_case", context, &profile)?;
        let tier = route_complexity(Some(req), context.items.len(), refs.graph);
        let case_id = format!("case-{}-{idx:03}", plan.id);

        let mut parsed = None;
        let mut last_raw = String::new();
        for _attempt in 0..2 {
            let raw = generator
                .generate(&prompt)
                .unwrap_or_else(|e| format!("generator error: {e}"));
            last_raw = raw.clone();
            if let Some(mut case) = parse_generator_output(&raw, &case_id, req) {
                case.integration_refs = interface_refs.clone();
                parsed = Some(case);
                break;
            }
        }
        let case = parsed.ok_or(OrchestrationError::GeneratorFailure { raw: last_raw })?;
        cases.push((case, tier));
    }
    Ok(cases)
}

/// Tags cases whose requirements sit next to Regulation nodes; reports
/// regulated requirements that no tagged case covers.
pub fn agent_compliance(
    cases: &mut [TestCase],
    graph: &KnowledgeGraph,
) -> ComplianceReport {
    let regulation_neighbors = |id: &str| -> Vec<String> {
        let mut tags: BTreeSet<String> = BTreeSet::new();
        for e in graph.out_edges(id) {
            if graph.node(&e.dst).is_some_and(|n| n.node_type == NodeType::Regulation) {
                tags.insert(e.dst.clone());
            }
        }
        for e in graph.in_edges(id) {
            if graph.node(&e.src).is_some_and(|n| n.node_type == NodeType::Regulation) {
                tags.insert(e.src.clone());
            }
        }
        tags.into_iter().collect()
    };

    let mut report = ComplianceReport::default();
    let mut covered_requirements: BTreeSet<String> = BTreeSet::new();
    for case in cases.iter_mut() {
        let mut tags: BTreeSet<String> = BTreeSet::new();
        for req in &case.requirement_refs {
            let found = regulation_neighbors(req);
            if !found.is_empty() {
                covered_requirements.insert(req.clone());
            }
            tags.extend(found);
        }
        if !tags.is_empty() {
            case.compliance_tags = tags.iter().cloned().collect();
            report
                .tagged_cases
                .insert(case.id.clone(), case.compliance_tags.clone());
        }
    }
    report.untagged_requirements = graph
        .nodes_of_type(NodeType::Requirement)
        .iter()
        .filter(|r| !regulation_neighbors(&r.id).is_empty())
        .filter(|r| !covered_requirements.contains(&r.id))
        .map(|r| r.id.clone())
        .collect();
    report
}

#[derive(Debug)]
pub struct PipelineOutput {
    pub plan: TestPlan,
    pub cases: Vec<TestCase>,
    pub tiers: Vec<GeneratorTier>,
    pub compliance: ComplianceReport,
    pub context: ContextBundle,
    pub trace: ExecutionTrace,
}

/// Full agentic pipeline: plan, cases, compliance, trace-link
/// registration. Test cases are added to the graph as TestCase nodes so
/// ReqToCase links validate; coverage over the input requirements is 1.0
/// afterwards by construction.
pub fn run_pipeline(
    requirements: &RequirementSet,
    logic: &BusinessLogicRef,
    history: &HistoricalCorpus,
    refs: &EngineRefs<'_>,
    graph: &mut KnowledgeGraph,
    store: &mut TraceStore,
    generator: &dyn Generator,
    now: u64,
) -> Result<PipelineOutput, OrchestrationError> {
    let PlannerOutput { mut plan, context, mut trace } =
        generate_test_plan(requirements, logic, history, refs)?;

    trace.push("agent_test_cases");
    let generated = agent_test_cases(&plan, &context, generator, refs, history, logic)?;
    let (mut cases, tiers): (Vec<TestCase>, Vec<GeneratorTier>) = generated.into_iter().unzip();

    trace.push("agent_compliance");
    let compliance = agent_compliance(&mut cases, refs.graph);

    trace.push("register_trace_links");
    for case in &cases {
        if graph.node(&case.id).is_none() {
            let node = GraphNode {
                id: case.id.clone(),
                node_type: NodeType::TestCase,
                label: case.title.clone(),
                attrs: BTreeMap::new(),
                chunk_refs: BTreeSet::new(),
            };
            // Ignore duplicates: reruns regenerate the same ids.
            let _ = graph.add_node(node);
        }
        for req in &case.requirement_refs {
            let link = store.link(graph, req, &case.id, LinkType::ReqToCase, now)?;
            if !plan.trace_links.contains(&link.id) {
                plan.trace_links.push(link.id.clone());
            }
        }
        plan.cases.push(case.id.clone());
    }
    Ok(PipelineOutput {
        plan,
        cases,
        tiers,
        compliance,
        context,
        trace,
    })
}

/// Chunks of historical kinds (LegacyTest/ExecutionResult) in the corpus.
pub fn default_history(corpus: &Corpus) -> HistoricalCorpus {
    HistoricalCorpus(
        corpus
            .chunks
            .iter()
            .filter(|c| matches!(c.kind, SourceKind::LegacyTest | SourceKind::ExecutionResult))
            .map(|c| c.id.clone())
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ingest, RawRecord};
    use crate::embedding::EmbedderSpec;
    use crate::knowledge_graph::node;
    use crate::traceability::coverage;
    use crate::vector_index::Metric;

    fn rec(doc_id: &str, kind: &str, text: &str) -> RawRecord {
        RawRecord {
            doc_id: doc_id.into(),
            kind: kind.into(),
            title: doc_id.into(),
            text: text.into(),
            source: "unit".into(),
            timestamp: 50,
            credibility: None,
        }
    }

    struct Fixture {
        corpus: Corpus,
        index: VectorIndex,
        graph: KnowledgeGraph,
    }

    fn fixture() -> Fixture {
        let corpus = ingest(&[
            rec("req1", "Requirement", "verify purchase order creation for vendors"),
            rec("legacy1", "LegacyTest", "PURPOSE: confirm order entry rejects blocked vendors. STEP old stuff"),
            rec("legacy2", "LegacyTest", "PURPOSE: confirm pricing conditions apply. More text"),
            rec("proc1", "BusinessProcessMap", "purchase order approval workflow with release strategy"),
        ])
        .unwrap();
        let index =
            VectorIndex::build(&corpus, &EmbedderSpec::default(), Metric::Cosine, 0.82).unwrap();
        let mut graph = KnowledgeGraph::new();
        let mut r1 = node("R-1", NodeType::Requirement, "purchase order creation");
        r1.chunk_refs.insert("req1#000".into());
        graph.add_node(r1).unwrap();
        let mut l1 = node("LT-1", NodeType::TestCase, "legacy order entry");
        l1.chunk_refs.insert("legacy1#000".into());
        graph.add_node(l1).unwrap();
        let mut l2 = node("LT-2", NodeType::TestCase, "legacy pricing");
        l2.chunk_refs.insert("legacy2#000".into());
        graph.add_node(l2).unwrap();
        let mut p1 = node("BP-1", NodeType::BusinessProcess, "order approval workflow");
        p1.chunk_refs.insert("proc1#000".into());
        graph.add_node(p1).unwrap();
        graph.add_node(node("IF-1", NodeType::Interface, "vendor master interface")).unwrap();
        graph.add_node(node("C-OLD", NodeType::Component, "ME21 legacy transaction")).unwrap();
        graph.add_node(node("C-NEW", NodeType::Component, "ME21N transaction")).unwrap();
        graph.add_edge("R-1", "LT-1", EdgeType::Covers).unwrap();
        graph.add_edge("R-1", "LT-2", EdgeType::Covers).unwrap();
        graph.add_edge("R-1", "BP-1", EdgeType::Requires).unwrap();
        graph.add_edge("R-1", "C-OLD", EdgeType::Requires).unwrap();
        graph.add_edge("C-OLD", "C-NEW", EdgeType::MapsTo).unwrap();
        graph.add_edge("BP-1", "IF-1", EdgeType::InterfacesWith).unwrap();
        Fixture { corpus, index, graph }
    }

    fn refs(f: &Fixture) -> EngineRefs<'_> {
        EngineRefs {
            corpus: &f.corpus,
            index: &f.index,
            graph: &f.graph,
            params: RetrievalParams::default(),
        }
    }

    #[test]
    fn legacy_analysis_extracts_purpose_marker() {
        let f = fixture();
        let intents = agent_legacy_analysis(
            &HistoricalCorpus(vec!["legacy1#000".into(), "legacy2#000".into()]),
            &f.corpus,
            &f.graph,
        )
        .unwrap();
        assert_eq!(intents.len(), 2);
        assert_eq!(intents[0].intent, "confirm order entry rejects blocked vendors");
        assert_eq!(intents[0].referenced_nodes, vec!["LT-1"]);
        assert_eq!(intents[1].intent, "confirm pricing conditions apply");
    }

    #[test]
    fn legacy_analysis_empty_history_errors() {
        let f = fixture();
        assert!(matches!(
            agent_legacy_analysis(&HistoricalCorpus(Vec::new()), &f.corpus, &f.graph).unwrap_err(),
            OrchestrationError::EmptyHistory
        ));
    }

    #[test]
    fn change_mapping_resolves_two_hop_chain() {
        let f = fixture();
        let changes =
            agent_change_mapping(&RequirementSet(vec!["R-1".into()]), &f.graph).unwrap();
        assert_eq!(changes.len(), 1);
        assert!(changes[0].old_components.contains(&"C-OLD".to_string()));
        assert_eq!(changes[0].new_components, vec!["C-NEW"]);
        assert!(!changes[0].unmapped);
    }

    #[test]
    fn change_mapping_flags_unmapped() {
        let mut g = KnowledgeGraph::new();
        g.add_node(node("R-1", NodeType::Requirement, "r")).unwrap();
        g.add_node(node("C-1", NodeType::Component, "c")).unwrap();
        g.add_edge("R-1", "C-1", EdgeType::Requires).unwrap();
        let changes = agent_change_mapping(&RequirementSet(vec!["R-1".into()]), &g).unwrap();
        assert!(changes[0].unmapped);
        // No edges at all: empty change, not flagged.
        let mut g2 = KnowledgeGraph::new();
        g2.add_node(node("R-2", NodeType::Requirement, "r")).unwrap();
        let changes = agent_change_mapping(&RequirementSet(vec!["R-2".into()]), &g2).unwrap();
        assert!(changes[0].old_components.is_empty());
        assert!(!changes[0].unmapped);
    }

    #[test]
    fn integration_points_found_at_depth_two() {
        let f = fixture();
        // BP-1 -> IF-1 directly; R-1 reaches IF-1 through BP-1 at depth 2.
        assert_eq!(
            agent_integration_points(&BusinessLogicRef(vec!["BP-1".into()]), &f.graph),
            vec!["IF-1"]
        );
        assert!(agent_integration_points(&BusinessLogicRef(vec!["C-NEW".into()]), &f.graph)
            .is_empty());
    }

    #[test]
    fn router_formula() {
        let mut g = KnowledgeGraph::new();
        g.add_node(node("t", NodeType::Requirement, "t")).unwrap();
        // Isolated node, small context: light.
        assert_eq!(route_complexity(Some("t"), 3, &g), GeneratorTier::Light);
        for i in 0..5 {
            let id = format!("d{i}");
            g.add_node(node(&id, NodeType::Component, "d")).unwrap();
            g.add_edge("t", &id, EdgeType::DependsOn).unwrap();
        }
        // 5 dependencies, no context: score 5 -> heavy.
        assert_eq!(route_complexity(Some("t"), 0, &g), GeneratorTier::Heavy);
        // Boundary 4.9 stays light.
        let mut g2 = KnowledgeGraph::new();
        g2.add_node(node("t", NodeType::Requirement, "t")).unwrap();
        for i in 0..4 {
            let id = format!("d{i}");
            g2.add_node(node(&id, NodeType::Component, "d")).unwrap();
            g2.add_edge("t", &id, EdgeType::DependsOn).unwrap();
        }
        assert_eq!(route_complexity(Some("t"), 9, &g2), GeneratorTier::Light);
    }

    #[test]
    fn planner_step_order_is_fixed() {
        let f = fixture();
        let out = generate_test_plan(
            &RequirementSet(vec!["R-1".into()]),
            &BusinessLogicRef(vec!["BP-1".into()]),
            &HistoricalCorpus(vec!["legacy1#000".into(), "legacy2#000".into()]),
            &refs(&f),
        )
        .unwrap();
        assert_eq!(
            out.trace,
            vec![
                "hybrid_retrieval",
                "analyze_testing_scope",
                "extract_objectives",
                "generate_strategy",
                "synthesize_plan"
            ]
        );
    }

    #[test]
    fn objectives_cite_covered_legacy_intents() {
        let f = fixture();
        let out = generate_test_plan(
            &RequirementSet(vec!["R-1".into()]),
            &BusinessLogicRef::default(),
            &HistoricalCorpus(vec!["legacy1#000".into(), "legacy2#000".into()]),
            &refs(&f),
        )
        .unwrap();
        assert_eq!(out.plan.objectives.len(), 1);
        let text = &out.plan.objectives[0].text;
        assert!(text.contains("confirm order entry rejects blocked vendors"), "{text}");
        assert!(text.contains("confirm pricing conditions apply"), "{text}");
    }

    #[test]
    fn minimal_plan_for_edge_free_requirement() {
        let corpus = ingest(&[rec("req1", "Requirement", "standalone requirement text")]).unwrap();
        let index =
            VectorIndex::build(&corpus, &EmbedderSpec::default(), Metric::Cosine, 0.82).unwrap();
        let mut graph = KnowledgeGraph::new();
        graph.add_node(node("R-1", NodeType::Requirement, "standalone requirement")).unwrap();
        let refs = EngineRefs {
            corpus: &corpus,
            index: &index,
            graph: &graph,
            params: RetrievalParams::default(),
        };
        let out = generate_test_plan(
            &RequirementSet(vec!["R-1".into()]),
            &BusinessLogicRef::default(),
            &HistoricalCorpus::default(),
            &refs,
        )
        .unwrap();
        assert_eq!(out.plan.objectives.len(), 1);
        assert!(!out.plan.scope.iter().any(|s| s.starts_with("Integration surface")));
    }

    #[test]
    fn empty_requirements_rejected() {
        let f = fixture();
        assert!(matches!(
            generate_test_plan(
                &RequirementSet(Vec::new()),
                &BusinessLogicRef::default(),
                &HistoricalCorpus::default(),
                &refs(&f),
            )
            .unwrap_err(),
            OrchestrationError::EmptyRequirements
        ));
    }

    fn run_full(f: &mut Fixture) -> PipelineOutput {
        run_full_expecting(f, 1.0)
    }

    fn run_full_expecting(f: &mut Fixture, expected_coverage: f64) -> PipelineOutput {
        let engine = EngineRefs {
            corpus: &f.corpus,
            index: &f.index,
            graph: &f.graph.clone(),
            params: RetrievalParams::default(),
        };
        let mut graph = f.graph.clone();
        let mut store = TraceStore::new();
        let out = run_pipeline(
            &RequirementSet(vec!["R-1".into()]),
            &BusinessLogicRef(vec!["BP-1".into()]),
            &HistoricalCorpus(vec!["legacy1#000".into(), "legacy2#000".into()]),
            &engine,
            &mut graph,
            &mut store,
            &StubGenerator,
            1234,
        )
        .unwrap();
        f.graph = graph;
        assert!((coverage(&store, &f.graph).unwrap() - expected_coverage).abs() < 1e-12);
        out
    }

    #[test]
    fn pipeline_generates_linked_cases() {
        let mut f = fixture();
        let out = run_full(&mut f);
        assert_eq!(out.cases.len(), out.plan.objectives.len());
        for case in &out.cases {
            assert!(!case.steps.is_empty());
            assert!(!case.requirement_refs.is_empty());
            assert!((1..=4).contains(&case.priority));
        }
        assert!(!out.plan.trace_links.is_empty());
        assert_eq!(out.plan.cases.len(), out.cases.len());
    }

    #[test]
    fn pipeline_is_deterministic() {
        let mut f1 = fixture();
        let mut f2 = fixture();
        let a = run_full(&mut f1);
        let b = run_full(&mut f2);
        assert_eq!(
            serde_json::to_string(&a.plan).unwrap(),
            serde_json::to_string(&b.plan).unwrap()
        );
        assert_eq!(
            serde_json::to_string(&a.cases).unwrap(),
            serde_json::to_string(&b.cases).unwrap()
        );
    }

    #[test]
    fn compliance_tags_regulated_requirements() {
        let mut f = fixture();
        f.graph.add_node(node("REG-1", NodeType::Regulation, "sox")).unwrap();
        f.graph.add_node(node("REG-2", NodeType::Regulation, "gdpr")).unwrap();
        f.graph.add_node(node("R-2", NodeType::Requirement, "untested regulated req")).unwrap();
        f.graph.add_edge("R-1", "REG-1", EdgeType::Requires).unwrap();
        f.graph.add_edge("R-2", "REG-2", EdgeType::Requires).unwrap();
        // R-2 is not in the pipeline scope, so only half the requirements link.
        let out = run_full_expecting(&mut f, 0.5);
        assert!(out.cases.iter().any(|c| c.compliance_tags == vec!["REG-1".to_string()]));
        // R-2 has no case: the report names it.
        assert_eq!(out.compliance.untagged_requirements, vec!["R-2"]);
    }

    #[test]
    fn compliance_noop_without_regulations() {
        let mut f = fixture();
        let out = run_full(&mut f);
        assert!(out.compliance.tagged_cases.is_empty());
        assert!(out.cases.iter().all(|c| c.compliance_tags.is_empty()));
    }

    #[test]
    fn generator_retry_then_failure() {
        use super::generator::FlakyGenerator;
        let f = fixture();
        let plan_out = generate_test_plan(
            &RequirementSet(vec!["R-1".into()]),
            &BusinessLogicRef::default(),
            &HistoricalCorpus::default(),
            &refs(&f),
        )
        .unwrap();
        // One failure: retry succeeds.
        let flaky = FlakyGenerator {
            inner: StubGenerator,
            failures: std::sync::atomic::AtomicUsize::new(1),
        };
        let cases = agent_test_cases(
            &plan_out.plan,
            &plan_out.context,
            &flaky,
            &refs(&f),
            &HistoricalCorpus::default(),
            &BusinessLogicRef::default(),
        )
        .unwrap();
        assert_eq!(cases.len(), 1);
        // Two failures: error carries the raw output.
        let very_flaky = FlakyGenerator {
            inner: StubGenerator,
            failures: std::sync::atomic::AtomicUsize::new(2),
        };
        let err = agent_test_cases(
            &plan_out.plan,
            &plan_out.context,
            &very_flaky,
            &refs(&f),
            &HistoricalCorpus::default(),
            &BusinessLogicRef::default(),
        )
        .unwrap_err();
        match err {
            OrchestrationError::GeneratorFailure { raw } => assert!(raw.contains("garbled")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn routed_heavy_with_many_dependencies() {
        let mut f = fixture();
        for i in 0..6 {
            let id = format!("DEP-{i}");
            f.graph.add_node(node(&id, NodeType::Component, "dep")).unwrap();
            f.graph.add_edge("R-1", &id, EdgeType::DependsOn).unwrap();
        }
        let out = run_full(&mut f);
        assert_eq!(out.tiers, vec![GeneratorTier::Heavy]);
    }
}
