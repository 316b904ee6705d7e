//! Five-layer prompt construction.
//!
//! Every prompt renders exactly five non-empty layers in a fixed order,
//! each introduced by a `### LAYER:<name>` delimiter: context,
//! specification, template, validation, enhancement.

use serde::{Deserialize, Serialize};

use crate::retrieval::ContextBundle;

pub const LAYER_NAMES: [&str; 5] = [
    "context",
    "specification",
    "template",
    "validation",
    "enhancement",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptStack {
    /// (layer name, rendered section), always five in fixed order.
    pub layers: Vec<(String, String)>,
}

impl PromptStack {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (name, body) in &self.layers {
            out.push_str(&format!("### LAYER:{name}\n{body}\n"));
        }
        out
    }

    pub fn layer(&self, name: &str) -> Option<&str> {
        self.layers
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, b)| b.as_str())
    }
}

/// Inputs the task contributes to the prompt beyond the retrieved context.
#[derive(Debug, Clone, Default)]
pub struct TaskProfile {
    pub task_name: String,
    pub requirement_id: String,
    pub requirement_label: String,
    pub objective: String,
    pub process_labels: Vec<String>,
    pub expected_results: Vec<String>,
    pub interface_refs: Vec<String>,
    pub legacy_intents: Vec<String>,
    pub compliance_notes: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("missing template for task `{0}`")]
    MissingTemplate(String),
}

const CASE_TEMPLATE: &str = "\
Produce one or more test cases in exactly this shape:\n\
CASE: <title>\n\
PRIORITY: <1-4>\n\
PRECONDITION: <one per line, optional>\n\
STEP: <action> => <expected result>\n\
END";

/// Renders the five-layer stack for a task. Layers are filled from the
/// assembled context and the task profile; every layer is non-empty.
pub fn build_prompt(
    task: &str,
    context: &ContextBundle,
    profile: &TaskProfile,
) -> Result<PromptStack, PromptError> {
    if task != "test_case" && task != "test_plan" {
        return Err(PromptError::MissingTemplate(task.to_string()));
    }

    let mut context_body = format!(
        "Domain: SAP migration quality engineering.\nQuery: {}\nRetrieved context items:",
        context.query
    );
    if context.items.is_empty() {
        context_body.push_str("\n- (none)");
    }
    for item in &context.items {
        context_body.push_str(&format!(
            "\n- {} (score {:.4}, source {})",
            item.chunk_id, item.score, item.provenance.source
        ));
    }

    let mut spec_body = format!(
        "Requirement: {} — {}\nObjective: {}",
        profile.requirement_id, profile.requirement_label, profile.objective
    );
    spec_body.push_str("\nBusiness processes:");
    if profile.process_labels.is_empty() {
        spec_body.push_str("\n- (none)");
    }
    for p in &profile.process_labels {
        spec_body.push_str(&format!("\n- {p}"));
    }
    spec_body.push_str("\nExpected results:");
    if profile.expected_results.is_empty() {
        spec_body.push_str("\n- (none)");
    }
    for e in &profile.expected_results {
        spec_body.push_str(&format!("\n- {e}"));
    }
    spec_body.push_str("\nIntegration points:");
    if profile.interface_refs.is_empty() {
        spec_body.push_str("\n- (none)");
    }
    for i in &profile.interface_refs {
        spec_body.push_str(&format!("\n- {i}"));
    }

    let validation_body = "Quality criteria:\n\
- every case carries at least one step\n\
- every case references the requirement above\n\
- steps state an action and an expected result\n\
- compliance tags appear when a regulation applies"
        .to_string();

    let mut enhancement_body = "Historical knowledge:".to_string();
    if profile.legacy_intents.is_empty() {
        enhancement_body.push_str("\n- no prior test intent on record");
    }
    for intent in &profile.legacy_intents {
        enhancement_body.push_str(&format!("\n- {intent}"));
    }
    for note in &profile.compliance_notes {
        enhancement_body.push_str(&format!("\n- compliance: {note}"));
    }

    Ok(PromptStack {
        layers: vec![
            ("context".to_string(), context_body),
            ("specification".to_string(), spec_body),
            ("template".to_string(), CASE_TEMPLATE.to_string()),
            ("validation".to_string(), validation_body),
            ("enhancement".to_string(), enhancement_body),
        ],
    })
}
