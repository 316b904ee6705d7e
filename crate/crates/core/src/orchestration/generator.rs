//! Pluggable artifact generator and the bundled deterministic stub.
//!
//! Real model adapters implement [`Generator`]; the stub fills the case
//! template from the prompt text alone, so the agentic pipeline runs
//! offline and byte-identically across runs.

use crate::orchestration::prompt::PromptStack;

pub trait Generator: Send + Sync {
    fn name(&self) -> &str;
    fn deterministic(&self) -> bool;
    /// Renders structured text from a prompt. The output contract is the
    /// CASE/STEP format declared in the prompt's template layer.
    fn generate(&self, prompt: &PromptStack) -> Result<String, String>;
}

/// Offline template-filling generator. Reads the specification and
/// enhancement layers of the prompt and emits one test case.
#[derive(Debug, Default)]
pub struct StubGenerator;

fn lines_after<'a>(body: &'a str, heading: &str) -> Vec<&'a str> {
    let mut out = Vec::new();
    let mut collecting = false;
    for line in body.lines() {
        if line.ends_with(':') {
            collecting = line == heading;
            continue;
        }
        if collecting {
            if let Some(item) = line.strip_prefix("- ") {
                if item != "(none)" {
                    out.push(item);
                }
            }
        }
    }
    out
}

fn field<'a>(body: &'a str, prefix: &str) -> Option<&'a str> {
    body.lines().find_map(|l| l.strip_prefix(prefix))
}

impl Generator for StubGenerator {
    fn name(&self) -> &str {
        "stub"
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn generate(&self, prompt: &PromptStack) -> Result<String, String> {
        let spec = prompt
            .layer("specification")
            .ok_or_else(|| "prompt missing specification layer".to_string())?;
        let requirement = field(spec, "Requirement: ").unwrap_or_default();
        let req_label = requirement.split_once(" — ").map(|(_, l)| l).unwrap_or(requirement);
        let objective = field(spec, "Objective: ").unwrap_or("verify behavior");
        let processes = lines_after(spec, "Business processes:");
        let expected = lines_after(spec, "Expected results:");
        let interfaces = lines_after(spec, "Integration points:");

        let mut out = String::new();
        out.push_str(&format!("CASE: {objective}\n"));
        // Priority scales with how much surface the case touches.
        let priority = match processes.len() + interfaces.len() {
            0 | 1 => 3,
            2 | 3 => 2,
            _ => 1,
        };
        out.push_str(&format!("PRIORITY: {priority}\n"));
        out.push_str(&format!("PRECONDITION: system configured for {req_label}\n"));
        if processes.is_empty() {
            out.push_str(&format!(
                "STEP: execute the scenario for {req_label} => {}\n",
                expected.first().copied().unwrap_or("operation completes successfully")
            ));
        } else {
            for (i, p) in processes.iter().enumerate() {
                let exp = expected
                    .get(i)
                    .or_else(|| expected.first())
                    .copied()
                    .unwrap_or("operation completes successfully");
                out.push_str(&format!("STEP: execute {p} => {exp}\n"));
            }
        }
        for iface in &interfaces {
            out.push_str(&format!(
                "STEP: confirm interface {iface} exchanges data => interface responds without error\n"
            ));
        }
        out.push_str("END\n");
        Ok(out)
    }
}

/// Test double that returns malformed output a fixed number of times
/// before succeeding; exercises the retry path.
#[cfg(test)]
pub struct FlakyGenerator {
    pub inner: StubGenerator,
    pub failures: std::sync::atomic::AtomicUsize,
}

#[cfg(test)]
impl Generator for FlakyGenerator {
    fn name(&self) -> &str {
        "flaky"
    }
    fn deterministic(&self) -> bool {
        false
    }
    fn generate(&self, prompt: &PromptStack) -> Result<String, String> {
        use std::sync::atomic::Ordering;
        if self.failures.fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1)).is_ok() {
            Ok("garbled <<noise>>".to_string())
        } else {
            self.inner.generate(prompt)
        }
    }
}
