use super::BehaviorCategory;
use crate::gateway::{ChatRequest, Completer, GatewayError};

const JUDGE_HEADER: &str = "Classify the reasoning step below into exactly one of the following categories.";
const STEP_MARKER: &str = "\n\nReasoning step:\n";

const DEFINITIONS: &str = "\
Subgoal setting: Where the model breaks down the problem into smaller, intermediate goals (e.g., 'To solve this, we first need to...' or 'First, I'll try to ..., then ...'
Backtracking: Where the model realizes a path won't work and explicitly goes back to try a different approach. An example of backtracking is: 'Let me try again' or 'we need to try a different approach'.
Verification: Where the model checks the correctness of the intermediate results or to make sure the final answer is correct.
Backward chaining: Where the model works backward from its answer to see whether it can derive the variables in the original problem.
Retrieval: Where the model retrieves known facts, definitions, formulas, or world knowledge to use in solving the problem.
Reframing: Where the model rephrases a question or problem to clarify its understanding or to approach it from a different angle. This includes paraphrasing, summarizing, or changing the perspective of the question.
Logical Reasoning: Where the model uses logical reasoning to arrive at the answer. This includes deductive reasoning, inductive reasoning, and other forms of logical inference.
Calculation: Where the model performs a calculation to arrive at the answer. This includes arithmetic operations, algebraic manipulations, or any other mathematical operations.";

/// User message asking the judge to label one reasoning step.
pub fn judge_message(step: &str) -> String {
    format!(
        "{JUDGE_HEADER}\n\n{DEFINITIONS}\n\nIf none of these categories applies, answer Others.\n\
         Reply with the category name only.{STEP_MARKER}{step}"
    )
}

/// The step embedded in a message built by [`judge_message`].
pub fn judge_step_text(user_text: &str) -> Option<&str> {
    if !user_text.starts_with(JUDGE_HEADER) {
        return None;
    }
    user_text.find(STEP_MARKER).map(|i| &user_text[i + STEP_MARKER.len()..])
}

/// Reads a category from a judge reply. The flag is set when nothing usable
/// was found and the result fell back to `Others`.
pub fn parse_judge_reply(reply: &str) -> (BehaviorCategory, bool) {
    let first_line = reply.trim().lines().next().unwrap_or("");
    if let Some(c) = BehaviorCategory::parse_label(first_line) {
        return (c, false);
    }
    let lower = reply.to_lowercase().replace(['_', '-'], " ");
    let found: Vec<BehaviorCategory> = BehaviorCategory::ALL
        .into_iter()
        .filter(|c| lower.contains(&c.display_name().to_lowercase()))
        .collect();
    // "Others" may appear beside a real category in an explanation.
    let real: Vec<_> = found.iter().copied().filter(|c| *c != BehaviorCategory::Others).collect();
    match (real.as_slice(), found.as_slice()) {
        ([one], _) => (*one, false),
        ([], [BehaviorCategory::Others]) => (BehaviorCategory::Others, false),
        _ => (BehaviorCategory::Others, true),
    }
}

pub fn judge_request(step: &str, judge_model: &str) -> ChatRequest {
    let mut req = ChatRequest::new(judge_model, "", judge_message(step));
    req.max_output_tokens = 16;
    req
}

/// Labels one unit with the judge model.
pub fn classify_behavior(
    step: &str,
    judge: &dyn Completer,
    judge_model: &str,
) -> Result<(BehaviorCategory, bool), GatewayError> {
    let resp = judge.complete(&judge_request(step, judge_model))?;
    Ok(parse_judge_reply(&resp.text))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reply_parsing() {
        assert_eq!(parse_judge_reply("Subgoal setting"), (BehaviorCategory::SubgoalSetting, false));
        assert_eq!(parse_judge_reply("**Calculation**."), (BehaviorCategory::Calculation, false));
        assert_eq!(parse_judge_reply("logical_reasoning"), (BehaviorCategory::LogicalReasoning, false));
        assert_eq!(parse_judge_reply("Category: Backward chaining"), (BehaviorCategory::BackwardChaining, false));
        assert_eq!(parse_judge_reply("Others"), (BehaviorCategory::Others, false));
        assert_eq!(parse_judge_reply("banana"), (BehaviorCategory::Others, true));
        assert_eq!(parse_judge_reply("Retrieval or Calculation"), (BehaviorCategory::Others, true));
    }

    #[test]
    fn step_roundtrip() {
        let msg = judge_message("First, find x.\nThen y.");
        assert_eq!(judge_step_text(&msg), Some("First, find x.\nThen y."));
        assert_eq!(judge_step_text("What is 2+2?"), None);
    }
}
