//! LLM-backed processes.

use std::sync::Arc;

use super::text::{extract_code_blocks, extract_final_answer};
use super::{BaseProcess, ProcessCall, ProcessError};
use crate::backends::{price, Backend, CompletionRequest, LlmParams};
use crate::lang::Value;
use crate::semantics::{ChatMessage, Role};

pub const FORCED_FINAL_PROMPT: &str = "You have used all available rounds. Do not write more code. \
Reply with your best answer on a final line of the form `FINAL ANSWER: <answer>`.";

pub const REPROMPT_TEXT: &str = "Your reply had neither a fenced code block nor a line starting with \
`FINAL ANSWER:`. Either write exactly one code block to run, or finish with `FINAL ANSWER: <answer>`.";

const EVALUATOR_SYSTEM: &str = "You review candidate solutions. Check the candidate against the problem \
carefully. If it is correct and complete, end with the line `VERDICT: PASS`. Otherwise give a short, \
specific critique and end with the line `VERDICT: FAIL`.";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LlmRole {
    /// Adds the input as a user turn and replies.
    Plain,
    /// Replies to pending feedback when the log ends with a user turn.
    Optimizer,
    /// Judges the input; outputs a boolean.
    Evaluator,
}

pub struct LlmProcess {
    backend: Arc<dyn Backend>,
    defaults: LlmParams,
    role: LlmRole,
}

/// Call settings, read from the user state when it is a map.
struct Settings {
    params: LlmParams,
    system: Option<String>,
    evaluator_system: Option<String>,
    max_rounds: Option<usize>,
    reprompt: bool,
    prompt_template: Option<String>,
    followup_template: Option<String>,
}

fn count(v: &Value, key: &str) -> Result<Option<u64>, ProcessError> {
    match v.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Number(n)) if *n >= 0.0 && n.fract() == 0.0 && *n <= u32::MAX as f64 => Ok(Some(*n as u64)),
        Some(other) => Err(ProcessError::InvalidParams(format!("{key} must be a whole number, found {other}"))),
    }
}

fn flag(v: &Value, key: &str) -> Result<Option<bool>, ProcessError> {
    match v.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Bool(b)) => Ok(Some(*b)),
        Some(other) => Err(ProcessError::InvalidParams(format!("{key} must be a boolean, found {other}"))),
    }
}

fn text(v: &Value, key: &str) -> Option<String> {
    v.get(key).and_then(Value::as_str).map(str::to_owned)
}

impl Settings {
    fn read(defaults: LlmParams, state: &Value) -> Result<Settings, ProcessError> {
        let mut params = defaults;
        if let Some(t) = state.get("temperature") {
            params.temperature = t
                .as_f64()
                .ok_or_else(|| ProcessError::InvalidParams(format!("temperature must be a number, found {t}")))?;
        }
        if let Some(m) = count(state, "max_tokens")? {
            params.max_tokens = m as u32;
            params.thinking_budget = params.thinking_budget.min(params.max_tokens);
        }
        if let Some(b) = flag(state, "thinking")? {
            params.thinking = b;
        }
        if let Some(b) = count(state, "thinking_budget")? {
            params.thinking_budget = b as u32;
        }
        params.validate().map_err(ProcessError::InvalidParams)?;
        Ok(Settings {
            params,
            system: text(state, "system"),
            evaluator_system: text(state, "evaluator_system"),
            max_rounds: count(state, "max_rounds")?.map(|n| n as usize),
            reprompt: flag(state, "reprompt")?.unwrap_or(false),
            prompt_template: text(state, "prompt_template"),
            followup_template: text(state, "followup_template"),
        })
    }
}

/// Turns a process input into messages: a list of `{role, content}` maps
/// is taken as given, anything else becomes one user turn.
fn input_messages(input: &Value) -> Vec<ChatMessage> {
    if let Value::List(items) = input {
        let parsed: Option<Vec<ChatMessage>> = items
            .iter()
            .map(|m| {
                let role = match m.get("role")?.as_str()? {
                    "system" => Role::System,
                    "user" => Role::User,
                    "assistant" => Role::Assistant,
                    _ => return None,
                };
                Some(ChatMessage { role, content: m.get("content")?.as_str()?.to_owned() })
            })
            .collect();
        if let Some(msgs) = parsed.filter(|m| !m.is_empty()) {
            return msgs;
        }
    }
    let mut content = input.render_plain();
    if content.trim().is_empty() {
        content = "(empty)".to_owned();
    }
    vec![ChatMessage::user(content)]
}

/// One exchange: appends `new_turns` (if any) to the conversation, asks
/// the backend, appends the reply and charges its tokens.
pub fn llm_call(
    new_turns: Vec<ChatMessage>,
    params: &LlmParams,
    backend: &dyn Backend,
    call: &mut ProcessCall<'_>,
) -> Result<String, ProcessError> {
    params.validate().map_err(ProcessError::InvalidParams)?;
    call.state.conversation.extend(new_turns);
    let completion = backend.complete(&CompletionRequest {
        messages: &call.state.conversation,
        params,
        partition: &call.state.partition,
        seed: call.seed,
    })?;
    let usd = price(completion.input_tokens, completion.output_tokens, &backend.pricing());
    call.charge(completion.input_tokens, completion.output_tokens, usd);
    if completion.output_tokens > params.max_tokens as u64 {
        return Err(ProcessError::TokenBudgetExceeded { used: completion.output_tokens, max: params.max_tokens });
    }
    let reply = if completion.text.is_empty() { "(empty)".to_owned() } else { completion.text };
    call.state.conversation.push(ChatMessage::assistant(reply.clone()));
    Ok(reply)
}

impl LlmProcess {
    pub fn new(backend: Arc<dyn Backend>, defaults: LlmParams, role: LlmRole) -> Self {
        LlmProcess { backend, defaults, role }
    }

    fn respond(&self, input: &Value, call: &mut ProcessCall<'_>, s: &Settings) -> Result<Value, ProcessError> {
        let mut turns = Vec::new();
        if call.state.conversation.is_empty() {
            if let Some(sys) = &s.system {
                turns.push(ChatMessage::system(sys.clone()));
            }
        }
        let pending = call.state.conversation.last().is_some_and(|m| m.role == Role::User);
        if !(self.role == LlmRole::Optimizer && pending) {
            let template = if call.state.assistant_turns() == 0 { &s.prompt_template } else { &s.followup_template };
            match (template, input) {
                (Some(t), Value::Text(x)) => turns.push(ChatMessage::user(t.replace("{input}", x))),
                _ => turns.extend(input_messages(input)),
            }
        }
        let forced = s.max_rounds.is_some_and(|m| call.state.assistant_turns() + 1 >= m);
        if forced {
            match turns.last_mut() {
                Some(last) if last.role == Role::User => {
                    last.content = format!("{}\n\n{FORCED_FINAL_PROMPT}", last.content);
                }
                _ => turns.push(ChatMessage::user(FORCED_FINAL_PROMPT)),
            }
        }
        let mut reply = llm_call(turns, &s.params, &*self.backend, call)?;
        if s.reprompt
            && !forced
            && extract_code_blocks(&reply).blocks.is_empty()
            && extract_final_answer(&reply).is_none()
        {
            reply = llm_call(vec![ChatMessage::user(REPROMPT_TEXT)], &s.params, &*self.backend, call)?;
        }
        Ok(Value::Text(reply))
    }

    fn evaluate(&self, input: &Value, call: &mut ProcessCall<'_>, s: &Settings) -> Result<Value, ProcessError> {
        if s.max_rounds.is_some_and(|m| call.state.assistant_turns() >= m) {
            return Ok(Value::Bool(true));
        }
        let problem = call
            .state
            .conversation
            .iter()
            .find(|m| m.role == Role::User)
            .map_or("(not recorded)", |m| m.content.as_str())
            .to_owned();
        let messages = vec![
            ChatMessage::system(s.evaluator_system.clone().unwrap_or_else(|| EVALUATOR_SYSTEM.to_owned())),
            ChatMessage::user(format!("Problem:\n{problem}\n\nCandidate solution:\n{}", input.render_plain())),
        ];
        s.params.validate().map_err(ProcessError::InvalidParams)?;
        let completion = self.backend.complete(&CompletionRequest {
            messages: &messages,
            params: &s.params,
            partition: &call.state.partition,
            seed: call.seed,
        })?;
        let usd = price(completion.input_tokens, completion.output_tokens, &self.backend.pricing());
        call.charge(completion.input_tokens, completion.output_tokens, usd);
        if completion.output_tokens > s.params.max_tokens as u64 {
            return Err(ProcessError::TokenBudgetExceeded {
                used: completion.output_tokens,
                max: s.params.max_tokens,
            });
        }
        if parse_verdict(&completion.text) == Some(true) {
            return Ok(Value::Bool(true));
        }
        call.state.conversation.push(ChatMessage::user(format!(
            "A reviewer found problems with your solution:\n{}\n\nRevise your solution.",
            completion.text.trim()
        )));
        Ok(Value::Bool(false))
    }
}

/// Reads the last `VERDICT: PASS|FAIL` marker.
pub(crate) fn parse_verdict(text: &str) -> Option<bool> {
    text.lines().rev().find_map(|line| {
        let rest = line.trim().strip_prefix("VERDICT:")?.trim();
        match rest.to_ascii_uppercase().as_str() {
            "PASS" => Some(true),
            "FAIL" => Some(false),
            _ => None,
        }
    })
}

impl BaseProcess for LlmProcess {
    fn call(&self, input: &Value, call: &mut ProcessCall<'_>) -> Result<Value, ProcessError> {
        let settings = Settings::read(self.defaults, &call.state.user_state)?;
        match self.role {
            LlmRole::Evaluator => self.evaluate(input, call, &settings),
            _ => self.respond(input, call, &settings),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_marker() {
        assert_eq!(parse_verdict("fine\nVERDICT: PASS"), Some(true));
        assert_eq!(parse_verdict("VERDICT: PASS\nwait\nVERDICT: FAIL"), Some(false));
        assert_eq!(parse_verdict("no verdict"), None);
    }
}
