//! Guide and consolidator prompt templates.
//!
//! Templates use `{name}` placeholders. Unknown placeholders are left as
//! they are, so braces in examples need no escaping.

use std::path::Path;

use crate::processes::ProcessRegistry;

pub const GUIDE_FILE: &str = "guide.md";
pub const CONSOLIDATOR_FILE: &str = "consolidator.md";


/// Reference for the strategy language, shown to the guide.
pub const DSL_GRAMMAR: &str = r#"A strategy is a program that maps the question to an answer while threading
a state (conversation, code environment and a settings map).

  P ::= Name                   base process (see the list below)
      | return                 output the input unchanged
      | get                    output the settings map
      | put E                  replace the settings map with E; output the input
      | pure E                 output E
      | P ; P                  run left, feed its output to right
      | P || P                 run both on the same input and state copy; output [left, right]
      | if P then P else P     run the condition; it must output true or false
      | recfun Name: P         recursive definition; Name inside P re-runs it

Precedence, loosest first: `;`, `||`, then atoms. Use parentheses to group.
`if` branches run on the input the condition received.

Expressions E: numbers, "text", true, false, null, [lists], {"key": maps},
the variable `input`, indexing e[i], + - * /, ++ (append), | (merge maps),
lambda x. E and application f(E).

Settings read by the LLM processes: system, temperature, max_tokens,
thinking, thinking_budget, max_rounds, reprompt, prompt_template,
followup_template."#;

pub const GUIDE_EXAMPLES: &str = r#"Example: sample three answers and take the most common one.
```
put {"system": "Think step by step and end with FINAL ANSWER: <answer>.", "temperature": 0.7}; (CallLLM || CallLLM) || CallLLM; MajorityVote
```

Example: write code, run it, and iterate until no more code is produced.
```
put {"system": "Solve the problem with code. Print intermediate results.", "max_rounds": 6, "reprompt": true}; recfun CodeAct: CallLLM; if ContainsCode then (ExecCode; CodeAct) else return
```"#;

pub const DEFAULT_GUIDE_TEMPLATE: &str = r#"You design problem-solving strategies. A strategy is a small program in the
language below. It will be run on the question and its final output is the
answer, which must end with a line `FINAL ANSWER: <answer>`.

## Language
{grammar}

## Base processes
{processes}

## Worked examples
{examples}

## Memory from earlier problems
{context}

## Question
{question}

## Your task
{slot_instructions}

Reply with exactly one fenced code block containing the strategy."#;

pub const DEFAULT_CONSOLIDATOR_TEMPLATE: &str = r#"You maintain the memory of a problem-solving system. Several strategies were
just run on the same question. Compare them: which were correct, and among the
correct ones, which were cheapest.

## Current memory
{context}

## Question
{question}

## Attempts
{experiences}

## Your task
Update the memory. Store the best strategy for this kind of question, record
short notes about what worked or failed, and delete entries that are wrong or
superseded. Reply with an edit script inside <edits></edits>, one directive per
line:

ADD NOTE: <one line of text>
DEL NOTE <id>
ADD STRATEGY auto:
```
<strategy, exactly as it appears in the attempts>
```
DEL STRATEGY <id>

An empty <edits></edits> block means no change."#;

pub const EXPLOIT_INSTRUCTIONS: &str = "Give the best strategy you know for this question. If memory holds a \
strategy for this kind of question, reuse it exactly.";

pub const EXPLORE_INSTRUCTIONS: &str = "This is candidate {slot} of {k}. Explore: propose a strategy that \
differs from the best known one and could be cheaper or more accurate.";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompts {
    pub guide: String,
    pub consolidator: String,
}

impl Default for Prompts {
    fn default() -> Self {
        Prompts { guide: DEFAULT_GUIDE_TEMPLATE.into(), consolidator: DEFAULT_CONSOLIDATOR_TEMPLATE.into() }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{template} template is missing the {{{placeholder}}} placeholder")]
    MissingPlaceholder { template: &'static str, placeholder: &'static str },
}

impl Prompts {
    /// Reads `guide.md` and `consolidator.md` from `dir`; a missing file
    /// keeps the default.
    pub fn load_dir(dir: &Path) -> Result<Prompts, PromptError> {
        let mut p = Prompts::default();
        for (file, slot) in [(GUIDE_FILE, &mut p.guide), (CONSOLIDATOR_FILE, &mut p.consolidator)] {
            let path = dir.join(file);
            match std::fs::read_to_string(&path) {
                Ok(text) => *slot = text,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(source) => return Err(PromptError::Io { path: path.display().to_string(), source }),
            }
        }
        p.validate()?;
        Ok(p)
    }

    /// Both templates must mention the question, the memory and their main
    /// payload.
    pub fn validate(&self) -> Result<(), PromptError> {
        for placeholder in ["question", "context"] {
            if !self.guide.contains(&format!("{{{placeholder}}}")) {
                return Err(PromptError::MissingPlaceholder { template: "guide", placeholder });
            }
        }
        for placeholder in ["question", "context", "experiences"] {
            if !self.consolidator.contains(&format!("{{{placeholder}}}")) {
                return Err(PromptError::MissingPlaceholder { template: "consolidator", placeholder });
            }
        }
        Ok(())
    }
}

/// Substitutes `{key}` for each pair in one left-to-right pass, so
/// substituted text is never scanned again.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let hit = after.find('}').and_then(|close| {
            let key = &after[..close];
            vars.iter().find(|(k, _)| *k == key).map(|(_, v)| (close, *v))
        });
        match hit {
            Some((close, value)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// One line per registered process with its description.
pub fn describe_processes(registry: &ProcessRegistry) -> String {
    registry
        .entries()
        .map(|(name, e)| {
            if e.description.is_empty() {
                format!("- {name}")
            } else {
                format!("- {name}: {}", e.description)
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}
