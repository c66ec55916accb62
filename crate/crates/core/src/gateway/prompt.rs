//! Role and action prompts. Placeholders are written `{{name}}`; single
//! braces are literal so JSON examples survive rendering.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ChatMessage, Role};
use crate::agent::{AgentSpec, ReasoningPattern, Tool};
use crate::orchestrator::SystemState;

/// Slots a template may declare.
pub const KNOWN_SLOTS: [&str; 3] = ["task", "previous_reasoning", "history"];

#[derive(Debug, Error, PartialEq)]
pub enum TemplateError {
    #[error("placeholder `{{{{{0}}}}}` is used but not declared")]
    Undeclared(String),
    #[error("unknown slot `{0}`")]
    UnknownSlot(String),
    #[error("the terminator has no prompt")]
    Terminator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub role_prompt: String,
    pub action_prompt: String,
    pub placeholders: Vec<String>,
}

impl PromptTemplate {
    pub fn new(role_prompt: impl Into<String>, action_prompt: impl Into<String>, placeholders: &[&str]) -> Self {
        Self {
            role_prompt: role_prompt.into(),
            action_prompt: action_prompt.into(),
            placeholders: placeholders.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), TemplateError> {
        if let Some(bad) = self.placeholders.iter().find(|p| !KNOWN_SLOTS.contains(&p.as_str())) {
            return Err(TemplateError::UnknownSlot(bad.clone()));
        }
        for body in [&self.role_prompt, &self.action_prompt] {
            for name in placeholders_in(body) {
                if !self.placeholders.iter().any(|p| p == name) {
                    return Err(TemplateError::Undeclared(name.to_string()));
                }
            }
        }
        Ok(())
    }

    /// Default template for a pool agent.
    pub fn for_agent(agent: &AgentSpec) -> Result<Self, TemplateError> {
        if agent.is_terminator() {
            return Err(TemplateError::Terminator);
        }
        Ok(match agent.tool {
            Tool::None => Self::new(
                role_prompt(agent.reasoning_pattern),
                reasoning_prompt(agent.reasoning_pattern),
                &["previous_reasoning"],
            ),
            tool => Self::new(tool_role_prompt(tool), tool_prompt(tool), &[]),
        })
    }
}

/// `{{name}}` occurrences whose name is an identifier.
pub fn placeholders_in(body: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = body;
    while let Some(start) = rest.find("{{") {
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) if is_ident(&after[..end]) => {
                out.push(&after[..end]);
                rest = &after[end + 2..];
            }
            _ => rest = after,
        }
    }
    out
}

fn is_ident(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn substitute(body: &str, values: &[(&str, String)]) -> String {
    let mut out = body.to_string();
    for (name, value) in values {
        out = out.replace(&format!("{{{{{name}}}}}"), value);
    }
    out
}

/// System message = role prompt; user message = task, prior steps, then the action prompt.
pub fn render_prompt(template: &PromptTemplate, state: &SystemState) -> Result<Vec<ChatMessage>, TemplateError> {
    template.validate()?;
    let previous = state.previous_reasoning();
    let history = state
        .steps()
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.output.is_empty())
        .map(|(i, s)| format!("Step {}: {}", i + 1, s.output))
        .collect::<Vec<_>>()
        .join("\n");
    let values = [
        ("task", state.task().text.clone()),
        ("previous_reasoning", previous),
        ("history", history.clone()),
    ];
    let mut user = format!("Task: {}\n\n", state.task().text);
    if !history.is_empty() {
        user.push_str("Previous steps:\n");
        user.push_str(&history);
        user.push_str("\n\n");
    }
    user.push_str(&substitute(&template.action_prompt, &values));
    Ok(vec![
        ChatMessage {
            role: Role::System,
            content: substitute(&template.role_prompt, &values),
        },
        ChatMessage {
            role: Role::User,
            content: user,
        },
    ])
}

fn role_prompt(pattern: ReasoningPattern) -> &'static str {
    use ReasoningPattern::*;
    match pattern {
        Planning => "You are an expert in task decomposition and planning. Responsible for generating structured plans to solve complex tasks (planning).",
        Reasoning => "You are an expert in logical reasoning. Responsible for synthesizing solutions to sub-problems (reasoning).",
        Critique => "You are an expert in critique and verification. Responsible for identifying flaws and providing feedback on prior reasoning (critique).",
        Reflect => "You are an expert in metacognitive reflection. Responsible for analyzing the overall reasoning trajectory and proposing improvements (reflect).",
        Question => "You are an expert in problem decomposition. Responsible for generating clarifying or follow-up sub-questions (question).",
        Summarize => "You are an expert in summarization. Responsible for generating concise summaries of intermediate results (summarize).",
        Conclude => "You are an expert in synthesis. Responsible for producing the final conclusions based on collective reasoning outcomes (conclude).",
        Modify => "You are an expert in error analysis and correction. Responsible for identifying errors and revising prior outputs accordingly (modify).",
        Terminate => "",
    }
}

const RESULT: &str = "REASONING RESULT: [YOUR REASONING RESULT].";
const ANSWER: &str = "FINAL ANSWER: [YOUR FINAL ANSWER]. *Your previous reasoning was: {{previous_reasoning}}.*";

fn reasoning_prompt(pattern: ReasoningPattern) -> String {
    use ReasoningPattern::*;
    match pattern {
        Planning => "Decompose the question and plan the next steps to address the question. You should complete your planning using the following template:\n\nREASONING RESULT: [YOUR REASONING RESULT]. *Your previous reasoning was: {{previous_reasoning}}.*".to_string(),
        Reasoning => format!("Now, you need to continue the reasoning to get closer to the correct answer. You should finish your reasoning with the following template:\n\n{RESULT}\n\nFinish your answer with:\n\n{ANSWER}"),
        Critique => format!("You need to critique the previous reasoning. Complete your reasoning using:\n\n{RESULT}\n\nConclude with:\n\n{ANSWER}"),
        Reflect => format!("Reflect on the current state of the task and propose the next steps. Diagnose the potential cause of any failure and outline a concise plan.\n\nConclude with:\n\n{RESULT}\n\n{ANSWER}"),
        Question => format!("Your task is to propose the next sub-question along with its answer. Ensure it logically follows from the previous reasoning and addresses any gaps.\n\nConclude with:\n\n{RESULT}\n\n{ANSWER}"),
        Summarize => format!("You need to summarize previous results and provide some intermediate conclusions.\n\nFinish your reasoning with:\n\n{RESULT}\n\nThen:\n\n{ANSWER}"),
        Conclude => format!("You need to conclude the task and provide a final answer.\n\nFinish with:\n\n{RESULT}\n\nThen:\n\n{ANSWER}"),
        Modify => "You need to identify and correct errors in the previous reasoning.\n\nUse this template:\n\nREASONING RESULT: [Clearly state: 1. Which part of the previous reasoning was incorrect 2. Why it was incorrect 3. What is the correct understanding].\n\nThen:\n\nFINAL ANSWER: [Provide the complete corrected answer]. *Your previous reasoning was: {{previous_reasoning}}.*".to_string(),
        Terminate => String::new(),
    }
}

fn tool_role_prompt(tool: Tool) -> &'static str {
    match tool {
        Tool::ReadFile => "You are an expert in file handling. Responsible for reading files and extracting relevant information (read_file).",
        Tool::SearchArxiv => "You are an expert in academic research. Responsible for searching relevant papers on arXiv (search_arxiv).",
        Tool::SearchBing => "You are an expert in web search. Responsible for retrieving information via Bing (search_bing).",
        Tool::AccessWebsite => "You are an expert in accessing and parsing websites. Responsible for extracting data from specific URLs (access_website).",
        Tool::RunPython => "You are an expert in Python programming. Responsible for executing Python code and returning results (run_python).",
        Tool::None => "",
    }
}

fn tool_prompt(tool: Tool) -> &'static str {
    match tool {
        Tool::SearchArxiv => r#"You have chosen to search for academic papers on arXiv. Please provide specific terms related to academic research, such as the title of a paper, keywords, or topics in fields like physics, mathematics, computer science, or machine learning. Return in json format. Example: {"action": "search_arxiv", "parameter": "quantum computing"}"#,
        Tool::SearchBing => r#"You have chosen to search for information using Bing. Please provide descriptive phrases or keywords related to your query, including concepts, names, events, or specific questions to get a broad range of results, including news, articles, and websites. Return in json format. Example: {"action": "search_bing", "parameter": "latest advancements in AI"}"#,
        Tool::AccessWebsite => r#"You have chosen to access a website. Please provide the URL you want to access or the URL most relevant to the current question. Return in json format. Example: {"action": "access_website", "parameter": "https://www.example.com"}"#,
        Tool::RunPython => r#"You have chosen to write and run Python code. Please write generic Python code in the parameter to solve this type of problems using only standard python libraries. Make sure you use the print function for all output when relevant. Return in json format. Example: {"action": "run_python", "parameter": "print('Hello, World!')"}"#,
        Tool::ReadFile => r#"You have chosen to read a file. Please provide the filename you want to read. Return in json format. Example: {"action": "read_file", "parameter": "data.txt"}"#,
        Tool::None => "",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::StepRecord;
    use crate::task::TaskSpec;

    fn state() -> SystemState {
        SystemState::new(TaskSpec::closed("t", "What is 2+2?", "4"), 0)
    }

    #[test]
    fn arxiv_prompt_ends_with_example() {
        let agent = AgentSpec::new("arxiv", "m", ReasoningPattern::Reasoning).with_tool(Tool::SearchArxiv);
        let msgs = render_prompt(&PromptTemplate::for_agent(&agent).unwrap(), &state()).unwrap();
        assert_eq!(msgs[0].role, Role::System);
        assert!(msgs[1]
            .content
            .ends_with(r#"{"action": "search_arxiv", "parameter": "quantum computing"}"#));
    }

    #[test]
    fn constant_template_ignores_history() {
        let t = PromptTemplate::new("role", "act now", &[]);
        let empty = render_prompt(&t, &state()).unwrap();
        let mut s = state();
        s.push(StepRecord {
            agent_index: 0,
            output: "REASONING RESULT: x.".into(),
            tokens: 1,
            latent_correct: None,
        });
        let later = render_prompt(&t, &s).unwrap();
        assert_eq!(empty[0], later[0]);
        assert!(later[1].content.ends_with("act now"));
    }

    #[test]
    fn prior_result_is_quoted() {
        let agent = AgentSpec::new("r", "m", ReasoningPattern::Critique);
        let mut s = state();
        let prior = "REASONING RESULT: 2+2 is 4, by counting.\nFINAL ANSWER: 4.";
        s.push(StepRecord {
            agent_index: 0,
            output: prior.into(),
            tokens: 1,
            latent_correct: None,
        });
        let msgs = render_prompt(&PromptTemplate::for_agent(&agent).unwrap(), &s).unwrap();
        assert!(msgs[1].content.contains("REASONING RESULT: 2+2 is 4, by counting."));
        assert!(!msgs[1].content.contains("{{"));
    }

    #[test]
    fn undeclared_placeholder_rejected() {
        let t = PromptTemplate::new("role", "use {{task}}", &[]);
        assert_eq!(render_prompt(&t, &state()), Err(TemplateError::Undeclared("task".into())));
        let ok = PromptTemplate::new("role", "use {{task}} and {\"json\": 1}", &["task"]);
        assert!(render_prompt(&ok, &state()).unwrap()[1].content.contains("use What is 2+2?"));
    }

    #[test]
    fn every_roster_agent_has_a_valid_template() {
        for p in ReasoningPattern::ROSTER {
            PromptTemplate::for_agent(&AgentSpec::new("a", "m", p)).unwrap().validate().unwrap();
        }
        for t in Tool::ALL {
            let a = AgentSpec::new("a", "m", ReasoningPattern::Reasoning).with_tool(t);
            PromptTemplate::for_agent(&a).unwrap().validate().unwrap();
        }
    }
}
