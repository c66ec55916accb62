use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolAction {
    pub action: String,
    pub parameter: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("no JSON object with `action` and `parameter` found")]
pub struct ToolParseError;

/// Finds the first well-formed JSON object carrying `action` and
/// `parameter` keys, ignoring any prose around it.
pub fn parse_tool_action(text: &str) -> Result<ToolAction, ToolParseError> {
    for (i, _) in text.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        let Some(Ok(Value::Object(map))) = stream.next() else {
            continue;
        };
        let action = map.get("action").and_then(Value::as_str);
        let parameter = match map.get("parameter") {
            Some(Value::String(s)) => Some(s.clone()),
            Some(v @ (Value::Number(_) | Value::Bool(_))) => Some(v.to_string()),
            _ => None,
        };
        if let (Some(action), Some(parameter)) = (action, parameter) {
            return Ok(ToolAction {
                action: action.to_string(),
                parameter,
            });
        }
    }
    Err(ToolParseError)
}

/// Runs a parsed tool action and returns the text fed back to the agent.
pub trait ToolHook: Send + Sync {
    fn run(&self, action: &ToolAction) -> String;
}

/// Executes nothing; reports the request back.
#[derive(Debug, Default, Clone, Copy)]
pub struct EchoToolHook;

impl ToolHook for EchoToolHook {
    fn run(&self, action: &ToolAction) -> String {
        format!("TOOL RESULT: {}({}) was not executed.", action.action, action.parameter)
    }
}
