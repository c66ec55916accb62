use serde::{Deserialize, Serialize};

/// Whether a task has one checkable answer or is graded on a continuum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    #[default]
    Closed,
    Open,
}

/// A task handed to the orchestrator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<String>,
    #[serde(default)]
    pub domain: Domain,
}

impl TaskSpec {
    pub fn closed(id: impl Into<String>, text: impl Into<String>, answer: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            ground_truth: Some(answer.into()),
            domain: Domain::Closed,
        }
    }

    pub fn open(id: impl Into<String>, text: impl Into<String>, reference: Option<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            ground_truth: reference,
            domain: Domain::Open,
        }
    }

    /// Closed-domain tasks must carry a ground truth.
    pub fn is_valid(&self) -> bool {
        self.domain == Domain::Open || self.ground_truth.is_some()
    }
}
