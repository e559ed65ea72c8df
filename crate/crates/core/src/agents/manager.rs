use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::AgentError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgentId {
    Manager,
    UserAgent,
    DataAgent,
    Analyst,
    Reflector,
    Searcher,
    Navigator,
}

impl AgentId {
    pub const ALL: [AgentId; 7] = [
        AgentId::Manager,
        AgentId::UserAgent,
        AgentId::DataAgent,
        AgentId::Analyst,
        AgentId::Reflector,
        AgentId::Searcher,
        AgentId::Navigator,
    ];
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// One agent's progress on its part of the current task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentTaskStatus {
    pub agent_id: AgentId,
    pub complete: bool,
}

impl AgentTaskStatus {
    /// 1 iff the task is still incomplete.
    pub fn delta(&self) -> u8 {
        u8::from(!self.complete)
    }
}

/// `∏ (1 − δ)`: 1 once every tracked task is complete.
pub fn monitor(statuses: &[AgentTaskStatus]) -> u8 {
    statuses.iter().map(|s| 1 - s.delta()).product()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    /// Recommendation.
    #[serde(rename = "RE")]
    Re,
    /// Question answering.
    #[serde(rename = "QA")]
    Qa,
    /// Navigation.
    #[serde(rename = "NA")]
    Na,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Re => "RE",
            TaskKind::Qa => "QA",
            TaskKind::Na => "NA",
        })
    }
}

impl FromStr for TaskKind {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "RE" => Ok(TaskKind::Re),
            "QA" => Ok(TaskKind::Qa),
            "NA" => Ok(TaskKind::Na),
            _ => Err(AgentError::Config(format!("unknown task kind `{s}` (RE, QA, NA)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentAssignment {
    pub task: TaskKind,
    pub required: BTreeSet<AgentId>,
    pub optional: BTreeSet<AgentId>,
}

impl AgentAssignment {
    pub fn involves(&self, agent: AgentId) -> bool {
        self.required.contains(&agent) || self.optional.contains(&agent)
    }
}

/// The fixed agent selection for each application.
pub fn allocate(task: TaskKind) -> AgentAssignment {
    use AgentId::*;
    let (required, optional): (&[AgentId], &[AgentId]) = match task {
        TaskKind::Re => (&[UserAgent, Analyst, DataAgent], &[Reflector, Searcher]),
        TaskKind::Qa => (&[UserAgent, Searcher], &[Analyst, Reflector]),
        TaskKind::Na => (&[UserAgent, Navigator], &[Reflector, Searcher]),
    };
    AgentAssignment {
        task,
        required: required.iter().copied().collect(),
        optional: optional.iter().copied().collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(agent_id: AgentId, complete: bool) -> AgentTaskStatus {
        AgentTaskStatus { agent_id, complete }
    }

    #[test]
    fn monitor_cases() {
        assert_eq!(monitor(&[]), 1);
        assert_eq!(monitor(&[st(AgentId::Analyst, true), st(AgentId::DataAgent, true)]), 1);
        assert_eq!(monitor(&[st(AgentId::Analyst, true), st(AgentId::DataAgent, false)]), 0);
    }

    #[test]
    fn task_parsing() {
        assert_eq!("qa".parse::<TaskKind>().unwrap(), TaskKind::Qa);
        assert!(matches!("XX".parse::<TaskKind>(), Err(AgentError::Config(_))));
        assert_eq!(serde_json::to_string(&TaskKind::Na).unwrap(), "\"NA\"");
    }

    #[test]
    fn required_and_optional_are_disjoint() {
        for t in [TaskKind::Re, TaskKind::Qa, TaskKind::Na] {
            let a = allocate(t);
            assert!(a.required.is_disjoint(&a.optional));
            assert!(a.required.contains(&AgentId::UserAgent));
        }
    }
}
