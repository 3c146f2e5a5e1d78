//! Scenario scripts: the timed user actions a run plays back.

use serde::{Deserialize, Serialize};

use crate::ontology::Hierarchy;

use super::graph::SocialGraph;
use super::SimError;

/// One timed user action.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Step {
    pub t: u64,
    pub node: String,
    pub action: Action,
}

/// User actions a script may perform. Requests are created by `help` under a
/// script-unique label; later steps refer to that label.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    Help {
        label: String,
        activity: String,
        object: String,
        #[serde(default)]
        description: String,
        tau: f64,
        hops: u32,
        deadline: u64,
    },
    Accept {
        label: String,
    },
    Decline {
        label: String,
    },
    Cancel {
        label: String,
    },
    Assign {
        label: String,
        volunteer: String,
    },
    Done {
        label: String,
    },
    Rate {
        label: String,
        value: u8,
    },
    Chat {
        label: String,
    },
    Call {
        label: String,
    },
}

impl Action {
    pub fn label(&self) -> &str {
        match self {
            Action::Help { label, .. }
            | Action::Accept { label }
            | Action::Decline { label }
            | Action::Cancel { label }
            | Action::Assign { label, .. }
            | Action::Done { label }
            | Action::Rate { label, .. }
            | Action::Chat { label }
            | Action::Call { label } => label,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Action::Help { .. } => "help",
            Action::Accept { .. } => "accept",
            Action::Decline { .. } => "decline",
            Action::Cancel { .. } => "cancel",
            Action::Assign { .. } => "assign",
            Action::Done { .. } => "done",
            Action::Rate { .. } => "rate",
            Action::Chat { .. } => "chat",
            Action::Call { .. } => "call",
        }
    }
}

/// On-disk shape of a scenario file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioDoc {
    #[serde(default)]
    pub horizon: Option<u64>,
    pub steps: Vec<Step>,
}

impl ScenarioDoc {
    pub fn parse(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::Parse(e.to_string()))
    }

    /// Checks every step against the world it will run in: nodes exist,
    /// labels are declared before use and unique, concepts resolve, and
    /// numeric fields are in range.
    pub fn validate(
        &self,
        graph: &SocialGraph,
        taxonomy: &Hierarchy,
        meronomy: &Hierarchy,
    ) -> Result<(), SimError> {
        let mut labels: Vec<&str> = Vec::new();
        for (i, step) in self.steps.iter().enumerate() {
            let at = |msg: String| SimError::Scenario(format!("step {}: {msg}", i + 1));
            if !graph.contains(&crate::ids::NodeId::from(step.node.as_str())) {
                return Err(at(format!("unknown node {:?}", step.node)));
            }
            match &step.action {
                Action::Help {
                    label,
                    activity,
                    object,
                    tau,
                    hops,
                    deadline,
                    ..
                } => {
                    if labels.contains(&label.as_str()) {
                        return Err(at(format!("duplicate request label {label:?}")));
                    }
                    labels.push(label);
                    meronomy
                        .concept(activity)
                        .map_err(|e| at(format!("activity: {e}")))?;
                    taxonomy
                        .concept(object)
                        .map_err(|e| at(format!("object: {e}")))?;
                    if !(0.0..=1.0).contains(tau) {
                        return Err(at(format!("tau {tau} outside [0,1]")));
                    }
                    if *hops < 1 {
                        return Err(at("hops must be at least 1".into()));
                    }
                    if *deadline <= step.t {
                        return Err(at(format!(
                            "deadline {deadline} not after the step time {}",
                            step.t
                        )));
                    }
                }
                Action::Rate { label, value } => {
                    if !labels.contains(&label.as_str()) {
                        return Err(at(format!("unknown request label {label:?}")));
                    }
                    if !(1..=7).contains(value) {
                        return Err(at(format!("rating value {value} outside 1..=7")));
                    }
                }
                Action::Assign { label, volunteer } => {
                    if !labels.contains(&label.as_str()) {
                        return Err(at(format!("unknown request label {label:?}")));
                    }
                    if !graph.contains(&crate::ids::NodeId::from(volunteer.as_str())) {
                        return Err(at(format!("unknown volunteer {volunteer:?}")));
                    }
                }
                other => {
                    if !labels.contains(&other.label()) {
                        return Err(at(format!("unknown request label {:?}", other.label())));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::graph::GraphDoc;
    use super::*;
    use crate::testfix::{care_meronomy, children_taxonomy};

    fn graph() -> SocialGraph {
        SocialGraph::from_doc(&GraphDoc {
            nodes: vec!["a".into(), "b".into()],
            edges: vec![("a".into(), "b".into())],
            trust: vec![],
            ratings: vec![],
        })
        .unwrap()
    }

    #[test]
    fn parses_and_validates_a_script() {
        let doc = ScenarioDoc::parse(
            r#"{"steps":[
                {"t":0,"node":"a","action":{"type":"help","label":"x","activity":"feeding","object":"baby","tau":0.5,"hops":1,"deadline":100}},
                {"t":5,"node":"b","action":{"type":"accept","label":"x"}}
            ]}"#,
        )
        .unwrap();
        doc.validate(&graph(), &children_taxonomy(), &care_meronomy())
            .unwrap();
    }

    #[test]
    fn rejects_forward_label_reference() {
        let doc = ScenarioDoc::parse(
            r#"{"steps":[{"t":5,"node":"b","action":{"type":"accept","label":"x"}}]}"#,
        )
        .unwrap();
        let err = doc
            .validate(&graph(), &children_taxonomy(), &care_meronomy())
            .unwrap_err();
        assert!(matches!(err, SimError::Scenario(_)));
    }

    #[test]
    fn rejects_unknown_concepts_and_bad_ranges() {
        let base = r#"{"steps":[{"t":0,"node":"a","action":{"type":"help","label":"x","activity":"ACT","object":"baby","tau":TAU,"hops":1,"deadline":100}}]}"#;
        let bad_activity = base.replace("ACT", "flying").replace("TAU", "0.5");
        let doc = ScenarioDoc::parse(&bad_activity).unwrap();
        assert!(doc
            .validate(&graph(), &children_taxonomy(), &care_meronomy())
            .is_err());
        let bad_tau = base.replace("ACT", "feeding").replace("TAU", "1.5");
        let doc = ScenarioDoc::parse(&bad_tau).unwrap();
        assert!(doc
            .validate(&graph(), &children_taxonomy(), &care_meronomy())
            .is_err());
    }
}
