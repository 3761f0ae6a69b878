use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::artifact::{ArtifactStore, ContentId, Integrity, StoreError};
use crate::graph::{AttributeKind, AttributePayload, EntityKind, Graph, NodeId};
use crate::name::normalize_name;
use crate::similarity::{EnvProfile, TaskDescriptor};
use crate::skill::{
    self, HAS_SKILL, IN_ENV, PROP_AGENT, PROP_ENVIRONMENT, PROP_ENV_PROFILE, PROP_TASK, PROP_TASK_DESCRIPTOR,
};

use super::IngestError;

/// Everything needed to register one trained skill.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkillManifest {
    pub agent: String,
    pub environment: String,
    pub skill: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_descriptor: Option<TaskDescriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_profile: Option<ContentId>,
    pub network: ContentId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<ContentId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub display: Option<ContentId>,
}

impl SkillManifest {
    pub fn new(agent: &str, environment: &str, skill: &str, network: ContentId) -> Self {
        SkillManifest {
            agent: agent.to_string(),
            environment: environment.to_string(),
            skill: skill.to_string(),
            description: None,
            task_descriptor: None,
            env_profile: None,
            network,
            dataset: None,
            display: None,
        }
    }

    fn content_ids(&self) -> impl Iterator<Item = ContentId> + '_ {
        [Some(self.network), self.dataset, self.display, self.env_profile]
            .into_iter()
            .flatten()
    }

    fn attributes(&self) -> Vec<(AttributeKind, AttributePayload)> {
        let mut out = vec![(AttributeKind::PretrainedNetwork, AttributePayload::Blob(self.network))];
        if let Some(id) = self.dataset {
            out.push((AttributeKind::OfflineDataset, AttributePayload::Blob(id)));
        }
        if let Some(id) = self.display {
            out.push((AttributeKind::SkillDisplay, AttributePayload::Blob(id)));
        }
        if let Some(text) = self.description.as_ref().filter(|t| !t.trim().is_empty()) {
            out.push((
                AttributeKind::Description,
                AttributePayload::Text(text.trim().to_string()),
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Registration {
    pub agent: NodeId,
    pub environment: NodeId,
    pub skill: NodeId,
    /// Nodes created by this call, in creation order. Empty on re-registration.
    pub created: Vec<NodeId>,
}

fn existing_attribute(graph: &Graph, entity: NodeId, kind: AttributeKind) -> Option<(NodeId, &AttributePayload)> {
    graph
        .out_edges(entity, Some(kind.edge_label()))
        .filter_map(|e| graph.attribute(e.dst))
        .find(|a| a.kind == kind)
        .map(|a| (a.id, &a.payload))
}

/// Adds a trained skill to the graph: the agent, environment and skill
/// entities (created when absent), the `has_skill` and `in_env` edges, and
/// one attribute per artifact in the manifest.
///
/// Every referenced blob must be present in `store` and verify. Registering
/// the same manifest twice creates nothing new; registering different
/// artifacts for an existing skill is rejected.
pub fn register_skill(
    m: &SkillManifest,
    graph: &mut Graph,
    store: &ArtifactStore,
) -> Result<Registration, IngestError> {
    let agent = normalize_name(&m.agent);
    let environment = normalize_name(&m.environment);
    let task = normalize_name(&m.skill);
    for (field, value) in [("agent", &agent), ("environment", &environment), ("skill", &task)] {
        if value.is_empty() {
            return Err(IngestError::InvalidManifest(format!("{field} must be non-empty")));
        }
    }

    for id in m.content_ids() {
        match store.verify(&id) {
            Ok(Integrity::Ok) => {}
            Ok(Integrity::Corrupt) => return Err(IngestError::CorruptArtifact(id)),
            Err(StoreError::NotFound(_)) => return Err(IngestError::DanglingArtifact(id)),
            Err(e) => return Err(e.into()),
        }
    }
    if let Some(id) = m.env_profile {
        let (bytes, _) = store.get(&id)?;
        EnvProfile::from_blob(&environment, &bytes)
            .map_err(|e| IngestError::InvalidManifest(format!("env_profile {id}: {e}")))?;
    }

    // Validate against what is already registered before mutating anything.
    let skill_name = skill::skill_node_name(&agent, &task, &environment);
    let existing_skill = graph.lookup(&skill_name, EntityKind::Skill);
    if let Some(id) = existing_skill {
        for (kind, payload) in m.attributes() {
            if let Some((_, current)) = existing_attribute(graph, id, kind) {
                if *current != payload {
                    return Err(IngestError::InvalidManifest(format!(
                        "{skill_name} already has a different {} attribute",
                        kind.edge_label()
                    )));
                }
            }
        }
        let props = &graph.entity(id).expect("looked up").props;
        if let (Some(current), Some(new)) = (props.get(PROP_TASK_DESCRIPTOR), &m.task_descriptor) {
            if *current != new.to_prop() {
                return Err(IngestError::InvalidManifest(format!(
                    "{skill_name} already has task descriptor [{current}]"
                )));
            }
        }
    }
    if let (Some(env), Some(new)) = (graph.lookup(&environment, EntityKind::Environment), m.env_profile) {
        if let Some(current) = graph.entity(env).and_then(|e| e.props.get(PROP_ENV_PROFILE)) {
            if *current != new.to_string() {
                return Err(IngestError::InvalidManifest(format!(
                    "environment {environment} already has profile {current}"
                )));
            }
        }
    }

    let mut created = Vec::new();
    let mut ensure = |graph: &mut Graph, name: &str, kind| -> Result<NodeId, IngestError> {
        let (id, fresh) = graph.ensure_entity(name, kind)?;
        if fresh {
            created.push(id);
        }
        Ok(id)
    };
    let agent_id = ensure(graph, &agent, EntityKind::Agent)?;
    let env_id = ensure(graph, &environment, EntityKind::Environment)?;
    let skill_id = match existing_skill {
        Some(id) => id,
        None => {
            let props = BTreeMap::from([
                (PROP_AGENT.to_string(), agent.clone()),
                (PROP_TASK.to_string(), task.clone()),
                (PROP_ENVIRONMENT.to_string(), environment.clone()),
            ]);
            let id = graph.create_entity(&skill_name, EntityKind::Skill, props)?;
            created.push(id);
            id
        }
    };
    if let Some(d) = &m.task_descriptor {
        graph.set_prop(skill_id, PROP_TASK_DESCRIPTOR, &d.to_prop())?;
    }
    if let Some(id) = m.env_profile {
        graph.set_prop(env_id, PROP_ENV_PROFILE, &id.to_string())?;
    }
    graph.add_edge(agent_id, HAS_SKILL, skill_id)?;
    graph.add_edge(skill_id, IN_ENV, env_id)?;

    for (kind, payload) in m.attributes() {
        if existing_attribute(graph, skill_id, kind).is_some() {
            continue;
        }
        let attr = graph.create_attribute(kind, payload)?;
        created.push(attr);
        graph.add_edge(skill_id, kind.edge_label(), attr)?;
    }

    Ok(Registration {
        agent: agent_id,
        environment: env_id,
        skill: skill_id,
        created,
    })
}
