//! How skills are laid out in the graph.
//!
//! A skill is an entity of kind [`EntityKind::Skill`] named
//! `<agent>/<task>@<environment>`. It is reached from its agent through a
//! `has_skill` edge, points at its environment through `in_env`, and keeps
//! the agent, task and environment names as props so readers never need to
//! parse the node name. The environment's sampled-state profile is a
//! `env_profile` prop on the environment entity.

use crate::artifact::ContentId;
use crate::graph::{AttributeKind, EntityKind, Graph, NodeId};
use crate::name::normalize_name;
use crate::similarity::TaskDescriptor;

pub const HAS_SKILL: &str = "has_skill";
pub const IN_ENV: &str = "in_env";

pub const PROP_AGENT: &str = "agent";
pub const PROP_TASK: &str = "task";
pub const PROP_ENVIRONMENT: &str = "environment";
pub const PROP_TASK_DESCRIPTOR: &str = "task_descriptor";
pub const PROP_ENV_PROFILE: &str = "env_profile";

/// Canonical node name for the skill `task` of `agent` in `environment`.
pub fn skill_node_name(agent: &str, task: &str, environment: &str) -> String {
    format!(
        "{}/{}@{}",
        normalize_name(agent),
        normalize_name(task),
        normalize_name(environment)
    )
}

/// Read-only view of one registered skill.
#[derive(Debug, Clone, PartialEq)]
pub struct SkillView {
    pub id: NodeId,
    pub name: String,
    pub agent: String,
    pub task: String,
    pub environment: String,
    pub descriptor: Option<TaskDescriptor>,
}

impl SkillView {
    pub fn of(graph: &Graph, id: NodeId) -> Option<SkillView> {
        let e = graph.entity(id).filter(|e| e.kind == EntityKind::Skill)?;
        let prop = |k: &str| e.props.get(k).cloned();
        Some(SkillView {
            id,
            name: e.name.clone(),
            agent: prop(PROP_AGENT)?,
            task: prop(PROP_TASK)?,
            environment: prop(PROP_ENVIRONMENT)?,
            descriptor: e
                .props
                .get(PROP_TASK_DESCRIPTOR)
                .and_then(|s| TaskDescriptor::parse_prop(s).ok()),
        })
    }
}

/// Skills reachable from `agent` over `has_skill`, in edge order.
pub fn skills_of(graph: &Graph, agent: NodeId) -> Vec<SkillView> {
    graph
        .out_edges(agent, Some(HAS_SKILL))
        .filter_map(|e| SkillView::of(graph, e.dst))
        .collect()
}

/// Resolves `(agent, task, environment)` to the skill node.
pub fn find_skill(graph: &Graph, agent: &str, task: &str, environment: &str) -> Option<NodeId> {
    graph.lookup(&skill_node_name(agent, task, environment), EntityKind::Skill)
}

/// Content ids of the attributes of `kind` attached to `entity`.
pub fn attribute_blobs(graph: &Graph, entity: NodeId, kind: AttributeKind) -> Vec<ContentId> {
    graph
        .out_edges(entity, Some(kind.edge_label()))
        .filter_map(|e| graph.attribute(e.dst))
        .filter(|a| a.kind == kind)
        .filter_map(|a| match a.payload {
            crate::graph::AttributePayload::Blob(id) => Some(id),
            crate::graph::AttributePayload::Text(_) => None,
        })
        .collect()
}

/// The profile blob registered for the environment named `environment`.
pub fn env_profile_id(graph: &Graph, environment: &str) -> Option<ContentId> {
    let env = graph.lookup(environment, EntityKind::Environment)?;
    graph.entity(env)?.props.get(PROP_ENV_PROFILE)?.parse().ok()
}

/// Every task name known to the graph, sorted and deduplicated.
pub fn known_tasks(graph: &Graph) -> Vec<String> {
    let mut tasks: Vec<String> = graph
        .entities_of_kind(EntityKind::Skill)
        .filter_map(|e| e.props.get(PROP_TASK).cloned())
        .collect();
    tasks.sort();
    tasks.dedup();
    tasks
}
