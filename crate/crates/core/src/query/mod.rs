//! Template question answering.
//!
//! A query goes through two steps: [`parse_query`] matches it against an
//! ordered [`TemplateSet`] and resolves the slots to canonical names, then
//! [`answer`] turns the resulting [`QueryIntent`] into triples, artifact ids,
//! a display reference or a ranked recommendation.

mod format;
mod template;

use serde::Serialize;
use thiserror::Error;

use crate::artifact::ContentId;
use crate::graph::{AttributeKind, EntityKind, Graph, Triple};
use crate::similarity::{self, ProfileSource, RankedCandidates, SimilarityError, SkillSpec};
use crate::skill;

pub use format::{format_answer, OutputMode};
pub use template::{parse_query, IntentTag, Part, QueryTemplate, Slot, TemplateSet};

/// Default template list, one `intent_tag|pattern` per line.
pub const DEFAULT_TEMPLATES: &str = include_str!("../../data/templates.txt");

/// Relation rendered in skill-list answers.
pub const SKILL_LIST_RELATION: &str = "have";

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("invalid template: {0}")]
    InvalidTemplate(String),
    #[error("unrecognized query {query:?}{}", nearest.as_ref().map(|n| format!(" (closest template: {n:?})")).unwrap_or_default())]
    Unrecognized { query: String, nearest: Option<String> },
    #[error("no known {slot} matches {value:?}")]
    UnknownSlotValue { slot: String, value: String },
    #[error("unknown entity {0:?}")]
    UnknownEntity(String),
    #[error("no skill {skill} for {agent} in {environment}")]
    SkillNotFound {
        agent: String,
        skill: String,
        environment: String,
    },
    #[error("{skill} has no {what}")]
    NoArtifact { skill: String, what: &'static str },
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "intent", rename_all = "snake_case")]
pub enum QueryIntent {
    SkillList {
        agent: String,
    },
    ShowSkill {
        agent: String,
        skill: String,
        environment: String,
    },
    FetchModel {
        agent: String,
        skill: String,
        environment: String,
    },
    FactLookup {
        entity: String,
        relation: String,
    },
    RecommendPretrain {
        spec: SkillSpec,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArtifactRole {
    Network,
    Dataset,
}

impl ArtifactRole {
    pub fn as_str(self) -> &'static str {
        match self {
            ArtifactRole::Network => "network",
            ArtifactRole::Dataset => "dataset",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Triples(Vec<Triple>),
    Artifacts {
        skill: String,
        ids: Vec<(ArtifactRole, ContentId)>,
    },
    Media {
        skill: String,
        display: ContentId,
    },
    Ranked(RankedCandidates),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Answer {
    pub intent: QueryIntent,
    pub payload: Payload,
    pub warnings: Vec<String>,
}

fn require_skill(
    graph: &Graph,
    agent: &str,
    task: &str,
    environment: &str,
) -> Result<(String, crate::graph::NodeId), QueryError> {
    if graph.lookup(agent, EntityKind::Agent).is_none() {
        return Err(QueryError::UnknownEntity(agent.to_string()));
    }
    let id = skill::find_skill(graph, agent, task, environment).ok_or_else(|| QueryError::SkillNotFound {
        agent: agent.to_string(),
        skill: task.to_string(),
        environment: environment.to_string(),
    })?;
    let name = graph.entity(id).map(|e| e.name.clone()).unwrap_or_default();
    Ok((name, id))
}

/// Resolves an intent against the graph. `profiles` supplies environment
/// profiles for recommendations.
pub fn answer<P: ProfileSource>(intent: &QueryIntent, graph: &Graph, profiles: &P) -> Result<Answer, QueryError> {
    let mut warnings = Vec::new();
    let payload = match intent {
        QueryIntent::SkillList { agent } => {
            let id = graph
                .lookup(agent, EntityKind::Agent)
                .ok_or_else(|| QueryError::UnknownEntity(agent.clone()))?;
            let subject = graph.entity(id).map(|e| e.name.clone()).unwrap_or_default();
            Payload::Triples(
                skill::skills_of(graph, id)
                    .into_iter()
                    .map(|s| {
                        Triple::new(
                            subject.clone(),
                            SKILL_LIST_RELATION,
                            format!("{}@{}", s.task, s.environment),
                        )
                    })
                    .collect(),
            )
        }
        QueryIntent::ShowSkill {
            agent,
            skill: task,
            environment,
        } => {
            let (name, id) = require_skill(graph, agent, task, environment)?;
            let display = skill::attribute_blobs(graph, id, AttributeKind::SkillDisplay)
                .into_iter()
                .next()
                .ok_or(QueryError::NoArtifact {
                    skill: name.clone(),
                    what: "display media",
                })?;
            Payload::Media { skill: name, display }
        }
        QueryIntent::FetchModel {
            agent,
            skill: task,
            environment,
        } => {
            let (name, id) = require_skill(graph, agent, task, environment)?;
            let mut ids: Vec<(ArtifactRole, ContentId)> =
                skill::attribute_blobs(graph, id, AttributeKind::PretrainedNetwork)
                    .into_iter()
                    .map(|c| (ArtifactRole::Network, c))
                    .collect();
            if ids.is_empty() {
                return Err(QueryError::NoArtifact {
                    skill: name,
                    what: "pre-trained network",
                });
            }
            ids.extend(
                skill::attribute_blobs(graph, id, AttributeKind::OfflineDataset)
                    .into_iter()
                    .map(|c| (ArtifactRole::Dataset, c)),
            );
            Payload::Artifacts { skill: name, ids }
        }
        QueryIntent::FactLookup { entity, relation } => {
            let ids = graph.lookup_any(entity);
            if ids.is_empty() {
                return Err(QueryError::UnknownEntity(entity.clone()));
            }
            let mut triples = Vec::new();
            for id in ids {
                triples.extend(graph.triplets(id, Some(relation)).expect("looked-up node exists"));
            }
            Payload::Triples(triples)
        }
        QueryIntent::RecommendPretrain { spec } => {
            let ranked = similarity::select_pretrained(spec, graph, profiles)?;
            warnings.extend(ranked.warnings.iter().cloned());
            Payload::Ranked(ranked)
        }
    };
    Ok(Answer {
        intent: intent.clone(),
        payload,
        warnings,
    })
}
