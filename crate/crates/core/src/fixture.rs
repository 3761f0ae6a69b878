//! The bundled demo dataset: a small base knowledge dump plus 23 trained
//! skills across humanoid, ant, half cheetah and two quadruped robots, with
//! synthetic artifacts and environment profiles.
//!
//! Artifact bytes are derived from the skill name, so the same fixture always
//! yields the same content ids and the same snapshot.

use thiserror::Error;

use crate::artifact::{ArtifactStore, BlobMeta, ContentId, MediaKind, StoreError};
use crate::graph::Graph;
use crate::ingest::{self, Gazetteer, ImportReport, IngestError, RuleSet, SkillManifest};
use crate::query::{QueryError, TemplateSet, DEFAULT_TEMPLATES};
use crate::similarity::{EnvProfile, SimilarityError, TaskDescriptor};

pub const GAZETTEER_TSV: &str = include_str!("../data/gazetteer.tsv");
pub const RELATION_RULES_TSV: &str = include_str!("../data/relation_rules.tsv");
pub const SKILLS_TSV: &str = include_str!("../data/skills.tsv");
pub const ENV_PROFILES_TSV: &str = include_str!("../data/env_profiles.tsv");
pub const BASE_FACTS_TSV: &str = include_str!("../data/base_facts.tsv");

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("bad fixture row {line}: {msg}")]
    BadRow { line: usize, msg: String },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error(transparent)]
    Query(#[from] QueryError),
}

/// One row of the skill table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureSkill {
    pub agent: String,
    pub environment: String,
    pub task: String,
    pub display: bool,
}

fn data_rows(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| (i + 1, l.split('\t').collect()))
}

pub fn skills() -> Result<Vec<FixtureSkill>, FixtureError> {
    data_rows(SKILLS_TSV)
        .map(|(line, f)| match f[..] {
            [agent, environment, task, display] => Ok(FixtureSkill {
                agent: agent.to_string(),
                environment: environment.to_string(),
                task: task.to_string(),
                display: display == "yes",
            }),
            _ => Err(FixtureError::BadRow {
                line,
                msg: "expected 4 fields".into(),
            }),
        })
        .collect()
}

pub fn env_profiles() -> Result<Vec<EnvProfile>, FixtureError> {
    data_rows(ENV_PROFILES_TSV)
        .map(|(line, f)| {
            let [env, note, samples] = f[..] else {
                return Err(FixtureError::BadRow {
                    line,
                    msg: "expected 3 fields".into(),
                });
            };
            let rows = samples
                .split(';')
                .map(|r| {
                    r.split(',')
                        .map(|v| v.trim().parse::<f64>())
                        .collect::<Result<Vec<_>, _>>()
                })
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| FixtureError::BadRow {
                    line,
                    msg: e.to_string(),
                })?;
            Ok(EnvProfile::new(env, &rows)?.with_note(note))
        })
        .collect()
}

pub fn gazetteer() -> Result<Gazetteer, FixtureError> {
    Ok(Gazetteer::from_tsv(GAZETTEER_TSV)?)
}

pub fn relation_rules() -> Result<RuleSet, FixtureError> {
    Ok(RuleSet::from_tsv(RELATION_RULES_TSV)?)
}

pub fn templates() -> Result<TemplateSet, FixtureError> {
    Ok(TemplateSet::parse(DEFAULT_TEMPLATES)?)
}

/// Deterministic stand-in bytes for one artifact of a fixture skill.
pub fn synthetic_blob(kind: MediaKind, skill: &FixtureSkill) -> Vec<u8> {
    format!(
        "synthetic {} for {}/{}@{}\n",
        kind.as_str(),
        skill.agent,
        skill.task,
        skill.environment
    )
    .into_bytes()
}

#[derive(Debug, Clone)]
pub struct DemoSummary {
    pub facts: ImportReport,
    pub skills: usize,
    pub profiles: Vec<(String, ContentId)>,
}

/// Loads the base facts and registers every fixture skill into `graph`,
/// writing artifacts into `store`. Loading twice changes nothing.
pub fn load_demo(graph: &mut Graph, store: &ArtifactStore) -> Result<DemoSummary, FixtureError> {
    let gazetteer = gazetteer()?;
    let facts = ingest::import_triples(BASE_FACTS_TSV.lines(), graph, Some(&gazetteer));

    let mut profiles = Vec::new();
    for p in env_profiles()? {
        let id = store.put(&p.to_blob(), BlobMeta::new(MediaKind::Profile).with_label(&p.name))?;
        profiles.push((p.name.clone(), id));
    }
    let profile_of = |env: &str| profiles.iter().find(|(n, _)| n == env).map(|(_, id)| *id);

    let skills = skills()?;
    for s in &skills {
        let put = |kind: MediaKind| store.put(&synthetic_blob(kind, s), BlobMeta::new(kind).with_label(&s.task));
        let mut m = SkillManifest::new(&s.agent, &s.environment, &s.task, put(MediaKind::Network)?);
        m.dataset = Some(put(MediaKind::Dataset)?);
        if s.display {
            m.display = Some(put(MediaKind::Display)?);
        }
        m.description = Some(format!(
            "{} {} in the {} environment",
            s.agent.replace('_', " "),
            s.task.replace('_', " "),
            s.environment
        ));
        m.task_descriptor = TaskDescriptor::for_direction_task(&s.task);
        m.env_profile = profile_of(&s.environment);
        ingest::register_skill(&m, graph, store)?;
    }
    Ok(DemoSummary {
        facts,
        skills: skills.len(),
        profiles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tables_parse() {
        assert_eq!(skills().unwrap().len(), 23);
        assert_eq!(env_profiles().unwrap().len(), 4);
        gazetteer().unwrap();
        relation_rules().unwrap();
        templates().unwrap();
    }
}
