//! Knowledge fusion: triple dump import, dictionary-based entity
//! extraction, rule-based relation extraction and skill registration.

mod gazetteer;
mod manifest;
mod rules;

use std::io::{self, BufRead};

use thiserror::Error;

use crate::artifact::{ContentId, StoreError};
use crate::graph::{EntityKind, Graph, GraphError, NodeId, Triple};
use crate::name::{normalize_name, MAX_NAME_CHARS};

pub use gazetteer::{extract_entities, Gazetteer, GazetteerEntry, Mention};
pub use manifest::{register_skill, Registration, SkillManifest};
pub use rules::{extract_relations, RelationRule, RuleSet};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed triple line: {0}")]
    MalformedLine(String),
    #[error("invalid gazetteer: {0}")]
    InvalidGazetteer(String),
    #[error("gazetteer surface {surface:?} maps to both {existing} and {new}")]
    GazetteerConflict {
        surface: String,
        existing: String,
        new: String,
    },
    #[error("invalid relation rules: {0}")]
    InvalidRule(String),
    #[error("invalid skill manifest: {0}")]
    InvalidManifest(String),
    #[error("manifest references {0}, which is not in the artifact store")]
    DanglingArtifact(ContentId),
    #[error("manifest references {0}, which fails verification")]
    CorruptArtifact(ContentId),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Parses `subject\tpredicate\tobject`. Subject and object are normalized
/// like entity names; the predicate is only trimmed.
pub fn parse_triple_line(line: &str) -> Result<Triple, IngestError> {
    let line = line.trim_end_matches(['\n', '\r']);
    let fields: Vec<&str> = line.split('\t').collect();
    let [subject, predicate, object] = fields[..] else {
        return Err(IngestError::MalformedLine(format!(
            "expected 3 tab-separated fields, found {}",
            fields.len()
        )));
    };
    let subject = normalize_name(subject);
    let predicate = predicate.trim().to_string();
    let object = normalize_name(object);
    if subject.is_empty() || predicate.is_empty() || object.is_empty() {
        return Err(IngestError::MalformedLine("empty field".into()));
    }
    if subject.chars().count() > MAX_NAME_CHARS || object.chars().count() > MAX_NAME_CHARS {
        return Err(IngestError::MalformedLine(format!(
            "name longer than {MAX_NAME_CHARS} characters"
        )));
    }
    Ok(Triple {
        subject,
        predicate,
        object,
    })
}

/// Outcome of one import. Blank lines and `#` comments are not counted, so
/// `lines_read == imported + duplicates + malformed.len()` always holds.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ImportReport {
    pub lines_read: usize,
    pub imported: usize,
    pub duplicates: usize,
    /// 1-based line numbers with the reason.
    pub malformed: Vec<(usize, String)>,
}

fn resolve_node(graph: &mut Graph, name: &str, gazetteer: Option<&Gazetteer>) -> Result<NodeId, GraphError> {
    match gazetteer.and_then(|g| g.resolve(name)) {
        Some(entry) => {
            let (canonical, kind) = (entry.canonical.clone(), entry.kind);
            Ok(graph.ensure_entity(&canonical, kind)?.0)
        }
        None => Ok(graph.ensure_entity(name, EntityKind::Fact)?.0),
    }
}

/// Imports TSV triple lines. Subjects and objects become `Fact` entities
/// unless the gazetteer maps them to a canonical entity of another kind.
/// Malformed lines are counted, never fatal. Re-importing is idempotent.
pub fn import_triples<I, S>(lines: I, graph: &mut Graph, gazetteer: Option<&Gazetteer>) -> ImportReport
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut report = ImportReport::default();
    for (i, line) in lines.into_iter().enumerate() {
        let line = line.as_ref();
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        report.lines_read += 1;
        let triple = match parse_triple_line(line) {
            Ok(t) => t,
            Err(e) => {
                report.malformed.push((i + 1, e.to_string()));
                continue;
            }
        };
        let outcome = (|| -> Result<bool, GraphError> {
            let s = resolve_node(graph, &triple.subject, gazetteer)?;
            let o = resolve_node(graph, &triple.object, gazetteer)?;
            if graph.find_edge(s, &triple.predicate, o).is_some() {
                return Ok(false);
            }
            graph.add_edge(s, &triple.predicate, o)?;
            Ok(true)
        })();
        match outcome {
            Ok(true) => report.imported += 1,
            Ok(false) => report.duplicates += 1,
            Err(e) => report.malformed.push((i + 1, e.to_string())),
        }
    }
    report
}

/// [`import_triples`] over a reader.
pub fn import_reader<R: BufRead>(
    reader: R,
    graph: &mut Graph,
    gazetteer: Option<&Gazetteer>,
) -> io::Result<ImportReport> {
    let lines = reader.lines().collect::<io::Result<Vec<String>>>()?;
    Ok(import_triples(lines, graph, gazetteer))
}
