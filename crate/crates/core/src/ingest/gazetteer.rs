use std::collections::HashMap;

use crate::graph::{EntityKind, Graph};
use crate::name::{normalize_name, tokenize};
use crate::skill::PROP_TASK;

use super::IngestError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GazetteerEntry {
    pub canonical: String,
    pub kind: EntityKind,
}

/// Dictionary of surface forms, matched longest-first over token runs.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    entries: HashMap<String, GazetteerEntry>,
    /// Longest surface form, in tokens.
    max_tokens: usize,
}

/// One recognised mention. `start..end` is a byte span of the input text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mention {
    pub start: usize,
    pub end: usize,
    pub canonical: String,
    pub kind: EntityKind,
}

impl Gazetteer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a surface form. Re-adding the same mapping is a no-op; mapping a
    /// surface to a different entry is an error.
    pub fn insert(&mut self, surface: &str, canonical: &str, kind: EntityKind) -> Result<(), IngestError> {
        let key = normalize_name(surface);
        let canonical = normalize_name(canonical);
        if key.is_empty() || canonical.is_empty() {
            return Err(IngestError::InvalidGazetteer(format!(
                "empty surface or canonical name in {surface:?} -> {canonical:?}"
            )));
        }
        let entry = GazetteerEntry { canonical, kind };
        if let Some(existing) = self.entries.get(&key) {
            if *existing != entry {
                return Err(IngestError::GazetteerConflict {
                    surface: key,
                    existing: format!("{}/{}", existing.canonical, existing.kind),
                    new: format!("{}/{}", entry.canonical, entry.kind),
                });
            }
            return Ok(());
        }
        self.max_tokens = self.max_tokens.max(tokenize(surface).len());
        self.entries.insert(key, entry);
        Ok(())
    }

    /// Parses `surface\tcanonical\tkind` lines; `#` starts a comment.
    pub fn from_tsv(text: &str) -> Result<Self, IngestError> {
        let mut g = Gazetteer::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [surface, canonical, kind] = fields[..] else {
                return Err(IngestError::InvalidGazetteer(format!(
                    "line {}: expected 3 tab-separated fields",
                    i + 1
                )));
            };
            let kind: EntityKind = kind
                .parse()
                .map_err(|e| IngestError::InvalidGazetteer(format!("line {}: {e}", i + 1)))?;
            g.insert(surface, canonical, kind)?;
        }
        Ok(g)
    }

    /// Adds identity entries for every entity name, alias and skill task in
    /// `graph`. Surfaces already present are left alone.
    pub fn extend_from_graph(&mut self, graph: &Graph) {
        let mut add = |surface: &str, kind: EntityKind| {
            if !self.entries.contains_key(surface) {
                let _ = self.insert(surface, surface, kind);
            }
        };
        for e in graph.entities() {
            if e.kind == EntityKind::Skill {
                if let Some(task) = e.props.get(PROP_TASK) {
                    add(task, EntityKind::Skill);
                }
            } else {
                add(&e.name, e.kind);
            }
        }
        for (alias, kind, target) in graph.aliases() {
            if kind != EntityKind::Skill {
                if let Some(e) = graph.entity(target) {
                    let name = e.name.clone();
                    if !self.entries.contains_key(&alias) {
                        let _ = self.insert(&alias, &name, kind);
                    }
                }
            }
        }
    }

    pub fn resolve(&self, surface: &str) -> Option<&GazetteerEntry> {
        self.entries.get(&normalize_name(surface))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `(surface, entry)` pairs sorted by surface.
    pub fn entries(&self) -> Vec<(&str, &GazetteerEntry)> {
        let mut v: Vec<_> = self.entries.iter().map(|(k, e)| (k.as_str(), e)).collect();
        v.sort_by(|a, b| a.0.cmp(b.0));
        v
    }
}

/// Left-to-right longest-match entity extraction. Mentions never overlap
/// and come out sorted by start offset.
pub fn extract_entities(text: &str, gazetteer: &Gazetteer) -> Vec<Mention> {
    let tokens = tokenize(text);
    let mut mentions = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let longest = gazetteer.max_tokens.min(tokens.len() - i);
        let hit = (1..=longest).rev().find_map(|n| {
            let (start, end) = (tokens[i].start, tokens[i + n - 1].end);
            gazetteer.resolve(&text[start..end]).map(|e| (n, start, end, e))
        });
        match hit {
            Some((n, start, end, entry)) => {
                mentions.push(Mention {
                    start,
                    end,
                    canonical: entry.canonical.clone(),
                    kind: entry.kind,
                });
                i += n;
            }
            None => i += 1,
        }
    }
    mentions
}
