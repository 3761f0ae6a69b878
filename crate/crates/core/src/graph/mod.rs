//! Typed property graph of entity and attribute nodes.
//!
//! Entities (facts, agents, environments, skills) carry a normalized name and
//! are indexed by `(name, kind)` in a hash table. Attributes (descriptions,
//! networks, datasets, displays) hang off entities through a fixed set of
//! edge labels. Edges are kept in id order, so every listing is
//! deterministic.
//!
//! A [`Graph`] is a plain value: share it behind an `RwLock` for the
//! many-readers/one-writer contract.

mod snapshot;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::artifact::ContentId;
use crate::name::{normalize_name, MAX_NAME_CHARS};

pub use snapshot::SnapshotError;

/// Edge labels allowed from an entity to an attribute node.
pub const ATTRIBUTE_LABELS: [&str; 4] = ["described_by", "has_network", "has_dataset", "has_display"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntityKind {
    Fact,
    Agent,
    Environment,
    Skill,
}

impl EntityKind {
    pub const ALL: [EntityKind; 4] = [
        EntityKind::Fact,
        EntityKind::Agent,
        EntityKind::Environment,
        EntityKind::Skill,
    ];

    fn index(self) -> usize {
        self as usize
    }

    pub(crate) fn tag(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.get(tag as usize).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Fact => "fact",
            EntityKind::Agent => "agent",
            EntityKind::Environment => "environment",
            EntityKind::Skill => "skill",
        }
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown entity kind {0:?}")]
pub struct UnknownKind(pub String);

impl FromStr for EntityKind {
    type Err = UnknownKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "fact" => Ok(EntityKind::Fact),
            "agent" => Ok(EntityKind::Agent),
            "environment" => Ok(EntityKind::Environment),
            "skill" => Ok(EntityKind::Skill),
            _ => Err(UnknownKind(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttributeKind {
    Description,
    PretrainedNetwork,
    OfflineDataset,
    SkillDisplay,
}

impl AttributeKind {
    pub(crate) fn tag(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        [
            AttributeKind::Description,
            AttributeKind::PretrainedNetwork,
            AttributeKind::OfflineDataset,
            AttributeKind::SkillDisplay,
        ]
        .get(tag as usize)
        .copied()
    }

    /// The edge label conventionally used to attach this attribute.
    pub fn edge_label(self) -> &'static str {
        match self {
            AttributeKind::Description => "described_by",
            AttributeKind::PretrainedNetwork => "has_network",
            AttributeKind::OfflineDataset => "has_dataset",
            AttributeKind::SkillDisplay => "has_display",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttributePayload {
    Text(String),
    Blob(ContentId),
}

impl AttributePayload {
    /// Short rendering used as a triple object.
    pub fn summary(&self) -> String {
        match self {
            AttributePayload::Text(text) => text.clone(),
            AttributePayload::Blob(id) => id.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityNode {
    pub id: NodeId,
    pub name: String,
    pub kind: EntityKind,
    pub props: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeNode {
    pub id: NodeId,
    pub kind: AttributeKind,
    pub payload: AttributePayload,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    Entity(EntityNode),
    Attribute(AttributeNode),
}

impl Node {
    pub fn id(&self) -> NodeId {
        match self {
            Node::Entity(e) => e.id,
            Node::Attribute(a) => a.id,
        }
    }

    pub fn as_entity(&self) -> Option<&EntityNode> {
        match self {
            Node::Entity(e) => Some(e),
            Node::Attribute(_) => None,
        }
    }

    pub fn as_attribute(&self) -> Option<&AttributeNode> {
        match self {
            Node::Attribute(a) => Some(a),
            Node::Entity(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub id: EdgeId,
    pub src: NodeId,
    pub label: String,
    pub dst: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

impl Triple {
    pub fn new(subject: impl Into<String>, predicate: impl Into<String>, object: impl Into<String>) -> Self {
        Triple {
            subject: subject.into(),
            predicate: predicate.into(),
            object: object.into(),
        }
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.subject, self.predicate, self.object)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("entity {name:?} of kind {kind} already exists")]
    DuplicateEntity { name: String, kind: EntityKind },
    #[error("invalid entity name {0:?}: must be 1..=256 characters after normalization")]
    InvalidName(String),
    #[error("{kind:?} attribute cannot carry a {found} payload")]
    PayloadKindMismatch { kind: AttributeKind, found: &'static str },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("label {0:?} cannot point at an attribute node")]
    IllegalAttributeLabel(String),
    #[error("edge source {0} is not an entity node")]
    SourceNotEntity(NodeId),
    #[error("edge label must be non-empty")]
    EmptyLabel,
    #[error("cannot merge {keep_kind} entity with {absorb_kind} entity")]
    KindMismatch {
        keep_kind: EntityKind,
        absorb_kind: EntityKind,
    },
}

/// Per-name slots, one per [`EntityKind`].
type KindSlots = [Option<NodeId>; 4];

#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: BTreeMap<NodeId, Node>,
    edges: BTreeMap<EdgeId, Edge>,
    out_edges: HashMap<NodeId, BTreeSet<EdgeId>>,
    in_edges: HashMap<NodeId, BTreeSet<EdgeId>>,
    edge_index: HashMap<(NodeId, String, NodeId), EdgeId>,
    names: HashMap<String, KindSlots>,
    aliases: HashMap<String, KindSlots>,
    next_node: u64,
    next_edge: u64,
}

impl PartialEq for Graph {
    fn eq(&self, other: &Self) -> bool {
        self.to_snapshot_bytes() == other.to_snapshot_bytes()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn alloc_node(&mut self) -> NodeId {
        let id = NodeId(self.next_node);
        self.next_node += 1;
        id
    }

    fn checked_name(raw: &str) -> Result<String, GraphError> {
        let name = normalize_name(raw);
        if name.is_empty() || name.chars().count() > MAX_NAME_CHARS {
            return Err(GraphError::InvalidName(raw.to_string()));
        }
        Ok(name)
    }

    pub fn create_entity(
        &mut self,
        name: &str,
        kind: EntityKind,
        props: BTreeMap<String, String>,
    ) -> Result<NodeId, GraphError> {
        let name = Self::checked_name(name)?;
        if self.lookup(&name, kind).is_some() {
            return Err(GraphError::DuplicateEntity { name, kind });
        }
        let id = self.alloc_node();
        self.names.entry(name.clone()).or_default()[kind.index()] = Some(id);
        self.nodes
            .insert(id, Node::Entity(EntityNode { id, name, kind, props }));
        Ok(id)
    }

    /// Returns the entity `(name, kind)`, creating it when absent.
    pub fn ensure_entity(&mut self, name: &str, kind: EntityKind) -> Result<(NodeId, bool), GraphError> {
        let normalized = Self::checked_name(name)?;
        match self.lookup(&normalized, kind) {
            Some(id) => Ok((id, false)),
            None => Ok((self.create_entity(&normalized, kind, BTreeMap::new())?, true)),
        }
    }

    pub fn create_attribute(&mut self, kind: AttributeKind, payload: AttributePayload) -> Result<NodeId, GraphError> {
        match (kind, &payload) {
            (AttributeKind::Description, AttributePayload::Text(_)) => {}
            (AttributeKind::Description, AttributePayload::Blob(_)) => {
                return Err(GraphError::PayloadKindMismatch {
                    kind,
                    found: "content-id",
                })
            }
            (_, AttributePayload::Text(_)) => {
                return Err(GraphError::PayloadKindMismatch {
                    kind,
                    found: "inline text",
                })
            }
            (_, AttributePayload::Blob(_)) => {}
        }
        let id = self.alloc_node();
        self.nodes
            .insert(id, Node::Attribute(AttributeNode { id, kind, payload }));
        Ok(id)
    }

    /// Adds `src -label-> dst`. Re-adding an existing edge returns its id.
    pub fn add_edge(&mut self, src: NodeId, label: &str, dst: NodeId) -> Result<EdgeId, GraphError> {
        let label = label.trim();
        if label.is_empty() {
            return Err(GraphError::EmptyLabel);
        }
        match self.nodes.get(&src) {
            None => return Err(GraphError::UnknownNode(src)),
            Some(Node::Attribute(_)) => return Err(GraphError::SourceNotEntity(src)),
            Some(Node::Entity(_)) => {}
        }
        match self.nodes.get(&dst) {
            None => return Err(GraphError::UnknownNode(dst)),
            Some(Node::Attribute(_)) if !ATTRIBUTE_LABELS.contains(&label) => {
                return Err(GraphError::IllegalAttributeLabel(label.to_string()))
            }
            Some(_) => {}
        }
        if let Some(&existing) = self.edge_index.get(&(src, label.to_string(), dst)) {
            return Ok(existing);
        }
        let id = EdgeId(self.next_edge);
        self.next_edge += 1;
        self.insert_edge(Edge {
            id,
            src,
            label: label.to_string(),
            dst,
        });
        Ok(id)
    }

    fn insert_edge(&mut self, edge: Edge) {
        self.edge_index
            .insert((edge.src, edge.label.clone(), edge.dst), edge.id);
        self.out_edges.entry(edge.src).or_default().insert(edge.id);
        self.in_edges.entry(edge.dst).or_default().insert(edge.id);
        self.edges.insert(edge.id, edge);
    }

    fn remove_edge(&mut self, id: EdgeId) -> Option<Edge> {
        let edge = self.edges.remove(&id)?;
        self.edge_index.remove(&(edge.src, edge.label.clone(), edge.dst));
        if let Some(set) = self.out_edges.get_mut(&edge.src) {
            set.remove(&id);
        }
        if let Some(set) = self.in_edges.get_mut(&edge.dst) {
            set.remove(&id);
        }
        Some(edge)
    }

    /// Resolves `(name, kind)` through the name index, then the alias table.
    pub fn lookup(&self, name: &str, kind: EntityKind) -> Option<NodeId> {
        let slot = |table: &HashMap<String, KindSlots>, key: &str| table.get(key).and_then(|s| s[kind.index()]);
        slot(&self.names, name)
            .or_else(|| slot(&self.aliases, name))
            .or_else(|| {
                let normalized = normalize_name(name);
                if normalized == name {
                    return None;
                }
                slot(&self.names, &normalized).or_else(|| slot(&self.aliases, &normalized))
            })
    }

    /// All entities named `name` (directly or through an alias), any kind,
    /// sorted by id.
    pub fn lookup_any(&self, name: &str) -> Vec<NodeId> {
        let normalized = normalize_name(name);
        let mut ids: Vec<NodeId> = [&self.names, &self.aliases]
            .into_iter()
            .filter_map(|table| table.get(&normalized))
            .flat_map(|slots| slots.iter().flatten().copied())
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(&id)
    }

    pub fn entity(&self, id: NodeId) -> Option<&EntityNode> {
        self.nodes.get(&id).and_then(Node::as_entity)
    }

    pub fn attribute(&self, id: NodeId) -> Option<&AttributeNode> {
        self.nodes.get(&id).and_then(Node::as_attribute)
    }

    pub fn edge(&self, id: EdgeId) -> Option<&Edge> {
        self.edges.get(&id)
    }

    pub fn find_edge(&self, src: NodeId, label: &str, dst: NodeId) -> Option<EdgeId> {
        self.edge_index.get(&(src, label.trim().to_string(), dst)).copied()
    }

    pub fn set_prop(&mut self, id: NodeId, key: &str, value: &str) -> Result<(), GraphError> {
        match self.nodes.get_mut(&id) {
            Some(Node::Entity(e)) => {
                e.props.insert(key.to_string(), value.to_string());
                Ok(())
            }
            Some(Node::Attribute(_)) => Err(GraphError::SourceNotEntity(id)),
            None => Err(GraphError::UnknownNode(id)),
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Nodes in id order.
    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn entities(&self) -> impl Iterator<Item = &EntityNode> {
        self.nodes.values().filter_map(Node::as_entity)
    }

    pub fn entities_of_kind(&self, kind: EntityKind) -> impl Iterator<Item = &EntityNode> {
        self.entities().filter(move |e| e.kind == kind)
    }

    /// Edges in id order.
    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.values()
    }

    /// Outgoing edges of `id` in edge-id order, optionally filtered by label.
    pub fn out_edges<'a>(&'a self, id: NodeId, label: Option<&'a str>) -> impl Iterator<Item = &'a Edge> + 'a {
        self.out_edges
            .get(&id)
            .into_iter()
            .flatten()
            .map(|eid| &self.edges[eid])
            .filter(move |e| label.is_none_or(|l| e.label == l))
    }

    /// Incoming edges of `id` in edge-id order.
    pub fn in_edges(&self, id: NodeId) -> impl Iterator<Item = &Edge> + '_ {
        self.in_edges.get(&id).into_iter().flatten().map(|eid| &self.edges[eid])
    }

    /// Render a node as a triple object: entity name or attribute payload.
    pub fn render_object(&self, id: NodeId) -> String {
        match self.nodes.get(&id) {
            Some(Node::Entity(e)) => e.name.clone(),
            Some(Node::Attribute(a)) => a.payload.summary(),
            None => String::new(),
        }
    }

    /// One triple per outgoing edge of `entity`, in edge-id order.
    pub fn triplets(&self, entity: NodeId, relation: Option<&str>) -> Result<Vec<Triple>, GraphError> {
        let subject = match self.nodes.get(&entity) {
            Some(Node::Entity(e)) => e.name.clone(),
            Some(Node::Attribute(_)) => return Ok(Vec::new()),
            None => return Err(GraphError::UnknownNode(entity)),
        };
        Ok(self
            .out_edges(entity, relation)
            .map(|e| Triple::new(subject.clone(), e.label.clone(), self.render_object(e.dst)))
            .collect())
    }

    /// Folds `absorb` into `keep`: edges are re-pointed (duplicates dropped),
    /// missing props are copied, `absorb` is deleted and its name becomes an
    /// alias of `keep`.
    pub fn merge_entities(&mut self, keep: NodeId, absorb: NodeId) -> Result<NodeId, GraphError> {
        let keep_kind = self.entity(keep).ok_or(GraphError::UnknownNode(keep))?.kind;
        let absorbed = self.entity(absorb).ok_or(GraphError::UnknownNode(absorb))?.clone();
        if keep == absorb {
            return Ok(keep);
        }
        if keep_kind != absorbed.kind {
            return Err(GraphError::KindMismatch {
                keep_kind,
                absorb_kind: absorbed.kind,
            });
        }

        let touching: BTreeSet<EdgeId> = self
            .out_edges
            .get(&absorb)
            .into_iter()
            .chain(self.in_edges.get(&absorb))
            .flatten()
            .copied()
            .collect();
        for eid in touching {
            let mut edge = self.remove_edge(eid).expect("indexed edge exists");
            if edge.src == absorb {
                edge.src = keep;
            }
            if edge.dst == absorb {
                edge.dst = keep;
            }
            if !self.edge_index.contains_key(&(edge.src, edge.label.clone(), edge.dst)) {
                self.insert_edge(edge);
            }
        }
        self.out_edges.remove(&absorb);
        self.in_edges.remove(&absorb);

        if let Some(Node::Entity(k)) = self.nodes.get_mut(&keep) {
            for (key, value) in absorbed.props {
                k.props.entry(key).or_insert(value);
            }
        }
        self.nodes.remove(&absorb);
        let slot = absorbed.kind.index();
        if let Some(slots) = self.names.get_mut(&absorbed.name) {
            slots[slot] = None;
            if slots.iter().all(Option::is_none) {
                self.names.remove(&absorbed.name);
            }
        }
        for slots in self.aliases.values_mut() {
            if slots[slot] == Some(absorb) {
                slots[slot] = Some(keep);
            }
        }
        self.aliases.entry(absorbed.name).or_default()[slot] = Some(keep);
        Ok(keep)
    }

    /// Alias entries `(name, kind, target)` sorted by name then kind.
    pub fn aliases(&self) -> Vec<(String, EntityKind, NodeId)> {
        let mut out: Vec<_> = self
            .aliases
            .iter()
            .flat_map(|(name, slots)| {
                EntityKind::ALL
                    .iter()
                    .filter_map(move |k| slots[k.index()].map(|id| (name.clone(), *k, id)))
            })
            .collect();
        out.sort();
        out
    }

    /// Every content id referenced by an attribute node.
    pub fn referenced_content_ids(&self) -> BTreeSet<ContentId> {
        self.nodes
            .values()
            .filter_map(Node::as_attribute)
            .filter_map(|a| match a.payload {
                AttributePayload::Blob(id) => Some(id),
                AttributePayload::Text(_) => None,
            })
            .collect()
    }
}
