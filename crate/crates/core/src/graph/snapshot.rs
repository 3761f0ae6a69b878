//! Canonical single-file snapshot encoding.
//!
//! ```text
//! "KSG1" | version u32 | next_node u64 | next_edge u64
//! section entities   (u64 byte length, then body)
//! section attributes
//! section edges
//! section aliases
//! ```
//!
//! Integers are little-endian, strings are a u32 byte length followed by
//! UTF-8. Every section starts with a u32 record count and lists records in
//! ascending id (or name) order, so equal graphs encode to equal bytes.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use super::*;
use crate::artifact::HashAlg;

const MAGIC: &[u8; 4] = b"KSG1";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("not a graph snapshot (bad magic bytes)")]
    BadMagic,
    #[error("unsupported snapshot version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated snapshot")]
    Truncated,
    #[error("corrupt snapshot: {0}")]
    Corrupt(String),
    #[error("snapshot I/O error: {0}")]
    Io(#[from] io::Error),
}

fn corrupt(msg: impl Into<String>) -> SnapshotError {
    SnapshotError::Corrupt(msg.into())
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }
    fn section(&mut self, body: Writer) {
        self.u64(body.buf.len() as u64);
        self.buf.extend_from_slice(&body.buf);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SnapshotError> {
        if self.buf.len() < n {
            return Err(SnapshotError::Truncated);
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }
    fn u8(&mut self) -> Result<u8, SnapshotError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, SnapshotError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, SnapshotError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn str(&mut self) -> Result<String, SnapshotError> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| corrupt("string is not UTF-8"))
    }
    fn section(&mut self) -> Result<Reader<'a>, SnapshotError> {
        let len = usize::try_from(self.u64()?).map_err(|_| SnapshotError::Truncated)?;
        Ok(Reader { buf: self.take(len)? })
    }
    fn finish(&self, what: &str) -> Result<(), SnapshotError> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(corrupt(format!("trailing bytes in {what}")))
        }
    }
}

impl Graph {
    /// Encodes the graph into its canonical snapshot bytes.
    pub fn to_snapshot_bytes(&self) -> Vec<u8> {
        let mut out = Writer::default();
        out.buf.extend_from_slice(MAGIC);
        out.u32(VERSION);
        out.u64(self.next_node);
        out.u64(self.next_edge);

        let mut entities = Writer::default();
        let mut attributes = Writer::default();
        let (mut n_ent, mut n_attr) = (0u32, 0u32);
        for node in self.nodes.values() {
            match node {
                Node::Entity(e) => {
                    n_ent += 1;
                    entities.u64(e.id.0);
                    entities.u8(e.kind.tag());
                    entities.str(&e.name);
                    entities.u32(e.props.len() as u32);
                    for (k, v) in &e.props {
                        entities.str(k);
                        entities.str(v);
                    }
                }
                Node::Attribute(a) => {
                    n_attr += 1;
                    attributes.u64(a.id.0);
                    attributes.u8(a.kind.tag());
                    match &a.payload {
                        AttributePayload::Text(text) => {
                            attributes.u8(0);
                            attributes.str(text);
                        }
                        AttributePayload::Blob(id) => {
                            attributes.u8(1);
                            attributes.u8(id.alg().tag());
                            attributes.buf.extend_from_slice(id.digest());
                        }
                    }
                }
            }
        }
        out.section(counted(n_ent, entities));
        out.section(counted(n_attr, attributes));

        let mut edges = Writer::default();
        for e in self.edges.values() {
            edges.u64(e.id.0);
            edges.u64(e.src.0);
            edges.str(&e.label);
            edges.u64(e.dst.0);
        }
        out.section(counted(self.edges.len() as u32, edges));

        let aliases = self.aliases();
        let mut body = Writer::default();
        for (name, kind, target) in &aliases {
            body.str(name);
            body.u8(kind.tag());
            body.u64(target.0);
        }
        out.section(counted(aliases.len() as u32, body));
        out.buf
    }

    /// Decodes and validates a snapshot produced by [`Graph::to_snapshot_bytes`].
    pub fn from_snapshot_bytes(bytes: &[u8]) -> Result<Graph, SnapshotError> {
        let mut r = Reader { buf: bytes };
        if r.take(4).map_err(|_| SnapshotError::BadMagic)? != MAGIC {
            return Err(SnapshotError::BadMagic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(SnapshotError::UnsupportedVersion(version));
        }
        let mut g = Graph {
            next_node: r.u64()?,
            next_edge: r.u64()?,
            ..Graph::default()
        };

        let mut entities = r.section()?;
        let mut last: Option<u64> = None;
        let mut check_order = |id: u64, next: u64| -> Result<(), SnapshotError> {
            if id >= next || last.is_some_and(|l| l >= id) {
                return Err(corrupt(format!("node id {id} out of order or beyond allocator")));
            }
            last = Some(id);
            Ok(())
        };
        for _ in 0..entities.u32()? {
            let id = NodeId(entities.u64()?);
            check_order(id.0, g.next_node)?;
            let kind = EntityKind::from_tag(entities.u8()?).ok_or_else(|| corrupt("bad entity kind"))?;
            let name = entities.str()?;
            if normalize_name(&name) != name || name.is_empty() {
                return Err(corrupt(format!("entity name {name:?} is not normalized")));
            }
            let mut props = BTreeMap::new();
            for _ in 0..entities.u32()? {
                let k = entities.str()?;
                props.insert(k, entities.str()?);
            }
            let slots = g.names.entry(name.clone()).or_default();
            if slots[kind.index()].replace(id).is_some() {
                return Err(corrupt(format!("duplicate entity {name:?}/{kind}")));
            }
            g.nodes.insert(id, Node::Entity(EntityNode { id, name, kind, props }));
        }
        entities.finish("entities")?;

        let mut attributes = r.section()?;
        for _ in 0..attributes.u32()? {
            let id = NodeId(attributes.u64()?);
            if id.0 >= g.next_node || g.nodes.contains_key(&id) {
                return Err(corrupt(format!("attribute id {id} reused or beyond allocator")));
            }
            let kind = AttributeKind::from_tag(attributes.u8()?).ok_or_else(|| corrupt("bad attribute kind"))?;
            let payload = match attributes.u8()? {
                0 => AttributePayload::Text(attributes.str()?),
                1 => {
                    let alg = HashAlg::from_tag(attributes.u8()?).ok_or_else(|| corrupt("bad hash tag"))?;
                    let digest: [u8; 32] = attributes.take(32)?.try_into().unwrap();
                    AttributePayload::Blob(ContentId::from_parts(alg, digest))
                }
                t => return Err(corrupt(format!("bad payload tag {t}"))),
            };
            if matches!(
                (kind, &payload),
                (AttributeKind::Description, AttributePayload::Blob(_))
                    | (
                        AttributeKind::PretrainedNetwork | AttributeKind::OfflineDataset | AttributeKind::SkillDisplay,
                        AttributePayload::Text(_)
                    )
            ) {
                return Err(corrupt("attribute payload does not match its kind"));
            }
            g.nodes.insert(id, Node::Attribute(AttributeNode { id, kind, payload }));
        }
        attributes.finish("attributes")?;

        let mut edges = r.section()?;
        let mut last_edge: Option<u64> = None;
        for _ in 0..edges.u32()? {
            let id = edges.u64()?;
            if id >= g.next_edge || last_edge.is_some_and(|l| l >= id) {
                return Err(corrupt(format!("edge id {id} out of order or beyond allocator")));
            }
            last_edge = Some(id);
            let src = NodeId(edges.u64()?);
            let label = edges.str()?;
            let dst = NodeId(edges.u64()?);
            if g.entity(src).is_none() {
                return Err(corrupt(format!("edge {id} source {src} is not an entity")));
            }
            match g.nodes.get(&dst) {
                None => return Err(corrupt(format!("edge {id} points at missing node {dst}"))),
                Some(Node::Attribute(_)) if !ATTRIBUTE_LABELS.contains(&label.as_str()) => {
                    return Err(corrupt(format!("edge {id} has illegal attribute label {label:?}")))
                }
                _ => {}
            }
            if label.is_empty() || g.edge_index.contains_key(&(src, label.clone(), dst)) {
                return Err(corrupt(format!("edge {id} is empty-labelled or duplicated")));
            }
            g.insert_edge(Edge {
                id: EdgeId(id),
                src,
                label,
                dst,
            });
        }
        edges.finish("edges")?;

        let mut aliases = r.section()?;
        for _ in 0..aliases.u32()? {
            let name = aliases.str()?;
            let kind = EntityKind::from_tag(aliases.u8()?).ok_or_else(|| corrupt("bad alias kind"))?;
            let target = NodeId(aliases.u64()?);
            if g.entity(target).is_none_or(|e| e.kind != kind) {
                return Err(corrupt(format!(
                    "alias {name:?} points at {target}, not a {kind} entity"
                )));
            }
            g.aliases.entry(name).or_default()[kind.index()] = Some(target);
        }
        aliases.finish("aliases")?;
        r.finish("snapshot")?;
        Ok(g)
    }

    /// Writes the snapshot to `path` through a temp file and rename.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SnapshotError> {
        let path = path.as_ref();
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        fs::create_dir_all(dir)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(&self.to_snapshot_bytes())?;
        tmp.as_file().sync_all()?;
        tmp.persist(path).map_err(|e| e.error)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Graph, SnapshotError> {
        Graph::from_snapshot_bytes(&fs::read(path.as_ref())?)
    }
}

fn counted(count: u32, body: Writer) -> Writer {
    let mut w = Writer::default();
    w.u32(count);
    w.buf.extend_from_slice(&body.buf);
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Graph {
        let mut g = Graph::new();
        let props = BTreeMap::from([("origin".to_string(), "mujoco".to_string())]);
        let human = g.create_entity("humanoid", EntityKind::Agent, props).unwrap();
        let dup = g.create_entity("huanmoid", EntityKind::Agent, BTreeMap::new()).unwrap();
        let plane = g
            .create_entity("平面", EntityKind::Environment, BTreeMap::new())
            .unwrap();
        let desc = g
            .create_attribute(
                AttributeKind::Description,
                AttributePayload::Text("smooth ground".into()),
            )
            .unwrap();
        let net = g
            .create_attribute(
                AttributeKind::PretrainedNetwork,
                AttributePayload::Blob(ContentId::of(b"n")),
            )
            .unwrap();
        g.add_edge(plane, "described_by", desc).unwrap();
        g.add_edge(human, "has_network", net).unwrap();
        g.add_edge(dup, "acts_in", plane).unwrap();
        g.merge_entities(human, dup).unwrap();
        g
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let g = sample();
        let bytes = g.to_snapshot_bytes();
        assert_eq!(&bytes[..4], b"KSG1");
        let back = Graph::from_snapshot_bytes(&bytes).unwrap();
        assert_eq!(back.to_snapshot_bytes(), bytes);
        assert_eq!(
            back.lookup("huanmoid", EntityKind::Agent),
            g.lookup("humanoid", EntityKind::Agent)
        );
        assert_eq!(
            back.lookup("平面", EntityKind::Environment),
            g.lookup("平面", EntityKind::Environment)
        );
    }

    #[test]
    fn allocator_survives_reload() {
        let g = sample();
        let mut back = Graph::from_snapshot_bytes(&g.to_snapshot_bytes()).unwrap();
        let fresh = back.create_entity("new", EntityKind::Fact, BTreeMap::new()).unwrap();
        // the absorbed node's id must not come back
        assert!(fresh.0 >= 5);
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(
            Graph::from_snapshot_bytes(b"nope"),
            Err(SnapshotError::BadMagic)
        ));
        assert!(matches!(Graph::from_snapshot_bytes(b""), Err(SnapshotError::BadMagic)));
        let bytes = sample().to_snapshot_bytes();
        for cut in [5, 20, bytes.len() - 1] {
            assert!(Graph::from_snapshot_bytes(&bytes[..cut]).is_err());
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Graph::from_snapshot_bytes(&extra).is_err());
        let mut v2 = bytes;
        v2[4] = 2;
        assert!(matches!(
            Graph::from_snapshot_bytes(&v2),
            Err(SnapshotError::UnsupportedVersion(2))
        ));
    }

    #[test]
    fn save_and_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("graph.ksg");
        let g = sample();
        g.save(&path).unwrap();
        assert_eq!(Graph::load(&path).unwrap().to_snapshot_bytes(), g.to_snapshot_bytes());
    }
}
