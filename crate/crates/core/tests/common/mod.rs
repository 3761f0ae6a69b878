//! Shared helpers for the integration tests: the demo setup, a from-scratch
//! SHA-256, random graphs with a shadow model, and brute-force rankings.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::Rng;

use skillgraph::artifact::{ArtifactStore, ContentId};
use skillgraph::fixture;
use skillgraph::graph::{AttributeKind, AttributePayload, EntityKind, Graph, NodeId, Triple};
use skillgraph::similarity::{EnvProfile, SimilarityError, SkillSpec, Strategy, TaskDescriptor};
use skillgraph::skill;

pub fn demo() -> (tempfile::TempDir, ArtifactStore, Graph) {
    let dir = tempfile::tempdir().unwrap();
    let store = ArtifactStore::open(dir.path().join("store")).unwrap();
    let mut graph = Graph::new();
    fixture::load_demo(&mut graph, &store).unwrap();
    (dir, store, graph)
}

// ---------------------------------------------------------------------------
// SHA-256, written out from the FIPS 180-4 description. Used to check the
// store's digests without going through the hashing crate.

const K: [u32; 64] = [
    0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4, 0xab1c5ed5, 0xd807aa98,
    0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174, 0xe49b69c1, 0xefbe4786,
    0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da, 0x983e5152, 0xa831c66d, 0xb00327c8,
    0xbf597fc7, 0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13,
    0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85, 0xa2bfe8a1, 0xa81a664b, 0xc24b8b70, 0xc76c51a3, 0xd192e819,
    0xd6990624, 0xf40e3585, 0x106aa070, 0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a,
    0x5b9cca4f, 0x682e6ff3, 0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7,
    0xc67178f2,
];

pub fn sha256_oracle(data: &[u8]) -> [u8; 32] {
    let mut h: [u32; 8] = [
        0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a, 0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19,
    ];
    let mut msg = data.to_vec();
    let bit_len = (data.len() as u64).wrapping_mul(8);
    msg.push(0x80);
    while msg.len() % 64 != 56 {
        msg.push(0);
    }
    msg.extend_from_slice(&bit_len.to_be_bytes());

    for block in msg.chunks_exact(64) {
        let mut w = [0u32; 64];
        for (i, word) in block.chunks_exact(4).enumerate() {
            w[i] = u32::from_be_bytes([word[0], word[1], word[2], word[3]]);
        }
        for i in 16..64 {
            let s0 = w[i - 15].rotate_right(7) ^ w[i - 15].rotate_right(18) ^ (w[i - 15] >> 3);
            let s1 = w[i - 2].rotate_right(17) ^ w[i - 2].rotate_right(19) ^ (w[i - 2] >> 10);
            w[i] = w[i - 16].wrapping_add(s0).wrapping_add(w[i - 7]).wrapping_add(s1);
        }
        let [mut a, mut b, mut c, mut d, mut e, mut f, mut g, mut hh] = h;
        for i in 0..64 {
            let s1 = e.rotate_right(6) ^ e.rotate_right(11) ^ e.rotate_right(25);
            let ch = (e & f) ^ (!e & g);
            let t1 = hh
                .wrapping_add(s1)
                .wrapping_add(ch)
                .wrapping_add(K[i])
                .wrapping_add(w[i]);
            let s0 = a.rotate_right(2) ^ a.rotate_right(13) ^ a.rotate_right(22);
            let maj = (a & b) ^ (a & c) ^ (b & c);
            let t2 = s0.wrapping_add(maj);
            hh = g;
            g = f;
            f = e;
            e = d.wrapping_add(t1);
            d = c;
            c = b;
            b = a;
            a = t1.wrapping_add(t2);
        }
        for (acc, v) in h.iter_mut().zip([a, b, c, d, e, f, g, hh]) {
            *acc = acc.wrapping_add(v);
        }
    }
    let mut out = [0u8; 32];
    for (chunk, v) in out.chunks_exact_mut(4).zip(h) {
        chunk.copy_from_slice(&v.to_be_bytes());
    }
    out
}

pub fn sha256_oracle_hex(data: &[u8]) -> String {
    sha256_oracle(data).iter().map(|b| format!("{b:02x}")).collect()
}

// ---------------------------------------------------------------------------
// Random graphs with a shadow model.

pub const LABELS: [&str; 5] = ["is_a", "part_of", "near", "eats", "described_by"];

const WORDS: [&str; 12] = [
    "alpha",
    "bravo",
    "cheetah",
    "delta",
    "echo",
    "leg",
    "plane",
    "robot",
    "机器人",
    "平面",
    "walk",
    "x-1",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    Entity(usize),
    Text(String),
}

/// A graph built by random operations next to a plain record of what was
/// asked for. Entities are recorded in creation order; edges are recorded
/// once, at their first insertion.
pub struct RandomGraph {
    pub graph: Graph,
    pub entities: Vec<(String, EntityKind, NodeId)>,
    pub edges: Vec<(usize, String, Target)>,
}

impl RandomGraph {
    pub fn generate(rng: &mut StdRng, max_nodes: usize) -> RandomGraph {
        let mut graph = Graph::new();
        let mut entities: Vec<(String, EntityKind, NodeId)> = Vec::new();
        let mut by_key: HashMap<(String, EntityKind), usize> = HashMap::new();
        let mut edges: Vec<(usize, String, Target)> = Vec::new();
        let mut seen: HashSet<(usize, String, usize)> = HashSet::new();

        let entity_budget = rng.random_range(1..=max_nodes.max(2) / 2);
        let name_pool = rng.random_range(1..=entity_budget.max(1));
        for _ in 0..entity_budget {
            let name = format!("{}_{}", WORDS.choose(rng).unwrap(), rng.random_range(0..name_pool));
            let kind = *EntityKind::ALL.choose(rng).unwrap();
            let (id, created) = graph.ensure_entity(&name, kind).unwrap();
            assert_eq!(created, !by_key.contains_key(&(name.clone(), kind)));
            by_key.entry((name.clone(), kind)).or_insert_with(|| {
                entities.push((name, kind, id));
                entities.len() - 1
            });
        }

        let edge_budget = rng.random_range(0..=max_nodes - entity_budget);
        let mut node_count = entities.len();
        for _ in 0..edge_budget {
            let src = rng.random_range(0..entities.len());
            let label = *LABELS.choose(rng).unwrap();
            if label == "described_by" {
                if node_count >= max_nodes {
                    continue;
                }
                let text = format!("note {}", rng.random_range(0..1000));
                let attr = graph
                    .create_attribute(AttributeKind::Description, AttributePayload::Text(text.clone()))
                    .unwrap();
                node_count += 1;
                graph.add_edge(entities[src].2, label, attr).unwrap();
                edges.push((src, label.to_string(), Target::Text(text)));
            } else {
                let dst = rng.random_range(0..entities.len());
                graph.add_edge(entities[src].2, label, entities[dst].2).unwrap();
                if seen.insert((src, label.to_string(), dst)) {
                    edges.push((src, label.to_string(), Target::Entity(dst)));
                }
            }
        }
        RandomGraph { graph, entities, edges }
    }

    /// Linear scan over the shadow edges.
    pub fn triplets_oracle(&self, entity: usize, relation: Option<&str>) -> Vec<Triple> {
        self.edges
            .iter()
            .filter(|(src, label, _)| *src == entity && relation.is_none_or(|r| r == label))
            .map(|(_, label, target)| {
                let object = match target {
                    Target::Entity(i) => self.entities[*i].0.clone(),
                    Target::Text(t) => t.clone(),
                };
                Triple::new(self.entities[entity].0.clone(), label.clone(), object)
            })
            .collect()
    }

    /// Every entity carrying `name`, any kind, in creation order, each
    /// contributing its triples.
    pub fn fact_lookup_oracle(&self, name: &str, relation: &str) -> Vec<Triple> {
        (0..self.entities.len())
            .filter(|&i| self.entities[i].0 == name)
            .flat_map(|i| self.triplets_oracle(i, Some(relation)))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Random recommendation fixtures and a brute-force ranking.

const TASKS: [&str; 9] = [
    "walk_right",
    "walk_up",
    "walk_left",
    "walk_down",
    "walk_30deg",
    "walk_135deg",
    "jump",
    "flip",
    "crawl",
];
const ENVS: [&str; 6] = ["plane", "obstacle", "stair", "irregular", "sand", "ice"];

#[derive(Debug, Clone)]
pub struct OracleSkill {
    pub name: String,
    pub task: String,
    pub environment: String,
    /// Explicit descriptor; directional task names fall back to their
    /// direction vector.
    pub descriptor: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct SimFixture {
    pub agent: String,
    pub skills: Vec<OracleSkill>,
    /// Raw samples per environment; environments without an entry have no
    /// profile.
    pub samples: BTreeMap<String, Vec<Vec<f64>>>,
    pub target_task: String,
    pub target_env: String,
    pub target_descriptor: Option<Vec<f64>>,
}

fn small(rng: &mut StdRng) -> f64 {
    // Quarter steps keep plenty of exact ties in play.
    rng.random_range(-8..=8) as f64 / 4.0
}

fn random_vector(rng: &mut StdRng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| small(rng)).collect();
        if v.iter().any(|x| *x != 0.0) {
            return v;
        }
    }
}

impl SimFixture {
    pub fn generate(rng: &mut StdRng, max_candidates: usize) -> SimFixture {
        let agent = "agent".to_string();
        let mut skills = Vec::new();
        let mut taken = HashSet::new();
        let count = rng.random_range(1..=max_candidates);
        for _ in 0..count * 2 {
            if skills.len() == count {
                break;
            }
            let task = TASKS.choose(rng).unwrap().to_string();
            let environment = ENVS.choose(rng).unwrap().to_string();
            if !taken.insert((task.clone(), environment.clone())) {
                continue;
            }
            let descriptor = if rng.random_bool(0.5) {
                let dim = if rng.random_bool(0.9) { 2 } else { 3 };
                Some(random_vector(rng, dim))
            } else {
                None
            };
            skills.push(OracleSkill {
                name: format!("{agent}/{task}@{environment}"),
                task,
                environment,
                descriptor,
            });
        }

        let mut samples = BTreeMap::new();
        for env in ENVS {
            if rng.random_bool(0.85) {
                let dim = if rng.random_bool(0.95) { 3 } else { 2 };
                let n = rng.random_range(1..=5);
                let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| small(rng)).collect()).collect();
                samples.insert(env.to_string(), rows);
            }
        }

        let target_task = TASKS.choose(rng).unwrap().to_string();
        let target_env = ENVS.choose(rng).unwrap().to_string();
        let target_descriptor = rng.random_bool(0.7).then(|| random_vector(rng, 2));
        SimFixture {
            agent,
            skills,
            samples,
            target_task,
            target_env,
            target_descriptor,
        }
    }

    /// Lays the fixture out the way registered skills look, without going
    /// through registration, and returns the graph with a profile source.
    pub fn build(&self) -> (Graph, HashMap<ContentId, EnvProfile>) {
        let mut g = Graph::new();
        let mut profiles = HashMap::new();
        let (agent, _) = g.ensure_entity(&self.agent, EntityKind::Agent).unwrap();
        for (env, rows) in &self.samples {
            let profile = EnvProfile::new(env.as_str(), rows).unwrap();
            let id = ContentId::of(&profile.to_blob());
            profiles.insert(id, profile);
            let (e, _) = g.ensure_entity(env, EntityKind::Environment).unwrap();
            g.set_prop(e, skill::PROP_ENV_PROFILE, &id.to_string()).unwrap();
        }
        for s in &self.skills {
            let (env, _) = g.ensure_entity(&s.environment, EntityKind::Environment).unwrap();
            let mut props = BTreeMap::from([
                (skill::PROP_AGENT.to_string(), self.agent.clone()),
                (skill::PROP_TASK.to_string(), s.task.clone()),
                (skill::PROP_ENVIRONMENT.to_string(), s.environment.clone()),
            ]);
            if let Some(d) = &s.descriptor {
                props.insert(
                    skill::PROP_TASK_DESCRIPTOR.to_string(),
                    TaskDescriptor::new(d.clone()).unwrap().to_prop(),
                );
            }
            let id = g.create_entity(&s.name, EntityKind::Skill, props).unwrap();
            g.add_edge(agent, skill::HAS_SKILL, id).unwrap();
            g.add_edge(id, skill::IN_ENV, env).unwrap();
        }
        (g, profiles)
    }

    pub fn spec(&self) -> SkillSpec {
        let mut spec = SkillSpec::new(&self.agent, &self.target_env, &self.target_task);
        if let Some(d) = &self.target_descriptor {
            spec = spec.with_descriptor(TaskDescriptor::new(d.clone()).unwrap());
        }
        spec
    }
}

fn direction_of(task: &str) -> Option<Vec<f64>> {
    match task {
        "walk_right" => Some(vec![1.0, 0.0]),
        "walk_up" => Some(vec![0.0, 1.0]),
        "walk_left" => Some(vec![-1.0, 0.0]),
        "walk_down" => Some(vec![0.0, -1.0]),
        _ => {
            let deg: f64 = task.strip_prefix("walk_")?.strip_suffix("deg")?.parse().ok()?;
            let rad = deg.to_radians();
            Some(vec![rad.cos(), rad.sin()])
        }
    }
}

fn mean_rows(rows: &[Vec<f64>]) -> Vec<f64> {
    let dim = rows[0].len();
    let mut sum = vec![0.0; dim];
    for row in rows {
        for j in 0..dim {
            sum[j] += row[j];
        }
    }
    sum.into_iter().map(|s| s / rows.len() as f64).collect()
}

fn euclid(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let mut acc = 0.0;
    for j in 0..a.len() {
        acc += (a[j] - b[j]).powi(2);
    }
    Some(acc.sqrt())
}

fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for j in 0..a.len() {
        dot += a[j] * b[j];
        na += a[j] * a[j];
        nb += b[j] * b[j];
    }
    Some((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// What the ranking must produce: strategy and `(skill name, score)` in order,
/// or `None` when no ranking is possible.
pub type OracleRanking = Option<(Strategy, Vec<(String, f64)>)>;

/// Brute-force ranking straight from the fixture description: pick the
/// strategy, score every eligible skill, then order by repeated selection of
/// the best remaining (score, then name).
pub fn rank_oracle(f: &SimFixture) -> OracleRanking {
    let pool: Vec<&OracleSkill> = f
        .skills
        .iter()
        .filter(|s| !(s.task == f.target_task && s.environment == f.target_env))
        .collect();
    if pool.is_empty() {
        return None;
    }
    let centroid = |env: &str| f.samples.get(env).map(|rows| mean_rows(rows));
    let descriptor = |s: &OracleSkill| s.descriptor.clone().or_else(|| direction_of(&s.task));
    let target_descriptor = f.target_descriptor.clone().or_else(|| direction_of(&f.target_task));

    let same_task: Vec<&&OracleSkill> = pool.iter().filter(|s| s.task == f.target_task).collect();
    let same_env: Vec<&&OracleSkill> = pool.iter().filter(|s| s.environment == f.target_env).collect();

    let (strategy, scored, ascending): (Strategy, Vec<(String, f64)>, bool) = if !same_task.is_empty() {
        let t = centroid(&f.target_env)?;
        let scored: Vec<_> = same_task
            .iter()
            .filter_map(|s| Some((s.name.clone(), euclid(&t, &centroid(&s.environment)?)?)))
            .collect();
        (Strategy::EnvSimilarity, scored, true)
    } else if !same_env.is_empty() {
        let t = target_descriptor?;
        let scored: Vec<_> = same_env
            .iter()
            .filter_map(|s| Some((s.name.clone(), cosine(&t, &descriptor(s)?)?)))
            .collect();
        (Strategy::TaskSimilarity, scored, false)
    } else {
        let tc = centroid(&f.target_env)?;
        let td = target_descriptor?;
        let both: Vec<(String, f64, f64)> = pool
            .iter()
            .filter_map(|s| {
                let d = euclid(&tc, &centroid(&s.environment)?)?;
                let c = cosine(&td, &descriptor(s)?)?;
                Some((s.name.clone(), d, c))
            })
            .collect();
        let min = both.iter().map(|(_, d, _)| *d).fold(f64::INFINITY, f64::min);
        let scored = both
            .into_iter()
            .filter(|(_, d, _)| *d <= min + 1e-9)
            .map(|(n, _, c)| (n, c))
            .collect();
        (Strategy::Combined, scored, false)
    };
    if scored.is_empty() {
        return None;
    }

    let mut remaining = scored;
    let mut ordered = Vec::new();
    while !remaining.is_empty() {
        let mut best = 0;
        for i in 1..remaining.len() {
            let (ref n, s) = remaining[i];
            let (ref bn, bs) = remaining[best];
            let better = if ascending { s < bs } else { s > bs };
            if better || (s == bs && n < bn) {
                best = i;
            }
        }
        ordered.push(remaining.remove(best));
    }
    Some((strategy, ordered))
}

/// Compares a ranking result with the oracle. Scores must agree to 1e-12.
pub fn check_against_oracle(
    result: &Result<skillgraph::similarity::RankedCandidates, SimilarityError>,
    oracle: &OracleRanking,
) -> Result<(), String> {
    match (result, oracle) {
        (Err(_), None) => Ok(()),
        (Ok(r), None) => Err(format!("expected no ranking, got {r:?}")),
        (Err(e), Some(o)) => Err(format!("expected {o:?}, got error {e}")),
        (Ok(r), Some((strategy, expected))) => {
            if r.strategy != *strategy {
                return Err(format!("strategy {} != {strategy}", r.strategy));
            }
            let got: Vec<&str> = r.candidates.iter().map(|c| c.name.as_str()).collect();
            let want: Vec<&str> = expected.iter().map(|(n, _)| n.as_str()).collect();
            if got != want {
                return Err(format!("order {got:?} != {want:?}"));
            }
            for (c, (_, s)) in r.candidates.iter().zip(expected) {
                if (c.score - s).abs() > 1e-12 {
                    return Err(format!("{}: score {} != {s}", c.name, c.score));
                }
            }
            Ok(())
        }
    }
}
