//! Pre-trained skill selection for a new skill request.
//!
//! Two signals are available:
//!
//! - **Environment similarity**: Euclidean distance between the centroids of
//!   the sampled states of two environments. Smaller is better.
//! - **Task similarity**: cosine between task descriptor vectors. Directional
//!   walk tasks use unit direction vectors (`walk_right` = (1, 0),
//!   `walk_up` = (0, 1), `walk_30deg` = (cos 30°, sin 30°), ...). Larger is
//!   better.
//!
//! [`select_pretrained`] picks the signal from how the target relates to the
//! stored skills of the same agent: same task elsewhere ranks by environment,
//! same environment ranks by task, and when neither exists the nearest
//! environment group is ordered by task similarity.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::{ArtifactStore, ContentId, StoreError};
use crate::graph::{EntityKind, Graph, NodeId};
use crate::name::normalize_name;
use crate::skill::{self, SkillView};

/// Absolute tolerance for floating-point comparisons.
pub const TOLERANCE: f64 = 1e-9;

const PROFILE_MAGIC: &[u8; 4] = b"KSGP";
const PROFILE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SimilarityError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("task descriptor must be a non-zero vector")]
    ZeroVector,
    #[error("invalid task descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("invalid environment profile: {0}")]
    InvalidProfile(String),
    #[error("no stored skills for agent {0:?}")]
    NoCandidates(String),
    #[error("missing environment profile: {0}")]
    MissingProfile(String),
    #[error("missing task descriptor: {0}")]
    MissingDescriptor(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Sampled states of one environment: `n` rows of `d` finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvProfile {
    pub name: String,
    pub note: String,
    n: usize,
    d: usize,
    samples: Vec<f64>,
}

impl EnvProfile {
    pub fn new(name: impl Into<String>, rows: &[Vec<f64>]) -> Result<Self, SimilarityError> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || d == 0 {
            return Err(SimilarityError::InvalidProfile(
                "need at least one sample of dimension ≥ 1".into(),
            ));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(SimilarityError::InvalidProfile(format!(
                "ragged samples: expected dimension {d}, found {}",
                bad.len()
            )));
        }
        let samples: Vec<f64> = rows.iter().flatten().copied().collect();
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(SimilarityError::InvalidProfile("non-finite sample value".into()));
        }
        Ok(EnvProfile {
            name: name.into(),
            note: String::new(),
            n: rows.len(),
            d,
            samples,
        })
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }

    pub fn sample_count(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.chunks_exact(self.d)
    }

    /// Per-dimension mean of the samples.
    pub fn centroid(&self) -> Vec<f64> {
        let mut sum = vec![0.0; self.d];
        for row in self.rows() {
            for (s, v) in sum.iter_mut().zip(row) {
                *s += v;
            }
        }
        sum.iter().map(|s| s / self.n as f64).collect()
    }

    /// `KSGP` blob: magic, then version, N and D as little-endian u32, then
    /// N·D little-endian f64 in row-major order.
    pub fn to_blob(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.samples.len());
        out.extend_from_slice(PROFILE_MAGIC);
        out.extend_from_slice(&PROFILE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n as u32).to_le_bytes());
        out.extend_from_slice(&(self.d as u32).to_le_bytes());
        for v in &self.samples {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_blob(name: impl Into<String>, bytes: &[u8]) -> Result<Self, SimilarityError> {
        let bad = |msg: &str| SimilarityError::InvalidProfile(msg.to_string());
        if bytes.len() < 16 || &bytes[..4] != PROFILE_MAGIC {
            return Err(bad("missing KSGP header"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
        if word(4) != PROFILE_VERSION as usize {
            return Err(bad("unsupported profile version"));
        }
        let (n, d) = (word(8), word(12));
        let expected = n
            .checked_mul(d)
            .and_then(|c| c.checked_mul(8))
            .and_then(|c| c.checked_add(16))
            .ok_or_else(|| bad("profile size overflows"))?;
        if bytes.len() != expected {
            return Err(bad("profile length does not match header"));
        }
        let values: Vec<f64> = bytes[16..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if d == 0 {
            return Err(bad("profile dimension is zero"));
        }
        let rows: Vec<Vec<f64>> = values.chunks_exact(d).map(<[f64]>::to_vec).collect();
        EnvProfile::new(name, &rows)
    }
}

/// A non-zero vector of finite components characterising a task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TaskDescriptor(Vec<f64>);

impl TaskDescriptor {
    pub fn new(components: Vec<f64>) -> Result<Self, SimilarityError> {
        if components.is_empty() {
            return Err(SimilarityError::InvalidDescriptor("empty vector".into()));
        }
        if components.iter().any(|v| !v.is_finite()) {
            return Err(SimilarityError::InvalidDescriptor("non-finite component".into()));
        }
        if components.iter().all(|v| *v == 0.0) {
            return Err(SimilarityError::ZeroVector);
        }
        Ok(TaskDescriptor(components))
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    /// Unit direction vector for a walk task at `degrees` from horizontal.
    pub fn direction(degrees: f64) -> Self {
        let rad = degrees.to_radians();
        TaskDescriptor(vec![rad.cos(), rad.sin()])
    }

    /// Descriptor for directional walk task names: `walk_right`, `walk_up`,
    /// `walk_left`, `walk_down` and `walk_<N>deg`.
    pub fn for_direction_task(task: &str) -> Option<Self> {
        let suffix = normalize_name(task).strip_prefix("walk_")?.to_string();
        let exact = |v: [f64; 2]| Some(TaskDescriptor(v.to_vec()));
        match suffix.as_str() {
            "right" => exact([1.0, 0.0]),
            "up" => exact([0.0, 1.0]),
            "left" => exact([-1.0, 0.0]),
            "down" => exact([0.0, -1.0]),
            other => {
                let degrees: f64 = other.strip_suffix("deg")?.parse().ok()?;
                degrees.is_finite().then(|| TaskDescriptor::direction(degrees))
            }
        }
    }

    /// Comma-separated rendering stored as a node prop.
    pub fn to_prop(&self) -> String {
        self.0.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
    }

    pub fn parse_prop(s: &str) -> Result<Self, SimilarityError> {
        let values = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| SimilarityError::InvalidDescriptor(e.to_string()))?;
        TaskDescriptor::new(values)
    }
}

impl TryFrom<Vec<f64>> for TaskDescriptor {
    type Error = SimilarityError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        TaskDescriptor::new(v)
    }
}

impl From<TaskDescriptor> for Vec<f64> {
    fn from(d: TaskDescriptor) -> Self {
        d.0
    }
}

/// Euclidean distance between the centroids of two profiles.
pub fn env_distance(a: &EnvProfile, b: &EnvProfile) -> Result<f64, SimilarityError> {
    if a.dim() != b.dim() {
        return Err(SimilarityError::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let (ca, cb) = (a.centroid(), b.centroid());
    Ok(ca.iter().zip(&cb).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
}

/// Cosine of the angle between two descriptors, clamped to [-1, 1].
pub fn task_similarity(a: &TaskDescriptor, b: &TaskDescriptor) -> Result<f64, SimilarityError> {
    if a.0.len() != b.0.len() {
        return Err(SimilarityError::DimensionMismatch {
            left: a.0.len(),
            right: b.0.len(),
        });
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (na, nb) = (norm(&a.0), norm(&b.0));
    if na == 0.0 || nb == 0.0 {
        return Err(SimilarityError::ZeroVector);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// The new skill a caller wants to learn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkillSpec {
    pub agent: String,
    pub environment: String,
    pub task: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_descriptor: Option<TaskDescriptor>,
    /// Profile blob of the target environment. When absent, the profile
    /// registered on the environment entity is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_profile: Option<ContentId>,
}

impl SkillSpec {
    pub fn new(agent: &str, environment: &str, task: &str) -> Self {
        SkillSpec {
            agent: normalize_name(agent),
            environment: normalize_name(environment),
            task: normalize_name(task),
            task_descriptor: None,
            env_profile: None,
        }
    }

    pub fn with_descriptor(mut self, d: TaskDescriptor) -> Self {
        self.task_descriptor = Some(d);
        self
    }

    pub fn with_profile(mut self, id: ContentId) -> Self {
        self.env_profile = Some(id);
        self
    }

    fn normalized(&self) -> SkillSpec {
        SkillSpec {
            agent: normalize_name(&self.agent),
            environment: normalize_name(&self.environment),
            task: normalize_name(&self.task),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash)]
pub enum Strategy {
    EnvSimilarity,
    TaskSimilarity,
    Combined,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::EnvSimilarity => "EnvSimilarity",
            Strategy::TaskSimilarity => "TaskSimilarity",
            Strategy::Combined => "Combined",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub skill: NodeId,
    pub name: String,
    pub task: String,
    pub environment: String,
    /// Environment distance for [`Strategy::EnvSimilarity`], task cosine
    /// otherwise.
    pub score: f64,
}

/// Candidates in preference order. Candidates lacking the inputs of the
/// chosen strategy are left out and reported in `warnings`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedCandidates {
    pub strategy: Strategy,
    pub candidates: Vec<Candidate>,
    pub warnings: Vec<String>,
}

impl RankedCandidates {
    pub fn top(&self) -> Option<&Candidate> {
        self.candidates.first()
    }
}

/// Where environment profiles come from.
pub trait ProfileSource {
    fn load_profile(&self, id: &ContentId) -> Result<EnvProfile, SimilarityError>;
}

impl ProfileSource for ArtifactStore {
    fn load_profile(&self, id: &ContentId) -> Result<EnvProfile, SimilarityError> {
        let (bytes, meta) = self.get(id)?;
        EnvProfile::from_blob(meta.label.unwrap_or_default(), &bytes)
    }
}

impl ProfileSource for HashMap<ContentId, EnvProfile> {
    fn load_profile(&self, id: &ContentId) -> Result<EnvProfile, SimilarityError> {
        self.get(id)
            .cloned()
            .ok_or(SimilarityError::Store(StoreError::NotFound(*id)))
    }
}

/// Ascending by score, then by name.
fn by_distance(a: &Candidate, b: &Candidate) -> Ordering {
    a.score.total_cmp(&b.score).then_with(|| a.name.cmp(&b.name))
}

/// Descending by score, then by name.
fn by_similarity(a: &Candidate, b: &Candidate) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.name.cmp(&b.name))
}

struct Inputs<'a, P> {
    graph: &'a Graph,
    profiles: &'a P,
    cache: HashMap<String, Option<EnvProfile>>,
    warnings: Vec<String>,
}

impl<P: ProfileSource> Inputs<'_, P> {
    fn env_profile(&mut self, environment: &str) -> Option<EnvProfile> {
        if let Some(hit) = self.cache.get(environment) {
            return hit.clone();
        }
        let loaded = match skill::env_profile_id(self.graph, environment) {
            None => None,
            Some(id) => match self.profiles.load_profile(&id) {
                Ok(p) => Some(p),
                Err(e) => {
                    self.warnings
                        .push(format!("profile {id} of environment {environment}: {e}"));
                    None
                }
            },
        };
        self.cache.insert(environment.to_string(), loaded.clone());
        loaded
    }

    fn distance_to(&mut self, target: &EnvProfile, c: &SkillView) -> Option<f64> {
        let Some(profile) = self.env_profile(&c.environment) else {
            self.warnings
                .push(format!("{}: environment {} has no profile", c.name, c.environment));
            return None;
        };
        match env_distance(target, &profile) {
            Ok(d) => Some(d),
            Err(e) => {
                self.warnings.push(format!("{}: {e}", c.name));
                None
            }
        }
    }

    fn similarity_to(&mut self, target: &TaskDescriptor, c: &SkillView) -> Option<f64> {
        let descriptor = c
            .descriptor
            .clone()
            .or_else(|| TaskDescriptor::for_direction_task(&c.task));
        let Some(descriptor) = descriptor else {
            self.warnings
                .push(format!("{}: task {} has no descriptor", c.name, c.task));
            return None;
        };
        match task_similarity(target, &descriptor) {
            Ok(s) => Some(s),
            Err(e) => {
                self.warnings.push(format!("{}: {e}", c.name));
                None
            }
        }
    }
}

fn candidate(c: &SkillView, score: f64) -> Candidate {
    Candidate {
        skill: c.id,
        name: c.name.clone(),
        task: c.task.clone(),
        environment: c.environment.clone(),
        // folds -0.0 into 0.0 so total_cmp ties behave
        score: score + 0.0,
    }
}

/// Ranks the stored skills of `target.agent` as warm starts for `target`.
///
/// The pool excludes a stored skill identical to the target (same task and
/// environment). Dispatch:
/// 1. any pooled skill has the same task → [`Strategy::EnvSimilarity`] over those;
/// 2. else any pooled skill is in the same environment →
///    [`Strategy::TaskSimilarity`] over those;
/// 3. else [`Strategy::Combined`]: keep the skills whose environment distance
///    is within [`TOLERANCE`] of the minimum, ordered by task similarity.
pub fn select_pretrained<P: ProfileSource>(
    target: &SkillSpec,
    graph: &Graph,
    profiles: &P,
) -> Result<RankedCandidates, SimilarityError> {
    let target = target.normalized();
    let agent = graph
        .lookup(&target.agent, EntityKind::Agent)
        .ok_or_else(|| SimilarityError::NoCandidates(target.agent.clone()))?;
    let pool: Vec<SkillView> = skill::skills_of(graph, agent)
        .into_iter()
        .filter(|s| !(s.task == target.task && s.environment == target.environment))
        .collect();
    if pool.is_empty() {
        return Err(SimilarityError::NoCandidates(target.agent.clone()));
    }

    let mut inputs = Inputs {
        graph,
        profiles,
        cache: HashMap::new(),
        warnings: Vec::new(),
    };

    let same_task: Vec<&SkillView> = pool.iter().filter(|s| s.task == target.task).collect();
    let same_env: Vec<&SkillView> = pool.iter().filter(|s| s.environment == target.environment).collect();

    let (strategy, mut ranked) = if !same_task.is_empty() {
        let target_profile = target_profile(&target, &mut inputs)?;
        let ranked: Vec<Candidate> = same_task
            .into_iter()
            .filter_map(|c| inputs.distance_to(&target_profile, c).map(|d| candidate(c, d)))
            .collect();
        if ranked.is_empty() {
            return Err(SimilarityError::MissingProfile(
                "no candidate environment has a usable profile".into(),
            ));
        }
        (Strategy::EnvSimilarity, ranked)
    } else if !same_env.is_empty() {
        let target_descriptor = target_descriptor(&target)?;
        let ranked: Vec<Candidate> = same_env
            .into_iter()
            .filter_map(|c| inputs.similarity_to(&target_descriptor, c).map(|s| candidate(c, s)))
            .collect();
        if ranked.is_empty() {
            return Err(SimilarityError::MissingDescriptor(
                "no candidate task has a usable descriptor".into(),
            ));
        }
        (Strategy::TaskSimilarity, ranked)
    } else {
        let target_profile = target_profile(&target, &mut inputs)?;
        let target_descriptor = target_descriptor(&target)?;
        let scored: Vec<(f64, Candidate)> = pool
            .iter()
            .filter_map(|c| {
                let d = inputs.distance_to(&target_profile, c)?;
                let s = inputs.similarity_to(&target_descriptor, c)?;
                Some((d, candidate(c, s)))
            })
            .collect();
        let Some(nearest) = scored.iter().map(|(d, _)| *d).min_by(f64::total_cmp) else {
            return Err(SimilarityError::MissingProfile(
                "no candidate has both a profile and a descriptor".into(),
            ));
        };
        let ranked = scored
            .into_iter()
            .filter(|(d, _)| *d <= nearest + TOLERANCE)
            .map(|(_, c)| c)
            .collect();
        (Strategy::Combined, ranked)
    };

    match strategy {
        Strategy::EnvSimilarity => ranked.sort_by(by_distance),
        Strategy::TaskSimilarity | Strategy::Combined => ranked.sort_by(by_similarity),
    }
    Ok(RankedCandidates {
        strategy,
        candidates: ranked,
        warnings: inputs.warnings,
    })
}

fn target_profile<P: ProfileSource>(
    target: &SkillSpec,
    inputs: &mut Inputs<'_, P>,
) -> Result<EnvProfile, SimilarityError> {
    match target.env_profile {
        Some(id) => inputs.profiles.load_profile(&id),
        None => inputs
            .env_profile(&target.environment)
            .ok_or_else(|| SimilarityError::MissingProfile(format!("target environment {}", target.environment))),
    }
}

fn target_descriptor(target: &SkillSpec) -> Result<TaskDescriptor, SimilarityError> {
    target
        .task_descriptor
        .clone()
        .or_else(|| TaskDescriptor::for_direction_task(&target.task))
        .ok_or_else(|| SimilarityError::MissingDescriptor(format!("target task {}", target.task)))
}
