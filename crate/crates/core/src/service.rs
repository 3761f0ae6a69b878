//! Read-only query engine and the newline-delimited JSON server.
//!
//! Each request is one JSON object on one line:
//!
//! ```text
//! {"id":"1","op":"ask","payload":"Can you show ant walking down in the plane?"}
//! {"id":"2","op":"recommend","payload":{"agent":"humanoid","environment":"plane","task":"walk_30deg"}}
//! {"id":"3","op":"fetch_meta","payload":{"agent":"ant","skill":"walk_up","environment":"plane"}}
//! ```
//!
//! and gets exactly one response line, `{"id":..,"ok":true,"answer":..}` or
//! `{"id":..,"ok":false,"error":".."}`. Lines that are not a JSON object with
//! a string `id` are answered with id `"?"`.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};
use std::thread::{self, JoinHandle};

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use thiserror::Error;

use crate::artifact::{ArtifactStore, BlobMeta, ContentId, StoreError};
use crate::graph::Graph;
use crate::ingest::{Gazetteer, RuleSet};
use crate::query::{
    self, format_answer, Answer, ArtifactRole, OutputMode, Payload, QueryError, QueryIntent, TemplateSet,
};
use crate::similarity::SkillSpec;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("bad request: {0}")]
    BadRequest(String),
}

/// Graph, store and parsing resources shared by all readers.
pub struct Engine {
    graph: RwLock<Graph>,
    store: ArtifactStore,
    gazetteer: Gazetteer,
    templates: TemplateSet,
    rules: RuleSet,
}

#[derive(Debug, Clone, Serialize)]
pub struct ArtifactMeta {
    pub role: &'static str,
    pub id: ContentId,
    #[serde(flatten)]
    pub meta: BlobMeta,
}

#[derive(Debug, Clone, Serialize)]
pub struct FetchMeta {
    pub skill: String,
    pub artifacts: Vec<ArtifactMeta>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FetchRequest {
    agent: String,
    skill: String,
    environment: String,
}

impl Engine {
    /// `gazetteer` is extended with identity entries for every entity in
    /// `graph`.
    pub fn new(
        graph: Graph,
        store: ArtifactStore,
        mut gazetteer: Gazetteer,
        templates: TemplateSet,
        rules: RuleSet,
    ) -> Self {
        gazetteer.extend_from_graph(&graph);
        Engine {
            graph: RwLock::new(graph),
            store,
            gazetteer,
            templates,
            rules,
        }
    }

    pub fn store(&self) -> &ArtifactStore {
        &self.store
    }

    pub fn with_graph<T>(&self, f: impl FnOnce(&Graph) -> T) -> T {
        let guard = self.graph.read().unwrap_or_else(|e| e.into_inner());
        f(&guard)
    }

    pub fn parse(&self, text: &str) -> Result<QueryIntent, QueryError> {
        let mut intent = query::parse_query(text, &self.templates, &self.gazetteer)?;
        if let QueryIntent::FactLookup { relation, .. } = &mut intent {
            if let Some(label) = self.rules.label_for(&relation.replace('_', " ")) {
                *relation = label.to_string();
            }
        }
        Ok(intent)
    }

    pub fn ask(&self, text: &str) -> Result<Answer, QueryError> {
        let intent = self.parse(text)?;
        self.with_graph(|g| query::answer(&intent, g, &self.store))
    }

    pub fn recommend(&self, spec: &SkillSpec) -> Result<Answer, QueryError> {
        let intent = QueryIntent::RecommendPretrain { spec: spec.clone() };
        self.with_graph(|g| query::answer(&intent, g, &self.store))
    }

    pub fn fetch_meta(&self, agent: &str, skill: &str, environment: &str) -> Result<FetchMeta, ServiceError> {
        let intent = QueryIntent::FetchModel {
            agent: agent.to_string(),
            skill: skill.to_string(),
            environment: environment.to_string(),
        };
        let answer = self.with_graph(|g| query::answer(&intent, g, &self.store))?;
        let Payload::Artifacts { skill, ids } = answer.payload else {
            unreachable!("fetch intents answer with artifacts")
        };
        let artifacts = ids
            .into_iter()
            .map(|(role, id)| {
                Ok(ArtifactMeta {
                    role: role.as_str(),
                    id,
                    meta: self.store.meta(&id)?,
                })
            })
            .collect::<Result<_, StoreError>>()?;
        Ok(FetchMeta { skill, artifacts })
    }

    /// Handles one request line and returns the response line (no newline).
    pub fn handle_line(&self, line: &str) -> String {
        let value: serde_json::Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => return error_line("?", &format!("malformed request: {e}")),
        };
        let Some(id) = value.get("id").and_then(|v| v.as_str()).map(str::to_string) else {
            return error_line("?", "request needs a string \"id\"");
        };
        match self.dispatch(&value) {
            Ok(answer) => ok_line(&id, &answer),
            Err(e) => error_line(&id, &e.to_string()),
        }
    }

    fn dispatch(&self, request: &serde_json::Value) -> Result<String, ServiceError> {
        let op = request
            .get("op")
            .and_then(|v| v.as_str())
            .ok_or_else(|| ServiceError::BadRequest("missing \"op\"".into()))?;
        let payload = request.get("payload").cloned().unwrap_or(serde_json::Value::Null);
        let bad = |e: serde_json::Error| ServiceError::BadRequest(e.to_string());
        match op {
            "ask" => {
                let text = payload
                    .as_str()
                    .ok_or_else(|| ServiceError::BadRequest("ask payload must be a string".into()))?;
                Ok(format_answer(&self.ask(text)?, OutputMode::Json))
            }
            "recommend" => {
                let spec: SkillSpec = serde_json::from_value(payload).map_err(bad)?;
                Ok(format_answer(&self.recommend(&spec)?, OutputMode::Json))
            }
            "fetch_meta" => {
                let req: FetchRequest = serde_json::from_value(payload).map_err(bad)?;
                let meta = self.fetch_meta(&req.agent, &req.skill, &req.environment)?;
                Ok(serde_json::to_string(&meta).expect("fetch metadata serializes"))
            }
            other => Err(ServiceError::BadRequest(format!(
                "unknown op {other:?}; expected ask, recommend or fetch_meta"
            ))),
        }
    }
}

#[derive(Serialize)]
struct OkResponse<'a> {
    id: &'a str,
    ok: bool,
    answer: &'a RawValue,
}

#[derive(Serialize)]
struct ErrResponse<'a> {
    id: &'a str,
    ok: bool,
    error: &'a str,
}

fn ok_line(id: &str, answer_json: &str) -> String {
    match RawValue::from_string(answer_json.to_string()) {
        Ok(raw) => serde_json::to_string(&OkResponse {
            id,
            ok: true,
            answer: &raw,
        })
        .expect("response serializes"),
        Err(e) => error_line(id, &format!("internal: answer is not JSON: {e}")),
    }
}

fn error_line(id: &str, error: &str) -> String {
    serde_json::to_string(&ErrResponse { id, ok: false, error }).expect("response serializes")
}

fn serve_connection(engine: &Engine, stream: TcpStream) -> io::Result<()> {
    // one small response per request; don't let Nagle hold it back
    stream.set_nodelay(true)?;
    let mut writer = stream.try_clone()?;
    for line in BufReader::new(stream).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut response = engine.handle_line(&line);
        response.push('\n');
        writer.write_all(response.as_bytes())?;
        writer.flush()?;
    }
    Ok(())
}

/// A running server. Dropping the handle does not stop it; call
/// [`ServerHandle::shutdown`].
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting connections and waits for the accept loop to exit.
    /// Open connections finish independently.
    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    /// Blocks until the accept loop ends.
    pub fn join(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Binds `addr` and serves connections on a background thread, one thread
/// per connection.
pub fn serve(addr: impl ToSocketAddrs, engine: Arc<Engine>) -> io::Result<ServerHandle> {
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let stop_flag = Arc::clone(&stop);
    let thread = thread::spawn(move || {
        for conn in listener.incoming() {
            if stop_flag.load(Ordering::SeqCst) {
                break;
            }
            match conn {
                Ok(stream) => {
                    let engine = Arc::clone(&engine);
                    thread::spawn(move || {
                        if let Err(e) = serve_connection(&engine, stream) {
                            log::debug!("connection closed: {e}");
                        }
                    });
                }
                Err(e) => log::warn!("accept failed: {e}"),
            }
        }
    });
    log::info!("serving on {local}");
    Ok(ServerHandle {
        addr: local,
        stop,
        thread: Some(thread),
    })
}

/// Pulls the `(role, id)` pairs out of a fetch answer.
pub fn artifact_ids(answer: &Answer) -> Vec<(ArtifactRole, ContentId)> {
    match &answer.payload {
        Payload::Artifacts { ids, .. } => ids.clone(),
        _ => Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture;

    fn engine() -> (tempfile::TempDir, Engine) {
        let dir = tempfile::tempdir().unwrap();
        let store = ArtifactStore::open(dir.path()).unwrap();
        let mut g = Graph::new();
        fixture::load_demo(&mut g, &store).unwrap();
        let e = Engine::new(
            g,
            store,
            fixture::gazetteer().unwrap(),
            fixture::templates().unwrap(),
            fixture::relation_rules().unwrap(),
        );
        (dir, e)
    }

    #[test]
    fn malformed_lines_get_placeholder_id() {
        let (_d, e) = engine();
        let v: serde_json::Value = serde_json::from_str(&e.handle_line("{{{")).unwrap();
        assert_eq!(v["id"], "?");
        assert_eq!(v["ok"], false);
        let v: serde_json::Value = serde_json::from_str(&e.handle_line(r#"{"op":"ask"}"#)).unwrap();
        assert_eq!(v["id"], "?");
    }

    #[test]
    fn errors_echo_the_id() {
        let (_d, e) = engine();
        let v: serde_json::Value =
            serde_json::from_str(&e.handle_line(r#"{"id":"9","op":"launch","payload":null}"#)).unwrap();
        assert_eq!((v["id"].as_str(), v["ok"].as_bool()), (Some("9"), Some(false)));
        let v: serde_json::Value =
            serde_json::from_str(&e.handle_line(r#"{"id":"10","op":"ask","payload":"sing me a song"}"#)).unwrap();
        assert!(v["error"].as_str().unwrap().contains("unrecognized"));
    }

    #[test]
    fn show_request_returns_media() {
        let (_d, e) = engine();
        let line = e.handle_line(r#"{"id":"1","op":"ask","payload":"Can you show ant walking down in the plane?"}"#);
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["ok"], true);
        assert_eq!(v["answer"]["skill"], "ant/walk_down@plane");
        assert!(v["answer"]["display"].as_str().unwrap().starts_with("sha256:"));
    }

    #[test]
    fn fetch_meta_lists_artifacts() {
        let (_d, e) = engine();
        let line = e.handle_line(
            r#"{"id":"m","op":"fetch_meta","payload":{"agent":"ant","skill":"walk_up","environment":"plane"}}"#,
        );
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["answer"]["artifacts"][0]["role"], "network");
        assert_eq!(v["answer"]["artifacts"][1]["kind"], "dataset");
    }

    #[test]
    fn fact_relations_go_through_rules() {
        let (_d, e) = engine();
        let a = e.ask("What does ant lives in?").unwrap();
        assert_eq!(
            a.payload,
            Payload::Triples(vec![crate::graph::Triple::new("ant", "habitat", "soil")])
        );
    }
}
