//! Command-line front end.
//!
//! Settings come from a TOML file (`--config`, else `$SKILLGRAPH_CONFIG`,
//! else `./skillgraph.toml` when present) and are overridden by flags.
//! Relative paths in the file are resolved against the file's directory.
//!
//! Exit codes: 0 success, 1 domain error, 2 usage error.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use thiserror::Error;

use crate::artifact::{ArtifactStore, BlobMeta, ContentId, Integrity, MediaKind, StoreError};
use crate::fixture::{self, FixtureError};
use crate::graph::{Graph, SnapshotError};
use crate::ingest::{self, Gazetteer, IngestError, RuleSet, SkillManifest};
use crate::query::{format_answer, OutputMode, QueryError, TemplateSet, DEFAULT_TEMPLATES};
use crate::service::{self, Engine, ServiceError};
use crate::similarity::SkillSpec;

pub const CONFIG_ENV: &str = "SKILLGRAPH_CONFIG";
pub const DEFAULT_CONFIG_FILE: &str = "skillgraph.toml";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("config {path}: {msg}")]
    Config { path: PathBuf, msg: String },
    #[error("{path}: {msg}")]
    Json { path: PathBuf, msg: String },
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error(transparent)]
    Fixture(#[from] FixtureError),
    #[error("{0} artifact(s) failed verification")]
    VerifyFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Resolved settings. `None` resource paths mean the built-in defaults.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Config {
    pub graph: PathBuf,
    pub store: PathBuf,
    pub gazetteer: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub log_level: String,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            graph: PathBuf::from("skillgraph.ksg"),
            store: PathBuf::from("skillgraph-store"),
            gazetteer: None,
            rules: None,
            templates: None,
            log_level: "warn".into(),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    graph: Option<PathBuf>,
    store: Option<PathBuf>,
    gazetteer: Option<PathBuf>,
    rules: Option<PathBuf>,
    templates: Option<PathBuf>,
    log_level: Option<String>,
}

impl Config {
    /// Parses a config file body. Relative paths are joined onto `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Config, String> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| e.to_string())?;
        let at = |p: PathBuf| if p.is_relative() { base.join(p) } else { p };
        let d = Config::default();
        Ok(Config {
            graph: file.graph.map(at).unwrap_or(d.graph),
            store: file.store.map(at).unwrap_or(d.store),
            gazetteer: file.gazetteer.map(at),
            rules: file.rules.map(at),
            templates: file.templates.map(at),
            log_level: file.log_level.unwrap_or(d.log_level),
        })
    }

    pub fn load(path: &Path) -> Result<Config, CliError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Config::from_toml(&text, base).map_err(|msg| CliError::Config {
            path: path.to_path_buf(),
            msg,
        })
    }

    fn resolve(flags: &GlobalFlags) -> Result<Config, CliError> {
        let file = flags
            .config
            .clone()
            .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from))
            .or_else(|| Some(PathBuf::from(DEFAULT_CONFIG_FILE)).filter(|p| p.is_file()));
        let mut cfg = match file {
            Some(p) => Config::load(&p)?,
            None => Config::default(),
        };
        if let Some(p) = &flags.graph {
            cfg.graph = p.clone();
        }
        if let Some(p) = &flags.store {
            cfg.store = p.clone();
        }
        if let Some(p) = &flags.gazetteer {
            cfg.gazetteer = Some(p.clone());
        }
        if let Some(p) = &flags.rules {
            cfg.rules = Some(p.clone());
        }
        if let Some(p) = &flags.templates {
            cfg.templates = Some(p.clone());
        }
        if let Some(l) = &flags.log_level {
            cfg.log_level = l.clone();
        }
        Ok(cfg)
    }

    fn read_resource(path: &Option<PathBuf>, builtin: &'static str) -> Result<String, CliError> {
        match path {
            Some(p) => fs::read_to_string(p).map_err(io_err(p)),
            None => Ok(builtin.to_string()),
        }
    }

    pub fn gazetteer(&self) -> Result<Gazetteer, CliError> {
        Ok(Gazetteer::from_tsv(&Self::read_resource(
            &self.gazetteer,
            fixture::GAZETTEER_TSV,
        )?)?)
    }

    pub fn rules(&self) -> Result<RuleSet, CliError> {
        Ok(RuleSet::from_tsv(&Self::read_resource(
            &self.rules,
            fixture::RELATION_RULES_TSV,
        )?)?)
    }

    pub fn templates(&self) -> Result<TemplateSet, CliError> {
        Ok(TemplateSet::parse(&Self::read_resource(
            &self.templates,
            DEFAULT_TEMPLATES,
        )?)?)
    }

    pub fn open_store(&self) -> Result<ArtifactStore, CliError> {
        Ok(ArtifactStore::open(&self.store)?)
    }

    /// Loads the snapshot, or starts an empty graph when there is none yet.
    pub fn load_graph(&self) -> Result<Graph, CliError> {
        if self.graph.exists() {
            Ok(Graph::load(&self.graph)?)
        } else {
            log::info!("{} does not exist; starting from an empty graph", self.graph.display());
            Ok(Graph::new())
        }
    }

    pub fn engine(&self) -> Result<Engine, CliError> {
        Ok(Engine::new(
            self.load_graph()?,
            self.open_store()?,
            self.gazetteer()?,
            self.templates()?,
            self.rules()?,
        ))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "skillgraph",
    version,
    about = "Knowledge and skill graph: import, register, query, recommend"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalFlags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalFlags {
    /// Config file (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Graph snapshot path
    #[arg(long, global = true)]
    graph: Option<PathBuf>,
    /// Artifact store root
    #[arg(long, global = true)]
    store: Option<PathBuf>,
    /// Gazetteer TSV (surface, canonical, kind)
    #[arg(long, global = true)]
    gazetteer: Option<PathBuf>,
    /// Relation rules TSV (trigger, label, priority)
    #[arg(long, global = true)]
    rules: Option<PathBuf>,
    /// Query templates file
    #[arg(long, global = true)]
    templates: Option<PathBuf>,
    /// Log filter, e.g. warn, info, debug
    #[arg(long, global = true)]
    log_level: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Import subject/predicate/object TSV triples
    Import { tsv: PathBuf },
    /// Register a trained skill from a JSON manifest
    AddSkill {
        manifest: PathBuf,
        /// Store a file and use it as an artifact: network, dataset, display or env_profile
        #[arg(long = "blob", value_name = "NAME=PATH")]
        blobs: Vec<String>,
    },
    /// Answer a natural-language query
    Ask {
        query: String,
        #[arg(long)]
        json: bool,
    },
    /// Rank stored skills as warm starts for a new skill spec
    Recommend {
        spec: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Copy a skill's network and dataset out of the store
    Fetch {
        agent: String,
        skill: String,
        environment: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Check every artifact referenced by the graph
    Verify {
        #[arg(long)]
        json: bool,
    },
    /// Serve newline-delimited JSON queries
    Serve {
        #[arg(long)]
        socket: String,
    },
    /// Load the bundled demo dataset
    LoadDemo,
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = Config::resolve(&cli.global).and_then(|cfg| {
        init_logging(&cfg.log_level);
        execute(cli.command, &cfg)
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", single_line(&e.to_string()));
            e.exit_code()
        }
    }
}

fn single_line(msg: &str) -> String {
    msg.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn init_logging(level: &str) {
    let env = env_logger::Env::default().default_filter_or(level);
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Json {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

fn print(text: &str) -> Result<(), CliError> {
    let mut out = io::stdout().lock();
    let res = if text.ends_with('\n') {
        out.write_all(text.as_bytes())
    } else {
        writeln!(out, "{text}")
    };
    res.map_err(io_err(Path::new("<stdout>")))
}

fn mode(json: bool) -> OutputMode {
    if json {
        OutputMode::Json
    } else {
        OutputMode::Text
    }
}

fn execute(command: Command, cfg: &Config) -> Result<(), CliError> {
    match command {
        Command::Import { tsv } => import(cfg, &tsv),
        Command::AddSkill { manifest, blobs } => add_skill(cfg, &manifest, &blobs),
        Command::Ask { query, json } => {
            let answer = cfg.engine()?.ask(&query)?;
            print(&format_answer(&answer, mode(json)))
        }
        Command::Recommend { spec, json } => {
            let spec: SkillSpec = read_json(&spec)?;
            let answer = cfg.engine()?.recommend(&spec)?;
            print(&format_answer(&answer, mode(json)))
        }
        Command::Fetch {
            agent,
            skill,
            environment,
            out,
            json,
        } => fetch(cfg, &agent, &skill, &environment, &out, json),
        Command::Verify { json } => verify(cfg, json),
        Command::Serve { socket } => {
            let engine = Arc::new(cfg.engine()?);
            let handle = service::serve(socket.as_str(), engine).map_err(io_err(Path::new(&socket)))?;
            print(&format!("listening on {}", handle.local_addr()))?;
            handle.join();
            Ok(())
        }
        Command::LoadDemo => {
            let mut graph = cfg.load_graph()?;
            let summary = fixture::load_demo(&mut graph, &cfg.open_store()?)?;
            graph.save(&cfg.graph)?;
            print(&format!(
                "loaded {} facts and {} skills into {}",
                summary.facts.imported,
                summary.skills,
                cfg.graph.display()
            ))
        }
    }
}

fn import(cfg: &Config, tsv: &Path) -> Result<(), CliError> {
    let mut graph = cfg.load_graph()?;
    let mut gazetteer = cfg.gazetteer()?;
    gazetteer.extend_from_graph(&graph);
    let file = fs::File::open(tsv).map_err(io_err(tsv))?;
    let report = ingest::import_reader(BufReader::new(file), &mut graph, Some(&gazetteer)).map_err(io_err(tsv))?;
    for (line, reason) in &report.malformed {
        log::warn!("{}:{line}: {reason}", tsv.display());
    }
    graph.save(&cfg.graph)?;
    print(&format!(
        "read {} lines: {} imported, {} duplicates, {} malformed",
        report.lines_read,
        report.imported,
        report.duplicates,
        report.malformed.len()
    ))
}

fn blob_kind(name: &str) -> Option<MediaKind> {
    match name {
        "network" => Some(MediaKind::Network),
        "dataset" => Some(MediaKind::Dataset),
        "display" => Some(MediaKind::Display),
        "env_profile" => Some(MediaKind::Profile),
        _ => None,
    }
}

fn add_skill(cfg: &Config, manifest: &Path, blobs: &[String]) -> Result<(), CliError> {
    let mut value: serde_json::Value = read_json(manifest)?;
    let Some(fields) = value.as_object_mut() else {
        return Err(CliError::Json {
            path: manifest.to_path_buf(),
            msg: "manifest must be a JSON object".into(),
        });
    };
    let store = cfg.open_store()?;
    for spec in blobs {
        let (name, path) = spec
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--blob expects NAME=PATH, got {spec:?}")))?;
        let kind = blob_kind(name).ok_or_else(|| {
            CliError::Usage(format!(
                "unknown blob name {name:?}; expected network, dataset, display or env_profile"
            ))
        })?;
        let path = Path::new(path);
        let bytes = fs::read(path).map_err(io_err(path))?;
        let label = path.file_name().map(|n| n.to_string_lossy().into_owned());
        let mut meta = BlobMeta::new(kind);
        if let Some(label) = label {
            meta = meta.with_label(label);
        }
        let id = store.put(&bytes, meta)?;
        fields.insert(name.to_string(), serde_json::Value::String(id.to_string()));
    }
    let manifest_value: SkillManifest = serde_json::from_value(value).map_err(|e| CliError::Json {
        path: manifest.to_path_buf(),
        msg: e.to_string(),
    })?;
    let mut graph = cfg.load_graph()?;
    let reg = ingest::register_skill(&manifest_value, &mut graph, &store)?;
    graph.save(&cfg.graph)?;
    let name = graph.entity(reg.skill).map(|e| e.name.clone()).unwrap_or_default();
    print(&format!("registered {name} ({} new nodes)", reg.created.len()))
}

fn fetch(cfg: &Config, agent: &str, skill: &str, environment: &str, out: &Path, json: bool) -> Result<(), CliError> {
    let engine = cfg.engine()?;
    let meta = engine.fetch_meta(agent, skill, environment)?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let mut written = Vec::new();
    for a in &meta.artifacts {
        let (bytes, _) = engine.store().get(&a.id)?;
        let path = out.join(format!("{}-{}", a.role, a.id.hex()));
        fs::write(&path, bytes).map_err(io_err(&path))?;
        written.push((a.role, a.id, path));
    }
    if json {
        let files: Vec<_> = written
            .iter()
            .map(|(role, id, path)| serde_json::json!({"role": role, "id": id.to_string(), "path": path}))
            .collect();
        print(&serde_json::json!({"skill": meta.skill, "files": files}).to_string())
    } else {
        let mut text = format!("{}\n", meta.skill);
        for (role, id, path) in &written {
            text.push_str(&format!("  {role:<8} {id} -> {}\n", path.display()));
        }
        print(&text)
    }
}

fn verify(cfg: &Config, json: bool) -> Result<(), CliError> {
    let graph = cfg.load_graph()?;
    let store = cfg.open_store()?;
    let ids: BTreeSet<ContentId> = graph.referenced_content_ids();
    let mut failed = 0;
    let mut rows = Vec::new();
    for id in &ids {
        let status = match store.verify(id) {
            Ok(Integrity::Ok) => "ok",
            Ok(Integrity::Corrupt) => "corrupt",
            Err(StoreError::NotFound(_)) => "missing",
            Err(e) => return Err(e.into()),
        };
        if status != "ok" {
            failed += 1;
        }
        rows.push((id, status));
    }
    if json {
        let items: Vec<_> = rows
            .iter()
            .map(|(id, status)| serde_json::json!({"id": id.to_string(), "status": status}))
            .collect();
        print(&serde_json::json!({"checked": ids.len(), "failed": failed, "artifacts": items}).to_string())?;
    } else {
        let mut text = String::new();
        for (id, status) in &rows {
            text.push_str(&format!("{status:<8} {id}\n"));
        }
        text.push_str(&format!("{} checked, {failed} failed\n", ids.len()));
        print(&text)?;
    }
    if failed > 0 {
        return Err(CliError::VerifyFailed(failed));
    }
    Ok(())
}
