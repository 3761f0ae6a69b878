//! Embedded knowledge-and-skill graph engine.
//!
//! Static fact triples and dynamic skill entities (trained policies, offline
//! datasets, display media) live in one typed [`graph::Graph`]. Blobs are kept
//! in a content-addressed [`artifact::ArtifactStore`]. The [`query`] module
//! answers template queries over both, and [`similarity`] ranks stored skills
//! as warm starts for learning a new one.

pub mod artifact;
pub mod cli;
pub mod fixture;
pub mod graph;
pub mod ingest;
pub mod name;
pub mod query;
pub mod service;
pub mod similarity;
pub mod skill;
