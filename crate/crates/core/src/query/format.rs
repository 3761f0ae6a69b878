use std::collections::BTreeMap;
use std::fmt::Write;

use super::{Answer, Payload};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputMode {
    Text,
    Json,
}

/// Minimal canonical JSON: object keys sorted, numbers pre-rendered.
enum Canon {
    Str(String),
    Num(String),
    Arr(Vec<Canon>),
    Obj(BTreeMap<&'static str, Canon>),
}

impl Canon {
    fn str(s: impl Into<String>) -> Canon {
        Canon::Str(s.into())
    }

    fn write(&self, out: &mut String) {
        match self {
            Canon::Str(s) => out.push_str(&serde_json::to_string(s).expect("strings always serialize")),
            Canon::Num(n) => out.push_str(n),
            Canon::Arr(items) => {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    item.write(out);
                }
                out.push(']');
            }
            Canon::Obj(fields) => {
                out.push('{');
                for (i, (k, v)) in fields.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push_str(&serde_json::to_string(k).expect("keys always serialize"));
                    out.push(':');
                    v.write(out);
                }
                out.push('}');
            }
        }
    }
}

/// Scores are always printed with six decimals.
fn score(v: f64) -> String {
    format!("{:.6}", v + 0.0)
}

fn to_canon(a: &Answer) -> Canon {
    match &a.payload {
        Payload::Triples(triples) => Canon::Arr(
            triples
                .iter()
                .map(|t| {
                    Canon::Obj(BTreeMap::from([
                        ("s", Canon::str(&t.subject)),
                        ("p", Canon::str(&t.predicate)),
                        ("o", Canon::str(&t.object)),
                    ]))
                })
                .collect(),
        ),
        Payload::Artifacts { skill, ids } => {
            let mut obj = BTreeMap::from([("skill", Canon::str(skill))]);
            for (role, id) in ids {
                obj.entry(role.as_str()).or_insert_with(|| Canon::str(id.to_string()));
            }
            Canon::Obj(obj)
        }
        Payload::Media { skill, display } => Canon::Obj(BTreeMap::from([
            ("skill", Canon::str(skill)),
            ("display", Canon::str(display.to_string())),
        ])),
        Payload::Ranked(ranked) => Canon::Obj(BTreeMap::from([
            ("strategy", Canon::str(ranked.strategy.to_string())),
            (
                "candidates",
                Canon::Arr(
                    ranked
                        .candidates
                        .iter()
                        .map(|c| {
                            Canon::Obj(BTreeMap::from([
                                ("id", Canon::Num(c.skill.0.to_string())),
                                ("skill", Canon::str(&c.name)),
                                ("task", Canon::str(&c.task)),
                                ("environment", Canon::str(&c.environment)),
                                ("score", Canon::Num(score(c.score))),
                            ]))
                        })
                        .collect(),
                ),
            ),
            ("warnings", Canon::Arr(ranked.warnings.iter().map(Canon::str).collect())),
        ])),
    }
}

/// Renders an answer. JSON output is canonical and byte-stable; text output
/// is one human-readable line per item.
pub fn format_answer(a: &Answer, mode: OutputMode) -> String {
    match mode {
        OutputMode::Json => {
            let mut out = String::new();
            to_canon(a).write(&mut out);
            out
        }
        OutputMode::Text => format_text(a),
    }
}

fn format_text(a: &Answer) -> String {
    let mut out = String::new();
    match &a.payload {
        Payload::Triples(triples) if triples.is_empty() => out.push_str("no results\n"),
        Payload::Triples(triples) => {
            for t in triples {
                let _ = writeln!(out, "{}\t{}\t{}", t.subject, t.predicate, t.object);
            }
        }
        Payload::Artifacts { skill, ids } => {
            let _ = writeln!(out, "{skill}");
            for (role, id) in ids {
                let _ = writeln!(out, "  {:<8} {id}", role.as_str());
            }
        }
        Payload::Media { skill, display } => {
            let _ = writeln!(out, "{skill}\n  display  {display}");
        }
        Payload::Ranked(ranked) => {
            let _ = writeln!(out, "strategy: {}", ranked.strategy);
            if ranked.candidates.is_empty() {
                out.push_str("no results\n");
            }
            for (i, c) in ranked.candidates.iter().enumerate() {
                let _ = writeln!(out, "{:>2}. {}  {}", i + 1, c.name, score(c.score));
            }
        }
    }
    for w in &a.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}
