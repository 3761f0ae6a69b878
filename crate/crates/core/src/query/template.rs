use std::fmt;
use std::str::FromStr;

use crate::graph::EntityKind;
use crate::ingest::Gazetteer;
use crate::name::{join_tokens, normalize_name, tokenize, Token};
use crate::similarity::SkillSpec;

use super::{QueryError, QueryIntent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Slot {
    Agent,
    Skill,
    Environment,
    Entity,
    Relation,
}

impl Slot {
    pub fn as_str(self) -> &'static str {
        match self {
            Slot::Agent => "agent",
            Slot::Skill => "skill",
            Slot::Environment => "environment",
            Slot::Entity => "entity",
            Slot::Relation => "relation",
        }
    }
}

impl FromStr for Slot {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "agent" => Ok(Slot::Agent),
            "skill" => Ok(Slot::Skill),
            "environment" => Ok(Slot::Environment),
            "entity" => Ok(Slot::Entity),
            "relation" => Ok(Slot::Relation),
            other => Err(format!("unknown slot {{{other}}}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IntentTag {
    SkillList,
    ShowSkill,
    FetchModel,
    FactLookup,
    Recommend,
}

impl IntentTag {
    pub fn as_str(self) -> &'static str {
        match self {
            IntentTag::SkillList => "skill_list",
            IntentTag::ShowSkill => "show_skill",
            IntentTag::FetchModel => "fetch_model",
            IntentTag::FactLookup => "fact_lookup",
            IntentTag::Recommend => "recommend",
        }
    }

    /// Slots a template of this intent must contain, each exactly once.
    pub fn required_slots(self) -> &'static [Slot] {
        match self {
            IntentTag::SkillList => &[Slot::Agent],
            IntentTag::ShowSkill | IntentTag::FetchModel | IntentTag::Recommend => {
                &[Slot::Agent, Slot::Skill, Slot::Environment]
            }
            IntentTag::FactLookup => &[Slot::Entity, Slot::Relation],
        }
    }
}

impl FromStr for IntentTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "skill_list" => Ok(IntentTag::SkillList),
            "show_skill" => Ok(IntentTag::ShowSkill),
            "fetch_model" => Ok(IntentTag::FetchModel),
            "fact_lookup" => Ok(IntentTag::FactLookup),
            "recommend" => Ok(IntentTag::Recommend),
            other => Err(format!("unknown intent tag {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Part {
    Word(String),
    Slot(Slot),
}

/// A query pattern such as `can you search {agent} {skill} in the {environment}?`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryTemplate {
    pub intent: IntentTag,
    pub pattern: String,
    parts: Vec<Part>,
}

impl QueryTemplate {
    pub fn new(intent: IntentTag, pattern: &str) -> Result<Self, QueryError> {
        let bad = |msg: String| QueryError::InvalidTemplate(format!("{pattern:?}: {msg}"));
        let mut parts = Vec::new();
        let mut rest = pattern;
        while let Some(open) = rest.find('{') {
            parts.extend(tokenize(&rest[..open]).into_iter().map(|t| Part::Word(t.text)));
            let close = rest[open..].find('}').ok_or_else(|| bad("unclosed '{'".into()))? + open;
            parts.push(Part::Slot(rest[open + 1..close].trim().parse().map_err(bad)?));
            rest = &rest[close + 1..];
        }
        parts.extend(tokenize(rest).into_iter().map(|t| Part::Word(t.text)));

        let slots: Vec<Slot> = parts
            .iter()
            .filter_map(|p| match p {
                Part::Slot(s) => Some(*s),
                Part::Word(_) => None,
            })
            .collect();
        let mut expected = intent.required_slots().to_vec();
        let mut found = slots.clone();
        expected.sort_by_key(|s| s.as_str());
        found.sort_by_key(|s| s.as_str());
        if expected != found {
            return Err(bad(format!(
                "{} needs slots {:?}, found {:?}",
                intent.as_str(),
                expected.iter().map(|s| s.as_str()).collect::<Vec<_>>(),
                found.iter().map(|s| s.as_str()).collect::<Vec<_>>()
            )));
        }
        Ok(QueryTemplate {
            intent,
            pattern: pattern.trim().to_string(),
            parts,
        })
    }

    pub fn parts(&self) -> &[Part] {
        &self.parts
    }

    /// Fills the slots with `values` (looked up by slot) to produce query text.
    pub fn render(&self, value: impl Fn(Slot) -> String) -> String {
        self.parts
            .iter()
            .map(|p| match p {
                Part::Word(w) => w.clone(),
                Part::Slot(s) => value(*s),
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl fmt::Display for QueryTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}", self.intent.as_str(), self.pattern)
    }
}

/// Ordered template list. The first template that matches wins.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: Vec<QueryTemplate>,
}

impl TemplateSet {
    pub fn new(templates: Vec<QueryTemplate>) -> Result<Self, QueryError> {
        if templates.is_empty() {
            return Err(QueryError::InvalidTemplate("template list is empty".into()));
        }
        Ok(TemplateSet { templates })
    }

    /// Parses `intent_tag|pattern` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, QueryError> {
        let mut templates = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (tag, pattern) = line
                .split_once('|')
                .ok_or_else(|| QueryError::InvalidTemplate(format!("line {}: expected intent_tag|pattern", i + 1)))?;
            let tag = tag
                .parse()
                .map_err(|e| QueryError::InvalidTemplate(format!("line {}: {e}", i + 1)))?;
            templates.push(QueryTemplate::new(tag, pattern)?);
        }
        TemplateSet::new(templates)
    }

    pub fn templates(&self) -> &[QueryTemplate] {
        &self.templates
    }
}

/// Slot values of one structural match, as token ranges.
type Binding = Vec<(Slot, std::ops::Range<usize>)>;

/// Enumerates every way `parts` can cover `tokens`, slots taking one or
/// more tokens. Earlier slots are tried longest first, so a multi-word name
/// wins over its own prefix.
fn structural_matches(parts: &[Part], tokens: &[Token], visit: &mut dyn FnMut(&Binding) -> bool) {
    fn go(
        parts: &[Part],
        tokens: &[Token],
        pos: usize,
        binding: &mut Binding,
        visit: &mut dyn FnMut(&Binding) -> bool,
    ) -> bool {
        let Some((head, rest)) = parts.split_first() else {
            return pos == tokens.len() && visit(binding);
        };
        match head {
            Part::Word(w) => tokens.get(pos).is_some_and(|t| t.text == *w) && go(rest, tokens, pos + 1, binding, visit),
            Part::Slot(slot) => {
                // every remaining word needs a token
                let min_rest = rest.len();
                for end in (pos + 1..=tokens.len().saturating_sub(min_rest)).rev() {
                    binding.push((*slot, pos..end));
                    let stop = go(rest, tokens, end, binding, visit);
                    binding.pop();
                    if stop {
                        return true;
                    }
                }
                false
            }
        }
    }
    go(parts, tokens, 0, &mut Vec::new(), visit);
}

fn resolve_slot(slot: Slot, intent: IntentTag, key: &str, gazetteer: &Gazetteer) -> Option<String> {
    let entry = gazetteer.resolve(key);
    let of_kind = |kind: EntityKind| entry.filter(|e| e.kind == kind).map(|e| e.canonical.clone());
    match slot {
        Slot::Agent => of_kind(EntityKind::Agent),
        Slot::Environment => of_kind(EntityKind::Environment),
        // a recommendation asks about a skill that need not exist yet
        Slot::Skill => {
            of_kind(EntityKind::Skill).or_else(|| (intent == IntentTag::Recommend).then(|| normalize_name(key)))
        }
        Slot::Entity => entry.map(|e| e.canonical.clone()),
        Slot::Relation => Some(normalize_name(key)),
    }
}

fn build_intent(intent: IntentTag, get: impl Fn(Slot) -> String) -> QueryIntent {
    match intent {
        IntentTag::SkillList => QueryIntent::SkillList {
            agent: get(Slot::Agent),
        },
        IntentTag::ShowSkill => QueryIntent::ShowSkill {
            agent: get(Slot::Agent),
            skill: get(Slot::Skill),
            environment: get(Slot::Environment),
        },
        IntentTag::FetchModel => QueryIntent::FetchModel {
            agent: get(Slot::Agent),
            skill: get(Slot::Skill),
            environment: get(Slot::Environment),
        },
        IntentTag::FactLookup => QueryIntent::FactLookup {
            entity: get(Slot::Entity),
            relation: get(Slot::Relation),
        },
        IntentTag::Recommend => QueryIntent::RecommendPretrain {
            spec: SkillSpec::new(&get(Slot::Agent), &get(Slot::Environment), &get(Slot::Skill)),
        },
    }
}

/// Matches `text` against the templates in order and resolves every slot
/// through the gazetteer. Matching ignores case and punctuation.
pub fn parse_query(text: &str, templates: &TemplateSet, gazetteer: &Gazetteer) -> Result<QueryIntent, QueryError> {
    let tokens = tokenize(text);
    let mut unresolved: Option<(Slot, String)> = None;

    for template in &templates.templates {
        let mut found: Option<QueryIntent> = None;
        structural_matches(&template.parts, &tokens, &mut |binding| {
            let mut values = Vec::with_capacity(binding.len());
            for (slot, range) in binding {
                let key = join_tokens(&tokens[range.clone()]);
                match resolve_slot(*slot, template.intent, &key, gazetteer) {
                    Some(v) => values.push((*slot, v)),
                    None => {
                        unresolved.get_or_insert((*slot, key));
                        return false;
                    }
                }
            }
            let get = |s: Slot| {
                values
                    .iter()
                    .find(|(slot, _)| *slot == s)
                    .map(|(_, v)| v.clone())
                    .unwrap_or_default()
            };
            found = Some(build_intent(template.intent, get));
            true
        });
        if let Some(intent) = found {
            return Ok(intent);
        }
    }

    if let Some((slot, value)) = unresolved {
        return Err(QueryError::UnknownSlotValue {
            slot: slot.as_str().to_string(),
            value,
        });
    }
    Err(QueryError::Unrecognized {
        query: text.to_string(),
        nearest: nearest_template(&tokens, templates),
    })
}

/// The template pattern closest to the query by edit distance.
fn nearest_template(tokens: &[Token], templates: &TemplateSet) -> Option<String> {
    let query = tokens.iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join(" ");
    templates
        .templates
        .iter()
        .map(|t| {
            let shape = t.render(|s| format!("{{{}}}", s.as_str()));
            (strsim::levenshtein(&query, &shape), t.pattern.clone())
        })
        .min_by(|a, b| a.0.cmp(&b.0))
        .map(|(_, p)| p)
}
