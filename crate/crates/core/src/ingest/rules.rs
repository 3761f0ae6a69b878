use std::collections::HashSet;

use crate::name::{tokenize, Token};

use super::IngestError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationRule {
    pub trigger: String,
    pub label: String,
    pub priority: i64,
}

/// Validated rule list: triggers are unique after tokenization.
#[derive(Debug, Clone, Default)]
pub struct RuleSet {
    rules: Vec<(Vec<String>, RelationRule)>,
}

impl RuleSet {
    pub fn new(rules: Vec<RelationRule>) -> Result<Self, IngestError> {
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(rules.len());
        for rule in rules {
            let words: Vec<String> = tokenize(&rule.trigger).into_iter().map(|t| t.text).collect();
            if words.is_empty() || rule.label.trim().is_empty() {
                return Err(IngestError::InvalidRule(format!("empty trigger or label in {rule:?}")));
            }
            if !seen.insert(words.clone()) {
                return Err(IngestError::InvalidRule(format!(
                    "duplicate trigger {:?}",
                    rule.trigger
                )));
            }
            let rule = RelationRule {
                label: rule.label.trim().to_string(),
                ..rule
            };
            out.push((words, rule));
        }
        Ok(RuleSet { rules: out })
    }

    /// Parses `trigger\tlabel\tpriority` lines; `#` starts a comment.
    pub fn from_tsv(text: &str) -> Result<Self, IngestError> {
        let mut rules = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [trigger, label, priority] = fields[..] else {
                return Err(IngestError::InvalidRule(format!(
                    "line {}: expected 3 tab-separated fields",
                    i + 1
                )));
            };
            let priority = priority
                .trim()
                .parse()
                .map_err(|e| IngestError::InvalidRule(format!("line {}: priority: {e}", i + 1)))?;
            rules.push(RelationRule {
                trigger: trigger.to_string(),
                label: label.to_string(),
                priority,
            });
        }
        RuleSet::new(rules)
    }

    pub fn rules(&self) -> impl Iterator<Item = &RelationRule> {
        self.rules.iter().map(|(_, r)| r)
    }

    /// Label of the rule whose trigger is exactly `phrase`.
    pub fn label_for(&self, phrase: &str) -> Option<&str> {
        let words: Vec<String> = tokenize(phrase).into_iter().map(|t| t.text).collect();
        self.rules
            .iter()
            .find(|(w, _)| *w == words)
            .map(|(_, r)| r.label.as_str())
    }
}

fn contains_run(tokens: &[Token], words: &[String]) -> bool {
    tokens
        .windows(words.len())
        .any(|w| w.iter().zip(words).all(|(t, word)| t.text == *word))
}

/// Labels of every rule whose trigger occurs in `text` as a whole-word run,
/// highest priority first, equal priorities by label. Each label appears
/// once.
pub fn extract_relations(text: &str, rules: &RuleSet) -> Vec<String> {
    let tokens = tokenize(text);
    let mut hits: Vec<&RelationRule> = rules
        .rules
        .iter()
        .filter(|(words, _)| contains_run(&tokens, words))
        .map(|(_, r)| r)
        .collect();
    hits.sort_by(|a, b| b.priority.cmp(&a.priority).then_with(|| a.label.cmp(&b.label)));
    let mut seen = HashSet::new();
    hits.into_iter()
        .filter(|r| seen.insert(r.label.as_str()))
        .map(|r| r.label.clone())
        .collect()
}
