//! A small pattern-matching query language over the influence graph.
//!
//! ```text
//! query       := match+ where? return ';'?
//! match       := "MATCH" node (edge node)*
//! node        := '(' IDENT (':' LABEL)? ')'
//! edge        := ('-' | '<-') '[' ':' RELNAME ']' ('->' | '-')
//! where       := "WHERE" pred ("AND" pred)*
//! pred        := IDENT '.' IDENT '=' STRING
//! return      := "RETURN" IDENT '.' IDENT (',' IDENT '.' IDENT)*
//! ```
//!
//! Labels name entry types (plus `Deployment`); relation names name edge
//! kinds, both matched case-insensitively with underscores ignored.

mod eval;
mod parse;
mod saved;

use std::fmt;

use serde::Serialize;

use crate::model::{EdgeKind, EntryType};

pub use eval::{evaluate, field_value, ResultTable};
pub use parse::parse_query;
pub use saved::{escape_literal, run_saved_query, saved_queries, SavedQuery};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Entry(EntryType),
    /// Artifact entries of the deployment kind.
    Deployment,
}

impl Label {
    pub fn parse(name: &str) -> Option<Label> {
        let folded: String = name.chars().filter(|c| *c != '_').flat_map(char::to_lowercase).collect();
        if folded == "deployment" {
            return Some(Label::Deployment);
        }
        EntryType::ALL
            .iter()
            .find(|t| t.as_str().to_lowercase() == folded)
            .map(|t| Label::Entry(*t))
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Entry(t) => f.write_str(t.as_str()),
            Label::Deployment => f.write_str("Deployment"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// `-[..]->`
    Out,
    /// `<-[..]-`
    In,
    /// `-[..]-`: an edge either way.
    Either,
    /// `<-[..]->`: edges both ways.
    Both,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodePattern {
    pub var: String,
    pub label: Option<Label>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgePattern {
    pub kind: EdgeKind,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathPattern {
    pub start: NodePattern,
    pub steps: Vec<(EdgePattern, NodePattern)>,
}

impl PathPattern {
    pub fn nodes(&self) -> impl Iterator<Item = &NodePattern> {
        std::iter::once(&self.start).chain(self.steps.iter().map(|(_, n)| n))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Predicate {
    pub var: String,
    pub field: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Projection {
    pub var: String,
    pub field: String,
}

impl fmt::Display for Projection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.var, self.field)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub matches: Vec<PathPattern>,
    pub predicates: Vec<Predicate>,
    pub returns: Vec<Projection>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize)]
pub enum QueryError {
    #[error("syntax error at offset {position}: expected {}, found {found}", expected.join(" or "))]
    SyntaxError {
        position: usize,
        expected: Vec<String>,
        found: String,
    },
    #[error("variable `{0}` is not bound by any MATCH")]
    UnboundVariable(String),
    #[error("unknown label `{name}` at offset {position}")]
    UnknownLabel { name: String, position: usize },
    #[error("unknown relation `{name}` at offset {position}")]
    UnknownRelation { name: String, position: usize },
    #[error("unknown saved query `{0}`")]
    UnknownQueryName(String),
    #[error("saved query `{name}` takes {expected} parameter(s) ({}), got {got}", params.join(", "))]
    ParameterArity {
        name: String,
        expected: usize,
        params: Vec<String>,
        got: usize,
    },
}

/// Upper snake case relation name, e.g. `USES_TEST`.
pub fn relation_name(kind: EdgeKind) -> String {
    let mut s = String::new();
    for c in kind.as_str().chars() {
        if c.is_ascii_uppercase() {
            s.push('_');
        }
        s.push(c.to_ascii_uppercase());
    }
    s
}

impl fmt::Display for NodePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.label {
            Some(l) => write!(f, "({}:{l})", self.var),
            None => write!(f, "({})", self.var),
        }
    }
}

impl fmt::Display for EdgePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rel = relation_name(self.kind);
        match self.direction {
            Direction::Out => write!(f, "-[:{rel}]->"),
            Direction::In => write!(f, "<-[:{rel}]-"),
            Direction::Either => write!(f, "-[:{rel}]-"),
            Direction::Both => write!(f, "<-[:{rel}]->"),
        }
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for m in &self.matches {
            write!(f, "MATCH {}", m.start)?;
            for (e, n) in &m.steps {
                write!(f, "{e}{n}")?;
            }
            writeln!(f)?;
        }
        for (i, p) in self.predicates.iter().enumerate() {
            let kw = if i == 0 { "WHERE" } else { "  AND" };
            writeln!(f, "{kw} {}.{} = {}", p.var, p.field, escape_literal(&p.value))?;
        }
        let cols: Vec<String> = self.returns.iter().map(ToString::to_string).collect();
        write!(f, "RETURN {};", cols.join(", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relation_names() {
        assert_eq!(relation_name(EdgeKind::UsesTest), "USES_TEST");
        assert_eq!(relation_name(EdgeKind::Motivates), "MOTIVATES");
        for k in EdgeKind::ALL {
            assert_eq!(EdgeKind::from_relation_name(&relation_name(k)), Some(k));
        }
    }

    #[test]
    fn labels() {
        assert_eq!(Label::parse("EvaluationRun"), Some(Label::Entry(EntryType::EvaluationRun)));
        assert_eq!(Label::parse("evaluation_run"), Some(Label::Entry(EntryType::EvaluationRun)));
        assert_eq!(Label::parse("Deployment"), Some(Label::Deployment));
        assert_eq!(Label::parse("Person"), None);
    }
}
