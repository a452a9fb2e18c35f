use std::collections::HashSet;

use super::{
    Direction, EdgePattern, Label, NodePattern, PathPattern, Predicate, Projection, Query,
    QueryError,
};
use crate::model::EdgeKind;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Match,
    Where,
    And,
    Return,
    Ident(String),
    Str(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Colon,
    Dot,
    Comma,
    Eq,
    Semi,
    Dash,
    LeftArrow,
    RightArrow,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Match => "MATCH".into(),
            Tok::Where => "WHERE".into(),
            Tok::And => "AND".into(),
            Tok::Return => "RETURN".into(),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Str(_) => "string literal".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Dash => "`-`".into(),
            Tok::LeftArrow => "`<-`".into(),
            Tok::RightArrow => "`->`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

fn syntax(position: usize, expected: &[&str], found: impl Into<String>) -> QueryError {
    QueryError::SyntaxError {
        position,
        expected: expected.iter().map(|s| s.to_string()).collect(),
        found: found.into(),
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, QueryError> {
    let mut out = Vec::new();
    let mut it = text.char_indices().peekable();
    while let Some(&(pos, c)) = it.peek() {
        if c.is_whitespace() {
            it.next();
            continue;
        }
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '[' => Some(Tok::LBracket),
            ']' => Some(Tok::RBracket),
            ':' => Some(Tok::Colon),
            '.' => Some(Tok::Dot),
            ',' => Some(Tok::Comma),
            '=' => Some(Tok::Eq),
            ';' => Some(Tok::Semi),
            _ => None,
        };
        if let Some(t) = single {
            it.next();
            out.push((t, pos));
            continue;
        }
        match c {
            '-' => {
                it.next();
                if it.peek().map(|p| p.1) == Some('>') {
                    it.next();
                    out.push((Tok::RightArrow, pos));
                } else {
                    out.push((Tok::Dash, pos));
                }
            }
            '<' => {
                it.next();
                if it.peek().map(|p| p.1) != Some('-') {
                    return Err(syntax(pos + 1, &["`-`"], "`<` without `-`"));
                }
                it.next();
                out.push((Tok::LeftArrow, pos));
            }
            '"' => {
                it.next();
                let mut s = String::new();
                loop {
                    match it.next() {
                        None => return Err(syntax(text.len(), &["`\"`"], "end of input")),
                        Some((_, '"')) => break,
                        Some((p, '\\')) => match it.next() {
                            Some((_, '"')) => s.push('"'),
                            Some((_, '\\')) => s.push('\\'),
                            Some((_, 'n')) => s.push('\n'),
                            Some((_, 't')) => s.push('\t'),
                            Some((_, 'r')) => s.push('\r'),
                            Some((q, other)) => {
                                return Err(syntax(q, &["escape \\\" \\\\ \\n \\t \\r"], format!("`\\{other}`")))
                            }
                            None => return Err(syntax(p + 1, &["escape"], "end of input")),
                        },
                        Some((_, ch)) => s.push(ch),
                    }
                }
                out.push((Tok::Str(s), pos));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&(_, ch)) = it.peek() {
                    if ch.is_ascii_alphanumeric() || ch == '_' {
                        s.push(ch);
                        it.next();
                    } else {
                        break;
                    }
                }
                let t = match s.as_str() {
                    "MATCH" => Tok::Match,
                    "WHERE" => Tok::Where,
                    "AND" => Tok::And,
                    "RETURN" => Tok::Return,
                    _ => Tok::Ident(s),
                };
                out.push((t, pos));
            }
            other => return Err(syntax(pos, &["a query token"], format!("`{other}`"))),
        }
    }
    out.push((Tok::Eof, text.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn fail(&self, expected: &[&str]) -> QueryError {
        syntax(self.pos(), expected, self.peek().describe())
    }

    fn expect(&mut self, want: Tok, name: &str) -> Result<usize, QueryError> {
        if *self.peek() == want {
            Ok(self.bump().1)
        } else {
            Err(self.fail(&[name]))
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, usize), QueryError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                let p = self.bump().1;
                Ok((s, p))
            }
            _ => Err(self.fail(&[what])),
        }
    }

    fn node(&mut self) -> Result<NodePattern, QueryError> {
        self.expect(Tok::LParen, "`(`")?;
        let (var, _) = self.ident("variable")?;
        let label = if *self.peek() == Tok::Colon {
            self.bump();
            let (name, p) = self.ident("label")?;
            Some(Label::parse(&name).ok_or(QueryError::UnknownLabel { name, position: p })?)
        } else {
            None
        };
        if *self.peek() != Tok::RParen {
            let mut expected = vec!["`)`"];
            if label.is_none() {
                expected.insert(0, "`:`");
            }
            return Err(self.fail(&expected));
        }
        self.bump();
        Ok(NodePattern { var, label })
    }

    fn edge(&mut self) -> Result<EdgePattern, QueryError> {
        let left = match self.bump().0 {
            Tok::Dash => false,
            Tok::LeftArrow => true,
            _ => unreachable!("edge() is only entered on `-` or `<-`"),
        };
        self.expect(Tok::LBracket, "`[`")?;
        self.expect(Tok::Colon, "`:`")?;
        let (name, p) = self.ident("relation name")?;
        let kind = EdgeKind::from_relation_name(&name).ok_or(QueryError::UnknownRelation { name, position: p })?;
        self.expect(Tok::RBracket, "`]`")?;
        let right = match self.peek() {
            Tok::RightArrow => true,
            Tok::Dash => false,
            _ => return Err(self.fail(&["`->`", "`-`"])),
        };
        self.bump();
        let direction = match (left, right) {
            (false, true) => Direction::Out,
            (true, false) => Direction::In,
            (false, false) => Direction::Either,
            (true, true) => Direction::Both,
        };
        Ok(EdgePattern { kind, direction })
    }

    fn field_ref(&mut self) -> Result<(String, String, usize), QueryError> {
        let (var, p) = self.ident("variable")?;
        self.expect(Tok::Dot, "`.`")?;
        let (field, _) = self.ident("field name")?;
        Ok((var, field, p))
    }

    fn query(&mut self) -> Result<Query, QueryError> {
        let mut q = Query {
            matches: Vec::new(),
            predicates: Vec::new(),
            returns: Vec::new(),
        };
        while *self.peek() == Tok::Match {
            self.bump();
            let start = self.node()?;
            let mut steps = Vec::new();
            while matches!(self.peek(), Tok::Dash | Tok::LeftArrow) {
                let e = self.edge()?;
                steps.push((e, self.node()?));
            }
            q.matches.push(PathPattern { start, steps });
        }
        if *self.peek() == Tok::Where {
            if q.matches.is_empty() {
                return Err(self.fail(&["MATCH"]));
            }
            self.bump();
            loop {
                let (var, field, _) = self.field_ref()?;
                self.expect(Tok::Eq, "`=`")?;
                let value = match self.peek().clone() {
                    Tok::Str(s) => {
                        self.bump();
                        s
                    }
                    _ => return Err(self.fail(&["string literal"])),
                };
                q.predicates.push(Predicate { var, field, value });
                if *self.peek() != Tok::And {
                    break;
                }
                self.bump();
            }
        }
        if *self.peek() != Tok::Return {
            let expected: &[&str] = match (q.matches.is_empty(), q.predicates.is_empty()) {
                (true, _) => &["MATCH", "RETURN"],
                (false, true) => &["MATCH", "WHERE", "RETURN", "`-`", "`<-`"],
                (false, false) => &["AND", "RETURN"],
            };
            return Err(self.fail(expected));
        }
        self.bump();
        loop {
            let (var, field, _) = self.field_ref()?;
            q.returns.push(Projection { var, field });
            if *self.peek() != Tok::Comma {
                break;
            }
            self.bump();
        }
        if *self.peek() == Tok::Semi {
            self.bump();
        }
        if *self.peek() != Tok::Eof {
            return Err(self.fail(&["`,`", "`;`", "end of input"]));
        }
        Ok(q)
    }
}

/// Parses and binding-checks a query.
pub fn parse_query(text: &str) -> Result<Query, QueryError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, at: 0 };
    let q = p.query()?;
    let bound: HashSet<&str> = q
        .matches
        .iter()
        .flat_map(|m| m.nodes())
        .map(|n| n.var.as_str())
        .collect();
    let used = q
        .predicates
        .iter()
        .map(|p| &p.var)
        .chain(q.returns.iter().map(|r| &r.var));
    for v in used {
        if !bound.contains(v.as_str()) {
            return Err(QueryError::UnboundVariable(v.clone()));
        }
    }
    Ok(q)
}
