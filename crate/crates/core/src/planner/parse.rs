//! Lexer and recursive-descent parser for the supported SQL subset:
//! conjunctive select-project-join with equality joins, constant and IN-list
//! predicates, grouped aggregation, ORDER BY over output columns, and LIMIT.
//! Everything outside the subset fails with `UnsupportedFeature`; malformed
//! text fails with a position-carrying parse error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Int(i64),
    Str(String),
    Comma,
    Dot,
    LParen,
    RParen,
    Star,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    End,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) struct ColName {
    pub qualifier: Option<String>,
    pub name: String,
}

impl std::fmt::Display for ColName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.qualifier {
            Some(q) => write!(f, "{q}.{}", self.name),
            None => f.write_str(&self.name),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Lit {
    Int(i64),
    Str(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl std::fmt::Display for CmpOp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AggFunc {
    Count,
    Sum,
    Avg,
    Min,
    Max,
}

impl std::fmt::Display for AggFunc {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AggFunc::Count => "count",
            AggFunc::Sum => "sum",
            AggFunc::Avg => "avg",
            AggFunc::Min => "min",
            AggFunc::Max => "max",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum SelectItem {
    AllColumns,
    Column { col: ColName, alias: Option<String> },
    Aggregate { func: AggFunc, col: Option<ColName>, alias: Option<String> },
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum WhereTerm {
    Compare { col: ColName, op: CmpOp, value: Lit },
    InList { col: ColName, values: Vec<Lit> },
    JoinEq { left: ColName, right: ColName },
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct SelectStmt {
    pub items: Vec<SelectItem>,
    pub from: Vec<(String, Option<String>)>,
    pub where_terms: Vec<WhereTerm>,
    pub group_by: Vec<ColName>,
    pub order_by: Vec<(ColName, bool)>,
    pub limit: Option<u64>,
}

fn lex(sql: &str) -> Result<Vec<(Tok, usize)>> {
    let bytes = sql.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        match c {
            ',' => {
                toks.push((Tok::Comma, start));
                i += 1;
            }
            '.' => {
                toks.push((Tok::Dot, start));
                i += 1;
            }
            '(' => {
                toks.push((Tok::LParen, start));
                i += 1;
            }
            ')' => {
                toks.push((Tok::RParen, start));
                i += 1;
            }
            '*' => {
                toks.push((Tok::Star, start));
                i += 1;
            }
            '=' => {
                toks.push((Tok::Eq, start));
                i += 1;
            }
            '!' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    toks.push((Tok::Ne, start));
                    i += 2;
                } else {
                    return Err(Error::Parse {
                        position: start,
                        message: "expected '=' after '!'".into(),
                    });
                }
            }
            '<' => match bytes.get(i + 1) {
                Some(&b'=') => {
                    toks.push((Tok::Le, start));
                    i += 2;
                }
                Some(&b'>') => {
                    toks.push((Tok::Ne, start));
                    i += 2;
                }
                _ => {
                    toks.push((Tok::Lt, start));
                    i += 1;
                }
            },
            '>' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    toks.push((Tok::Ge, start));
                    i += 2;
                } else {
                    toks.push((Tok::Gt, start));
                    i += 1;
                }
            }
            '\'' => {
                i += 1;
                let text_start = i;
                while i < bytes.len() && bytes[i] != b'\'' {
                    i += 1;
                }
                if i >= bytes.len() {
                    return Err(Error::Parse {
                        position: start,
                        message: "unterminated string literal".into(),
                    });
                }
                toks.push((Tok::Str(sql[text_start..i].to_string()), start));
                i += 1;
            }
            _ if c.is_ascii_digit()
                || (c == '-' && bytes.get(i + 1).is_some_and(|b| b.is_ascii_digit())) =>
            {
                i += 1;
                while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                    i += 1;
                }
                let text = &sql[start..i];
                let n: i64 = text.parse().map_err(|_| Error::Parse {
                    position: start,
                    message: format!("integer literal {text} out of range"),
                })?;
                toks.push((Tok::Int(n), start));
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                i += 1;
                while i < bytes.len()
                    && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                toks.push((Tok::Ident(sql[start..i].to_string()), start));
            }
            _ => {
                return Err(Error::Parse {
                    position: start,
                    message: format!("unexpected character {c:?}"),
                });
            }
        }
    }
    toks.push((Tok::End, sql.len()));
    Ok(toks)
}

const REJECTED_KEYWORDS: &[&str] = &[
    "or", "not", "distinct", "having", "join", "inner", "left", "right", "outer", "cross",
    "union", "like", "between", "exists", "case", "null", "is",
];

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_pos(&self) -> usize {
        self.toks[self.pos].1
    }

    fn next(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s.eq_ignore_ascii_case(kw))
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.err(&format!("expected {}", kw.to_uppercase())))
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<()> {
        if *self.peek() == tok {
            self.next();
            Ok(())
        } else {
            Err(self.err(&format!("expected {what}")))
        }
    }

    fn err(&self, message: &str) -> Error {
        Error::Parse { position: self.peek_pos(), message: message.to_string() }
    }

    fn reject_unsupported(&self) -> Result<()> {
        if let Tok::Ident(s) = self.peek() {
            let lower = s.to_ascii_lowercase();
            if REJECTED_KEYWORDS.contains(&lower.as_str()) {
                return Err(Error::UnsupportedFeature(lower.to_uppercase()));
            }
        }
        Ok(())
    }

    fn ident(&mut self, what: &str) -> Result<String> {
        self.reject_unsupported()?;
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.next();
                Ok(s)
            }
            _ => Err(self.err(&format!("expected {what}"))),
        }
    }

    fn colref(&mut self) -> Result<ColName> {
        let first = self.ident("column name")?;
        if *self.peek() == Tok::Dot {
            self.next();
            let name = self.ident("column name after '.'")?;
            Ok(ColName { qualifier: Some(first), name })
        } else {
            Ok(ColName { qualifier: None, name: first })
        }
    }

    fn literal(&mut self) -> Result<Lit> {
        self.reject_unsupported()?;
        match self.peek().clone() {
            Tok::Int(n) => {
                self.next();
                Ok(Lit::Int(n))
            }
            Tok::Str(s) => {
                self.next();
                Ok(Lit::Str(s))
            }
            _ => Err(self.err("expected literal")),
        }
    }

    fn agg_func(&self) -> Option<AggFunc> {
        if let Tok::Ident(s) = self.peek() {
            let f = match s.to_ascii_lowercase().as_str() {
                "count" => AggFunc::Count,
                "sum" => AggFunc::Sum,
                "avg" => AggFunc::Avg,
                "min" => AggFunc::Min,
                "max" => AggFunc::Max,
                _ => return None,
            };
            if self.toks.get(self.pos + 1).map(|(t, _)| t) == Some(&Tok::LParen) {
                return Some(f);
            }
        }
        None
    }

    fn select_item(&mut self) -> Result<SelectItem> {
        self.reject_unsupported()?;
        if *self.peek() == Tok::Star {
            self.next();
            return Ok(SelectItem::AllColumns);
        }
        if let Some(func) = self.agg_func() {
            self.next();
            self.next();
            let col = if *self.peek() == Tok::Star {
                if func != AggFunc::Count {
                    return Err(Error::UnsupportedFeature(format!("{func}(*)")));
                }
                self.next();
                None
            } else {
                Some(self.colref()?)
            };
            self.expect(Tok::RParen, "')'")?;
            let alias = if self.eat_kw("as") { Some(self.ident("alias")?) } else { None };
            return Ok(SelectItem::Aggregate { func, col, alias });
        }
        if let Tok::Ident(name) = self.peek() {
            if self.toks.get(self.pos + 1).map(|(t, _)| t) == Some(&Tok::LParen) {
                return Err(Error::UnsupportedFeature(format!("function {name}")));
            }
        }
        let col = self.colref()?;
        let alias = if self.eat_kw("as") { Some(self.ident("alias")?) } else { None };
        Ok(SelectItem::Column { col, alias })
    }

    fn from_entry(&mut self) -> Result<(String, Option<String>)> {
        if *self.peek() == Tok::LParen {
            return Err(Error::UnsupportedFeature("subquery".into()));
        }
        let rel = self.ident("relation name")?;
        let stop = |s: &str| {
            ["where", "group", "order", "limit"].contains(&s.to_ascii_lowercase().as_str())
        };
        let alias = match self.peek() {
            Tok::Ident(s) if s.eq_ignore_ascii_case("as") => {
                self.next();
                Some(self.ident("alias")?)
            }
            Tok::Ident(s) if !stop(s) => {
                self.reject_unsupported()?;
                Some(self.ident("alias")?)
            }
            _ => None,
        };
        Ok((rel, alias))
    }

    fn where_term(&mut self) -> Result<WhereTerm> {
        self.reject_unsupported()?;
        if *self.peek() == Tok::LParen {
            return Err(Error::UnsupportedFeature("parenthesized predicate".into()));
        }
        let col = self.colref()?;
        if self.eat_kw("in") {
            self.expect(Tok::LParen, "'('")?;
            let mut values = vec![self.literal()?];
            while *self.peek() == Tok::Comma {
                self.next();
                values.push(self.literal()?);
            }
            self.expect(Tok::RParen, "')'")?;
            return Ok(WhereTerm::InList { col, values });
        }
        let op = match self.peek() {
            Tok::Eq => CmpOp::Eq,
            Tok::Ne => CmpOp::Ne,
            Tok::Lt => CmpOp::Lt,
            Tok::Le => CmpOp::Le,
            Tok::Gt => CmpOp::Gt,
            Tok::Ge => CmpOp::Ge,
            _ => {
                self.reject_unsupported()?;
                return Err(self.err("expected comparison operator"));
            }
        };
        self.next();
        match self.peek() {
            Tok::Ident(_) => {
                let right = self.colref()?;
                if op != CmpOp::Eq {
                    return Err(Error::UnsupportedFeature(format!(
                        "column comparison with {op}"
                    )));
                }
                Ok(WhereTerm::JoinEq { left: col, right })
            }
            _ => Ok(WhereTerm::Compare { col, op, value: self.literal()? }),
        }
    }

    fn stmt(&mut self) -> Result<SelectStmt> {
        self.expect_kw("select")?;
        let mut items = vec![self.select_item()?];
        while *self.peek() == Tok::Comma {
            self.next();
            items.push(self.select_item()?);
        }
        self.expect_kw("from")?;
        let mut from = vec![self.from_entry()?];
        while *self.peek() == Tok::Comma {
            self.next();
            from.push(self.from_entry()?);
        }

        let mut where_terms = Vec::new();
        if self.eat_kw("where") {
            where_terms.push(self.where_term()?);
            while self.is_kw("and") {
                self.next();
                where_terms.push(self.where_term()?);
            }
            self.reject_unsupported()?;
        }

        let mut group_by = Vec::new();
        if self.eat_kw("group") {
            self.expect_kw("by")?;
            group_by.push(self.colref()?);
            while *self.peek() == Tok::Comma {
                self.next();
                group_by.push(self.colref()?);
            }
        }

        if self.is_kw("having") {
            return Err(Error::UnsupportedFeature("HAVING".into()));
        }

        let mut order_by = Vec::new();
        if self.eat_kw("order") {
            self.expect_kw("by")?;
            loop {
                let col = self.colref()?;
                let asc = if self.eat_kw("desc") {
                    false
                } else {
                    self.eat_kw("asc");
                    true
                };
                order_by.push((col, asc));
                if *self.peek() == Tok::Comma {
                    self.next();
                } else {
                    break;
                }
            }
        }

        let mut limit = None;
        if self.eat_kw("limit") {
            match *self.peek() {
                Tok::Int(n) if n >= 0 => {
                    self.next();
                    limit = Some(n as u64);
                }
                Tok::Int(_) => return Err(self.err("LIMIT must be non-negative")),
                _ => return Err(self.err("expected integer after LIMIT")),
            }
        }

        self.reject_unsupported()?;
        if *self.peek() != Tok::End {
            return Err(self.err("unexpected trailing input"));
        }
        Ok(SelectStmt { items, from, where_terms, group_by, order_by, limit })
    }
}

pub(crate) fn parse(sql: &str) -> Result<SelectStmt> {
    let toks = lex(sql)?;
    Parser { toks, pos: 0 }.stmt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_filter_join_aggregate() {
        let stmt = parse(
            "SELECT d.diag, COUNT(*) AS n FROM demographics p, diagnosis d \
             WHERE p.sex = 'F' AND p.pid = d.pid GROUP BY d.diag ORDER BY n DESC LIMIT 5",
        )
        .unwrap();
        assert_eq!(stmt.from.len(), 2);
        assert_eq!(stmt.from[0], ("demographics".to_string(), Some("p".to_string())));
        assert_eq!(stmt.where_terms.len(), 2);
        assert!(matches!(stmt.where_terms[1], WhereTerm::JoinEq { .. }));
        assert_eq!(stmt.group_by.len(), 1);
        assert_eq!(stmt.order_by, vec![(ColName { qualifier: None, name: "n".into() }, false)]);
        assert_eq!(stmt.limit, Some(5));
    }

    #[test]
    fn parses_in_list_and_negative_numbers() {
        let stmt = parse("SELECT x FROM r WHERE x IN (1, -2, 3) AND y > -10").unwrap();
        match &stmt.where_terms[0] {
            WhereTerm::InList { values, .. } => {
                assert_eq!(values, &vec![Lit::Int(1), Lit::Int(-2), Lit::Int(3)]);
            }
            other => panic!("unexpected term {other:?}"),
        }
        match &stmt.where_terms[1] {
            WhereTerm::Compare { op, value, .. } => {
                assert_eq!(*op, CmpOp::Gt);
                assert_eq!(*value, Lit::Int(-10));
            }
            other => panic!("unexpected term {other:?}"),
        }
    }

    #[test]
    fn rejects_features_outside_subset() {
        for (sql, needle) in [
            ("SELECT x FROM r WHERE x = 1 OR y = 2", "OR"),
            ("SELECT DISTINCT x FROM r", "DISTINCT"),
            ("SELECT x FROM r JOIN s", "JOIN"),
            ("SELECT x FROM a LEFT JOIN b", "LEFT"),
            ("SELECT x FROM (SELECT y FROM r)", "subquery"),
            ("SELECT upper(x) FROM r", "function upper"),
            ("SELECT x FROM r GROUP BY x HAVING count(*) > 1", "HAVING"),
            ("SELECT x FROM r WHERE (x = 1)", "parenthesized"),
            ("SELECT x FROM r WHERE x != y", "column comparison"),
            ("SELECT sum(*) FROM r", "sum(*)"),
        ] {
            let err = parse(sql).unwrap_err();
            match err {
                Error::UnsupportedFeature(msg) => {
                    assert!(msg.contains(needle), "{sql}: {msg} missing {needle}");
                }
                Error::Parse { message, .. } => {
                    assert!(message.contains(needle), "{sql}: {message} missing {needle}");
                }
                other => panic!("{sql}: unexpected error {other:?}"),
            }
        }
    }

    #[test]
    fn parse_errors_carry_positions() {
        let err = parse("SELECT x FROM r WHERE x = ").unwrap_err();
        match err {
            Error::Parse { position, .. } => assert_eq!(position, 26),
            other => panic!("unexpected error {other:?}"),
        }
        let err = parse("SELECT x FROM r WHERE x = 'open").unwrap_err();
        match err {
            Error::Parse { position, message } => {
                assert_eq!(position, 26);
                assert!(message.contains("unterminated"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }
}
