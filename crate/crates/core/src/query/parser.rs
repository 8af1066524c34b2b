use std::fmt;

use super::ast::*;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("line {line}, column {column}: expected {expected}, found {found}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub expected: String,
    pub found: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Real(f64),
    Text(String),
    Star,
    Comma,
    Dot,
    LParen,
    RParen,
    Op(CompareOp),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "{s}"),
            Tok::Int(v) => write!(f, "{v}"),
            Tok::Real(v) => write!(f, "{}", fmt_real(*v)),
            Tok::Text(s) => write!(f, "'{s}'"),
            Tok::Star => f.write_str("'*'"),
            Tok::Comma => f.write_str("','"),
            Tok::Dot => f.write_str("'.'"),
            Tok::LParen => f.write_str("'('"),
            Tok::RParen => f.write_str("')'"),
            Tok::Op(op) => write!(f, "'{}'", op.symbol()),
            Tok::Eof => f.write_str("end of query"),
        }
    }
}

const KEYWORDS: &[&str] = &[
    "SELECT", "FROM", "XMATCH", "WITHIN", "ARCSEC", "WHERE", "AND", "OR", "NOT", "LIMIT", "INTO", "CONE", "TRUE",
    "FALSE",
];

fn is_keyword(s: &str) -> bool {
    KEYWORDS.iter().any(|k| k.eq_ignore_ascii_case(s))
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, column, expected: &str, found: String| ParseError {
        line,
        column,
        expected: expected.to_string(),
        found,
    };
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        let (start_line, start_col) = (line, col);
        let start = i;
        let tok = match c {
            '*' => {
                i += 1;
                Tok::Star
            }
            ',' => {
                i += 1;
                Tok::Comma
            }
            '.' if !chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()) => {
                i += 1;
                Tok::Dot
            }
            '(' => {
                i += 1;
                Tok::LParen
            }
            ')' => {
                i += 1;
                Tok::RParen
            }
            '=' => {
                i += 1;
                Tok::Op(CompareOp::Eq)
            }
            '<' => {
                i += 1;
                match chars.get(i) {
                    Some('=') => {
                        i += 1;
                        Tok::Op(CompareOp::Le)
                    }
                    Some('>') => {
                        i += 1;
                        Tok::Op(CompareOp::Ne)
                    }
                    _ => Tok::Op(CompareOp::Lt),
                }
            }
            '>' => {
                i += 1;
                if chars.get(i) == Some(&'=') {
                    i += 1;
                    Tok::Op(CompareOp::Ge)
                } else {
                    Tok::Op(CompareOp::Gt)
                }
            }
            '!' if chars.get(i + 1) == Some(&'=') => {
                i += 2;
                Tok::Op(CompareOp::Ne)
            }
            '\'' => {
                i += 1;
                let mut s = String::new();
                loop {
                    match chars.get(i) {
                        None => return Err(err(start_line, start_col, "closing quote", "end of query".into())),
                        Some('\'') if chars.get(i + 1) == Some(&'\'') => {
                            s.push('\'');
                            i += 2;
                        }
                        Some('\'') => {
                            i += 1;
                            break;
                        }
                        Some(&ch) => {
                            if ch == '\n' {
                                line += 1;
                                col = 0;
                            }
                            s.push(ch);
                            i += 1;
                        }
                    }
                }
                Tok::Text(s)
            }
            c if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' => {
                let mut j = i;
                if chars[j] == '-' || chars[j] == '+' {
                    j += 1;
                }
                let mut real = false;
                let digits_start = j;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
                if j < chars.len() && chars[j] == '.' {
                    real = true;
                    j += 1;
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                }
                if j == digits_start || (j == digits_start + 1 && chars[digits_start] == '.') {
                    return Err(err(start_line, start_col, "number", format!("'{c}'")));
                }
                if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                    let mut k = j + 1;
                    if k < chars.len() && (chars[k] == '-' || chars[k] == '+') {
                        k += 1;
                    }
                    if k < chars.len() && chars[k].is_ascii_digit() {
                        while k < chars.len() && chars[k].is_ascii_digit() {
                            k += 1;
                        }
                        real = true;
                        j = k;
                    }
                }
                let text: String = chars[i..j].iter().collect();
                i = j;
                if real {
                    match text.parse::<f64>() {
                        Ok(v) if v.is_finite() => Tok::Real(v),
                        _ => return Err(err(start_line, start_col, "finite number", text)),
                    }
                } else {
                    match text.parse::<i64>() {
                        Ok(v) => Tok::Int(v),
                        Err(_) => return Err(err(start_line, start_col, "64-bit integer", text)),
                    }
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut j = i;
                while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                let s: String = chars[i..j].iter().collect();
                i = j;
                Tok::Ident(s)
            }
            other => return Err(err(start_line, start_col, "token", format!("'{other}'"))),
        };
        col += i - start;
        out.push(Token { tok, line: start_line, column: start_col });
    }
    out.push(Token { tok: Tok::Eof, line, column: col });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn fail<T>(&self, expected: &str) -> Result<T, ParseError> {
        let t = self.peek();
        Err(ParseError {
            line: t.line,
            column: t.column,
            expected: expected.to_string(),
            found: t.tok.to_string(),
        })
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s.eq_ignore_ascii_case(kw))
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.at_keyword(kw) {
            self.bump();
            Ok(())
        } else {
            self.fail(kw)
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if &self.peek().tok == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: &Tok, what: &str) -> Result<(), ParseError> {
        if self.eat(tok) {
            Ok(())
        } else {
            self.fail(what)
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match &self.peek().tok {
            Tok::Ident(s) if !is_keyword(s) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => self.fail(what),
        }
    }

    fn number(&mut self, what: &str) -> Result<f64, ParseError> {
        match self.peek().tok {
            Tok::Int(v) => {
                self.bump();
                Ok(v as f64)
            }
            Tok::Real(v) => {
                self.bump();
                Ok(v)
            }
            _ => self.fail(what),
        }
    }

    fn column_ref(&mut self) -> Result<ColumnRef, ParseError> {
        let first = self.ident("column name")?;
        if self.eat(&Tok::Dot) {
            let name = self.ident("column name")?;
            Ok(ColumnRef { qualifier: Some(first), name })
        } else {
            Ok(ColumnRef { qualifier: None, name: first })
        }
    }

    fn source(&mut self) -> Result<SourceRef, ParseError> {
        let archive = self.ident("archive name")?;
        self.expect(&Tok::Dot, "'.' between archive and table")?;
        let table = self.ident("table name")?;
        Ok(SourceRef { archive, table })
    }

    fn literal(&mut self) -> Option<Literal> {
        let lit = match &self.peek().tok {
            Tok::Int(v) => Literal::Int(*v),
            Tok::Real(v) => Literal::Real(*v),
            Tok::Text(s) => Literal::Text(s.clone()),
            Tok::Ident(s) if s.eq_ignore_ascii_case("TRUE") => Literal::Bool(true),
            Tok::Ident(s) if s.eq_ignore_ascii_case("FALSE") => Literal::Bool(false),
            _ => return None,
        };
        self.bump();
        Some(lit)
    }

    fn op(&mut self) -> Result<CompareOp, ParseError> {
        match self.peek().tok {
            Tok::Op(op) => {
                self.bump();
                Ok(op)
            }
            _ => self.fail("comparison operator"),
        }
    }

    fn predicate(&mut self, out: &mut Vec<Predicate>) -> Result<(), ParseError> {
        if self.eat(&Tok::LParen) {
            self.conjunction(out)?;
            return self.expect(&Tok::RParen, "')'");
        }
        if self.at_keyword("CONE") {
            self.bump();
            self.expect(&Tok::LParen, "'('")?;
            let ra = self.number("right ascension")?;
            self.expect(&Tok::Comma, "','")?;
            let dec = self.number("declination")?;
            self.expect(&Tok::Comma, "','")?;
            let radius = self.number("radius")?;
            self.expect(&Tok::RParen, "')'")?;
            out.push(Predicate::Cone { ra, dec, radius });
            return Ok(());
        }
        if let Some(value) = self.literal() {
            let op = self.op()?;
            let column = self.column_ref()?;
            out.push(Predicate::Compare { column, op: op.flipped(), value });
            return Ok(());
        }
        if !matches!(&self.peek().tok, Tok::Ident(s) if !is_keyword(s)) {
            return self.fail("predicate");
        }
        let column = self.column_ref()?;
        let op = self.op()?;
        let Some(value) = self.literal() else {
            return self.fail("literal");
        };
        out.push(Predicate::Compare { column, op, value });
        Ok(())
    }

    fn conjunction(&mut self, out: &mut Vec<Predicate>) -> Result<(), ParseError> {
        self.predicate(out)?;
        while self.at_keyword("AND") {
            self.bump();
            self.predicate(out)?;
        }
        Ok(())
    }

    fn query(&mut self) -> Result<QueryAst, ParseError> {
        self.keyword("SELECT")?;
        let select = if self.eat(&Tok::Star) {
            Selection::Star
        } else {
            if !matches!(&self.peek().tok, Tok::Ident(s) if !is_keyword(s)) {
                return self.fail("column name or '*'");
            }
            let mut cols = vec![self.column_ref()?];
            while self.eat(&Tok::Comma) {
                cols.push(self.column_ref()?);
            }
            Selection::Columns(cols)
        };
        self.keyword("FROM")?;
        let source = self.source()?;

        let mut xmatch = None;
        if self.at_keyword("XMATCH") {
            self.bump();
            let mut sources = vec![self.source()?];
            while self.eat(&Tok::Comma) {
                sources.push(self.source()?);
            }
            self.keyword("WITHIN")?;
            let tolerance_arcsec = self.number("match tolerance")?;
            self.keyword("ARCSEC")?;
            xmatch = Some(XMatchClause { sources, tolerance_arcsec });
        }

        let mut predicates = Vec::new();
        if self.at_keyword("WHERE") {
            self.bump();
            self.conjunction(&mut predicates)?;
        }

        let mut limit = None;
        if self.at_keyword("LIMIT") {
            self.bump();
            match self.peek().tok {
                Tok::Int(n) if n >= 1 => {
                    self.bump();
                    limit = Some(n as u64);
                }
                _ => return self.fail("positive integer"),
            }
        }

        let mut into = None;
        if self.at_keyword("INTO") {
            self.bump();
            let first = self.ident("table name")?;
            into = Some(if self.eat(&Tok::Dot) {
                IntoTarget { db: Some(first), table: self.ident("table name")? }
            } else {
                IntoTarget { db: None, table: first }
            });
        }

        if self.peek().tok != Tok::Eof {
            let mut expected = Vec::new();
            if predicates.is_empty() && limit.is_none() && into.is_none() {
                expected.push("WHERE");
            } else if !predicates.is_empty() && limit.is_none() && into.is_none() {
                expected.push("AND");
            }
            if limit.is_none() && into.is_none() {
                expected.push("LIMIT");
            }
            if into.is_none() {
                expected.push("INTO");
            }
            expected.push("end of query");
            return self.fail(&expected.join(", "));
        }
        Ok(QueryAst { select, source, xmatch, predicates, limit, into })
    }
}

/// Parses the query language. Keywords are case-insensitive.
pub fn parse(text: &str) -> Result<QueryAst, ParseError> {
    let toks = lex(text)?;
    Parser { toks, pos: 0 }.query()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_cone_query() {
        let q = parse("SELECT id FROM sdss.photo_obj WHERE CONE(180.0, 0.0, 1.0) LIMIT 10").unwrap();
        assert_eq!(q.select, Selection::Columns(vec![ColumnRef::bare("id")]));
        assert_eq!(q.source, SourceRef::new("sdss", "photo_obj"));
        assert_eq!(q.predicates, vec![Predicate::Cone { ra: 180.0, dec: 0.0, radius: 1.0 }]);
        assert_eq!(q.limit, Some(10));
        assert_eq!(q.to_string(), "SELECT id FROM sdss.photo_obj WHERE CONE(180.0, 0.0, 1.0) LIMIT 10");
    }

    #[test]
    fn missing_column_list_points_at_second_token() {
        let e = parse("SELECT FROM").unwrap_err();
        assert_eq!((e.line, e.column), (1, 8));
        assert_eq!(e.found, "FROM");
        assert!(e.expected.contains("column"));
    }

    #[test]
    fn xmatch_with_into() {
        let q = parse("SELECT a.id FROM a.t XMATCH b.t WITHIN 2 ARCSEC INTO my_out").unwrap();
        let x = q.xmatch.as_ref().unwrap();
        assert_eq!(x.sources, vec![SourceRef::new("b", "t")]);
        assert_eq!(x.tolerance_arcsec, 2.0);
        assert_eq!(q.into, Some(IntoTarget { db: None, table: "my_out".into() }));
        assert_eq!(q.to_string(), "SELECT a.id FROM a.t XMATCH b.t WITHIN 2.0 ARCSEC INTO my_out");
    }

    #[test]
    fn keywords_are_case_insensitive() {
        let a = parse("select * from s.t where x >= 1 and y <> 'it''s' limit 3 into db.out").unwrap();
        let b = parse("SELECT * FROM s.t WHERE x >= 1 AND y <> 'it''s' LIMIT 3 INTO db.out").unwrap();
        assert_eq!(a, b);
        assert_eq!(parse(&a.to_string()).unwrap(), a);
    }

    #[test]
    fn literal_first_comparisons_are_normalized() {
        let q = parse("SELECT * FROM s.t WHERE 20 > mag_r").unwrap();
        assert_eq!(
            q.predicates,
            vec![Predicate::Compare { column: ColumnRef::bare("mag_r"), op: CompareOp::Lt, value: Literal::Int(20) }]
        );
    }

    #[test]
    fn parenthesized_conjunctions_flatten() {
        let q = parse("SELECT * FROM s.t WHERE (a = 1 AND (b = 2)) AND c = TRUE").unwrap();
        assert_eq!(q.predicates.len(), 3);
    }

    #[test]
    fn errors_carry_positions() {
        let e = parse("SELECT *\nFROM s.t\nWHERE a = ").unwrap_err();
        assert_eq!(e.line, 3);
        assert_eq!(e.found, "end of query");
        let e = parse("SELECT * FROM s.t WHERE a = 1 OR b = 2").unwrap_err();
        assert_eq!(e.found, "OR");
        assert_eq!(e.column, 31);
        let e = parse("SELECT * FROM s").unwrap_err();
        assert!(e.expected.contains("'.'"));
        let e = parse("SELECT * FROM s.t WHERE name = 'open").unwrap_err();
        assert_eq!(e.expected, "closing quote");
        let e = parse("SELECT * FROM s.t LIMIT -1").unwrap_err();
        assert_eq!(e.expected, "positive integer");
        assert!(parse("SELECT * FROM s.t LIMIT 0").is_err());
        assert!(parse("SELECT * FROM s.t WHERE a @ 1").is_err());
        assert!(parse("SELECT select FROM s.t").is_err());
    }

    #[test]
    fn numbers() {
        let q = parse("SELECT * FROM s.t WHERE CONE(1e2, -3.5E-1, .5) AND z < -7").unwrap();
        assert_eq!(q.predicates[0], Predicate::Cone { ra: 100.0, dec: -0.35, radius: 0.5 });
        assert_eq!(
            q.predicates[1],
            Predicate::Compare { column: ColumnRef::bare("z"), op: CompareOp::Lt, value: Literal::Int(-7) }
        );
        assert!(parse("SELECT * FROM s.t WHERE a = 99999999999999999999").is_err());
        let q = parse("SELECT * FROM s.t WHERE a = 1e300").unwrap();
        assert_eq!(parse(&q.to_string()).unwrap(), q);
    }
}
