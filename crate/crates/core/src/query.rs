//! Surface query syntax.
//!
//! ```text
//! expr := IDENT
//!       | "NOT" "(" expr ")"
//!       | ("AND" | "JOIN") "(" expr ("," expr)+ ")"
//!       | ("OR" | "DIFF") "(" expr "," expr ")"
//!       | "PROJECT" "[" ident ("," ident)* "]" "(" expr ")"
//! ```
//!
//! Keywords are case-insensitive and reserved; identifiers match
//! `[A-Za-z_][A-Za-z0-9_]*`; whitespace is insignificant.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QueryAst {
    Relation(String),
    Not(Box<QueryAst>),
    /// Two or more operands, intersection over equal schemas.
    And(Vec<QueryAst>),
    Or(Box<QueryAst>, Box<QueryAst>),
    /// Two or more operands, natural join.
    Join(Vec<QueryAst>),
    Diff(Box<QueryAst>, Box<QueryAst>),
    Project(Vec<String>, Box<QueryAst>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn err_at(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::QueryParse {
        line,
        column,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<Spanned>> {
    let mut out = Vec::new();
    let mut line = 1usize;
    let mut column = 1usize;
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        let (tl, tc) = (line, column);
        let bump = |c: char, line: &mut usize, column: &mut usize| {
            if c == '\n' {
                *line += 1;
                *column = 1;
            } else {
                *column += 1;
            }
        };
        match c {
            c if c.is_whitespace() => {
                chars.next();
                bump(c, &mut line, &mut column);
            }
            '(' | ')' | '[' | ']' | ',' => {
                chars.next();
                bump(c, &mut line, &mut column);
                let tok = match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    _ => Tok::Comma,
                };
                out.push(Spanned {
                    tok,
                    line: tl,
                    column: tc,
                });
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut ident = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        ident.push(c);
                        chars.next();
                        bump(c, &mut line, &mut column);
                    } else {
                        break;
                    }
                }
                out.push(Spanned {
                    tok: Tok::Ident(ident),
                    line: tl,
                    column: tc,
                });
            }
            other => {
                return Err(err_at(tl, tc, format!("unexpected character {other:?}")));
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Spanned> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Spanned> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn end_pos(&self) -> (usize, usize) {
        match self.toks.last() {
            Some(s) => (s.line, s.column + token_len(&s.tok)),
            None => (1, 1),
        }
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<Spanned> {
        match self.next() {
            Some(s) if s.tok == want => Ok(s),
            Some(s) => Err(err_at(
                s.line,
                s.column,
                format!("expected {what}, found {}", describe(&s.tok)),
            )),
            None => {
                let (l, c) = self.end_pos();
                Err(err_at(l, c, format!("expected {what}, found end of input")))
            }
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, usize, usize)> {
        match self.next() {
            Some(Spanned {
                tok: Tok::Ident(name),
                line,
                column,
            }) => Ok((name, line, column)),
            Some(s) => Err(err_at(
                s.line,
                s.column,
                format!("expected {what}, found {}", describe(&s.tok)),
            )),
            None => {
                let (l, c) = self.end_pos();
                Err(err_at(l, c, format!("expected {what}, found end of input")))
            }
        }
    }

    fn expr(&mut self) -> Result<QueryAst> {
        let (name, line, column) = self.ident("an expression")?;
        match name.to_ascii_uppercase().as_str() {
            "NOT" => {
                self.expect(Tok::LParen, "'('")?;
                let inner = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(QueryAst::Not(Box::new(inner)))
            }
            kw @ ("AND" | "JOIN") => {
                let args = self.arg_list(2, None, kw)?;
                if kw == "AND" {
                    Ok(QueryAst::And(args))
                } else {
                    Ok(QueryAst::Join(args))
                }
            }
            kw @ ("OR" | "DIFF") => {
                let args = self.arg_list(2, Some(2), kw)?;
                let mut it = args.into_iter();
                let a = Box::new(it.next().unwrap());
                let b = Box::new(it.next().unwrap());
                if kw == "OR" {
                    Ok(QueryAst::Or(a, b))
                } else {
                    Ok(QueryAst::Diff(a, b))
                }
            }
            "PROJECT" => {
                self.expect(Tok::LBracket, "'['")?;
                let mut attrs = vec![self.ident("an attribute name")?.0];
                while matches!(self.peek().map(|s| &s.tok), Some(Tok::Comma)) {
                    self.next();
                    attrs.push(self.ident("an attribute name")?.0);
                }
                self.expect(Tok::RBracket, "']'")?;
                self.expect(Tok::LParen, "'('")?;
                let inner = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(QueryAst::Project(attrs, Box::new(inner)))
            }
            _ => {
                // Reserved words cannot name relations; anything else can.
                if name.is_empty() {
                    Err(err_at(line, column, "empty identifier"))
                } else {
                    Ok(QueryAst::Relation(name))
                }
            }
        }
    }

    fn arg_list(&mut self, min: usize, max: Option<usize>, kw: &str) -> Result<Vec<QueryAst>> {
        let open = self.expect(Tok::LParen, "'('")?;
        let mut args = vec![self.expr()?];
        while matches!(self.peek().map(|s| &s.tok), Some(Tok::Comma)) {
            self.next();
            args.push(self.expr()?);
        }
        self.expect(Tok::RParen, "')'")?;
        if args.len() < min {
            return Err(err_at(
                open.line,
                open.column,
                format!("{kw} takes at least {min} arguments, found {}", args.len()),
            ));
        }
        if let Some(max) = max {
            if args.len() > max {
                return Err(err_at(
                    open.line,
                    open.column,
                    format!("{kw} takes exactly {max} arguments, found {}", args.len()),
                ));
            }
        }
        Ok(args)
    }
}

fn token_len(tok: &Tok) -> usize {
    match tok {
        Tok::Ident(s) => s.len(),
        _ => 1,
    }
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Ident(s) => format!("identifier {s:?}"),
        Tok::LParen => "'('".into(),
        Tok::RParen => "')'".into(),
        Tok::LBracket => "'['".into(),
        Tok::RBracket => "']'".into(),
        Tok::Comma => "','".into(),
    }
}

/// Parse a query; errors carry the line and column of the offending token.
pub fn parse_query(text: &str) -> Result<QueryAst> {
    let toks = lex(text)?;
    let mut parser = Parser { toks, pos: 0 };
    let ast = parser.expr()?;
    if let Some(extra) = parser.peek() {
        return Err(err_at(
            extra.line,
            extra.column,
            format!("trailing input starting at {}", describe(&extra.tok)),
        ));
    }
    Ok(ast)
}
