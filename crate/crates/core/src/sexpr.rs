//! S-expression reader with source positions.

use std::fmt;

use crate::parser::ParseError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SExpr {
    /// Symbols and numbers keep their source text; numbers are recognised lazily
    /// where a weight is expected.
    Atom(String, Pos),
    Str(String, Pos),
    List(Vec<SExpr>, Pos),
}

impl SExpr {
    pub fn pos(&self) -> Pos {
        match self {
            SExpr::Atom(_, p) | SExpr::Str(_, p) | SExpr::List(_, p) => *p,
        }
    }

    pub fn as_atom(&self) -> Option<&str> {
        match self {
            SExpr::Atom(s, _) => Some(s),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[SExpr]> {
        match self {
            SExpr::List(xs, _) => Some(xs),
            _ => None,
        }
    }

    /// The leading symbol of a list, if any.
    pub fn head(&self) -> Option<&str> {
        self.as_list()?.first()?.as_atom()
    }

    /// Short rendering for error messages.
    pub fn token(&self) -> String {
        let s = self.to_string();
        if s.chars().count() > 40 {
            format!("{}...", s.chars().take(40).collect::<String>())
        } else {
            s
        }
    }
}

impl fmt::Display for SExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SExpr::Atom(s, _) => write!(f, "{s}"),
            SExpr::Str(s, _) => write!(f, "{s:?}"),
            SExpr::List(xs, _) => {
                write!(f, "(")?;
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    write!(f, "{x}")?;
                }
                write!(f, ")")
            }
        }
    }
}

const MAX_DEPTH: usize = 512;

struct Reader<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    pos: Pos,
    file: &'a str,
}

impl<'a> Reader<'a> {
    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.pos.line += 1;
            self.pos.column = 1;
        } else {
            self.pos.column += 1;
        }
        Some(c)
    }

    fn skip_trivia(&mut self) {
        while let Some(&c) = self.chars.peek() {
            if c == ';' {
                while let Some(c) = self.bump() {
                    if c == '\n' {
                        break;
                    }
                }
            } else if c.is_whitespace() {
                self.bump();
            } else {
                break;
            }
        }
    }

    fn err(&self, pos: Pos, message: &str, token: &str) -> ParseError {
        ParseError::at(self.file, pos, message, token)
    }

    fn read(&mut self, depth: usize) -> Result<SExpr, ParseError> {
        self.skip_trivia();
        let start = self.pos;
        if depth > MAX_DEPTH {
            return Err(self.err(start, "nesting too deep", "("));
        }
        match self.chars.peek().copied() {
            None => Err(self.err(start, "unexpected end of input", "")),
            Some(')') => Err(self.err(start, "unbalanced ')'", ")")),
            Some('(') => {
                self.bump();
                let mut items = Vec::new();
                loop {
                    self.skip_trivia();
                    match self.chars.peek() {
                        None => return Err(self.err(start, "unclosed '('", "(")),
                        Some(')') => {
                            self.bump();
                            return Ok(SExpr::List(items, start));
                        }
                        Some(_) => items.push(self.read(depth + 1)?),
                    }
                }
            }
            Some('"') => {
                self.bump();
                let mut s = String::new();
                loop {
                    match self.bump() {
                        None => return Err(self.err(start, "unterminated string", "\"")),
                        Some('"') => return Ok(SExpr::Str(s, start)),
                        Some('\\') => match self.bump() {
                            Some(c) => s.push(c),
                            None => return Err(self.err(start, "unterminated string", "\"")),
                        },
                        Some(c) => s.push(c),
                    }
                }
            }
            Some(_) => {
                let mut s = String::new();
                while let Some(&c) = self.chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' || c == '"' {
                        break;
                    }
                    s.push(c);
                    self.bump();
                }
                Ok(SExpr::Atom(s, start))
            }
        }
    }
}

/// Reads every top-level expression in `text`.
pub fn read_all(file: &str, text: &str) -> Result<Vec<SExpr>, ParseError> {
    let mut r = Reader { chars: text.chars().peekable(), pos: Pos { line: 1, column: 1 }, file };
    let mut out = Vec::new();
    loop {
        r.skip_trivia();
        if r.chars.peek().is_none() {
            return Ok(out);
        }
        out.push(r.read(0)?);
    }
}

/// Reads exactly one top-level expression.
pub fn read_one(file: &str, text: &str) -> Result<SExpr, ParseError> {
    let mut all = read_all(file, text)?;
    match all.len() {
        1 => Ok(all.pop().expect("one item")),
        0 => Err(ParseError::at(file, Pos { line: 1, column: 1 }, "empty input", "")),
        _ => Err(ParseError::at(file, all[1].pos(), "trailing expression", &all[1].token())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_nested_lists_with_positions() {
        let e = read_one("t", "; c\n(a (b 0.4)\n  \"s\")").unwrap();
        assert_eq!(e.pos(), Pos { line: 2, column: 1 });
        let xs = e.as_list().unwrap();
        assert_eq!(xs[0].as_atom(), Some("a"));
        assert_eq!(xs[1].as_list().unwrap()[1].as_atom(), Some("0.4"));
        assert_eq!(xs[2], SExpr::Str("s".into(), Pos { line: 3, column: 3 }));
        assert_eq!(e.to_string(), "(a (b 0.4) \"s\")");
    }

    #[test]
    fn unbalanced_parens_are_located() {
        let err = read_one("f.htn", "(a\n (b c)").unwrap_err();
        assert_eq!((err.line, err.column), (1, 1));
        let err = read_one("f.htn", "(a))").unwrap_err();
        assert_eq!((err.line, err.column), (1, 4));
        assert_eq!(err.token, ")");
    }
}
