// SPDX-License-Identifier: Apache-2.0
//! Tokenizer with Python-style indentation tracking.

use super::ast::Span;
use super::SyntaxError;

#[derive(Clone, Debug, PartialEq)]
pub enum Tok {
    Name(String),
    Int(i64),
    Float(f64),
    Str(String),
    /// Operators and punctuation.
    Op(&'static str),
    Newline,
    Indent,
    Dedent,
    Eof,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

// Longest first so that `**` wins over `*`.
const OPERATORS: [&str; 33] = [
    "**=", "//=", "**", "//", "==", "!=", "<=", ">=", "->", "+=", "-=", "*=", "/=", "%=", "+", "-", "*", "/", "%", "<",
    ">", "=", "(", ")", "[", "]", "{", "}", ",", ":", ".", ";", "@",
];

struct Lexer {
    chars: Vec<char>,
    pos: usize,
    line: u32,
    col: u32,
    depth: usize,
    indents: Vec<u32>,
    tokens: Vec<Token>,
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, SyntaxError> {
    let mut lx =
        Lexer { chars: src.chars().collect(), pos: 0, line: 1, col: 1, depth: 0, indents: vec![0], tokens: Vec::new() };
    lx.run()?;
    Ok(lx.tokens)
}

impl Lexer {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, off: usize) -> Option<char> {
        self.chars.get(self.pos + off).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn span(&self) -> Span {
        Span::new(self.line, self.col)
    }

    fn push(&mut self, tok: Tok, span: Span) {
        self.tokens.push(Token { tok, span });
    }

    fn err<T>(&self, span: Span, msg: impl Into<String>) -> Result<T, SyntaxError> {
        Err(SyntaxError::new(span, msg))
    }

    fn run(&mut self) -> Result<(), SyntaxError> {
        let mut at_line_start = true;
        loop {
            if at_line_start && self.depth == 0 {
                if !self.handle_indentation()? {
                    break;
                }
                at_line_start = false;
            }
            let Some(c) = self.peek() else { break };
            let span = self.span();
            match c {
                ' ' | '\t' | '\x0c' | '\r' => {
                    self.bump();
                }
                '#' => {
                    while !matches!(self.peek(), None | Some('\n')) {
                        self.bump();
                    }
                }
                '\\' if self.peek_at(1) == Some('\n') => {
                    self.bump();
                    self.bump();
                }
                '\n' => {
                    self.bump();
                    if self.depth == 0 {
                        self.push(Tok::Newline, span);
                        at_line_start = true;
                    }
                }
                '"' | '\'' => {
                    let s = self.string(c)?;
                    self.push(Tok::Str(s), span);
                }
                c if c.is_ascii_digit() || (c == '.' && self.peek_at(1).is_some_and(|d| d.is_ascii_digit())) => {
                    let tok = self.number()?;
                    self.push(tok, span);
                }
                c if c == '_' || c.is_alphabetic() => {
                    let mut name = String::new();
                    while let Some(c) = self.peek() {
                        if c == '_' || c.is_alphanumeric() {
                            name.push(c);
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    self.push(Tok::Name(name), span);
                }
                _ => {
                    let op =
                        OPERATORS.iter().find(|op| op.chars().enumerate().all(|(i, oc)| self.peek_at(i) == Some(oc)));
                    let Some(op) = op else {
                        return self.err(span, format!("unexpected character {c:?}"));
                    };
                    for _ in 0..op.len() {
                        self.bump();
                    }
                    match *op {
                        "(" | "[" | "{" => self.depth += 1,
                        ")" | "]" | "}" => {
                            if self.depth == 0 {
                                return self.err(span, format!("unmatched '{op}'"));
                            }
                            self.depth -= 1;
                        }
                        _ => {}
                    }
                    self.push(Tok::Op(op), span);
                }
            }
        }
        let span = self.span();
        if self.depth > 0 {
            return self.err(span, "unexpected end of input inside brackets");
        }
        if !matches!(self.tokens.last().map(|t| &t.tok), None | Some(Tok::Newline) | Some(Tok::Dedent)) {
            self.push(Tok::Newline, span);
        }
        while self.indents.len() > 1 {
            self.indents.pop();
            self.push(Tok::Dedent, span);
        }
        self.push(Tok::Eof, span);
        Ok(())
    }

    /// Measures leading whitespace of a logical line, skipping blank and
    /// comment-only lines. Returns false at end of input.
    fn handle_indentation(&mut self) -> Result<bool, SyntaxError> {
        loop {
            let mut width = 0u32;
            while let Some(c) = self.peek() {
                match c {
                    ' ' => width += 1,
                    '\t' => width = (width / 8 + 1) * 8,
                    '\x0c' | '\r' => {}
                    _ => break,
                }
                self.bump();
            }
            match self.peek() {
                None => return Ok(false),
                Some('\n') => {
                    self.bump();
                    continue;
                }
                Some('#') => {
                    while !matches!(self.peek(), None | Some('\n')) {
                        self.bump();
                    }
                    continue;
                }
                Some(_) => {}
            }
            let span = self.span();
            let current = *self.indents.last().expect("indent stack never empty");
            if width > current {
                self.indents.push(width);
                self.push(Tok::Indent, span);
            } else if width < current {
                while width < *self.indents.last().expect("indent stack never empty") {
                    self.indents.pop();
                    self.push(Tok::Dedent, span);
                }
                if width != *self.indents.last().expect("indent stack never empty") {
                    return self.err(span, "unindent does not match any outer indentation level");
                }
            }
            return Ok(true);
        }
    }

    fn string(&mut self, quote: char) -> Result<String, SyntaxError> {
        let start = self.span();
        let triple = self.peek_at(1) == Some(quote) && self.peek_at(2) == Some(quote);
        let n = if triple { 3 } else { 1 };
        for _ in 0..n {
            self.bump();
        }
        let mut out = String::new();
        loop {
            let Some(c) = self.peek() else {
                return self.err(start, "unterminated string literal");
            };
            if c == quote {
                if !triple {
                    self.bump();
                    return Ok(out);
                }
                if self.peek_at(1) == Some(quote) && self.peek_at(2) == Some(quote) {
                    self.bump();
                    self.bump();
                    self.bump();
                    return Ok(out);
                }
            }
            if c == '\n' && !triple {
                return self.err(start, "unterminated string literal");
            }
            if c == '\\' {
                let esc_span = self.span();
                self.bump();
                let Some(e) = self.bump() else {
                    return self.err(start, "unterminated string literal");
                };
                match e {
                    'n' => out.push('\n'),
                    't' => out.push('\t'),
                    'r' => out.push('\r'),
                    '0' => out.push('\0'),
                    '\\' => out.push('\\'),
                    '\'' => out.push('\''),
                    '"' => out.push('"'),
                    '\n' => {}
                    'x' => {
                        let hex: String = (0..2).filter_map(|_| self.bump()).collect();
                        let code =
                            u32::from_str_radix(&hex, 16).ok().filter(|_| hex.len() == 2).and_then(char::from_u32);
                        match code {
                            Some(ch) => out.push(ch),
                            None => return self.err(esc_span, "invalid \\x escape"),
                        }
                    }
                    other => {
                        out.push('\\');
                        out.push(other);
                    }
                }
                continue;
            }
            out.push(c);
            self.bump();
        }
    }

    fn number(&mut self) -> Result<Tok, SyntaxError> {
        let span = self.span();
        let mut text = String::new();
        let mut is_float = false;
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() || c == '_' {
                if c != '_' {
                    text.push(c);
                }
                self.bump();
            } else if c == '.' && !is_float {
                is_float = true;
                text.push(c);
                self.bump();
            } else {
                break;
            }
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            let sign = matches!(self.peek_at(1), Some('+' | '-'));
            let digit_at = if sign { 2 } else { 1 };
            if self.peek_at(digit_at).is_some_and(|d| d.is_ascii_digit()) {
                is_float = true;
                text.push('e');
                self.bump();
                if sign {
                    text.push(self.bump().expect("peeked"));
                }
                while let Some(c) = self.peek().filter(|c| c.is_ascii_digit()) {
                    text.push(c);
                    self.bump();
                }
            }
        }
        if self.peek().is_some_and(|c| c == '_' || c.is_alphabetic()) {
            return self.err(span, "invalid numeric literal");
        }
        if is_float {
            text.parse::<f64>().map(Tok::Float).or_else(|_| self.err(span, "invalid float literal"))
        } else {
            text.parse::<i64>().map(Tok::Int).or_else(|_| self.err(span, "integer literal too large"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(src: &str) -> Vec<Tok> {
        tokenize(src).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn indentation_tokens() {
        let t = toks("if x:\n    y = 1\nz = 2\n");
        assert_eq!(
            t,
            vec![
                Tok::Name("if".into()),
                Tok::Name("x".into()),
                Tok::Op(":"),
                Tok::Newline,
                Tok::Indent,
                Tok::Name("y".into()),
                Tok::Op("="),
                Tok::Int(1),
                Tok::Newline,
                Tok::Dedent,
                Tok::Name("z".into()),
                Tok::Op("="),
                Tok::Int(2),
                Tok::Newline,
                Tok::Eof,
            ]
        );
    }

    #[test]
    fn brackets_join_lines_and_comments_vanish() {
        let t = toks("d = {\n  \"a\": [1,\n 2],  # note\n}\n");
        assert!(!t[..t.len() - 2].contains(&Tok::Newline));
        assert!(!t.contains(&Tok::Indent));
    }

    #[test]
    fn numbers_and_strings() {
        assert_eq!(
            toks("1.5e-3 10 .5 'a\\n' \"\"\"x\ny\"\"\""),
            vec![
                Tok::Float(1.5e-3),
                Tok::Int(10),
                Tok::Float(0.5),
                Tok::Str("a\n".into()),
                Tok::Str("x\ny".into()),
                Tok::Newline,
                Tok::Eof
            ]
        );
    }

    #[test]
    fn errors_carry_positions() {
        let e = tokenize("x = 'abc").unwrap_err();
        assert_eq!((e.line, e.column), (1, 5));
        let e = tokenize("if x:\n        a\n    b\n").unwrap_err();
        assert_eq!(e.line, 3);
        let e = tokenize("x = 99999999999999999999").unwrap_err();
        assert_eq!(e.column, 5);
        assert!(tokenize("x = $").is_err());
    }
}
