// SPDX-License-Identifier: Apache-2.0

//! Tokenizer for the supported Verilog subset.
//!
//! Keywords are not distinguished from identifiers here; the parser checks
//! identifier text where it expects a keyword. Compiler directives such as
//! `` `timescale `` and `` `include `` are skipped to end of line and reported
//! as warnings. A backtick followed by any other name becomes a macro usage
//! token.

use super::ast::Span;
use super::RtlError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    Ident(String),
    /// `$display`, `$signed`, ...
    SysIdent(String),
    /// Raw literal text, e.g. `8'hff`, `'1`, `42`.
    Number(String),
    Str(String),
    /// `` `NAME `` usage.
    Macro(String),
    Op(&'static str),
    Eof,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Span,
}

const SKIPPED_DIRECTIVES: &[&str] = &[
    "timescale",
    "include",
    "define",
    "undef",
    "ifdef",
    "ifndef",
    "elsif",
    "else",
    "endif",
    "default_nettype",
    "resetall",
    "celldefine",
    "endcelldefine",
];

// Longest match first.
const OPERATORS: &[&str] = &[
    "<<<", ">>>", "===", "!==", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "**", "~&", "~|",
    "~^", "^~", "+:", "-:", "|->", "|=>", "##", "->", "+", "-", "*", "/", "%", "<", ">", "!", "~",
    "&", "|", "^", "?", ":", ";", ",", ".", "(", ")", "[", "]", "{", "}", "=", "@", "#", "'",
];

pub struct Lexed {
    pub tokens: Vec<Token>,
    pub warnings: Vec<String>,
}

pub fn tokenize(file: &str, src: &str) -> Result<Lexed, RtlError> {
    let mut lx = Lexer {
        file,
        src,
        bytes: src.as_bytes(),
        pos: 0,
        line: 1,
        tokens: Vec::new(),
        warnings: Vec::new(),
    };
    lx.run()?;
    Ok(Lexed {
        tokens: lx.tokens,
        warnings: lx.warnings,
    })
}

struct Lexer<'a> {
    file: &'a str,
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    line: u32,
    tokens: Vec<Token>,
    warnings: Vec<String>,
}

fn is_ident_start(b: u8) -> bool {
    b.is_ascii_alphabetic() || b == b'_'
}

fn is_ident_char(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b == b'$'
}

impl<'a> Lexer<'a> {
    fn peek(&self, off: usize) -> Option<u8> {
        self.bytes.get(self.pos + off).copied()
    }

    fn bump(&mut self) {
        if self.bytes[self.pos] == b'\n' {
            self.line += 1;
        }
        self.pos += 1;
    }

    fn error(&self, msg: impl Into<String>) -> RtlError {
        RtlError::Syntax {
            file: self.file.to_string(),
            line: self.line,
            message: msg.into(),
        }
    }

    fn push(&mut self, kind: TokenKind, start: usize, line: u32) {
        self.tokens.push(Token {
            kind,
            span: Span {
                start,
                end: self.pos,
                line_start: line,
                line_end: self.line,
            },
        });
    }

    fn run(&mut self) -> Result<(), RtlError> {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            let start = self.pos;
            let line = self.line;
            if b.is_ascii_whitespace() {
                self.bump();
            } else if b == b'/' && self.peek(1) == Some(b'/') {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.bump();
                }
            } else if b == b'/' && self.peek(1) == Some(b'*') {
                self.pos += 2;
                loop {
                    if self.pos + 1 >= self.bytes.len() {
                        return Err(self.error("unterminated block comment"));
                    }
                    if self.bytes[self.pos] == b'*' && self.bytes[self.pos + 1] == b'/' {
                        self.pos += 2;
                        break;
                    }
                    self.bump();
                }
            } else if b == b'(' && self.peek(1) == Some(b'*') && self.peek(2) != Some(b')') {
                // attribute instance (* ... *)
                self.pos += 2;
                loop {
                    if self.pos + 1 >= self.bytes.len() {
                        return Err(self.error("unterminated attribute"));
                    }
                    if self.bytes[self.pos] == b'*' && self.bytes[self.pos + 1] == b')' {
                        self.pos += 2;
                        break;
                    }
                    self.bump();
                }
            } else if b == b'`' {
                self.pos += 1;
                let name_start = self.pos;
                while self.pos < self.bytes.len() && is_ident_char(self.bytes[self.pos]) {
                    self.pos += 1;
                }
                let name = &self.src[name_start..self.pos];
                if name.is_empty() {
                    return Err(self.error("stray backtick"));
                }
                if SKIPPED_DIRECTIVES.contains(&name) {
                    let line_text_start = self.pos;
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                    self.warnings.push(format!(
                        "{}:{}: directive `{}{} skipped",
                        self.file,
                        line,
                        name,
                        self.src[line_text_start..self.pos].trim_end()
                    ));
                } else {
                    self.push(TokenKind::Macro(name.to_string()), start, line);
                }
            } else if b == b'$' {
                self.pos += 1;
                while self.pos < self.bytes.len() && is_ident_char(self.bytes[self.pos]) {
                    self.pos += 1;
                }
                let text = self.src[start..self.pos].to_string();
                self.push(TokenKind::SysIdent(text), start, line);
            } else if is_ident_start(b) {
                while self.pos < self.bytes.len() && is_ident_char(self.bytes[self.pos]) {
                    self.pos += 1;
                }
                let text = self.src[start..self.pos].to_string();
                self.push(TokenKind::Ident(text), start, line);
            } else if b.is_ascii_digit() || (b == b'\'' && self.starts_based_literal()) {
                self.lex_number()?;
                let text = self.src[start..self.pos].to_string();
                self.push(TokenKind::Number(text), start, line);
            } else if b == b'"' {
                self.pos += 1;
                loop {
                    match self.peek(0) {
                        None | Some(b'\n') => return Err(self.error("unterminated string")),
                        Some(b'\\') => self.pos += 2,
                        Some(b'"') => {
                            self.pos += 1;
                            break;
                        }
                        Some(_) => self.pos += 1,
                    }
                }
                let text = self.src[start + 1..self.pos - 1].to_string();
                self.push(TokenKind::Str(text), start, line);
            } else {
                let rest = &self.src[self.pos..];
                match OPERATORS.iter().find(|op| rest.starts_with(**op)) {
                    Some(op) => {
                        self.pos += op.len();
                        self.push(TokenKind::Op(op), start, line);
                    }
                    None => {
                        let ch = rest.chars().next().unwrap_or('?');
                        return Err(self.error(format!("unexpected character '{ch}'")));
                    }
                }
            }
        }
        let end = self.bytes.len();
        self.tokens.push(Token {
            kind: TokenKind::Eof,
            span: Span {
                start: end,
                end,
                line_start: self.line,
                line_end: self.line,
            },
        });
        Ok(())
    }

    /// `'b0`, `'hff`, `'sd3`, and the fill literals `'0 '1 'x 'z`.
    fn starts_based_literal(&self) -> bool {
        match self.peek(1) {
            Some(c) if b"01xXzZ".contains(&c) => !self.peek(2).is_some_and(is_ident_char),
            Some(c) if b"bBoOdDhH".contains(&c) => true,
            Some(b's') | Some(b'S') => self.peek(2).is_some_and(|c| b"bBoOdDhH".contains(&c)),
            _ => false,
        }
    }

    fn lex_number(&mut self) -> Result<(), RtlError> {
        // size or plain decimal
        while self.peek(0).is_some_and(|c| c.is_ascii_digit() || c == b'_') {
            self.pos += 1;
        }
        if self.peek(0) == Some(b'.') && self.peek(1).is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
            while self.peek(0).is_some_and(|c| c.is_ascii_digit() || c == b'_') {
                self.pos += 1;
            }
            return Ok(());
        }
        if self.peek(0) != Some(b'\'') {
            return Ok(());
        }
        self.pos += 1;
        if self.peek(0).is_some_and(|c| c == b's' || c == b'S') {
            self.pos += 1;
        }
        match self.peek(0) {
            Some(c) if b"bBoOdDhH".contains(&c) => self.pos += 1,
            Some(c) if b"01xXzZ".contains(&c) => {
                // unbased unsized fill literal
                self.pos += 1;
                return Ok(());
            }
            _ => return Err(self.error("malformed based literal")),
        }
        let digits_start = self.pos;
        while self
            .peek(0)
            .is_some_and(|c| c.is_ascii_hexdigit() || b"xXzZ?_".contains(&c))
        {
            self.pos += 1;
        }
        if self.pos == digits_start {
            return Err(self.error("based literal without digits"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<TokenKind> {
        tokenize("t.v", src)
            .unwrap()
            .tokens
            .into_iter()
            .map(|t| t.kind)
            .collect()
    }

    #[test]
    fn numbers_and_operators() {
        let k = kinds("a <= 8'hFF ~| 'b1 '1 3");
        assert_eq!(
            k,
            vec![
                TokenKind::Ident("a".into()),
                TokenKind::Op("<="),
                TokenKind::Number("8'hFF".into()),
                TokenKind::Op("~|"),
                TokenKind::Number("'b1".into()),
                TokenKind::Number("'1".into()),
                TokenKind::Number("3".into()),
                TokenKind::Eof,
            ]
        );
    }

    #[test]
    fn star_sensitivity_is_not_an_attribute() {
        let k = kinds("@(*)");
        assert_eq!(k[1], TokenKind::Op("("));
        assert_eq!(k[2], TokenKind::Op("*"));
        assert_eq!(k[3], TokenKind::Op(")"));
    }

    #[test]
    fn directives_skipped_macros_kept() {
        let lexed = tokenize("t.v", "`timescale 1ns/1ps\nx = `CMD_NOP;").unwrap();
        assert_eq!(lexed.warnings.len(), 1);
        assert_eq!(lexed.tokens[2].kind, TokenKind::Macro("CMD_NOP".into()));
        assert_eq!(lexed.tokens[0].span.line_start, 2);
    }

    #[test]
    fn comments_and_attributes_skipped() {
        let k = kinds("// c\n/* multi\nline */ (* keep *) w");
        assert_eq!(k, vec![TokenKind::Ident("w".into()), TokenKind::Eof]);
    }

    #[test]
    fn unterminated_comment_is_an_error() {
        assert!(tokenize("t.v", "/* open").is_err());
    }
}
