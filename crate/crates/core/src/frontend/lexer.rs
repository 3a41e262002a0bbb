use crate::ast::{Nat, Span};

use super::ParseError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Num(Nat),
    Kw(Keyword),
    Sym(&'static str),
    Eof,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Keyword {
    Skip,
    Sync,
    Let,
    In,
    If,
    Else,
    ForU,
    ForS,
    Rd,
    Wr,
    True,
    False,
    Tid,
    Array,
}

impl Keyword {
    fn from_word(word: &str) -> Option<Keyword> {
        Some(match word {
            "skip" => Keyword::Skip,
            "sync" => Keyword::Sync,
            "let" => Keyword::Let,
            "in" => Keyword::In,
            "if" => Keyword::If,
            "else" => Keyword::Else,
            "forU" => Keyword::ForU,
            "forS" => Keyword::ForS,
            "rd" => Keyword::Rd,
            "wr" => Keyword::Wr,
            "true" => Keyword::True,
            "false" => Keyword::False,
            "tid" => Keyword::Tid,
            "A" => Keyword::Array,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Keyword::Skip => "skip",
            Keyword::Sync => "sync",
            Keyword::Let => "let",
            Keyword::In => "in",
            Keyword::If => "if",
            Keyword::Else => "else",
            Keyword::ForU => "forU",
            Keyword::ForS => "forS",
            Keyword::Rd => "rd",
            Keyword::Wr => "wr",
            Keyword::True => "true",
            Keyword::False => "false",
            Keyword::Tid => "tid",
            Keyword::Array => "A",
        }
    }
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(name) => format!("identifier `{name}`"),
            Tok::Num(n) => format!("number `{n}`"),
            Tok::Kw(kw) => format!("`{}`", kw.as_str()),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Eof => "end of input".to_owned(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

// Longest symbols first so that `:=` wins over a lone `:`.
const SYMBOLS: &[&str] = &[
    ":=", "..", "<=", ">=", "!=", "&&", "||", "[", "]", "{", "}", "(", ")", "=", "<", ">", "+",
    "-", "*", "/", "%", ";",
];

pub fn tokenize(source: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = source.as_bytes();
    let mut tokens = Vec::new();
    let mut pos = 0;
    let mut line = 1;
    let mut line_start = 0;

    while pos < bytes.len() {
        let c = bytes[pos];
        if c == b'\n' {
            pos += 1;
            line += 1;
            line_start = pos;
            continue;
        }
        if c.is_ascii_whitespace() {
            pos += 1;
            continue;
        }
        if source[pos..].starts_with("//") {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        let column = source[line_start..start].chars().count() + 1;
        let tok = if c.is_ascii_digit() {
            while pos < bytes.len() && bytes[pos].is_ascii_digit() {
                pos += 1;
            }
            let text = &source[start..pos];
            let value = text.parse::<Nat>().map_err(|_| {
                ParseError::new(
                    Span::new(start, pos, line, column),
                    format!("numeric literal `{text}` is too large"),
                    vec![],
                )
            })?;
            Tok::Num(value)
        } else if c.is_ascii_alphabetic() || c == b'_' {
            while pos < bytes.len() && (bytes[pos].is_ascii_alphanumeric() || bytes[pos] == b'_') {
                pos += 1;
            }
            let word = &source[start..pos];
            match Keyword::from_word(word) {
                Some(kw) => Tok::Kw(kw),
                None => Tok::Ident(word.to_owned()),
            }
        } else if let Some(sym) = SYMBOLS.iter().find(|s| source[pos..].starts_with(**s)) {
            pos += sym.len();
            Tok::Sym(sym)
        } else {
            let ch = source[pos..].chars().next().unwrap_or('?');
            return Err(ParseError::new(
                Span::new(start, start + ch.len_utf8(), line, column),
                format!("unexpected character `{ch}`"),
                vec![],
            ));
        };
        tokens.push(Token {
            tok,
            span: Span::new(start, pos, line, column),
        });
    }
    let column = source[line_start..].chars().count() + 1;
    tokens.push(Token {
        tok: Tok::Eof,
        span: Span::new(source.len(), source.len(), line, column),
    });
    Ok(tokens)
}
