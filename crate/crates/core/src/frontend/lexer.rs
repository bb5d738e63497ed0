//! Tokens of the `.form` syntax. Newlines end statements except inside
//! brackets or after a trailing backslash.

use super::diagnostic::{Diagnostic, Span};

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Name(String),
    Int(i64),
    Real(f64),
    Str(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Comma,
    Colon,
    Assign,
    Plus,
    Minus,
    Star,
    Slash,
    StarStar,
    Newline,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Name(n) => format!("name '{n}'"),
            Tok::Int(v) => format!("number {v}"),
            Tok::Real(v) => format!("number {v}"),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::Newline => "end of line".into(),
            Tok::Eof => "end of file".into(),
            t => format!("'{}'", t.symbol()),
        }
    }

    fn symbol(&self) -> &'static str {
        match self {
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::Comma => ",",
            Tok::Colon => ":",
            Tok::Assign => "=",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::StarStar => "**",
            _ => "",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, Diagnostic> {
    let bytes = src.as_bytes();
    let mut out: Vec<Token> = Vec::new();
    let mut depth = 0usize;
    let mut pos = 0;
    while pos < bytes.len() {
        let c = bytes[pos];
        let start = pos;
        let single = |tok: Tok| Token {
            tok,
            span: Span::new(start, start + 1),
        };
        match c {
            b' ' | b'\t' | b'\r' => pos += 1,
            b'#' => {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            }
            b'\\' => {
                let mut p = pos + 1;
                while p < bytes.len() && matches!(bytes[p], b' ' | b'\t' | b'\r') {
                    p += 1;
                }
                if p < bytes.len() && bytes[p] != b'\n' {
                    return Err(Diagnostic::syntax(
                        Span::new(pos, pos + 1),
                        "a line continuation must end the line",
                    ));
                }
                pos = p + 1;
            }
            b'\n' => {
                if depth == 0 && out.last().is_some_and(|t| t.tok != Tok::Newline) {
                    out.push(single(Tok::Newline));
                }
                pos += 1;
            }
            b'(' | b'[' | b'{' => {
                depth += 1;
                out.push(single(match c {
                    b'(' => Tok::LParen,
                    b'[' => Tok::LBracket,
                    _ => Tok::LBrace,
                }));
                pos += 1;
            }
            b')' | b']' | b'}' => {
                depth = depth.saturating_sub(1);
                out.push(single(match c {
                    b')' => Tok::RParen,
                    b']' => Tok::RBracket,
                    _ => Tok::RBrace,
                }));
                pos += 1;
            }
            b',' | b':' | b'=' | b'+' | b'-' | b'/' => {
                out.push(single(match c {
                    b',' => Tok::Comma,
                    b':' => Tok::Colon,
                    b'=' => Tok::Assign,
                    b'+' => Tok::Plus,
                    b'-' => Tok::Minus,
                    _ => Tok::Slash,
                }));
                pos += 1;
            }
            b'*' => {
                if bytes.get(pos + 1) == Some(&b'*') {
                    out.push(Token {
                        tok: Tok::StarStar,
                        span: Span::new(pos, pos + 2),
                    });
                    pos += 2;
                } else {
                    out.push(single(Tok::Star));
                    pos += 1;
                }
            }
            b'"' | b'\'' => {
                let quote = c;
                pos += 1;
                while pos < bytes.len() && bytes[pos] != quote && bytes[pos] != b'\n' {
                    pos += 1;
                }
                if pos >= bytes.len() || bytes[pos] != quote {
                    return Err(Diagnostic::syntax(
                        Span::new(start, pos),
                        "unterminated string literal",
                    ));
                }
                pos += 1;
                out.push(Token {
                    tok: Tok::Str(src[start + 1..pos - 1].to_string()),
                    span: Span::new(start, pos),
                });
            }
            b'0'..=b'9' | b'.' => {
                let (tok, end) = number(src, pos)?;
                out.push(Token {
                    tok,
                    span: Span::new(start, end),
                });
                pos = end;
            }
            c if c == b'_' || c.is_ascii_alphabetic() => {
                while pos < bytes.len()
                    && (bytes[pos] == b'_' || bytes[pos].is_ascii_alphanumeric())
                {
                    pos += 1;
                }
                out.push(Token {
                    tok: Tok::Name(src[start..pos].to_string()),
                    span: Span::new(start, pos),
                });
            }
            _ => {
                let ch = src[pos..].chars().next().unwrap_or('?');
                return Err(Diagnostic::syntax(
                    Span::new(pos, pos + ch.len_utf8()),
                    format!("unexpected character '{ch}'"),
                ));
            }
        }
    }
    if out.last().is_some_and(|t| t.tok != Tok::Newline) {
        out.push(Token {
            tok: Tok::Newline,
            span: Span::new(src.len(), src.len()),
        });
    }
    out.push(Token {
        tok: Tok::Eof,
        span: Span::new(src.len(), src.len()),
    });
    Ok(out)
}

fn number(src: &str, start: usize) -> Result<(Tok, usize), Diagnostic> {
    let bytes = src.as_bytes();
    let mut pos = start;
    let digits = |p: &mut usize| {
        while *p < bytes.len() && bytes[*p].is_ascii_digit() {
            *p += 1;
        }
    };
    digits(&mut pos);
    let mut real = false;
    if pos < bytes.len() && bytes[pos] == b'.' {
        real = true;
        pos += 1;
        digits(&mut pos);
    }
    if pos < bytes.len() && matches!(bytes[pos], b'e' | b'E') {
        let mut p = pos + 1;
        if p < bytes.len() && matches!(bytes[p], b'+' | b'-') {
            p += 1;
        }
        if p < bytes.len() && bytes[p].is_ascii_digit() {
            real = true;
            pos = p;
            digits(&mut pos);
        }
    }
    let text = &src[start..pos];
    let span = Span::new(start, pos);
    if text == "." {
        return Err(Diagnostic::syntax(span, "unexpected character '.'"));
    }
    if real {
        text.parse::<f64>()
            .map(|v| (Tok::Real(v), pos))
            .map_err(|_| Diagnostic::syntax(span, format!("malformed number '{text}'")))
    } else {
        text.parse::<i64>()
            .map(|v| (Tok::Int(v), pos))
            .map_err(|_| Diagnostic::syntax(span, format!("integer '{text}' is out of range")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(src: &str) -> Vec<Tok> {
        tokenize(src).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn numbers_and_operators() {
        assert_eq!(
            toks("a = 2*x**-1.5e0"),
            vec![
                Tok::Name("a".into()),
                Tok::Assign,
                Tok::Int(2),
                Tok::Star,
                Tok::Name("x".into()),
                Tok::StarStar,
                Tok::Minus,
                Tok::Real(1.5),
                Tok::Newline,
                Tok::Eof
            ]
        );
    }

    #[test]
    fn newlines_inside_brackets_are_joined() {
        let t = toks("a = f(1,\n  2) # c\n\n\nb = 3 \\\n + 1\n");
        let newlines = t.iter().filter(|t| **t == Tok::Newline).count();
        assert_eq!(newlines, 2);
    }

    #[test]
    fn strings_use_either_quote() {
        assert_eq!(toks("'+'")[0], Tok::Str("+".into()));
        assert_eq!(toks("\"facet\"")[0], Tok::Str("facet".into()));
        assert!(tokenize("'open").is_err());
    }

    #[test]
    fn bad_character_has_a_span() {
        let e = tokenize("a = 1 $ 2").unwrap_err();
        assert_eq!(e.span, Span::new(6, 7));
    }
}
