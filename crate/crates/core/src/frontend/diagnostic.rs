use std::fmt;

use crate::error::Error;

/// Byte range into the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Span {
        Span { start, end }
    }

    pub fn to(self, other: Span) -> Span {
        Span::new(self.start.min(other.start), self.end.max(other.end))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub span: Span,
    /// Short class name: `SyntaxError`, `NameError` or an error kind from
    /// the core library.
    pub kind: String,
    pub message: String,
    pub path: Option<Vec<usize>>,
}

/// 1-based line and column of a byte offset.
pub fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(src.len());
    let before = &src[..offset];
    let line = before.matches('\n').count() + 1;
    let col = before
        .rfind('\n')
        .map_or(before.chars().count(), |p| before[p + 1..].chars().count())
        + 1;
    (line, col)
}

impl Diagnostic {
    pub fn error(span: Span, kind: &str, message: impl Into<String>) -> Diagnostic {
        Diagnostic {
            severity: Severity::Error,
            span,
            kind: kind.to_string(),
            message: message.into(),
            path: None,
        }
    }

    pub fn syntax(span: Span, message: impl Into<String>) -> Diagnostic {
        Diagnostic::error(span, "SyntaxError", message)
    }

    pub fn from_error(span: Span, e: &Error) -> Diagnostic {
        Diagnostic::error(span, e.kind_name(), e.to_string())
    }

    pub fn with_path(mut self, path: Vec<usize>) -> Diagnostic {
        self.path = Some(path);
        self
    }

    /// `file:line:col-line:col: error[Kind]: message`.
    pub fn render(&self, file: &str, src: &str) -> String {
        let (l0, c0) = line_col(src, self.span.start);
        let (l1, c1) = line_col(src, self.span.end);
        let sev = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        let mut s = format!(
            "{file}:{l0}:{c0}-{l1}:{c1}: {sev}[{}]: {}",
            self.kind, self.message
        );
        if let Some(p) = &self.path {
            let p: Vec<String> = p.iter().map(|x| x.to_string()).collect();
            s.push_str(&format!(" (node path [{}])", p.join(", ")));
        }
        s
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}..{}: [{}] {}",
            self.span.start, self.span.end, self.kind, self.message
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positions() {
        let src = "ab\ncd\n";
        assert_eq!(line_col(src, 0), (1, 1));
        assert_eq!(line_col(src, 4), (2, 2));
        let d = Diagnostic::syntax(Span::new(3, 5), "oops");
        assert_eq!(
            d.render("f.form", src),
            "f.form:2:1-2:3: error[SyntaxError]: oops"
        );
    }
}
