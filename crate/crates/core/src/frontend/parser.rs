//! Recursive descent parser producing a syntax tree with spans.
//!
//! Precedence, lowest first: `+ -`, `* /`, unary `-`, `**` (right
//! associative, exponent parsed at unary level), then postfix indexing and
//! calls.

use super::diagnostic::{Diagnostic, Span};
use super::lexer::{tokenize, Tok, Token};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Ast {
    Int(i64),
    Real(f64),
    Str(String),
    Name(String),
    Tuple(Vec<Node>),
    List(Vec<Node>),
    Dict(Vec<(Node, Node)>),
    Call {
        func: Box<Node>,
        args: Vec<Node>,
        kwargs: Vec<(String, Node)>,
    },
    Subscript {
        base: Box<Node>,
        items: Vec<Node>,
    },
    Binary {
        op: BinOp,
        lhs: Box<Node>,
        rhs: Box<Node>,
    },
    Neg(Box<Node>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub ast: Ast,
    pub span: Span,
    /// Span of the operator token, for binary and unary nodes.
    pub op_span: Span,
}

impl Node {
    fn new(ast: Ast, span: Span) -> Node {
        Node {
            ast,
            span,
            op_span: span,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Statement {
    pub name: String,
    pub name_span: Span,
    pub value: Node,
}

impl Statement {
    pub fn span(&self) -> Span {
        self.name_span.to(self.value.span)
    }
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, Diagnostic>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok) -> PResult<Span> {
        if *self.peek() == tok {
            Ok(self.bump().span)
        } else {
            Err(self.unexpected(&format!("expected {}", tok.describe())))
        }
    }

    fn unexpected(&self, what: &str) -> Diagnostic {
        Diagnostic::syntax(
            self.span(),
            format!("{what}, found {}", self.peek().describe()),
        )
    }

    /// Consumes a binary operator, which must not end the statement.
    fn operator(&mut self) -> PResult<Span> {
        let t = self.bump();
        if matches!(self.peek(), Tok::Newline | Tok::Eof) {
            return Err(Diagnostic::syntax(
                t.span,
                format!("{} is missing its right operand", t.tok.describe()),
            ));
        }
        Ok(t.span)
    }

    fn statement(&mut self) -> PResult<Statement> {
        let (name, name_span) = match self.peek().clone() {
            Tok::Name(n) => (n, self.bump().span),
            _ => return Err(self.unexpected("expected a statement 'name = expression'")),
        };
        if *self.peek() != Tok::Assign {
            return Err(self.unexpected("expected '=' after the statement name"));
        }
        self.bump();
        let value = self.expr()?;
        if !matches!(self.peek(), Tok::Newline | Tok::Eof) {
            return Err(self.unexpected("expected end of statement"));
        }
        Ok(Statement {
            name,
            name_span,
            value,
        })
    }

    fn expr(&mut self) -> PResult<Node> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            let op_span = self.operator()?;
            let rhs = self.product()?;
            lhs = binary(op, lhs, rhs, op_span);
        }
    }

    fn product(&mut self) -> PResult<Node> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            let op_span = self.operator()?;
            let rhs = self.unary()?;
            lhs = binary(op, lhs, rhs, op_span);
        }
    }

    fn unary(&mut self) -> PResult<Node> {
        match self.peek() {
            Tok::Minus => {
                let op_span = self.bump().span;
                let inner = self.unary()?;
                let span = op_span.to(inner.span);
                Ok(Node {
                    ast: Ast::Neg(Box::new(inner)),
                    span,
                    op_span,
                })
            }
            Tok::Plus => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> PResult<Node> {
        let base = self.postfix()?;
        if *self.peek() == Tok::StarStar {
            let op_span = self.operator()?;
            let exp = self.unary()?;
            return Ok(binary(BinOp::Pow, base, exp, op_span));
        }
        Ok(base)
    }

    fn postfix(&mut self) -> PResult<Node> {
        let mut node = self.atom()?;
        loop {
            match self.peek() {
                Tok::LBracket => {
                    self.bump();
                    let mut items = Vec::new();
                    while *self.peek() != Tok::RBracket {
                        items.push(self.expr()?);
                        if *self.peek() == Tok::Comma {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    let end = self.expect(Tok::RBracket)?;
                    if items.is_empty() {
                        return Err(Diagnostic::syntax(end, "empty index list"));
                    }
                    let span = node.span.to(end);
                    node = Node::new(
                        Ast::Subscript {
                            base: Box::new(node),
                            items,
                        },
                        span,
                    );
                }
                Tok::LParen => {
                    self.bump();
                    let (args, kwargs) = self.call_args()?;
                    let end = self.expect(Tok::RParen)?;
                    let span = node.span.to(end);
                    node = Node::new(
                        Ast::Call {
                            func: Box::new(node),
                            args,
                            kwargs,
                        },
                        span,
                    );
                }
                _ => return Ok(node),
            }
        }
    }

    fn call_args(&mut self) -> PResult<(Vec<Node>, Vec<(String, Node)>)> {
        let mut args = Vec::new();
        let mut kwargs: Vec<(String, Node)> = Vec::new();
        while *self.peek() != Tok::RParen {
            let keyword = match (self.peek(), &self.toks.get(self.pos + 1).map(|t| &t.tok)) {
                (Tok::Name(n), Some(Tok::Assign)) => Some(n.clone()),
                _ => None,
            };
            if let Some(k) = keyword {
                let kspan = self.bump().span;
                self.bump();
                if kwargs.iter().any(|(n, _)| *n == k) {
                    return Err(Diagnostic::syntax(
                        kspan,
                        format!("keyword argument '{k}' repeated"),
                    ));
                }
                kwargs.push((k, self.expr()?));
            } else {
                if !kwargs.is_empty() {
                    return Err(Diagnostic::syntax(
                        self.span(),
                        "positional argument after a keyword argument",
                    ));
                }
                args.push(self.expr()?);
            }
            if *self.peek() == Tok::Comma {
                self.bump();
            } else {
                break;
            }
        }
        Ok((args, kwargs))
    }

    fn atom(&mut self) -> PResult<Node> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(Node::new(Ast::Int(v), span))
            }
            Tok::Real(v) => {
                self.bump();
                Ok(Node::new(Ast::Real(v), span))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Node::new(Ast::Str(s), span))
            }
            Tok::Name(n) => {
                self.bump();
                Ok(Node::new(Ast::Name(n), span))
            }
            Tok::LParen => {
                self.bump();
                if *self.peek() == Tok::RParen {
                    let end = self.bump().span;
                    return Ok(Node::new(Ast::Tuple(vec![]), span.to(end)));
                }
                let first = self.expr()?;
                if *self.peek() == Tok::RParen {
                    self.bump();
                    return Ok(first);
                }
                let mut items = vec![first];
                while *self.peek() == Tok::Comma {
                    self.bump();
                    if *self.peek() == Tok::RParen {
                        break;
                    }
                    items.push(self.expr()?);
                }
                let end = self.expect(Tok::RParen)?;
                Ok(Node::new(Ast::Tuple(items), span.to(end)))
            }
            Tok::LBracket => {
                self.bump();
                let mut items = Vec::new();
                while *self.peek() != Tok::RBracket {
                    items.push(self.expr()?);
                    if *self.peek() == Tok::Comma {
                        self.bump();
                    } else {
                        break;
                    }
                }
                let end = self.expect(Tok::RBracket)?;
                Ok(Node::new(Ast::List(items), span.to(end)))
            }
            Tok::LBrace => {
                self.bump();
                let mut items = Vec::new();
                while *self.peek() != Tok::RBrace {
                    let k = self.expr()?;
                    self.expect(Tok::Colon)?;
                    let v = self.expr()?;
                    items.push((k, v));
                    if *self.peek() == Tok::Comma {
                        self.bump();
                    } else {
                        break;
                    }
                }
                let end = self.expect(Tok::RBrace)?;
                Ok(Node::new(Ast::Dict(items), span.to(end)))
            }
            _ => Err(self.unexpected("expected an expression")),
        }
    }

    /// Skips to the start of the next statement after an error.
    fn recover(&mut self) {
        while !matches!(self.peek(), Tok::Newline | Tok::Eof) {
            self.bump();
        }
    }
}

fn binary(op: BinOp, lhs: Node, rhs: Node, op_span: Span) -> Node {
    let span = lhs.span.to(rhs.span);
    Node {
        ast: Ast::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        },
        span,
        op_span,
    }
}

/// Parses statements, collecting one diagnostic per malformed statement.
pub fn parse_statements(src: &str) -> (Vec<Statement>, Vec<Diagnostic>) {
    let toks = match tokenize(src) {
        Ok(t) => t,
        Err(d) => return (vec![], vec![d]),
    };
    let mut p = Parser { toks, pos: 0 };
    let mut stmts = Vec::new();
    let mut diags = Vec::new();
    loop {
        match p.peek() {
            Tok::Eof => break,
            Tok::Newline => {
                p.bump();
                continue;
            }
            _ => {}
        }
        match p.statement() {
            Ok(s) => stmts.push(s),
            Err(d) => {
                diags.push(d);
                p.recover();
            }
        }
    }
    (stmts, diags)
}

/// Parses a single expression, as used for bindings given on their own.
pub fn parse_expression(src: &str) -> Result<Node, Diagnostic> {
    let toks = tokenize(src)?;
    let mut p = Parser { toks, pos: 0 };
    let e = p.expr()?;
    while *p.peek() == Tok::Newline {
        p.bump();
    }
    if *p.peek() != Tok::Eof {
        return Err(p.unexpected("expected end of expression"));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(n: &Node) -> String {
        match &n.ast {
            Ast::Int(v) => v.to_string(),
            Ast::Real(v) => format!("{v:?}"),
            Ast::Str(s) => format!("{s:?}"),
            Ast::Name(s) => s.clone(),
            Ast::Neg(x) => format!("(-{})", shape(x)),
            Ast::Binary { op, lhs, rhs } => {
                let o = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "**",
                };
                format!("({} {o} {})", shape(lhs), shape(rhs))
            }
            Ast::Call { func, args, kwargs } => {
                let mut parts: Vec<String> = args.iter().map(shape).collect();
                parts.extend(kwargs.iter().map(|(k, v)| format!("{k}={}", shape(v))));
                format!("{}({})", shape(func), parts.join(", "))
            }
            Ast::Subscript { base, items } => {
                let parts: Vec<String> = items.iter().map(shape).collect();
                format!("{}[{}]", shape(base), parts.join(", "))
            }
            Ast::Tuple(items) | Ast::List(items) => {
                let parts: Vec<String> = items.iter().map(shape).collect();
                format!("<{}>", parts.join(", "))
            }
            Ast::Dict(_) => "{..}".into(),
        }
    }

    fn expr(src: &str) -> String {
        shape(&parse_expression(src).unwrap())
    }

    #[test]
    fn precedence_table() {
        assert_eq!(expr("a + b*c**d"), "(a + (b * (c ** d)))");
        assert_eq!(expr("a - b - c"), "((a - b) - c)");
        assert_eq!(expr("a**b**c"), "(a ** (b ** c))");
        assert_eq!(expr("-a**2"), "(-(a ** 2))");
        assert_eq!(expr("-2*x"), "((-2) * x)");
        assert_eq!(expr("a**-b*c"), "((a ** (-b)) * c)");
        assert_eq!(expr("a/b*c"), "((a / b) * c)");
    }

    #[test]
    fn postfix_forms() {
        assert_eq!(expr("f('+')[i, 0]"), "f(\"+\")[i, 0]");
        assert_eq!(expr("dx(1)"), "dx(1)");
        assert_eq!(expr("Coefficient(V, count=3)"), "Coefficient(V, count=3)");
        assert_eq!(expr("as_vector((a, b))"), "as_vector(<a, b>)");
        assert_eq!(expr("(a,)"), "<a>");
        assert_eq!(expr("(a)"), "a");
    }

    #[test]
    fn trailing_operator_is_reported_at_its_end() {
        let src = "a = v*dx + u*v*\n";
        let (stmts, diags) = parse_statements(src);
        assert!(stmts.is_empty());
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].kind, "SyntaxError");
        assert_eq!(diags[0].span, Span::new(src.len() - 2, src.len() - 1));
    }

    #[test]
    fn recovery_continues_with_the_next_statement() {
        let (stmts, diags) = parse_statements("a = 1 +\nb = 2\nc = = 3\nd = 4\n");
        assert_eq!(diags.len(), 2);
        let names: Vec<&str> = stmts.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, vec!["b", "d"]);
    }
}
