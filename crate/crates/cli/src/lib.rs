//! The `formlang` command: check, show, diff, graph and eval on `.form`
//! files. Exit codes: 0 success, 1 language or validation error, 2 I/O or
//! usage error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use formlang_core::dot;
use formlang_core::evaluator::{integrate_functional, EvalEnv, MiniMesh};
use formlang_core::forms::{validate_form, Form, Wrt};
use formlang_core::frontend::{parse, parse_with_prelude, print_module, Diagnostic, Span, Value};
use formlang_core::ir::{self, Expr, Op};
use formlang_core::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_LANGUAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "formlang",
    version,
    about = "Check, print, differentiate, graph and evaluate variational forms"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a file and validate its exported forms.
    Check { file: PathBuf },
    /// Print a named value, or the whole module in canonical form.
    Show {
        file: PathBuf,
        #[arg(long)]
        form: Option<String>,
    },
    /// Print the Gateaux derivative of a form.
    Diff {
        file: PathBuf,
        #[arg(long)]
        form: String,
        #[arg(long)]
        wrt: String,
        #[arg(long)]
        dir: String,
    },
    /// Write the expression graph of a form or expression as DOT.
    Graph {
        file: PathBuf,
        #[arg(long)]
        form: String,
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long)]
        no_dedup: bool,
    },
    /// Integrate a functional over a small mesh.
    Eval {
        file: PathBuf,
        #[arg(long)]
        form: String,
        #[arg(long)]
        env: Option<PathBuf>,
        /// `interval:A:B:N` or `unitsquare:N`.
        #[arg(long)]
        mesh: String,
        #[arg(long)]
        degree: Option<usize>,
    },
}

/// Output streams of one invocation.
pub struct Io<'a> {
    pub out: &'a mut dyn Write,
    pub err: &'a mut dyn Write,
}

struct Source {
    path: String,
    text: String,
}

enum Failure {
    Io(String),
    Language(Vec<String>),
}

type CmdResult = std::result::Result<(), Failure>;

impl Source {
    fn read(path: &Path) -> std::result::Result<Source, Failure> {
        std::fs::read_to_string(path)
            .map(|text| Source {
                path: path.display().to_string(),
                text,
            })
            .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
    }

    fn render(&self, d: &Diagnostic) -> String {
        d.render(&self.path, &self.text)
    }

    fn fail(&self, d: Diagnostic) -> Failure {
        Failure::Language(vec![self.render(&d)])
    }

    /// Parses the file; any diagnostic is fatal.
    fn module(&self) -> std::result::Result<formlang_core::frontend::SourceModule, Failure> {
        let parsed = parse(&self.text);
        if parsed.has_errors() {
            return Err(Failure::Language(
                parsed.diagnostics.iter().map(|d| self.render(d)).collect(),
            ));
        }
        Ok(parsed.module)
    }
}

pub fn run<I, T>(args: I, io: &mut Io) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_IO } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(io.err, "{text}")
            } else {
                write!(io.out, "{text}")
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Check { file } => check(file, io),
        Command::Show { file, form } => show(file, form.as_deref(), io),
        Command::Diff {
            file,
            form,
            wrt,
            dir,
        } => diff(file, form, wrt, dir, io),
        Command::Graph {
            file,
            form,
            out,
            no_dedup,
        } => graph(file, form, out.as_deref(), !no_dedup, io),
        Command::Eval {
            file,
            form,
            env,
            mesh,
            degree,
        } => eval(file, form, env.as_deref(), mesh, *degree, io),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Io(msg)) => {
            let _ = writeln!(io.err, "error: {msg}");
            EXIT_IO
        }
        Err(Failure::Language(lines)) => {
            for l in lines {
                let _ = writeln!(io.err, "{l}");
            }
            EXIT_LANGUAGE
        }
    }
}

fn write_out(io: &mut Io, text: &str) -> CmdResult {
    io.out
        .write_all(text.as_bytes())
        .map_err(|e| Failure::Io(e.to_string()))
}

fn check(file: &Path, io: &mut Io) -> CmdResult {
    let src = Source::read(file)?;
    let parsed = parse(&src.text);
    let mut lines: Vec<String> = parsed.diagnostics.iter().map(|d| src.render(d)).collect();
    for (name, form) in parsed.module.exported_forms() {
        let span = parsed
            .module
            .binding(name)
            .map_or(Span::default(), |b| b.span);
        for v in validate_form(form) {
            let d = Diagnostic::from_error(span, &v.error)
                .with_path(std::iter::once(v.integral).chain(v.path).collect());
            lines.push(src.render(&d));
        }
    }
    if !lines.is_empty() {
        return Err(Failure::Language(lines));
    }
    let m = &parsed.module;
    let summary: Vec<String> = m
        .exported_forms()
        .iter()
        .map(|(n, f)| match f.arity() {
            Ok(a) => format!("{n} (arity {a})"),
            Err(_) => n.to_string(),
        })
        .collect();
    write_out(
        io,
        &format!("{}: ok, exports {}\n", src.path, summary.join(", ")),
    )
}

fn lookup<'m>(
    src: &Source,
    m: &'m formlang_core::frontend::SourceModule,
    name: &str,
) -> std::result::Result<&'m Value, Failure> {
    m.get(name).ok_or_else(|| {
        src.fail(Diagnostic::error(
            Span::default(),
            "NameError",
            format!("'{name}' is not defined in this file"),
        ))
    })
}

fn lookup_form(
    src: &Source,
    m: &formlang_core::frontend::SourceModule,
    name: &str,
) -> std::result::Result<Form, Failure> {
    match lookup(src, m, name)? {
        Value::Form(f) => Ok(f.clone()),
        v => Err(src.fail(Diagnostic::error(
            m.binding(name).map_or(Span::default(), |b| b.span),
            "TypeError",
            format!("'{name}' is a {}, not a form", v.type_name()),
        ))),
    }
}

fn show(file: &Path, name: Option<&str>, io: &mut Io) -> CmdResult {
    let src = Source::read(file)?;
    let m = src.module()?;
    let Some(name) = name else {
        return write_out(io, &print_module(&m));
    };
    let value = lookup(&src, &m, name)?;
    // The value itself is written out; names bound before it are used for
    // its parts.
    let printer = {
        let mut p = formlang_core::frontend::Printer::new();
        for b in &m.bindings {
            p.reserve(&b.name);
        }
        for b in &m.bindings {
            if b.name == name {
                break;
            }
            match &b.value {
                Value::Expr(e) => p.name_expr(e, &b.name),
                Value::Element(e) => p.name_element(e, &b.name),
                _ => {}
            }
        }
        p
    };
    let text = match value {
        Value::Form(f) => printer.form(f),
        Value::Expr(e) => printer.expr(e),
        Value::Element(e) => printer.element(e),
        Value::Measure(ms) => printer.measure(ms),
        v => {
            return Err(src.fail(Diagnostic::error(
                Span::default(),
                "TypeError",
                format!("cannot show a {}", v.type_name()),
            )))
        }
    };
    write_out(io, &format!("{name} = {text}\n"))
}

fn diff(file: &Path, form: &str, wrt: &str, dir: &str, io: &mut Io) -> CmdResult {
    let src = Source::read(file)?;
    let m = src.module()?;
    let f = lookup_form(&src, &m, form)?;
    let expr_of = |name: &str| -> std::result::Result<Expr, Failure> {
        match lookup(&src, &m, name)? {
            Value::Expr(e) => Ok(e.clone()),
            v => Err(src.fail(Diagnostic::error(
                m.binding(name).map_or(Span::default(), |b| b.span),
                "TypeError",
                format!("'{name}' is a {}, not a function", v.type_name()),
            ))),
        }
    };
    let (u, v) = (expr_of(wrt)?, expr_of(dir)?);
    let span = m.binding(form).map_or(Span::default(), |b| b.span);
    let d = Wrt::from_expr(&u)
        .and_then(|w| f.derivative(&w, Some(&v)))
        .map_err(|e| src.fail(Diagnostic::from_error(span, &e)))?;
    write_out(io, &format!("{}\n", m.printer().form(&d)))
}

fn graph(file: &Path, name: &str, out: Option<&Path>, dedup: bool, io: &mut Io) -> CmdResult {
    let src = Source::read(file)?;
    let m = src.module()?;
    let span = m.binding(name).map_or(Span::default(), |b| b.span);
    let g = match lookup(&src, &m, name)? {
        Value::Form(f) => dot::form_graph(f, dedup),
        Value::Expr(e) => dot::expr_graph(e, dedup),
        v => {
            return Err(src.fail(Diagnostic::error(
                span,
                "TypeError",
                format!("cannot graph a {}", v.type_name()),
            )))
        }
    }
    .map_err(|e| src.fail(Diagnostic::from_error(span, &e)))?;
    let text = g.to_dot(name);
    match out {
        Some(p) => {
            std::fs::write(p, text).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))
        }
        None => write_out(io, &text),
    }
}

/// Binds coefficients from an env file. Each statement `f = expr` gives the
/// value of the coefficient or constant named `f`, as an expression of the
/// spatial coordinate `x` and literals.
fn load_env(
    env_path: &Path,
    m: &formlang_core::frontend::SourceModule,
    mesh: &MiniMesh,
) -> std::result::Result<EvalEnv, Failure> {
    let src = Source::read(env_path)?;
    let x = ir::spatial_coordinate(mesh.cell_type());
    let parsed = parse_with_prelude(&src.text, &[("x", Value::Expr(x))]);
    if parsed.has_errors() {
        return Err(Failure::Language(
            parsed.diagnostics.iter().map(|d| src.render(d)).collect(),
        ));
    }
    let mut env = EvalEnv::new();
    let mut errors = Vec::new();
    for b in &parsed.module.bindings {
        let err = |kind: &str, msg: String| src.render(&Diagnostic::error(b.span, kind, msg));
        let target = match m.get(&b.name) {
            Some(Value::Expr(t)) if matches!(t.op(), Op::Coefficient | Op::Constant) => t,
            _ => {
                errors.push(err(
                    "NameError",
                    format!(
                        "'{}' is not a coefficient or constant of the form file",
                        b.name
                    ),
                ));
                continue;
            }
        };
        let Some(value) = b.value.as_expr() else {
            errors.push(err(
                "TypeError",
                format!("expected an expression, got {}", b.value.type_name()),
            ));
            continue;
        };
        if formlang_core::algorithms::terminals(&value)
            .iter()
            .any(|t| t.is_function())
        {
            errors.push(err(
                "InvalidTerminal",
                "values may only use x, geometric quantities and literals".into(),
            ));
            continue;
        }
        if value.shape() != target.shape() || !value.free().is_empty() {
            errors.push(err(
                "ShapeMismatch",
                format!(
                    "'{}' has shape {} but the value has shape {}",
                    b.name,
                    ir::shape_str(target.shape()),
                    ir::shape_str(value.shape())
                ),
            ));
            continue;
        }
        env.bind_expr(target, &value);
    }
    if !errors.is_empty() {
        return Err(Failure::Language(errors));
    }
    Ok(env)
}

fn eval(
    file: &Path,
    name: &str,
    env_path: Option<&Path>,
    mesh: &str,
    degree: Option<usize>,
    io: &mut Io,
) -> CmdResult {
    let src = Source::read(file)?;
    let m = src.module()?;
    let f = lookup_form(&src, &m, name)?;
    let span = m.binding(name).map_or(Span::default(), |b| b.span);
    let fail = |e: Error| src.fail(Diagnostic::from_error(span, &e));
    let mesh: MiniMesh = mesh
        .parse()
        .map_err(|e: Error| Failure::Io(e.to_string()))?;
    let arity = f.arity().map_err(fail)?;
    if arity > 0 {
        return Err(fail(Error::Arity(format!(
            "'{name}' has arity {arity}; only functionals can be evaluated"
        ))));
    }
    let env = match env_path {
        Some(p) => load_env(p, &m, &mesh)?,
        None => EvalEnv::new(),
    };
    let printer = m.printer();
    let missing: Vec<String> = f
        .coefficients()
        .iter()
        .filter(|c| env.binding(c).is_none())
        .map(|c| printer.expr(c))
        .collect();
    if !missing.is_empty() {
        return Err(fail(Error::UnboundTerminal(format!(
            "no value for {}",
            missing.join(", ")
        ))));
    }
    let value = integrate_functional(&f, &mesh, &env, degree).map_err(fail)?;
    write_out(io, &format!("{value:.16e}\n"))
}
