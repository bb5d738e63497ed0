fn main() {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let mut io = formlang::Io {
        out: &mut stdout.lock(),
        err: &mut stderr.lock(),
    };
    let code = formlang::run(std::env::args_os(), &mut io);
    std::process::exit(code);
}
