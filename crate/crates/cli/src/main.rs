fn main() {
    let code = vvc_cli::run(std::env::args().collect());
    std::process::exit(code);
}
