fn main() {
    std::process::exit(hetfuse_cli::run(std::env::args().skip(1)));
}
