fn main() {
    std::process::exit(gated_gin_cli::run(std::env::args_os()));
}
