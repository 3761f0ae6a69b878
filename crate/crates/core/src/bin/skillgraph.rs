fn main() {
    std::process::exit(skillgraph::cli::run(std::env::args_os()));
}
