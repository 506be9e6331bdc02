fn main() {
    std::process::exit(featgraph::cli::run_cli(std::env::args_os()));
}
