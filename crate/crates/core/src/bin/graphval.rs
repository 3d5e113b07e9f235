fn main() {
    std::process::exit(graphval::cli::run(std::env::args_os()));
}
