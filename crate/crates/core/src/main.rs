fn main() {
    std::process::exit(entrolim::cli::main_with_args(std::env::args_os()));
}
