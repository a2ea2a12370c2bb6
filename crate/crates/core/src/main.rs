fn main() {
    std::process::exit(jerkrom::cli::main_with_args(std::env::args_os()));
}
