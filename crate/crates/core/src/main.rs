fn main() {
    std::process::exit(copula_screen::cli::main_with_args(std::env::args_os()));
}
