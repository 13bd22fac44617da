fn main() {
    std::process::exit(kahler_dirichlet::cli::main_with(std::env::args_os()));
}
