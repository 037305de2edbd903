fn main() {
    std::process::exit(regimecurve::cli::main_with_args(std::env::args_os()));
}
