fn main() {
    std::process::exit(poisson_envelope::cli::main_with_args(std::env::args_os()));
}
