fn main() {
    std::process::exit(hjsolve::cli::run(std::env::args_os()));
}
