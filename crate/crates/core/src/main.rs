fn main() {
    std::process::exit(popcurve::cli::run(std::env::args_os()));
}
