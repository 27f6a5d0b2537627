fn main() {
    std::process::exit(flosim::cli::run_from_args());
}
