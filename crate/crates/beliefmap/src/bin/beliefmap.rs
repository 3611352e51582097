fn main() {
    std::process::exit(beliefmap::cli::run(std::env::args()));
}
