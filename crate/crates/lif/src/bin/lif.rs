fn main() {
    std::process::exit(lif::cli::run(std::env::args()));
}
