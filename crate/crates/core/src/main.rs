fn main() {
    std::process::exit(blum::cli::run(std::env::args().collect()));
}
