fn main() {
    qwalk::cli::configure_threads();
    std::process::exit(qwalk::cli::run(std::env::args()));
}
