fn main() {
    std::process::exit(partialface::cli::run(std::env::args_os()));
}
