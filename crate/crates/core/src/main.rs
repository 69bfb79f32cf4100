fn main() {
    std::process::exit(sparsedict::cli::run(std::env::args_os()));
}
