fn main() {
    std::process::exit(direp::cli::run(std::env::args_os()));
}
