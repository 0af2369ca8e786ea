fn main() {
    std::process::exit(asas::cli::run(std::env::args_os()));
}
