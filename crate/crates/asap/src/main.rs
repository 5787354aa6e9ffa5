fn main() {
    std::process::exit(asap::cli::run(std::env::args_os()));
}
